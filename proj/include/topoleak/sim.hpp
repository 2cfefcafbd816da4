#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "topoleak/graph.hpp"

namespace topoleak::sim {

enum class Mode { kStandard, kAdversarial };

/// Knobs of the synthetic agent. Each output is a token mixture of three
/// sources: a globally shared vocabulary (the planted global bias), tokens
/// copied from predecessors (the planted dependency signal), and the agent's
/// private role vocabulary.
struct AgentProfile {
  int id = 0;
  std::uint64_t role_seed = 0;
  double copy_rate = 0.35;             // rho
  double boilerplate_fraction = 0.40;  // beta
  int output_len = 64;
};

struct VocabConfig {
  int global_size = 64;
  int role_size = 256;
};

struct TaskSpec {
  std::string task_id;
  std::string text;
  int perturbation_index = 0;
  /// Tokens of `text` that perturbation never touches.
  std::vector<std::string> core_tokens;
};

/// Ground truth of one (task, perturbation) execution.
struct TraceBundle {
  graph::Topology topology;
  std::string task_id;
  int perturbation_index = 0;
  /// Agent ids in completion order; true_outputs[k] belongs to agent_order[k].
  std::vector<int> agent_order;
  std::vector<std::string> true_outputs;
  std::string final_output;

  nlohmann::json to_json() const;
  static TraceBundle from_json(const nlohmann::json& j);
};

/// Marker emitted by adversarial-mode agents before content they reviewed.
inline constexpr std::string_view kReviewMarker = "review";

std::string global_token(int k);
std::string role_token(std::uint64_t role_seed, int k);
bool is_global_token(std::string_view token);

/// Synthetic task text: `core` core tokens followed by `filler` other tokens.
TaskSpec make_task(std::uint64_t seed, int core = 4, int filler = 12);

/// Variant `index` of `base`: index 0 is `base` itself; otherwise 20% of the
/// non-core tokens (at least one) are replaced by seed-controlled substitutes.
TaskSpec perturb_task(const TaskSpec& base, int index, std::uint64_t seed);

/// Profiles for n agents. Per-agent boilerplate fractions are drawn uniformly
/// from [beta - beta_spread, beta + beta_spread] clipped to [0, 1].
std::vector<AgentProfile> make_profiles(int n, double rho, double beta, double beta_spread,
                                        int output_len, std::uint64_t seed);

/// One agent's reasoning output given its predecessors' outputs (in the order
/// the agent consumes them). Throws std::invalid_argument on invalid profile.
std::string agent_step(const AgentProfile& profile, const TaskSpec& task,
                       const std::vector<std::string>& pred_outputs, Mode mode,
                       const VocabConfig& vocab = {});

/// Tokens of `output` that came from role vocabularies (directly or copied).
std::vector<std::string> rare_tokens(std::string_view output);

/// Order in which agents' outputs surface in the decision agent's cumulative
/// history: first occurrences of the ancestor flattening, then agents that
/// cannot reach the decision agent, then the decision agent.
std::vector<int> completion_order(const graph::Topology& t);

/// Executes all agents over `t`. Each agent sees exactly its predecessors'
/// outputs (ascending agent index). In adversarial mode agents also carry the
/// cumulative history and the decision agent's text holds both sections.
TraceBundle run_mas(const graph::Topology& t, const std::vector<AgentProfile>& profiles,
                    const TaskSpec& task, Mode mode, const VocabConfig& vocab = {});

}  // namespace topoleak::sim
