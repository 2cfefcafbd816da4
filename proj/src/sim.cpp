#include "topoleak/sim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

#include "topoleak/induction.hpp"
#include "topoleak/rng.hpp"
#include "topoleak/text.hpp"

namespace topoleak::sim {
namespace {

constexpr std::uint64_t kGlobalSalt = 0x61c8864680b583ebULL;
constexpr std::uint64_t kRoleSalt = 0x2545f4914f6cdd1dULL;
constexpr std::uint64_t kCopySalt = 0x9fb21c651e98df25ULL;
constexpr std::uint64_t kOrderSalt = 0x3c6ef372fe94f82bULL;

void validate(const AgentProfile& p) {
  if (!(p.copy_rate >= 0.0 && p.copy_rate <= 1.0))
    throw std::invalid_argument("agent profile: copy_rate outside [0, 1]");
  if (!(p.boilerplate_fraction >= 0.0 && p.boilerplate_fraction <= 1.0))
    throw std::invalid_argument("agent profile: boilerplate_fraction outside [0, 1]");
  if (p.output_len < 1) throw std::invalid_argument("agent profile: output_len must be >= 1");
}

}  // namespace

std::string global_token(int k) { return "g" + std::to_string(k); }

std::string role_token(std::uint64_t role_seed, int k) {
  return "r" + std::to_string(role_seed) + "w" + std::to_string(k);
}

bool is_global_token(std::string_view token) {
  if (token.size() < 2 || token.front() != 'g') return false;
  return std::all_of(token.begin() + 1, token.end(), [](char c) { return c >= '0' && c <= '9'; });
}

std::vector<std::string> rare_tokens(std::string_view output) {
  std::vector<std::string> out;
  for (auto& tok : text::split_whitespace(output)) {
    if (is_global_token(tok) || tok == kReviewMarker) continue;
    out.push_back(std::move(tok));
  }
  return out;
}

TaskSpec make_task(std::uint64_t seed, int core, int filler) {
  if (core < 1 || filler < 1) throw std::invalid_argument("make_task: need core and filler tokens");
  Rng rng(derive_seed(seed, 0x7a5cu));
  TaskSpec t;
  t.task_id = "task" + std::to_string(seed);
  std::vector<std::string> tokens;
  for (int i = 0; i < core; ++i) {
    tokens.push_back("c" + std::to_string(rng.uniform_index(1000)));
    t.core_tokens.push_back(tokens.back());
  }
  for (int i = 0; i < filler; ++i) tokens.push_back("t" + std::to_string(rng.uniform_index(1000)));
  t.text = text::join(tokens, " ");
  return t;
}

TaskSpec perturb_task(const TaskSpec& base, int index, std::uint64_t seed) {
  if (index < 0) throw std::invalid_argument("perturb_task: negative index");
  if (index == 0) return base;

  auto tokens = text::split_whitespace(base.text);
  const std::unordered_set<std::string> core(base.core_tokens.begin(), base.core_tokens.end());
  std::vector<std::size_t> free_positions;
  for (std::size_t i = 0; i < tokens.size(); ++i)
    if (!core.contains(tokens[i])) free_positions.push_back(i);

  TaskSpec out = base;
  out.perturbation_index = index;
  if (free_positions.empty()) return out;

  Rng rng(derive_seed(derive_seed(seed, fnv1a64(base.text)), static_cast<std::uint64_t>(index)));
  rng.shuffle(std::span<std::size_t>(free_positions));
  const auto count = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::lround(0.2 * static_cast<double>(free_positions.size()))));
  for (std::size_t k = 0; k < count; ++k) {
    std::string& tok = tokens[free_positions[k]];
    std::string sub;
    do {
      sub = "s" + std::to_string(rng.uniform_index(100000));
    } while (sub == tok);
    tok = std::move(sub);
  }
  out.text = text::join(tokens, " ");
  return out;
}

std::vector<AgentProfile> make_profiles(int n, double rho, double beta, double beta_spread,
                                        int output_len, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("make_profiles: n must be >= 1");
  Rng rng(derive_seed(seed, 0x9e11u));
  std::vector<AgentProfile> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    AgentProfile p;
    p.id = i;
    // Small positive role seeds keep token names short and distinct per agent.
    p.role_seed = static_cast<std::uint64_t>(i) * 100000u + rng.uniform_index(100000);
    p.copy_rate = rho;
    const double jitter = beta_spread > 0.0 ? rng.uniform(-beta_spread, beta_spread) : 0.0;
    p.boilerplate_fraction = std::clamp(beta + jitter, 0.0, 1.0);
    p.output_len = output_len;
    out.push_back(p);
  }
  return out;
}

std::string agent_step(const AgentProfile& profile, const TaskSpec& task,
                       const std::vector<std::string>& pred_outputs, Mode mode,
                       const VocabConfig& vocab) {
  validate(profile);
  if (vocab.global_size < 1 || vocab.role_size < 1)
    throw std::invalid_argument("agent_step: vocabularies must be non-empty");

  const int len = profile.output_len;
  const int n_global = static_cast<int>(std::floor(profile.boilerplate_fraction * len + 1e-9));

  std::vector<std::vector<std::string>> sources;
  for (const auto& o : pred_outputs) {
    auto rare = rare_tokens(o);
    if (!rare.empty()) sources.push_back(std::move(rare));
  }
  // Global tokens take precedence when rho + beta exceeds 1.
  const int n_copy =
      sources.empty()
          ? 0
          : std::min(len - n_global, static_cast<int>(std::floor(profile.copy_rate * len + 1e-9)));
  const int n_role = len - n_global - n_copy;

  const std::uint64_t text_key = fnv1a64(task.text);
  std::vector<std::string> tokens;
  tokens.reserve(static_cast<std::size_t>(len));

  // Every agent reads the same global sequence for a given task text and takes
  // a prefix of it, so two agents share min(n_global) tokens.
  Rng global_rng(derive_seed(text_key, kGlobalSalt));
  for (int k = 0; k < n_global; ++k)
    tokens.push_back(global_token(static_cast<int>(global_rng.uniform_index(vocab.global_size))));

  std::vector<std::string> reviewed(sources.size());
  Rng copy_rng(derive_seed(derive_seed(text_key, profile.role_seed), kCopySalt));
  for (int k = 0; k < n_copy; ++k) {
    const std::size_t src = static_cast<std::size_t>(k) % sources.size();
    const auto& pool = sources[src];
    tokens.push_back(pool[copy_rng.uniform_index(pool.size())]);
    if (reviewed[src].empty()) reviewed[src] = tokens.back();
  }

  Rng role_rng(derive_seed(derive_seed(text_key, profile.role_seed), kRoleSalt));
  for (int k = 0; k < n_role; ++k)
    tokens.push_back(
        role_token(profile.role_seed, static_cast<int>(role_rng.uniform_index(vocab.role_size))));

  Rng order_rng(derive_seed(derive_seed(text_key, profile.role_seed), kOrderSalt));
  order_rng.shuffle(std::span<std::string>(tokens));

  if (mode == Mode::kAdversarial) {
    for (const auto& tok : reviewed) {
      if (tok.empty()) continue;
      tokens.emplace_back(kReviewMarker);
      tokens.push_back(tok);
    }
  }
  return text::join(tokens, " ");
}

std::vector<int> completion_order(const graph::Topology& t) {
  const int n = t.size();
  const int dec = t.decision_agent();
  std::vector<std::vector<int>> flat(n);
  for (int a : t.order()) {
    for (int p : graph::predecessors(t, a)) {
      flat[a].insert(flat[a].end(), flat[p].begin(), flat[p].end());
      flat[a].push_back(p);
    }
  }
  std::vector<int> out;
  std::vector<bool> seen(n, false);
  for (int a : flat[dec]) {
    if (!seen[a]) {
      seen[a] = true;
      out.push_back(a);
    }
  }
  seen[dec] = true;
  for (int a : t.order())
    if (!seen[a]) out.push_back(a);
  out.push_back(dec);
  return out;
}

TraceBundle run_mas(const graph::Topology& t, const std::vector<AgentProfile>& profiles,
                    const TaskSpec& task, Mode mode, const VocabConfig& vocab) {
  if (static_cast<int>(profiles.size()) != t.size()) {
    throw std::invalid_argument("run_mas: " + std::to_string(profiles.size()) +
                                " profiles for a topology of " + std::to_string(t.size()) +
                                " agents");
  }
  if (task.text.empty()) throw std::invalid_argument("run_mas: empty task text");

  const int n = t.size();
  std::vector<std::string> outputs(n);
  std::vector<std::string> histories(n);
  for (int a : t.order()) {
    const auto preds = graph::predecessors(t, a);
    std::vector<std::string> pred_outputs;
    std::vector<std::string> pred_histories;
    for (int p : preds) {
      pred_outputs.push_back(outputs[p]);
      pred_histories.push_back(histories[p]);
    }
    outputs[a] = agent_step(profiles[a], task, pred_outputs, mode, vocab);
    if (mode == Mode::kAdversarial) histories[a] = induction::format_history(pred_histories, pred_outputs);
  }

  TraceBundle tb{t, task.task_id, task.perturbation_index, completion_order(t), {}, {}};
  for (int a : tb.agent_order) tb.true_outputs.push_back(outputs[a]);
  const int dec = t.decision_agent();
  tb.final_output = mode == Mode::kAdversarial
                        ? induction::compose_final_output(histories[dec], outputs[dec])
                        : outputs[dec];
  return tb;
}

nlohmann::json TraceBundle::to_json() const {
  return {{"task_id", task_id},
          {"perturbation_index", perturbation_index},
          {"topology", topology.to_json()},
          {"agent_order", agent_order},
          {"true_outputs", true_outputs},
          {"final_output", final_output}};
}

TraceBundle TraceBundle::from_json(const nlohmann::json& j) {
  TraceBundle tb{graph::Topology::from_json(j.at("topology")),
                 j.at("task_id").get<std::string>(),
                 j.at("perturbation_index").get<int>(),
                 j.at("agent_order").get<std::vector<int>>(),
                 j.at("true_outputs").get<std::vector<std::string>>(),
                 j.at("final_output").get<std::string>()};
  if (static_cast<int>(tb.true_outputs.size()) != tb.topology.size())
    throw std::invalid_argument("trace: true_outputs length does not match topology size");
  return tb;
}

}  // namespace topoleak::sim
