#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "topoleak/client.hpp"
#include "topoleak/config.hpp"
#include "topoleak/disentangle.hpp"
#include "topoleak/eval.hpp"
#include "topoleak/graph.hpp"
#include "topoleak/induction.hpp"
#include "topoleak/sim.hpp"
#include "topoleak/supervision.hpp"

namespace topoleak::pipeline {

namespace fs = std::filesystem;

/// Everything the attack knows (and the evaluator's ground truth) for one
/// simulated system.
struct SystemData {
  int index = 0;
  graph::Topology topology = graph::Topology::empty(1);
  std::vector<sim::TraceBundle> traces;                // one per perturbation
  std::vector<induction::RecoveredOutputs> recovered;  // one per perturbation
  /// Agent behind each recovered position (-1 when no true output matches).
  std::vector<int> position_agent;
  /// Ground truth in recovered-position space.
  graph::Topology truth = graph::Topology::empty(1);
  disentangle::TrainBatch batch;
  std::vector<supervision::ScoredPair> topk;
  supervision::WeakLabels labels;
  double recovery_recall = 0.0;
  double rouge_l = 0.0;
  int collisions = 0;

  int positions() const { return static_cast<int>(position_agent.size()); }
};

struct Prepared {
  config::RunConfig config;
  std::vector<SystemData> systems;
  graph::TopologyStats stats;
};

struct PrepareOptions {
  /// When set, each stage's artifacts are written here as soon as it finishes.
  std::optional<fs::path> dir;
  /// Transport overrides for the external embedding backend and teacher oracle.
  client::CallOptions call;
};

/// generate -> simulate -> recover -> embed -> supervise. Stage failures are
/// raised as StageError.
Prepared prepare(const config::RunConfig& cfg, const PrepareOptions& options = {});

struct VariantSpec {
  std::string name;
  disentangle::Variant variant = disentangle::Variant::kDual;
  disentangle::ModelDims dims;
  disentangle::LossWeights weights;
};

/// The configured model as a single variant named "cia".
VariantSpec configured_variant(const config::RunConfig& cfg);

/// full, wo_gbd, wo_lws and sub, in that order.
std::vector<VariantSpec> ablation_variants(const config::RunConfig& cfg);

struct SystemResult {
  disentangle::ModelParams params;  // rounded through float32
  std::vector<disentangle::LossRecord> curve;
  eval::EdgeScores scores;
  eval::EdgePredictionReport report;
  bool auc_defined = false;
};

struct AttackResult {
  std::string variant;
  std::vector<SystemResult> systems;
  /// Means over systems (AUC over systems where it is defined).
  eval::EdgePredictionReport mean;
  int auc_systems = 0;
  /// One model fitted to the whole family; its curve sits on systems[0].
  bool shared_model = false;

  nlohmann::json metrics_json(const Prepared& data) const;
};

/// Scores one system with trained parameters.
SystemResult evaluate_system(const Prepared& data, const SystemData& sys, disentangle::ModelParams params,
                             std::vector<disentangle::LossRecord> curve = {});

/// train -> score -> evaluate for every system.
AttackResult attack(const Prepared& data, const VariantSpec& spec);

/// model.{bin,json}, predictions.json, metrics.json, losses.csv, roc.csv.
void write_attack_artifacts(const fs::path& dir, const Prepared& data, const AttackResult& result);

/// Full attack into cfg.out (or `dir` when given). Returns the result.
AttackResult cmd_attack(const config::RunConfig& cfg, const PrepareOptions& options = {});

struct AblationResult {
  std::vector<AttackResult> variants;
  /// Error text for variants that failed; empty when the variant succeeded.
  std::vector<std::string> errors;
  nlohmann::json to_json(const Prepared& data) const;
};

/// Runs all ablation variants on identical prepared data.
AblationResult cmd_ablate(const config::RunConfig& cfg, const PrepareOptions& options = {});

/// Writes topologies.json (and config.json) only.
void cmd_gen_topology(const config::RunConfig& cfg);

/// generate + simulate; writes traces.jsonl.
void cmd_simulate(const config::RunConfig& cfg);

/// Re-scores a finished run from its persisted artifacts and rewrites
/// metrics.json, predictions.json and roc.csv. Returns the metrics document.
nlohmann::json cmd_eval(const fs::path& run_dir);

/// Renders report.md for a finished run. Throws ConfigError listing missing
/// artifacts.
std::string cmd_report(const fs::path& run_dir);

/// (name, file) for every artifact a finished attack run holds.
const std::vector<std::pair<std::string, std::string>>& run_artifacts();

}  // namespace topoleak::pipeline
