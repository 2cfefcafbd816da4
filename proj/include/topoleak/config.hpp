#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "topoleak/client.hpp"
#include "topoleak/disentangle.hpp"
#include "topoleak/embedding.hpp"

namespace topoleak::config {

struct TopologyConfig {
  int n = 5;
  double edge_mean = 8.19;
  int count = 20;
};

struct AgentConfig {
  double rho = 0.35;
  double beta = 0.4;
  double beta_spread = 0.0;
  int output_len = 64;
  int global_vocab = 64;
  int role_vocab = 256;
  int task_core = 4;
  int task_filler = 12;
};

struct EmbeddingConfig {
  std::string backend = "hashing";  // hashing | external
  int d = 384;
  std::optional<client::EndpointConfig> endpoint;
};

struct ModelConfig {
  int hidden = 512;
  int latent = 768;
  std::string variant = "dual";  // dual | sub
  double temperature = 0.1;
};

struct TrainingConfig {
  double lr = 1e-3;
  int epochs = 200;
  double alpha = 0.1;
  double w_rec = 1.0;
  double w_bias = 1.0;
  double w_lws = 1.0;
  /// "family": one model fitted to every system; "system": one model each.
  std::string scope = "family";
};

struct SupervisionConfig {
  std::string oracle = "lexical";  // lexical | simulated | teacher
  int k = 3;
  double neg_ratio = 1.0;
  /// "low_overlap": negatives are the pairs with the least lexical overlap;
  /// "uniform": drawn at random from the remaining pairs.
  std::string negatives = "low_overlap";
  double precision_target = 1.0;
  std::optional<client::EndpointConfig> endpoint;
};

struct RunConfig {
  std::uint64_t seed = 0;
  TopologyConfig topology;
  AgentConfig agents;
  int perturbations = 16;
  EmbeddingConfig embedding;
  ModelConfig model;
  TrainingConfig training;
  SupervisionConfig supervision;
  double tau = 0.5;
  double theta = 0.8;
  /// Worker threads for simulation and embedding; 0 = hardware concurrency.
  int workers = 0;
  std::string out = "runs/default";

  /// Strict parse: unknown keys and invalid values raise ConfigError.
  static RunConfig from_json(const nlohmann::json& j);
  /// Every effective value, defaults included.
  nlohmann::json to_json() const;
  /// Throws ConfigError when a component precondition cannot hold.
  void validate() const;

  disentangle::ModelDims dims() const;
  disentangle::Variant variant() const;
};

/// Reads and parses a config file; a missing path yields the defaults.
RunConfig load(const std::optional<std::string>& path);

/// Canonical snapshot text written to the run directory.
std::string snapshot(const RunConfig& c);

}  // namespace topoleak::config
