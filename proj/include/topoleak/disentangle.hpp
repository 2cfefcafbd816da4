#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "topoleak/embedding.hpp"

namespace topoleak::disentangle {

using AgentPair = std::pair<int, int>;

/// Single-hidden-layer perceptron: tanh(x W1 + b1) W2 + b2.
struct Mlp {
  Eigen::MatrixXd w1;
  Eigen::MatrixXd b1;  // 1 x hidden
  Eigen::MatrixXd w2;
  Eigen::MatrixXd b2;  // 1 x out

  int in_dim() const { return static_cast<int>(w1.rows()); }
  int out_dim() const { return static_cast<int>(w2.cols()); }
  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const;
};

struct ModelDims {
  int input = 384;   // embedding dimension d
  int hidden = 512;
  int latent = 768;  // p
};

enum class Variant {
  kDual,  // z_d = E_d(h), z_b = E_b(h)
  kSub,   // z_b = E_b(h), z_d = h - z_b (needs latent == input)
};

std::string variant_name(Variant v);
Variant parse_variant(std::string_view s);

struct ModelParams {
  ModelDims dims;
  Variant variant = Variant::kDual;
  Mlp enc_d;
  Mlp enc_b;
  Mlp dec;                     // 2p -> hidden -> d
  Eigen::MatrixXd critic_tc;   // p x p, bias total-correlation terms
  Eigen::MatrixXd critic_db;   // p x p, debiased/bias terms
  double temperature = 0.1;

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every weight and bias.
  static ModelParams init(const ModelDims& dims, Variant variant, std::uint64_t seed);

  /// All zero weights (test fixture).
  static ModelParams zeros(const ModelDims& dims, Variant variant);

  /// Parameter tensors in a fixed order, paired with stable names.
  std::vector<std::pair<std::string, Eigen::MatrixXd*>> tensors();
  std::vector<std::pair<std::string, const Eigen::MatrixXd*>> tensors() const;

  bool all_finite() const;
};

/// Copy with every tensor rounded through float32 (matches a save/load round trip).
ModelParams rounded_to_float32(const ModelParams& params);

struct LatentPair {
  Eigen::VectorXd z_d;
  Eigen::VectorXd z_b;
};

/// Dual-encoder projection. Throws std::invalid_argument on a dimension mismatch.
LatentPair forward(const ModelParams& params, const embedding::EmbeddingVector& h);

/// Subtraction variant: z_b = E_b(h), z_d = h - z_b. Throws when latent != input.
LatentPair forward_sub(const ModelParams& params, const embedding::EmbeddingVector& h);

/// Embeddings of one system: `agents` x `samples` rows, agent-major
/// (row = agent * samples + sample), plus weak labels in recovered-position
/// space.
struct TrainBatch {
  int agents = 0;
  int samples = 0;
  Eigen::MatrixXd h;
  std::vector<AgentPair> pos;
  std::vector<AgentPair> neg;
  double alpha = 0.1;

  /// Throws std::invalid_argument when an invariant is broken.
  void validate(int input_dim) const;
};

/// Per-term multipliers. A zero weight removes the term from the graph.
struct LossWeights {
  double rec = 1.0;
  double bias = 1.0;
  double lws = 1.0;
  /// Multiplies the whole objective (gradient linearity hook).
  double scale = 1.0;
};

struct LossBreakdown {
  double rec = 0.0;
  double bias = 0.0;
  double lws = 0.0;
  double total = 0.0;
  /// Every InfoNCE estimate computed for the bias term, in evaluation order.
  std::vector<double> infonce;
};

/// Clamp bounds applied to Sim before the log terms.
inline constexpr double kSimEpsilon = 1e-7;

/// Mean over the n*M samples of ||h - D(z_d (+) z_b)||^2.
double loss_rec(const ModelParams& params, const TrainBatch& batch);

/// (1/M) sum_p [phi(U_p, V_p) - log((1/M) sum_q exp phi(U_p, V_q))],
/// phi(u, v) = u^T W v / temperature. Rows of U and V are the M samples.
double infonce(const Eigen::MatrixXd& u, const Eigen::MatrixXd& v, const Eigen::MatrixXd& critic,
               double temperature);

/// -sum_{i=1}^{n-1} I(mean(Zb_1..i); Zb_{i+1}) + sum_{i=1}^{n} max(0, I(Zd_i; Zb_i)),
/// each I an InfoNCE estimate. Needs n >= 2 and M >= 2.
double loss_bias(const ModelParams& params, const TrainBatch& batch);

/// Label-smoothed binary cross-entropy over positive and negative pairs,
/// Sim = (1 + cos) / 2 on rows of `z_d` (one row per agent).
double loss_lws(const Eigen::MatrixXd& z_d, const std::vector<AgentPair>& pos,
                const std::vector<AgentPair>& neg, double alpha);

/// rec + bias + lws with the given weights; the supervision term scores
/// agent_profiles() rows.
LossBreakdown total_loss(const ModelParams& params, const TrainBatch& batch,
                         const LossWeights& weights = {});

/// Gradient tensors in ModelParams::tensors() order.
struct ParamGrads {
  std::vector<Eigen::MatrixXd> tensors;
};

/// Reverse-mode gradients of total_loss with respect to every parameter.
std::pair<LossBreakdown, ParamGrads> gradients(const ModelParams& params, const TrainBatch& batch,
                                               const LossWeights& weights = {});

/// Per-agent debiased profile (agents x samples*p): the agent's debiased vectors,
/// each scaled to unit norm, laid side by side. The cosine of two profiles is
/// the mean per-perturbation cosine.
Eigen::MatrixXd agent_profiles(const ModelParams& params, const TrainBatch& batch);

struct TrainConfig {
  double lr = 1e-3;
  int epochs = 200;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double temperature = 0.1;
  LossWeights weights;
  /// Run the graph in float32 (faster) instead of float64.
  bool single_precision = true;
  /// critic_db ascends the raw debiased/bias InfoNCE estimates on frozen
  /// latents while the encoders descend the floored estimates under a frozen
  /// critic. When false, every parameter descends total_loss.
  bool adversarial_critic = true;
};

struct LossRecord {
  int epoch = 0;
  double rec = 0.0;
  double bias = 0.0;
  double lws = 0.0;
  double total = 0.0;
};

struct TrainResult {
  ModelParams params;
  /// Entry k holds the loss before update k; the last entry follows the final update.
  std::vector<LossRecord> curve;
};

/// Full-batch adaptive-moment descent on the mean objective over `dataset`.
/// Deterministic given config.seed. Throws TrainingError on a non-finite loss
/// or an InfoNCE estimate above log M.
TrainResult train(const std::vector<TrainBatch>& dataset, const ModelDims& dims, Variant variant,
                  const TrainConfig& config);

/// Binary blob (`<stem>.bin`, little-endian float32 tensors back to back) and
/// JSON manifest (`<stem>.json`) with names, shapes, dims and variant.
void save_params(const std::filesystem::path& stem, const std::vector<ModelParams>& models);
std::vector<ModelParams> load_params(const std::filesystem::path& stem);

}  // namespace topoleak::disentangle
