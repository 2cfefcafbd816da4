#include "topoleak/disentangle.hpp"

#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>
#include <type_traits>

#if defined(__SSE__)
#include <xmmintrin.h>
#endif

#include <nlohmann/json.hpp>

#include "topoleak/autodiff.hpp"
#include "topoleak/errors.hpp"
#include "topoleak/io.hpp"
#include "topoleak/rng.hpp"

namespace topoleak::disentangle {

using autodiff::Tape;
using autodiff::Var;

Eigen::MatrixXd Mlp::apply(const Eigen::MatrixXd& x) const {
  Eigen::MatrixXd hidden = ((x * w1).rowwise() + b1.row(0)).array().tanh().matrix();
  return (hidden * w2).rowwise() + b2.row(0);
}

std::string variant_name(Variant v) { return v == Variant::kDual ? "dual" : "sub"; }

Variant parse_variant(std::string_view s) {
  if (s == "dual") return Variant::kDual;
  if (s == "sub") return Variant::kSub;
  throw std::invalid_argument("unknown variant '" + std::string(s) + "' (expected dual or sub)");
}

namespace {

void fill_uniform(Eigen::MatrixXd& m, int fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (Eigen::Index c = 0; c < m.cols(); ++c)
    for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = rng.uniform(-bound, bound);
}

Mlp make_mlp(int in, int hidden, int out, Rng* rng) {
  Mlp m{Eigen::MatrixXd::Zero(in, hidden), Eigen::MatrixXd::Zero(1, hidden),
        Eigen::MatrixXd::Zero(hidden, out), Eigen::MatrixXd::Zero(1, out)};
  if (rng != nullptr) {
    fill_uniform(m.w1, in, *rng);
    fill_uniform(m.b1, in, *rng);
    fill_uniform(m.w2, hidden, *rng);
    fill_uniform(m.b2, hidden, *rng);
  }
  return m;
}

ModelParams make_params(const ModelDims& dims, Variant variant, Rng* rng) {
  if (dims.input < 1 || dims.hidden < 1 || dims.latent < 1)
    throw std::invalid_argument("model dimensions must be positive");
  if (variant == Variant::kSub && dims.latent != dims.input)
    throw std::invalid_argument("sub variant needs latent dimension == input dimension");
  ModelParams p;
  p.dims = dims;
  p.variant = variant;
  p.enc_d = make_mlp(dims.input, dims.hidden, dims.latent, rng);
  p.enc_b = make_mlp(dims.input, dims.hidden, dims.latent, rng);
  p.dec = make_mlp(2 * dims.latent, dims.hidden, dims.input, rng);
  p.critic_tc = Eigen::MatrixXd::Zero(dims.latent, dims.latent);
  p.critic_db = Eigen::MatrixXd::Zero(dims.latent, dims.latent);
  if (rng != nullptr) {
    fill_uniform(p.critic_tc, dims.latent, *rng);
    fill_uniform(p.critic_db, dims.latent, *rng);
  }
  return p;
}

}  // namespace

ModelParams ModelParams::init(const ModelDims& dims, Variant variant, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x1a17u));
  return make_params(dims, variant, &rng);
}

ModelParams ModelParams::zeros(const ModelDims& dims, Variant variant) {
  return make_params(dims, variant, nullptr);
}

std::vector<std::pair<std::string, Eigen::MatrixXd*>> ModelParams::tensors() {
  return {{"enc_d.w1", &enc_d.w1}, {"enc_d.b1", &enc_d.b1}, {"enc_d.w2", &enc_d.w2},
          {"enc_d.b2", &enc_d.b2}, {"enc_b.w1", &enc_b.w1}, {"enc_b.b1", &enc_b.b1},
          {"enc_b.w2", &enc_b.w2}, {"enc_b.b2", &enc_b.b2}, {"dec.w1", &dec.w1},
          {"dec.b1", &dec.b1},     {"dec.w2", &dec.w2},     {"dec.b2", &dec.b2},
          {"critic_tc", &critic_tc}, {"critic_db", &critic_db}};
}

std::vector<std::pair<std::string, const Eigen::MatrixXd*>> ModelParams::tensors() const {
  std::vector<std::pair<std::string, const Eigen::MatrixXd*>> out;
  for (auto& [name, ptr] : const_cast<ModelParams*>(this)->tensors()) out.emplace_back(name, ptr);
  return out;
}

bool ModelParams::all_finite() const {
  for (const auto& [name, t] : tensors())
    if (!t->allFinite()) return false;
  return std::isfinite(temperature);
}

ModelParams rounded_to_float32(const ModelParams& params) {
  ModelParams out = params;
  for (auto& [name, t] : out.tensors()) *t = t->cast<float>().cast<double>();
  return out;
}

LatentPair forward(const ModelParams& params, const embedding::EmbeddingVector& h) {
  if (h.dim() != params.dims.input) {
    throw std::invalid_argument("forward: embedding dimension " + std::to_string(h.dim()) +
                                " != model input " + std::to_string(params.dims.input));
  }
  const Eigen::MatrixXd x = h.values.transpose();
  return {params.enc_d.apply(x).row(0).transpose(), params.enc_b.apply(x).row(0).transpose()};
}

LatentPair forward_sub(const ModelParams& params, const embedding::EmbeddingVector& h) {
  if (params.dims.latent != params.dims.input)
    throw std::invalid_argument("forward_sub: latent dimension must equal input dimension");
  if (h.dim() != params.dims.input) {
    throw std::invalid_argument("forward_sub: embedding dimension " + std::to_string(h.dim()) +
                                " != model input " + std::to_string(params.dims.input));
  }
  const Eigen::MatrixXd x = h.values.transpose();
  Eigen::VectorXd z_b = params.enc_b.apply(x).row(0).transpose();
  Eigen::VectorXd z_d = h.values - z_b;
  return {std::move(z_d), std::move(z_b)};
}

void TrainBatch::validate(int input_dim) const {
  if (agents < 1 || samples < 1) throw std::invalid_argument("train batch: empty");
  if (h.rows() != static_cast<Eigen::Index>(agents) * samples)
    throw std::invalid_argument("train batch: row count != agents * samples");
  if (h.cols() != input_dim) throw std::invalid_argument("train batch: embedding dimension mismatch");
  if (!(alpha >= 0.0 && alpha < 0.5)) throw std::invalid_argument("train batch: alpha outside [0, 0.5)");
  const std::set<AgentPair> p(pos.begin(), pos.end());
  for (const auto& e : neg)
    if (p.contains(e)) throw std::invalid_argument("train batch: positive and negative sets overlap");
  for (const auto* set : {&pos, &neg})
    for (const auto& [i, j] : *set)
      if (i < 0 || j < 0 || i >= agents || j >= agents || i == j)
        throw std::invalid_argument("train batch: label pair out of range");
}

namespace {

template <typename T>
using MatT = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

template <typename T>
struct MlpVars {
  Var w1, b1, w2, b2;
};

template <typename T>
struct Graph {
  std::vector<Var> leaves;  // ModelParams::tensors() order
  MlpVars<T> enc_d, enc_b, dec;
  Var critic_tc, critic_db;
  Var h, z_d, z_b;
  Var rec, bias, lws, total;
  bool has_rec = false, has_bias = false, has_lws = false;
  std::vector<Var> infonce;
};

template <typename T>
Var apply_mlp(Tape<T>& t, Var x, const MlpVars<T>& m) {
  const Var hidden = t.tanh(t.add_rowvec(t.matmul(x, m.w1), m.b1));
  return t.add_rowvec(t.matmul(hidden, m.w2), m.b2);
}

template <typename T>
Var infonce_var(Tape<T>& t, Var u, Var v, Var critic, double temperature) {
  const auto m = static_cast<T>(t.value(u).rows());
  const Var scores = t.affine(t.matmul_nt(t.matmul(u, critic), v), static_cast<T>(1.0 / temperature));
  return t.affine(t.mean(t.diag_log_softmax(scores)), T(1), std::log(m));
}

/// Label-smoothed BCE term, averaged over pairs:
///   -(1/|P|) sum [(1 - a) log Sim + a log(1 - Sim)]   (positive = true)
///   -(1/|P|) sum [(1 - a) log(1 - Sim) + a log Sim]   (positive = false)
template <typename T>
Var smoothed_bce(Tape<T>& t, Var zbar, const std::vector<AgentPair>& pairs, double alpha,
                 bool positive) {
  const Var cos = t.pair_cosine(zbar, pairs);
  const Var sim = t.clamp(t.affine(cos, T(0.5), T(0.5)), static_cast<T>(kSimEpsilon),
                          static_cast<T>(1.0 - kSimEpsilon));
  const Var log_sim = t.log(sim);
  const Var log_dis = t.log(t.affine(sim, T(-1), T(1)));
  const auto a = static_cast<T>(alpha);
  const Var mix = positive ? t.add(t.affine(log_sim, T(1) - a), t.affine(log_dis, a))
                           : t.add(t.affine(log_dis, T(1) - a), t.affine(log_sim, a));
  return t.affine(t.mean(mix), T(-1));
}

template <typename T>
std::vector<MatT<T>> cast_tensors(const ModelParams& params) {
  std::vector<MatT<T>> out;
  for (const auto& [name, t] : params.tensors()) out.push_back(t->template cast<T>());
  return out;
}

// Tensors arrive in ModelParams::tensors() order and are moved onto the tape.
template <typename T>
Graph<T> build_graph(Tape<T>& t, std::vector<MatT<T>> tensors, const ModelDims& dims, Variant variant,
                     double temperature, const TrainBatch& batch, const LossWeights& w, bool with_grad,
                     bool split_critic = false) {
  batch.validate(dims.input);
  Graph<T> g;
  for (auto& m : tensors) g.leaves.push_back(t.leaf(std::move(m), with_grad));
  const auto mlp = [&](std::size_t first) {
    return MlpVars<T>{g.leaves[first], g.leaves[first + 1], g.leaves[first + 2], g.leaves[first + 3]};
  };
  g.enc_d = mlp(0);
  g.enc_b = mlp(4);
  g.dec = mlp(8);
  g.critic_tc = g.leaves[12];
  g.critic_db = g.leaves[13];

  const int n = batch.agents;
  const int m = batch.samples;
  g.h = t.constant(batch.h.cast<T>());
  g.z_b = apply_mlp(t, g.h, g.enc_b);
  g.z_d = variant == Variant::kDual ? apply_mlp(t, g.h, g.enc_d) : t.sub(g.h, g.z_b);

  std::vector<Var> terms;
  if (w.rec != 0.0) {
    const Var recon = apply_mlp(t, t.concat_cols(g.z_d, g.z_b), g.dec);
    g.rec = t.affine(t.sum_squares(t.sub(g.h, recon)), static_cast<T>(1.0 / (n * m)));
    g.has_rec = true;
    terms.push_back(t.affine(g.rec, static_cast<T>(w.rec)));
  }
  if (w.bias != 0.0) {
    if (n < 2) throw std::invalid_argument("bias loss needs at least two agents");
    if (m < 2) throw std::invalid_argument("bias loss needs at least two samples per agent");
    // Total correlation of the bias vectors, telescoped over the recovered order.
    Var tc = t.scalar_constant(T(0));
    Var prefix_sum = t.slice_rows(g.z_b, 0, m);
    for (int i = 1; i < n; ++i) {
      const Var pooled = t.affine(prefix_sum, static_cast<T>(1.0 / i));
      const Var next = t.slice_rows(g.z_b, static_cast<Eigen::Index>(i) * m, m);
      const Var term = infonce_var(t, pooled, next, g.critic_tc, temperature);
      g.infonce.push_back(term);
      tc = t.add(tc, term);
      prefix_sum = t.add(prefix_sum, next);
    }
    Var leak = t.scalar_constant(T(0));
    for (int i = 0; i < n; ++i) {
      const Var zd = t.slice_rows(g.z_d, static_cast<Eigen::Index>(i) * m, m);
      const Var zb = t.slice_rows(g.z_b, static_cast<Eigen::Index>(i) * m, m);
      // Mutual information is nonnegative; without the floor the encoders can
      // drive this lower bound to minus infinity.
      if (!split_critic) {
        const Var term = infonce_var(t, zd, zb, g.critic_db, temperature);
        g.infonce.push_back(term);
        leak = t.add(leak, t.clamp(term, T(0), std::numeric_limits<T>::max()));
        continue;
      }
      // Encoders see the floored estimate under a frozen critic; the critic
      // sees the raw estimate on frozen latents. The critic part adds zero.
      const Var term = infonce_var(t, zd, zb, t.detach(g.critic_db), temperature);
      g.infonce.push_back(term);
      leak = t.add(leak, t.clamp(term, T(0), std::numeric_limits<T>::max()));
      const Var critic = infonce_var(t, t.detach(zd), t.detach(zb), g.critic_db, temperature);
      leak = t.add(leak, t.sub(critic, t.detach(critic)));
    }
    g.bias = t.sub(leak, tc);
    g.has_bias = true;
    terms.push_back(t.affine(g.bias, static_cast<T>(w.bias)));
  }
  if (w.lws != 0.0) {
    if (batch.pos.empty() || batch.neg.empty())
      throw std::invalid_argument("supervision loss needs non-empty positive and negative sets");
    const Var zbar = t.stack_blocks(t.normalize_rows(g.z_d), n);
    g.lws = t.add(smoothed_bce(t, zbar, batch.pos, batch.alpha, true),
                  smoothed_bce(t, zbar, batch.neg, batch.alpha, false));
    g.has_lws = true;
    terms.push_back(t.affine(g.lws, static_cast<T>(w.lws)));
  }
  Var total = t.scalar_constant(T(0));
  for (Var term : terms) total = t.add(total, term);
  g.total = t.affine(total, static_cast<T>(w.scale));
  return g;
}

template <typename T>
Graph<T> build_graph(Tape<T>& t, const ModelParams& params, const TrainBatch& batch, const LossWeights& w,
                     bool with_grad) {
  return build_graph(t, cast_tensors<T>(params), params.dims, params.variant, params.temperature, batch, w,
                     with_grad);
}

template <typename T>
LossBreakdown breakdown(const Tape<T>& t, const Graph<T>& g) {
  LossBreakdown b;
  if (g.has_rec) b.rec = static_cast<double>(t.scalar(g.rec));
  if (g.has_bias) b.bias = static_cast<double>(t.scalar(g.bias));
  if (g.has_lws) b.lws = static_cast<double>(t.scalar(g.lws));
  b.total = static_cast<double>(t.scalar(g.total));
  for (Var v : g.infonce) b.infonce.push_back(static_cast<double>(t.scalar(v)));
  return b;
}

template <typename T>
std::pair<LossBreakdown, ParamGrads> gradients_as(const ModelParams& params, const TrainBatch& batch,
                                                  const LossWeights& weights) {
  Tape<T> tape;
  const auto g = build_graph(tape, params, batch, weights, true);
  tape.backward(g.total);
  ParamGrads grads;
  for (Var leaf : g.leaves) {
    const auto& gr = tape.grad(leaf);
    const auto& v = tape.value(leaf);
    grads.tensors.push_back(gr.size() == v.size() ? gr.template cast<double>().eval()
                                                  : Eigen::MatrixXd::Zero(v.rows(), v.cols()));
  }
  return {breakdown(tape, g), std::move(grads)};
}

}  // namespace

double loss_rec(const ModelParams& params, const TrainBatch& batch) {
  return total_loss(params, batch, {1.0, 0.0, 0.0, 1.0}).rec;
}

double infonce(const Eigen::MatrixXd& u, const Eigen::MatrixXd& v, const Eigen::MatrixXd& critic,
               double temperature) {
  if (u.rows() != v.rows()) throw std::invalid_argument("infonce: sample count mismatch");
  if (u.rows() < 1) throw std::invalid_argument("infonce: needs at least one sample");
  if (!(temperature > 0.0)) throw std::invalid_argument("infonce: temperature must be positive");
  Tape<double> t;
  const Var r = infonce_var(t, t.constant(u), t.constant(v), t.constant(critic), temperature);
  return t.scalar(r);
}

double loss_bias(const ModelParams& params, const TrainBatch& batch) {
  return total_loss(params, batch, {0.0, 1.0, 0.0, 1.0}).bias;
}

double loss_lws(const Eigen::MatrixXd& z_d, const std::vector<AgentPair>& pos,
                const std::vector<AgentPair>& neg, double alpha) {
  if (pos.empty() || neg.empty())
    throw std::invalid_argument("loss_lws: positive and negative sets must be non-empty");
  if (!(alpha >= 0.0 && alpha < 0.5)) throw std::invalid_argument("loss_lws: alpha outside [0, 0.5)");
  Tape<double> t;
  const Var zbar = t.constant(z_d);
  const Var r = t.add(smoothed_bce(t, zbar, pos, alpha, true), smoothed_bce(t, zbar, neg, alpha, false));
  return t.scalar(r);
}

LossBreakdown total_loss(const ModelParams& params, const TrainBatch& batch,
                         const LossWeights& weights) {
  Tape<double> tape;
  const auto g = build_graph(tape, params, batch, weights, false);
  return breakdown(tape, g);
}

std::pair<LossBreakdown, ParamGrads> gradients(const ModelParams& params, const TrainBatch& batch,
                                               const LossWeights& weights) {
  return gradients_as<double>(params, batch, weights);
}

Eigen::MatrixXd agent_profiles(const ModelParams& params, const TrainBatch& batch) {
  batch.validate(params.dims.input);
  Tape<double> t;
  const Var h = t.constant(batch.h);
  const Var z_b = t.constant(params.enc_b.apply(batch.h));
  const Var z_d = params.variant == Variant::kDual ? t.constant(params.enc_d.apply(batch.h)) : t.sub(h, z_b);
  return t.value(t.stack_blocks(t.normalize_rows(z_d), batch.agents));
}

namespace {

void check_step(const LossBreakdown& b, int samples, int epoch, bool single) {
  if (!std::isfinite(b.total) || !std::isfinite(b.rec) || !std::isfinite(b.bias) ||
      !std::isfinite(b.lws)) {
    throw TrainingError("non-finite training loss", epoch);
  }
  const double bound = std::log(static_cast<double>(samples));
  // Covers rounding of log M itself in single precision.
  const double tol = single ? 1e-5 : 1e-12;
  for (double v : b.infonce) {
    if (v > bound + tol) {
      throw TrainingError("InfoNCE estimate " + std::to_string(v) + " exceeds log M = " +
                              std::to_string(bound),
                          epoch);
    }
  }
}

// Parameters and moment estimates live in T between epochs and are moved onto
// each epoch's tape, so no parameter-sized copies happen per step.
// Flushes subnormal floats to zero for the guard's lifetime. Sharp softmax
// tails otherwise fill the backward pass with subnormals, which are very slow
// on x86.
class FlushDenormals {
 public:
#if defined(__SSE__)
  FlushDenormals() : saved_(_mm_getcsr()) { _mm_setcsr(saved_ | 0x8040u); }
  ~FlushDenormals() { _mm_setcsr(saved_); }

 private:
  unsigned saved_;
#endif
};

template <typename T>
TrainResult train_as(const std::vector<TrainBatch>& dataset, const ModelDims& dims, Variant variant,
                     const TrainConfig& config) {
  using Mat = MatT<T>;
  const FlushDenormals guard;
  const auto init = ModelParams::init(dims, variant, config.seed);
  std::vector<Mat> params = cast_tensors<T>(init);
  const std::size_t count = params.size();
  const std::size_t critic_db_index = count - 1;
  std::vector<Mat> m1, m2;
  for (const auto& p : params) {
    m1.push_back(Mat::Zero(p.rows(), p.cols()));
    m2.push_back(Mat::Zero(p.rows(), p.cols()));
  }
  const bool single = std::is_same_v<T, float>;
  const double share = 1.0 / static_cast<double>(dataset.size());

  TrainResult result;
  // One pass over the dataset: loss record plus (optionally) summed gradients.
  const auto evaluate = [&](int epoch, std::vector<Mat>* grads) {
    LossRecord rec{epoch, 0.0, 0.0, 0.0, 0.0};
    for (std::size_t bi = 0; bi < dataset.size(); ++bi) {
      const auto& batch = dataset[bi];
      Tape<T> tape;
      const bool last = bi + 1 == dataset.size();
      // The final batch takes ownership of the parameters; earlier ones copy.
      std::vector<Mat> tensors = last ? std::move(params) : params;
      const auto g = build_graph(tape, std::move(tensors), dims, variant, config.temperature, batch,
                                 config.weights, grads != nullptr, config.adversarial_critic);
      if (grads != nullptr) tape.backward(g.total, static_cast<T>(share));
      const auto b = breakdown(tape, g);
      check_step(b, batch.samples, epoch, single);
      rec.rec += share * b.rec;
      rec.bias += share * b.bias;
      rec.lws += share * b.lws;
      rec.total += share * b.total;
      if (grads != nullptr) {
        for (std::size_t k = 0; k < count; ++k) {
          if (bi == 0) (*grads)[k] = tape.take_grad(g.leaves[k]);
          else (*grads)[k] += tape.grad(g.leaves[k]);
        }
      }
      if (last) {
        params.resize(count);
        for (std::size_t k = 0; k < count; ++k) params[k] = tape.take_value(g.leaves[k]);
      }
    }
    return rec;
  };

  const T lr = static_cast<T>(config.lr);
  const T b1 = static_cast<T>(config.beta1);
  const T b2 = static_cast<T>(config.beta2);
  const T eps = static_cast<T>(config.eps);
  std::vector<Mat> grads(count);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    result.curve.push_back(evaluate(epoch, &grads));
    if (config.adversarial_critic) grads[critic_db_index] *= T(-1);

    const double step = static_cast<double>(epoch + 1);
    const T c1 = static_cast<T>(1.0 - std::pow(config.beta1, step));
    const T c2 = static_cast<T>(1.0 - std::pow(config.beta2, step));
    for (std::size_t k = 0; k < count; ++k) {
      auto p = params[k].array();
      auto m = m1[k].array();
      auto v = m2[k].array();
      const auto g = grads[k].array();
      m = b1 * m + (T(1) - b1) * g;
      v = b2 * v + (T(1) - b2) * g.square();
      p -= lr * (m / c1) / ((v / c2).sqrt() + eps);
      if (!params[k].allFinite()) throw TrainingError("non-finite parameters", epoch);
    }
  }
  result.curve.push_back(evaluate(config.epochs, nullptr));

  result.params = ModelParams::zeros(dims, variant);
  result.params.temperature = config.temperature;
  auto slots = result.params.tensors();
  for (std::size_t k = 0; k < count; ++k) *slots[k].second = params[k].template cast<double>();
  return result;
}

}  // namespace

TrainResult train(const std::vector<TrainBatch>& dataset, const ModelDims& dims, Variant variant,
                  const TrainConfig& config) {
  if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
  if (config.epochs < 0) throw std::invalid_argument("train: negative epoch count");
  if (!(config.lr > 0.0)) throw std::invalid_argument("train: learning rate must be positive");
  if (!(config.temperature > 0.0)) throw std::invalid_argument("train: temperature must be positive");
  return config.single_precision ? train_as<float>(dataset, dims, variant, config)
                                 : train_as<double>(dataset, dims, variant, config);
}

void save_params(const std::filesystem::path& stem, const std::vector<ModelParams>& models) {
  nlohmann::json manifest = {{"format", "topoleak-params"}, {"version", 1}};
  nlohmann::json entries = nlohmann::json::array();
  std::vector<float> flat;
  for (const auto& model : models) {
    nlohmann::json tensors = nlohmann::json::array();
    for (const auto& [name, t] : model.tensors()) {
      tensors.push_back({{"name", name}, {"shape", {t->rows(), t->cols()}}, {"offset", flat.size()}});
      // Row-major element order.
      for (Eigen::Index r = 0; r < t->rows(); ++r)
        for (Eigen::Index c = 0; c < t->cols(); ++c) flat.push_back(static_cast<float>((*t)(r, c)));
    }
    entries.push_back({{"dims",
                        {{"input", model.dims.input},
                         {"hidden", model.dims.hidden},
                         {"latent", model.dims.latent}}},
                       {"variant", variant_name(model.variant)},
                       {"temperature", model.temperature},
                       {"tensors", std::move(tensors)}});
  }
  manifest["models"] = std::move(entries);
  manifest["float_count"] = flat.size();
  io::write_f32_le(io::with_suffix(stem, ".bin"), flat);
  io::write_text(io::with_suffix(stem, ".json"), manifest.dump(2) + "\n");
}

std::vector<ModelParams> load_params(const std::filesystem::path& stem) {
  const auto manifest = nlohmann::json::parse(io::read_text(io::with_suffix(stem, ".json")));
  if (manifest.value("format", "") != "topoleak-params" || manifest.value("version", 0) != 1)
    throw std::runtime_error("model manifest: unsupported format or version");
  const auto flat = io::read_f32_le(io::with_suffix(stem, ".bin"));
  if (flat.size() != manifest.at("float_count").get<std::size_t>())
    throw std::runtime_error("model blob: size does not match manifest");

  std::vector<ModelParams> out;
  for (const auto& entry : manifest.at("models")) {
    const auto& d = entry.at("dims");
    const ModelDims dims{d.at("input").get<int>(), d.at("hidden").get<int>(), d.at("latent").get<int>()};
    auto model = ModelParams::zeros(dims, parse_variant(entry.at("variant").get<std::string>()));
    model.temperature = entry.at("temperature").get<double>();
    auto slots = model.tensors();
    const auto& tensors = entry.at("tensors");
    if (tensors.size() != slots.size()) throw std::runtime_error("model manifest: tensor count mismatch");
    for (std::size_t k = 0; k < slots.size(); ++k) {
      const auto& meta = tensors[k];
      auto& target = *slots[k].second;
      if (meta.at("name").get<std::string>() != slots[k].first)
        throw std::runtime_error("model manifest: unexpected tensor " + meta.at("name").get<std::string>());
      const auto shape = meta.at("shape").get<std::vector<Eigen::Index>>();
      if (shape.size() != 2 || shape[0] != target.rows() || shape[1] != target.cols())
        throw std::runtime_error("model manifest: shape mismatch for " + slots[k].first);
      auto offset = meta.at("offset").get<std::size_t>();
      if (offset + static_cast<std::size_t>(target.size()) > flat.size())
        throw std::runtime_error("model blob: tensor " + slots[k].first + " out of bounds");
      for (Eigen::Index r = 0; r < target.rows(); ++r)
        for (Eigen::Index c = 0; c < target.cols(); ++c) target(r, c) = flat[offset++];
    }
    out.push_back(std::move(model));
  }
  return out;
}

}  // namespace topoleak::disentangle
