#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "topoleak/disentangle.hpp"

using namespace topoleak;
using namespace topoleak::disentangle;
using Mat = Eigen::MatrixXd;

namespace {

Mat gaussian(int r, int c, unsigned seed, double sd = 1.0) {
  std::mt19937 g(seed);
  std::normal_distribution<double> n(0.0, sd);
  Mat m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = n(g);
  return m;
}

TrainBatch batch(int agents, int samples, int d, unsigned seed) {
  TrainBatch b;
  b.agents = agents;
  b.samples = samples;
  b.h = gaussian(agents * samples, d, seed, 0.5);
  b.pos = {{0, 1}};
  b.neg = {{0, agents - 1}};
  b.alpha = 0.1;
  return b;
}

const ModelDims kSmall{6, 5, 4};

// Oracle: InfoNCE by the textbook formula with plain loops.
double infonce_oracle(const Mat& u, const Mat& v, const Mat& w, double temp) {
  const int m = static_cast<int>(u.rows());
  double total = 0.0;
  for (int p = 0; p < m; ++p) {
    double norm = 0.0;
    for (int q = 0; q < m; ++q) norm += std::exp((u.row(p) * w * v.row(q).transpose())(0, 0) / temp);
    total += (u.row(p) * w * v.row(p).transpose())(0, 0) / temp - std::log(norm / m);
  }
  return total / m;
}

double bce_oracle(double cos, double alpha, bool positive) {
  const double s = std::clamp((1.0 + cos) / 2.0, kSimEpsilon, 1.0 - kSimEpsilon);
  return positive ? -((1 - alpha) * std::log(s) + alpha * std::log(1 - s))
                  : -((1 - alpha) * std::log(1 - s) + alpha * std::log(s));
}

Mat rows_of(const ModelParams& p, const TrainBatch& b, bool debiased) {
  return debiased ? p.enc_d.apply(b.h) : p.enc_b.apply(b.h);
}

}  // namespace

TEST(Disentangle, ForwardDimensions) {
  const auto p = ModelParams::init(ModelDims{}, Variant::kDual, 1);
  embedding::EmbeddingVector h{Eigen::VectorXd::Ones(384)};
  const auto z = forward(p, h);
  EXPECT_EQ(z.z_d.size(), 768);
  EXPECT_EQ(z.z_b.size(), 768);
  EXPECT_THROW(forward(p, embedding::EmbeddingVector{Eigen::VectorXd::Ones(10)}), std::invalid_argument);
}

TEST(Disentangle, ZeroParamsGiveZeroLatents) {
  const auto p = ModelParams::zeros(kSmall, Variant::kDual);
  const auto z = forward(p, embedding::EmbeddingVector{Eigen::VectorXd::Ones(6)});
  EXPECT_EQ(z.z_d.norm(), 0.0);
  EXPECT_EQ(z.z_b.norm(), 0.0);
}

TEST(Disentangle, ForwardSubIsResidual) {
  const ModelDims dims{6, 5, 6};
  const auto p = ModelParams::init(dims, Variant::kSub, 2);
  embedding::EmbeddingVector h{gaussian(6, 1, 3).col(0)};
  const auto z = forward_sub(p, h);
  EXPECT_LT((z.z_d + z.z_b - h.values).norm(), 1e-12);
  EXPECT_LT((z.z_b - forward(p, h).z_b).norm(), 1e-12);
  EXPECT_THROW(forward_sub(ModelParams::init(kSmall, Variant::kDual, 2), embedding::EmbeddingVector{Eigen::VectorXd::Ones(6)}),
               std::invalid_argument);
  EXPECT_THROW(ModelParams::init(kSmall, Variant::kSub, 1), std::invalid_argument);
}

TEST(Disentangle, InitIsDeterministicAndBounded) {
  const auto a = ModelParams::init(kSmall, Variant::kDual, 5);
  const auto b = ModelParams::init(kSmall, Variant::kDual, 5);
  const auto c = ModelParams::init(kSmall, Variant::kDual, 6);
  EXPECT_EQ(a.enc_d.w1, b.enc_d.w1);
  EXPECT_NE(a.enc_d.w1, c.enc_d.w1);
  EXPECT_LE(a.enc_d.w1.cwiseAbs().maxCoeff(), 1.0 / std::sqrt(6.0));
  EXPECT_LE(a.dec.w1.cwiseAbs().maxCoeff(), 1.0 / std::sqrt(8.0));
  EXPECT_EQ(a.tensors().size(), 14u);
}

TEST(Disentangle, ReconstructionOfZeroDecoderIsMeanSquaredNorm) {
  auto p = ModelParams::init(kSmall, Variant::kDual, 1);
  p.dec = ModelParams::zeros(kSmall, Variant::kDual).dec;
  const auto b = batch(3, 4, 6, 9);
  EXPECT_NEAR(loss_rec(p, b), b.h.squaredNorm() / 12.0, 1e-12);
}

TEST(Disentangle, InfonceMatchesOracle) {
  const Mat u = gaussian(5, 3, 1), v = gaussian(5, 3, 2), w = gaussian(3, 3, 3, 0.3);
  EXPECT_NEAR(infonce(u, v, w, 0.7), infonce_oracle(u, v, w, 0.7), 1e-10);
}

TEST(Disentangle, InfonceSingleSampleIsZero) {
  EXPECT_NEAR(infonce(gaussian(1, 3, 1), gaussian(1, 3, 2), Mat::Identity(3, 3), 0.1), 0.0, 1e-12);
}

TEST(Disentangle, InfonceOrthonormalApproachesLogM) {
  const Mat e = Mat::Identity(8, 8);
  const double v = infonce(e, e, Mat::Identity(8, 8), 0.1);
  EXPECT_NEAR(v, std::log(8.0), 1e-3);
  EXPECT_LE(v, std::log(8.0) + 1e-12);
}

TEST(Disentangle, InfonceIndependentIsNearZero) {
  const Mat u = gaussian(512, 4, 7), v = gaussian(512, 4, 8);
  EXPECT_LT(std::abs(infonce(u, v, 0.1 * Mat::Identity(4, 4), 1.0)), 0.1);
}

TEST(Disentangle, InfonceRejectsBadInput) {
  EXPECT_THROW(infonce(gaussian(3, 2, 1), gaussian(4, 2, 1), Mat::Identity(2, 2), 0.1), std::invalid_argument);
  EXPECT_THROW(infonce(gaussian(3, 2, 1), gaussian(3, 2, 1), Mat::Identity(2, 2), 0.0), std::invalid_argument);
}

TEST(Disentangle, BiasLossTwoAgentExpansion) {
  const auto p = ModelParams::init(kSmall, Variant::kDual, 3);
  auto b = batch(2, 4, 6, 4);
  b.neg = {{1, 0}};
  const Mat zb = rows_of(p, b, false), zd = rows_of(p, b, true);
  const double tc = infonce_oracle(zb.topRows(4), zb.bottomRows(4), p.critic_tc, p.temperature);
  const double l1 = infonce_oracle(zd.topRows(4), zb.topRows(4), p.critic_db, p.temperature);
  const double l2 = infonce_oracle(zd.bottomRows(4), zb.bottomRows(4), p.critic_db, p.temperature);
  EXPECT_NEAR(loss_bias(p, b), -tc + std::max(0.0, l1) + std::max(0.0, l2), 1e-9);
}

TEST(Disentangle, BiasLossThreeAgentsUsesPrefixMeans) {
  const auto p = ModelParams::init(kSmall, Variant::kDual, 4);
  const int m = 3;
  const auto b = batch(3, m, 6, 5);
  const Mat zb = rows_of(p, b, false), zd = rows_of(p, b, true);
  double expected = 0.0;
  Mat prefix = zb.topRows(m);
  for (int i = 1; i < 3; ++i) {
    expected -= infonce_oracle(prefix / i, zb.middleRows(i * m, m), p.critic_tc, p.temperature);
    prefix += zb.middleRows(i * m, m);
  }
  for (int i = 0; i < 3; ++i)
    expected += std::max(0.0, infonce_oracle(zd.middleRows(i * m, m), zb.middleRows(i * m, m), p.critic_db,
                                             p.temperature));
  const auto lb = total_loss(p, b, {0.0, 1.0, 0.0, 1.0});
  EXPECT_NEAR(lb.bias, expected, 1e-9);
  EXPECT_EQ(lb.infonce.size(), 5u);
}

TEST(Disentangle, BiasLossIsZeroForConstantBiasVectors) {
  auto p = ModelParams::init(kSmall, Variant::kDual, 6);
  p.enc_b.w1.setZero();  // every row of z_b becomes the same vector
  EXPECT_NEAR(loss_bias(p, batch(3, 4, 6, 7)), 0.0, 1e-12);
}

TEST(Disentangle, BiasLossNeedsTwoAgentsAndSamples) {
  const auto p = ModelParams::init(kSmall, Variant::kDual, 6);
  auto one = batch(2, 1, 6, 1);
  one.neg = {{1, 0}};
  EXPECT_NO_THROW(one.validate(6));
  EXPECT_THROW(loss_bias(p, one), std::invalid_argument);
}

TEST(Disentangle, LwsKnownValues) {
  Mat z(4, 2);
  z << 1, 0,      // 0
      0.8, 0.6,   // 1: cos(0,1) = 0.8
      -0.8, 0.6,  // 2: cos(0,2) = -0.8
      0, 1;       // 3: cos(0,3) = 0
  // Sim 0.9 on a positive: -(0.9 ln 0.9 + 0.1 ln 0.1).
  EXPECT_NEAR(bce_oracle(0.8, 0.1, true), 0.32508, 1e-5);
  EXPECT_NEAR(loss_lws(z, {{0, 1}}, {{0, 2}}, 0.1), 2 * 0.325082973391448, 1e-9);
  EXPECT_NEAR(loss_lws(z, {{0, 3}}, {{0, 3}}, 0.1), 2 * std::log(2.0), 1e-12);
  EXPECT_NEAR(loss_lws(z, {{0, 1}, {0, 3}}, {{0, 2}}, 0.0),
              0.5 * (bce_oracle(0.8, 0.0, true) + bce_oracle(0.0, 0.0, true)) + bce_oracle(-0.8, 0.0, false),
              1e-12);
  EXPECT_THROW(loss_lws(z, {}, {{0, 2}}, 0.1), std::invalid_argument);
  EXPECT_THROW(loss_lws(z, {{0, 1}}, {{0, 2}}, 0.5), std::invalid_argument);
}

TEST(Disentangle, LwsClampsIdenticalRows) {
  Mat z(2, 2);
  z << 1, 1, 2, 2;
  EXPECT_NEAR(loss_lws(z, {{0, 1}}, {{0, 1}}, 0.1), bce_oracle(1.0, 0.1, true) + bce_oracle(1.0, 0.1, false),
              1e-9);
  EXPECT_TRUE(std::isfinite(loss_lws(z, {{0, 1}}, {{0, 1}}, 0.0)));
}

TEST(Disentangle, ZeroModelLossValues) {
  const auto p = ModelParams::zeros(kSmall, Variant::kDual);
  const auto b = batch(3, 4, 6, 2);
  const auto l = total_loss(p, b);
  EXPECT_NEAR(l.rec, b.h.squaredNorm() / 12.0, 1e-12);
  EXPECT_NEAR(l.bias, 0.0, 1e-12);
  EXPECT_NEAR(l.lws, 2 * std::log(2.0), 1e-12);
}

TEST(Disentangle, SupervisionScoresMeanPerSampleCosine) {
  const auto p = ModelParams::init(kSmall, Variant::kDual, 8);
  const auto b = batch(3, 4, 6, 3);
  const Mat zd = rows_of(p, b, true);
  const Mat prof = agent_profiles(p, b);
  ASSERT_EQ(prof.rows(), 3);
  ASSERT_EQ(prof.cols(), 16);
  double mean_cos = 0.0;
  for (int s = 0; s < 4; ++s) {
    const Eigen::RowVectorXd a = zd.row(0 * 4 + s), c = zd.row(2 * 4 + s);
    mean_cos += a.dot(c) / (a.norm() * c.norm()) / 4.0;
  }
  const double prof_cos = prof.row(0).dot(prof.row(2)) / (prof.row(0).norm() * prof.row(2).norm());
  EXPECT_NEAR(prof_cos, mean_cos, 1e-12);
  auto only = b;
  only.pos = {{0, 2}};
  only.neg = {{1, 2}};
  const auto l = total_loss(p, only, {0.0, 0.0, 1.0, 1.0});
  EXPECT_NEAR(l.lws, loss_lws(prof, {{0, 2}}, {{1, 2}}, 0.1), 1e-12);
}

TEST(Disentangle, TotalIsWeightedSum) {
  const auto p = ModelParams::init(kSmall, Variant::kDual, 9);
  const auto b = batch(3, 4, 6, 10);
  const LossWeights w{0.5, 2.0, 3.0, 1.5};
  const auto l = total_loss(p, b, w);
  EXPECT_NEAR(l.total, 1.5 * (0.5 * l.rec + 2.0 * l.bias + 3.0 * l.lws), 1e-12);
  const auto plain = total_loss(p, b);
  EXPECT_NEAR(plain.rec, l.rec, 1e-12);
  EXPECT_NEAR(plain.bias, l.bias, 1e-12);
  EXPECT_NEAR(plain.lws, l.lws, 1e-12);
}

TEST(Disentangle, GradientsMatchFiniteDifferences) {
  for (const auto variant : {Variant::kDual, Variant::kSub}) {
    const ModelDims dims = variant == Variant::kDual ? kSmall : ModelDims{6, 5, 6};
    auto p = ModelParams::init(dims, variant, 11);
    p.temperature = 0.5;
    const auto b = batch(3, 4, 6, 12);
    const auto [loss, grads] = gradients(p, b);
    EXPECT_NEAR(loss.total, total_loss(p, b).total, 1e-12);
    auto slots = p.tensors();
    ASSERT_EQ(grads.tensors.size(), slots.size());
    std::mt19937 pick(13);
    const double h = 1e-6;
    for (std::size_t k = 0; k < slots.size(); ++k) {
      auto& t = *slots[k].second;
      for (int trial = 0; trial < 4; ++trial) {
        const auto r = static_cast<Eigen::Index>(pick() % t.rows());
        const auto c = static_cast<Eigen::Index>(pick() % t.cols());
        const double keep = t(r, c);
        t(r, c) = keep + h;
        const double up = total_loss(p, b).total;
        t(r, c) = keep - h;
        const double down = total_loss(p, b).total;
        t(r, c) = keep;
        const double fd = (up - down) / (2 * h);
        const double an = grads.tensors[k](r, c);
        EXPECT_LE(std::abs(an - fd), 1e-4 * std::max(1.0, std::abs(fd)))
            << variant_name(variant) << " " << slots[k].first << "(" << r << "," << c << ") analytic " << an
            << " fd " << fd;
      }
    }
  }
}

TEST(Disentangle, GradientScalesLinearly) {
  const auto p = ModelParams::init(kSmall, Variant::kDual, 14);
  const auto b = batch(3, 4, 6, 15);
  const auto g1 = gradients(p, b, {1, 1, 1, 1.0}).second;
  const auto g3 = gradients(p, b, {1, 1, 1, 3.0}).second;
  for (std::size_t k = 0; k < g1.tensors.size(); ++k)
    EXPECT_LT((g3.tensors[k] - 3.0 * g1.tensors[k]).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Disentangle, ZeroWeightsGiveZeroGradients) {
  const auto p = ModelParams::init(kSmall, Variant::kDual, 16);
  const auto [loss, grads] = gradients(p, batch(3, 4, 6, 17), {0, 0, 0, 1});
  EXPECT_EQ(loss.total, 0.0);
  for (const auto& g : grads.tensors) EXPECT_EQ(g.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Disentangle, BatchValidation) {
  auto b = batch(3, 4, 6, 1);
  EXPECT_NO_THROW(b.validate(6));
  EXPECT_THROW(b.validate(7), std::invalid_argument);
  auto overlap = b;
  overlap.neg = {{0, 1}};
  EXPECT_THROW(overlap.validate(6), std::invalid_argument);
  auto range = b;
  range.pos = {{0, 3}};
  EXPECT_THROW(range.validate(6), std::invalid_argument);
  auto rows = b;
  rows.samples = 5;
  EXPECT_THROW(rows.validate(6), std::invalid_argument);
}

TEST(Disentangle, TrainingDescendsAndIsDeterministic) {
  const std::vector<TrainBatch> data{batch(3, 4, 6, 20), batch(3, 4, 6, 21)};
  TrainConfig cfg;
  cfg.epochs = 60;
  cfg.lr = 1e-2;
  cfg.seed = 3;
  for (bool single : {true, false}) {
    cfg.single_precision = single;
    const auto a = train(data, kSmall, Variant::kDual, cfg);
    ASSERT_EQ(a.curve.size(), 61u);
    EXPECT_LT(a.curve.back().rec + a.curve.back().lws, a.curve.front().rec + a.curve.front().lws);
    const auto again = train(data, kSmall, Variant::kDual, cfg);
    for (std::size_t k = 0; k < a.params.tensors().size(); ++k)
      EXPECT_EQ(*a.params.tensors()[k].second, *again.params.tensors()[k].second);
    EXPECT_TRUE(a.params.all_finite());
  }
}

TEST(Disentangle, NonAdversarialTrainingDescendsTotal) {
  const std::vector<TrainBatch> data{batch(3, 4, 6, 22)};
  TrainConfig cfg;
  cfg.epochs = 60;
  cfg.lr = 1e-2;
  cfg.adversarial_critic = false;
  cfg.single_precision = false;
  const auto r = train(data, kSmall, Variant::kDual, cfg);
  EXPECT_LT(r.curve.back().total, r.curve.front().total);
  // First record is the loss of the initial parameters.
  const auto init = ModelParams::init(kSmall, Variant::kDual, cfg.seed);
  EXPECT_NEAR(r.curve.front().total, total_loss(init, data[0]).total, 1e-9);
}

TEST(Disentangle, TrainRejectsBadConfig) {
  TrainConfig cfg;
  EXPECT_THROW(train({}, kSmall, Variant::kDual, cfg), std::invalid_argument);
  cfg.lr = 0.0;
  EXPECT_THROW(train({batch(3, 4, 6, 1)}, kSmall, Variant::kDual, cfg), std::invalid_argument);
}

TEST(Disentangle, SaveLoadRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "topoleak_params_test";
  std::filesystem::create_directories(dir);
  const auto a = ModelParams::init(kSmall, Variant::kDual, 30);
  const auto b = ModelParams::init(ModelDims{6, 5, 6}, Variant::kSub, 31);
  save_params(dir / "model", {a, b});
  const auto back = load_params(dir / "model");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].variant, Variant::kSub);
  EXPECT_EQ(back[1].dims.latent, 6);
  const auto ra = rounded_to_float32(a);
  for (std::size_t k = 0; k < ra.tensors().size(); ++k)
    EXPECT_EQ(*back[0].tensors()[k].second, *ra.tensors()[k].second);
  std::filesystem::resize_file(dir / "model.bin", 8);
  EXPECT_THROW(load_params(dir / "model"), std::runtime_error);
  std::filesystem::remove_all(dir);
}
