// Acceptance suite: prints one PASS/FAIL line per criterion and exits nonzero
// when any hard criterion fails. Expensive runs are shared between criteria.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "topoleak/config.hpp"
#include "topoleak/disentangle.hpp"
#include "topoleak/errors.hpp"
#include "topoleak/eval.hpp"
#include "topoleak/info.hpp"
#include "topoleak/io.hpp"
#include "topoleak/pipeline.hpp"

using namespace topoleak;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
  bool soft = false;  // a failure only warns
};

// ---- 1: AUC against brute-force pair counting -------------------------------

Outcome auc_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(1);
  int mismatches = 0, fixtures = 0;
  while (fixtures < 200) {
    const int n = std::uniform_int_distribution<int>(2, 10)(rng);  // |universe| <= 45
    std::vector<graph::Edge> edges;
    eval::EdgeScores s;
    std::bernoulli_distribution coin(0.4);
    // Coarse score grid so ties are common.
    std::uniform_int_distribution<int> level(0, 8);
    std::vector<int> truth;
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        s.universe.push_back({i, j});
        s.score.push_back(level(rng) / 8.0);
        const bool e = coin(rng);
        truth.push_back(e);
        if (e) edges.push_back({i, j});
      }
    }
    const int pos = static_cast<int>(std::count(truth.begin(), truth.end(), 1));
    const int neg = static_cast<int>(truth.size()) - pos;
    if (pos == 0 || neg == 0) continue;
    ++fixtures;
    // Oracle: count every positive/negative pair.
    double wins = 0.0;
    for (std::size_t a = 0; a < truth.size(); ++a)
      for (std::size_t b = 0; b < truth.size(); ++b)
        if (truth[a] == 1 && truth[b] == 0)
          wins += s.score[a] > s.score[b] ? 1.0 : (s.score[a] == s.score[b] ? 0.5 : 0.0);
    const double expected = wins / (static_cast<double>(pos) * neg);
    std::vector<int> identity(n);
    for (int i = 0; i < n; ++i) identity[i] = i;
    const double got = eval::auc(s, graph::Topology(n, edges, identity));
    if (got != expected) ++mismatches;
  }
  const double secs = seconds_since(t0);
  return {mismatches == 0 && secs < 1.0,
          std::to_string(fixtures) + " fixtures, " + std::to_string(mismatches) + " mismatches, " +
              std::to_string(secs) + " s"};
}

// ---- 2: total correlation decompositions ------------------------------------

Outcome tc_identity() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2);
  std::gamma_distribution<double> g(0.7, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    info::Joint p(8);
    double z = 0.0;
    for (auto& v : p) z += (v = g(rng));
    for (auto& v : p) v /= z;
    // Oracle: sum of marginal entropies minus the joint entropy.
    const auto h = [&](unsigned mask) {
      std::map<unsigned, double> m;
      for (unsigned x = 0; x < 8; ++x) m[x & mask] += p[x];
      double out = 0.0;
      for (const auto& [k, v] : m)
        if (v > 0) out -= v * std::log(v);
      return out;
    };
    const double direct = h(1) + h(2) + h(4) - h(7);
    const double telescoped = info::total_correlation(p, 0b111);
    const double split = info::total_correlation_split(p, 0b001, 0b110);
    const double split2 = info::total_correlation_split(p, 0b011, 0b100);
    worst = std::max({worst, std::abs(direct - telescoped), std::abs(direct - split), std::abs(direct - split2)});
  }
  const double secs = seconds_since(t0);
  char buf[96];
  std::snprintf(buf, sizeof buf, "max deviation %.3g over 20 joints, %.3f s", worst, secs);
  return {worst <= 1e-9 && secs < 1.0, buf};
}

// ---- 3: InfoNCE sanity -------------------------------------------------------

Eigen::MatrixXd gaussian(int r, int c, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXd m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = n(rng);
  return m;
}

disentangle::TrainBatch random_batch(int agents, int samples, int d, std::mt19937_64& rng) {
  disentangle::TrainBatch b;
  b.agents = agents;
  b.samples = samples;
  b.h = 0.5 * gaussian(agents * samples, d, rng);
  b.pos = {{0, 1}};
  b.neg = {{0, agents - 1}};
  return b;
}

Outcome infonce_sanity() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(3);
  const double single = disentangle::infonce(gaussian(1, 4, rng), gaussian(1, 4, rng),
                                             Eigen::MatrixXd::Identity(4, 4), 0.1);
  double mean = 0.0;
  for (int seed = 0; seed < 50; ++seed) {
    std::mt19937_64 r(100 + seed);
    mean += disentangle::infonce(gaussian(128, 4, r), gaussian(128, 4, r), 0.1 * Eigen::MatrixXd::Identity(4, 4),
                                 1.0) /
            50.0;
  }
  // Training asserts estimate <= log M after every step and raises otherwise.
  bool bound_ok = true;
  std::string bound_note = "bound held in training";
  try {
    std::vector<disentangle::TrainBatch> data{random_batch(4, 8, 16, rng), random_batch(4, 8, 16, rng)};
    disentangle::TrainConfig cfg;
    cfg.epochs = 100;
    cfg.lr = 1e-2;
    const auto r = disentangle::train(data, {16, 12, 8}, disentangle::Variant::kDual, cfg);
    for (const auto& b : data)
      for (double v : disentangle::total_loss(r.params, b).infonce)
        if (v > std::log(8.0) + 1e-12) bound_ok = false;
  } catch (const TrainingError& e) {
    bound_ok = false;
    bound_note = e.what();
  }
  const double secs = seconds_since(t0);
  char buf[160];
  std::snprintf(buf, sizeof buf, "M=1 -> %g, independent mean %.4f, %s, %.2f s", single, mean, bound_note.c_str(),
                secs);
  return {single == 0.0 && std::abs(mean) < 0.1 && bound_ok && secs < 5.0, buf};
}

// ---- 4: finite-difference gradients -------------------------------------------

Outcome gradient_check() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(4);
  const auto batch = random_batch(3, 4, 6, rng);
  double worst = 0.0;
  std::string where;
  int checked = 0;
  for (const auto variant : {disentangle::Variant::kDual, disentangle::Variant::kSub}) {
    const disentangle::ModelDims dims{6, 5, variant == disentangle::Variant::kDual ? 4 : 6};
    auto p = disentangle::ModelParams::init(dims, variant, 4);
    p.temperature = 0.5;
    const std::vector<std::pair<const char*, disentangle::LossWeights>> parts{
        {"rec", {1, 0, 0, 1}}, {"bias", {0, 1, 0, 1}}, {"lws", {0, 0, 1, 1}}};
    for (const auto& [name, w] : parts) {
      const auto grads = disentangle::gradients(p, batch, w).second;
      auto slots = p.tensors();
      for (std::size_t k = 0; k < slots.size(); ++k) {
        auto& t = *slots[k].second;
        for (Eigen::Index i = 0; i < t.size(); ++i) {
          const double keep = t.data()[i];
          const double h = 1e-5;
          t.data()[i] = keep + h;
          const double up = disentangle::total_loss(p, batch, w).total;
          t.data()[i] = keep - h;
          const double down = disentangle::total_loss(p, batch, w).total;
          t.data()[i] = keep;
          const double fd = (up - down) / (2 * h);
          const double an = grads.tensors[k].data()[i];
          // Relative error with a 1e-4 floor on the scale so float noise on
          // vanishing entries is not amplified.
          const double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-4});
          ++checked;
          if (rel > worst) {
            worst = rel;
            where = disentangle::variant_name(variant) + "/" + name + "/" + slots[k].first;
          }
        }
      }
    }
  }
  const double secs = seconds_since(t0);
  char buf[200];
  std::snprintf(buf, sizeof buf, "%d entries, worst relative error %.3g (%s), %.2f s", checked, worst, where.c_str(),
                secs);
  return {worst < 1e-4 && secs < 10.0, buf};
}

// ---- 5: recovery round trip ----------------------------------------------------

Outcome round_trip(const fs::path& work) {
  const auto t0 = Clock::now();
  int runs = 0, imperfect = 0;
  double rouge = 0.0;
  for (int n = 3; n <= 7; ++n) {
    config::RunConfig c;
    c.seed = 50 + static_cast<std::uint64_t>(n);
    c.topology.n = n;
    // At least n-1 edges, so every agent reaches the decision agent and
    // surfaces in its output.
    c.topology.edge_mean = std::max(n - 1.0, n * (n - 1) / 4.0);
    c.topology.count = 10;
    c.perturbations = 2;
    c.embedding.d = 16;
    c.model.hidden = 8;
    c.model.latent = 8;
    c.supervision.k = 1;  // leaves negatives even at n = 3
    c.out = (work / "roundtrip").string();
    const auto data = pipeline::prepare(c);
    for (const auto& sys : data.systems) {
      for (std::size_t m = 0; m < sys.recovered.size(); ++m) {
        const auto match = eval::match_recovered(sys.recovered[m].items, sys.traces[m].true_outputs, c.theta);
        ++runs;
        rouge += match.mean_rouge_l;
        if (match.recall != 1.0) ++imperfect;
      }
    }
  }
  rouge /= runs;
  const double secs = seconds_since(t0);
  char buf[128];
  std::snprintf(buf, sizeof buf, "%d runs, %d below full recall, mean ROUGE-L %.6f, %.2f s", runs, imperfect, rouge,
                secs);
  return {runs >= 100 && imperfect == 0 && rouge == 1.0 && secs < 10.0, buf};
}

// ---- shared end-to-end runs ----------------------------------------------------

config::RunConfig base_config(const fs::path& out) {
  config::RunConfig c;  // n=5, 8.19 edges, rho 0.35, beta 0.4, M 16, k 3, lr 1e-3, tau 0.5, alpha 0.1
  c.topology.count = 20;
  c.out = out.string();
  return c;
}

struct TimedAttack {
  pipeline::AttackResult result;
  double seconds = 0.0;
};

class Runs {
 public:
  explicit Runs(fs::path work) : work_(std::move(work)) {}

  const TimedAttack& cia() {
    if (!cia_) {
      const auto t0 = Clock::now();
      auto r = pipeline::cmd_attack(base_config(work_ / "attack_a"));
      cia_ = TimedAttack{std::move(r), seconds_since(t0)};
      record(cia_->result);
    }
    return *cia_;
  }

  // Ablation variants trained on data prepared exactly as cmd_attack does.
  const TimedAttack& variant(const std::string& name) {
    auto it = variants_.find(name);
    if (it != variants_.end()) return it->second;
    const auto cfg = base_config(work_ / "ablation");
    const auto t0 = Clock::now();
    if (!prepared_) prepared_ = pipeline::prepare(cfg);
    const double prep = prepared_seconds_ > 0 ? prepared_seconds_ : (prepared_seconds_ = seconds_since(t0));
    const auto t1 = Clock::now();
    for (const auto& spec : pipeline::ablation_variants(cfg)) {
      if (spec.name != name) continue;
      auto r = pipeline::attack(*prepared_, spec);
      pipeline::write_attack_artifacts(work_ / "ablation" / name, *prepared_, r);
      record(r);
      it = variants_.emplace(name, TimedAttack{std::move(r), prep + seconds_since(t1)}).first;
    }
    if (it == variants_.end()) throw std::logic_error("unknown ablation variant " + name);
    return it->second;
  }

  const TimedAttack& cia_simulated() {
    if (!simulated_) {
      auto cfg = base_config(work_ / "attack_simulated");
      cfg.supervision.oracle = "simulated";
      cfg.supervision.precision_target = 1.0;
      const auto t0 = Clock::now();
      auto r = pipeline::cmd_attack(cfg);
      simulated_ = TimedAttack{std::move(r), seconds_since(t0)};
      record(simulated_->result);
    }
    return *simulated_;
  }

  // Predicted edges of every run, for the direction invariant.
  const std::vector<std::vector<eval::Pair>>& predicted() const { return predicted_; }
  const fs::path& work() const { return work_; }

 private:
  void record(const pipeline::AttackResult& r) {
    for (const auto& s : r.systems) predicted_.push_back(s.report.predicted);
  }

  fs::path work_;
  std::optional<TimedAttack> cia_, simulated_;
  std::optional<pipeline::Prepared> prepared_;
  double prepared_seconds_ = 0.0;
  std::map<std::string, TimedAttack> variants_;
  std::vector<std::vector<eval::Pair>> predicted_;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

Outcome attack_quality(Runs& runs) {
  const auto& r = runs.cia();
  return {r.result.mean.auc >= 0.85 && r.seconds < 300.0,
          "mean AUC " + fmt(r.result.mean.auc) + " over " + std::to_string(r.result.auc_systems) + " systems, " +
              fmt(r.seconds) + " s"};
}

Outcome gbd_ablation(Runs& runs) {
  const auto& full = runs.cia();
  const auto& wo = runs.variant("wo_gbd");
  const double secs = full.seconds + wo.seconds;
  const bool fpr_ok = full.result.mean.fpr <= 0.5 * wo.result.mean.fpr;
  const double gap = full.result.mean.auc - wo.result.mean.auc;
  return {fpr_ok && gap >= 0.10 && secs < 600.0,
          "FPR " + fmt(full.result.mean.fpr) + " vs " + fmt(wo.result.mean.fpr) + " w/o GBD, AUC gap " + fmt(gap) +
              ", " + fmt(secs) + " s"};
}

Outcome lws_ablation(Runs& runs) {
  const auto& cia = runs.cia_simulated();
  const auto& wo = runs.variant("wo_lws");
  const double secs = cia.seconds + wo.seconds;
  return {cia.result.mean.auc >= wo.result.mean.auc && secs < 600.0,
          "AUC " + fmt(cia.result.mean.auc) + " (simulated oracle, precision 1.0) vs " + fmt(wo.result.mean.auc) +
              " w/o LWS, " + fmt(secs) + " s"};
}

Outcome sub_comparison(Runs& runs) {
  const auto& cia = runs.cia();
  const auto& sub = runs.variant("sub");
  const double secs = cia.seconds + sub.seconds;
  return {cia.result.mean.auc >= sub.result.mean.auc && secs < 600.0,
          "AUC " + fmt(cia.result.mean.auc) + " vs " + fmt(sub.result.mean.auc) + " CIA-Sub, " + fmt(secs) + " s"};
}

Outcome direction(const Runs& runs) {
  std::size_t systems = 0, edges = 0, violations = 0;
  for (const auto& pred : runs.predicted()) {
    ++systems;
    for (const auto& [i, j] : pred) {
      ++edges;
      // Positions are the recovered order, so pi(i) = i.
      if (i >= j) ++violations;
    }
  }
  return {systems > 0 && violations == 0,
          std::to_string(edges) + " predicted edges in " + std::to_string(systems) + " attacked systems, " +
              std::to_string(violations) + " against order"};
}

Outcome sweep(Runs& runs) {
  const auto t0 = Clock::now();
  const std::vector<double> lrs{1e-4, 1e-3, 1e-2};
  double best = -1.0, at_k3 = -1.0;
  std::string table;
  for (int k = 1; k <= 5; ++k) {
    auto cfg = base_config(runs.work() / "sweep");
    cfg.topology.count = 5;
    cfg.supervision.k = k;
    const auto data = pipeline::prepare(cfg);
    for (double lr : lrs) {
      auto c = cfg;
      c.training.lr = lr;
      pipeline::Prepared d = data;
      d.config = c;
      const auto r = pipeline::attack(d, pipeline::configured_variant(c));
      best = std::max(best, r.mean.auc);
      if (k == 3) at_k3 = std::max(at_k3, r.mean.auc);
      char buf[48];
      std::snprintf(buf, sizeof buf, " k%d/lr%.0e=%.3f", k, lr, r.mean.auc);
      table += buf;
    }
  }
  const double secs = seconds_since(t0);
  Outcome o{at_k3 >= best - 0.02 && secs < 1800.0,
            "15 settings completed; best k=3 AUC " + fmt(at_k3) + " vs grid max " + fmt(best) + ", " + fmt(secs) +
                " s;" + table};
  o.soft = secs < 1800.0;  // completing the grid is required; the k=3 ranking only warns
  return o;
}

Outcome determinism(Runs& runs) {
  const auto& a = runs.cia();
  const auto t0 = Clock::now();
  pipeline::cmd_attack(base_config(runs.work() / "attack_b"));
  const double secs = a.seconds + seconds_since(t0);
  const auto ma = io::read_text(runs.work() / "attack_a" / "metrics.json");
  const auto mb = io::read_text(runs.work() / "attack_b" / "metrics.json");
  return {ma == mb && secs < 600.0,
          std::string(ma == mb ? "metrics.json byte-identical" : "metrics.json differs") + ", " + fmt(secs) +
              " s combined"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string work = "acceptance_runs";
  std::vector<int> only;
  app.add_option("--work-dir", work, "Directory for run artifacts");
  app.add_option("--only", only, "Run only these criteria");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(work);
  Runs runs{fs::path(work)};

  const std::vector<std::pair<int, std::function<Outcome()>>> criteria{
      {1, [] { return auc_oracle(); }},
      {2, [] { return tc_identity(); }},
      {3, [] { return infonce_sanity(); }},
      {4, [] { return gradient_check(); }},
      {5, [&] { return round_trip(work); }},
      {7, [&] { return attack_quality(runs); }},
      {8, [&] { return gbd_ablation(runs); }},
      {9, [&] { return lws_ablation(runs); }},
      {10, [&] { return sub_comparison(runs); }},
      {11, [&] { return sweep(runs); }},
      {12, [&] { return determinism(runs); }},
      // Checked last so it covers every attack run above.
      {6, [&] { return direction(runs); }},
  };
  std::map<int, std::string> lines;
  int failures = 0;
  for (const auto& [id, fn] : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const char* tag = o.pass ? "PASS" : (o.soft ? "WARN" : "FAIL");
    if (!o.pass && !o.soft) ++failures;
    char head[32];
    std::snprintf(head, sizeof head, "%s criterion %d: ", tag, id);
    lines[id] = head + o.detail;
    std::printf("%s\n", lines[id].c_str());
    std::fflush(stdout);
  }
  std::printf("\nsummary (criterion order):\n");
  for (const auto& [id, line] : lines) std::printf("%s\n", line.c_str());
  return failures == 0 ? 0 : 1;
}
