#include "topoleak/eval.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>
#include <tuple>

#include "topoleak/text.hpp"

namespace topoleak::eval {

double rescaled_cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b, bool* degenerate) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) {
    if (degenerate != nullptr) *degenerate = true;
    return 0.5;
  }
  if (degenerate != nullptr) *degenerate = false;
  const double cos = std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
  return (1.0 + cos) / 2.0;
}

EdgeScores score_pairs(const Eigen::MatrixXd& z, const std::vector<int>& pi) {
  const auto n = static_cast<int>(z.rows());
  if (n < 2) throw std::invalid_argument("score_pairs: need at least two vectors");
  if (static_cast<int>(pi.size()) != n) throw std::invalid_argument("score_pairs: pi size mismatch");
  if (std::set<int>(pi.begin(), pi.end()).size() != pi.size())
    throw std::invalid_argument("score_pairs: pi positions must be distinct");

  std::vector<int> rows(n);
  std::iota(rows.begin(), rows.end(), 0);
  std::sort(rows.begin(), rows.end(), [&](int a, int b) { return pi[a] < pi[b]; });
  EdgeScores s;
  for (int a = 0; a < n; ++a) {
    for (int b = a + 1; b < n; ++b) {
      const int i = rows[a];
      const int j = rows[b];
      bool degenerate = false;
      s.universe.emplace_back(i, j);
      s.score.push_back(rescaled_cosine(z.row(i).transpose(), z.row(j).transpose(), &degenerate));
      if (degenerate) s.degenerate.emplace_back(i, j);
    }
  }
  return s;
}

std::vector<Pair> identify_links(const EdgeScores& s, double tau) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw std::invalid_argument("identify_links: tau outside [0, 1]");
  std::vector<Pair> out;
  for (std::size_t k = 0; k < s.universe.size(); ++k)
    if (s.score[k] >= tau) out.push_back(s.universe[k]);
  return out;
}

double auc(const EdgeScores& s, const graph::Topology& truth) {
  std::vector<std::pair<double, bool>> v;
  for (std::size_t k = 0; k < s.universe.size(); ++k)
    v.emplace_back(s.score[k], truth.has_edge(s.universe[k].first, s.universe[k].second));
  std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  // Average ranks over tie groups, then the rank-sum form of the statistic.
  // Counts stay integral (in halves) so the result is exact.
  long long pos = 0, neg = 0, twice_wins = 0;
  long long neg_below = 0;
  for (std::size_t a = 0; a < v.size();) {
    std::size_t b = a;
    long long gp = 0, gn = 0;
    while (b < v.size() && v[b].first == v[a].first) {
      (v[b].second ? gp : gn) += 1;
      ++b;
    }
    twice_wins += gp * (2 * neg_below + gn);
    neg_below += gn;
    pos += gp;
    neg += gn;
    a = b;
  }
  if (pos == 0 || neg == 0)
    throw std::invalid_argument("auc: universe needs at least one positive and one negative pair");
  return static_cast<double>(twice_wins) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

std::vector<std::pair<double, double>> roc_points(const EdgeScores& s, const graph::Topology& truth) {
  std::vector<std::pair<double, bool>> v;
  for (std::size_t k = 0; k < s.universe.size(); ++k)
    v.emplace_back(s.score[k], truth.has_edge(s.universe[k].first, s.universe[k].second));
  std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  const auto pos = std::count_if(v.begin(), v.end(), [](const auto& x) { return x.second; });
  const auto neg = static_cast<long>(v.size()) - pos;
  std::vector<std::pair<double, double>> out{{0.0, 0.0}};
  long tp = 0, fp = 0;
  for (std::size_t a = 0; a < v.size();) {
    std::size_t b = a;
    while (b < v.size() && v[b].first == v[a].first) {
      (v[b].second ? tp : fp) += 1;
      ++b;
    }
    out.emplace_back(neg > 0 ? static_cast<double>(fp) / neg : 0.0,
                     pos > 0 ? static_cast<double>(tp) / pos : 0.0);
    a = b;
  }
  return out;
}

Classification classification_metrics(const std::vector<Pair>& pred, const graph::Topology& truth,
                                       const std::vector<Pair>& universe) {
  const std::set<Pair> u(universe.begin(), universe.end());
  const std::set<Pair> p(pred.begin(), pred.end());
  for (const auto& e : p)
    if (!u.contains(e)) throw std::invalid_argument("classification_metrics: prediction outside universe");
  long tp = 0, fp = 0, fn = 0, tn = 0;
  for (const auto& e : u) {
    const bool actual = truth.has_edge(e.first, e.second);
    const bool predicted = p.contains(e);
    if (actual && predicted) ++tp;
    else if (!actual && predicted) ++fp;
    else if (actual) ++fn;
    else ++tn;
  }
  Classification c;
  if (!u.empty()) c.acc = static_cast<double>(tp + tn) / static_cast<double>(u.size());
  const long f1_den = 2 * tp + fp + fn;
  c.f1 = f1_den > 0 ? 2.0 * tp / f1_den : 0.0;
  c.fpr = fp + tn > 0 ? static_cast<double>(fp) / static_cast<double>(fp + tn) : 0.0;
  return c;
}

double precision_at_k(const std::vector<Pair>& topk, const graph::Topology& truth) {
  if (topk.empty()) throw std::invalid_argument("precision_at_k: empty list");
  const auto hits = std::count_if(topk.begin(), topk.end(),
                                  [&](const Pair& e) { return truth.has_edge(e.first, e.second); });
  return static_cast<double>(hits) / static_cast<double>(topk.size());
}

double rouge_l(std::string_view candidate, std::string_view reference) {
  const auto c = text::split_whitespace(candidate);
  const auto r = text::split_whitespace(reference);
  if (c.empty() && r.empty()) return 1.0;
  if (c.empty() || r.empty()) return 0.0;
  std::vector<int> prev(r.size() + 1, 0), cur(r.size() + 1, 0);
  for (std::size_t i = 1; i <= c.size(); ++i) {
    for (std::size_t j = 1; j <= r.size(); ++j)
      cur[j] = c[i - 1] == r[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  const double lcs = prev[r.size()];
  if (lcs == 0.0) return 0.0;
  const double p = lcs / static_cast<double>(c.size());
  const double rec = lcs / static_cast<double>(r.size());
  return 2.0 * p * rec / (p + rec);
}

RecoveryMatch match_recovered(const std::vector<std::string>& recovered,
                              const std::vector<std::string>& truth_outputs, double theta) {
  if (truth_outputs.empty()) throw std::invalid_argument("recovery: empty truth list");
  if (!(theta >= 0.0 && theta <= 1.0)) throw std::invalid_argument("recovery: theta outside [0, 1]");
  std::vector<std::tuple<double, std::size_t, std::size_t>> cand;
  for (std::size_t t = 0; t < truth_outputs.size(); ++t)
    for (std::size_t r = 0; r < recovered.size(); ++r)
      cand.emplace_back(rouge_l(recovered[r], truth_outputs[t]), t, r);
  std::stable_sort(cand.begin(), cand.end(),
                   [](const auto& a, const auto& b) { return std::get<0>(a) > std::get<0>(b); });
  std::vector<bool> used_t(truth_outputs.size(), false), used_r(recovered.size(), false);
  double hits = 0.0, total = 0.0;
  for (const auto& [sim, t, r] : cand) {
    if (used_t[t] || used_r[r]) continue;
    used_t[t] = used_r[r] = true;
    total += sim;
    if (sim >= theta) hits += 1.0;
  }
  const auto n = static_cast<double>(truth_outputs.size());
  return {hits / n, total / n};
}

double recovery_recall(const induction::RecoveredOutputs& recovered,
                       const std::vector<std::string>& truth_outputs, double theta) {
  return match_recovered(recovered.items, truth_outputs, theta).recall;
}

nlohmann::json EdgePredictionReport::metrics_json() const {
  return {{"auc", auc},
          {"acc", acc},
          {"f1", f1},
          {"fpr", fpr},
          {"precision_at_k", precision_at_k},
          {"recovery_recall", recovery_recall},
          {"rouge_l", rouge_l}};
}

void assert_direction(const std::vector<Pair>& predicted, const std::vector<int>& pi) {
  for (const auto& [i, j] : predicted) {
    if (i < 0 || j < 0 || i >= static_cast<int>(pi.size()) || j >= static_cast<int>(pi.size()) ||
        pi[i] >= pi[j]) {
      throw std::logic_error("predicted edge (" + std::to_string(i) + ", " + std::to_string(j) +
                             ") runs against recovered order");
    }
  }
}

}  // namespace topoleak::eval
