#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "topoleak/graph.hpp"
#include "topoleak/induction.hpp"

namespace topoleak::eval {

using Pair = std::pair<int, int>;

struct EdgeScores {
  /// Pairs (i, j) with pi(i) < pi(j), sorted by (pi(i), pi(j)).
  std::vector<Pair> universe;
  std::vector<double> score;  // parallel to universe, in [0, 1]
  /// Pairs involving a zero vector; scored 0.5.
  std::vector<Pair> degenerate;
};

/// Rescaled cosine (1 + cos) / 2, with 0.5 when either vector is zero.
double rescaled_cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b, bool* degenerate = nullptr);

/// Rows of z are per-agent vectors; pi[r] is the recovered position of row r.
/// Throws std::invalid_argument for fewer than two rows or a bad pi.
EdgeScores score_pairs(const Eigen::MatrixXd& z, const std::vector<int>& pi);

/// Universe pairs scoring >= tau. Throws std::invalid_argument for tau outside [0, 1].
std::vector<Pair> identify_links(const EdgeScores& s, double tau);

/// Mann-Whitney statistic, ties count one half. `truth` is indexed like the
/// universe pairs. Throws std::invalid_argument when either class is empty.
double auc(const EdgeScores& s, const graph::Topology& truth);

/// (fpr, tpr) points from the highest threshold down, starting at (0, 0).
std::vector<std::pair<double, double>> roc_points(const EdgeScores& s, const graph::Topology& truth);

struct Classification {
  double acc = 0.0;
  double f1 = 0.0;
  double fpr = 0.0;
};

/// Throws std::invalid_argument when `pred` is not a subset of `universe`.
Classification classification_metrics(const std::vector<Pair>& pred, const graph::Topology& truth,
                                       const std::vector<Pair>& universe);

/// Throws std::invalid_argument for an empty list.
double precision_at_k(const std::vector<Pair>& topk, const graph::Topology& truth);

/// Token-level LCS F-measure over whitespace tokens.
double rouge_l(std::string_view candidate, std::string_view reference);

struct RecoveryMatch {
  double recall = 0.0;
  /// Mean over truths of the matched item's ROUGE-L (0 when unmatched).
  double mean_rouge_l = 0.0;
};

/// Greedy one-to-one matching by descending ROUGE-L; a truth counts as
/// recovered when its match reaches theta. Throws for an empty truth list or
/// theta outside [0, 1].
RecoveryMatch match_recovered(const std::vector<std::string>& recovered,
                              const std::vector<std::string>& truth_outputs, double theta);

double recovery_recall(const induction::RecoveredOutputs& recovered,
                       const std::vector<std::string>& truth_outputs, double theta = 0.8);

/// Metrics of one attacked system.
struct EdgePredictionReport {
  std::vector<Pair> predicted;
  double auc = 0.0;
  double acc = 0.0;
  double f1 = 0.0;
  double fpr = 0.0;
  double precision_at_k = 0.0;
  double recovery_recall = 0.0;
  double rouge_l = 0.0;

  nlohmann::json metrics_json() const;
};

/// Throws std::logic_error if any predicted pair runs against pi order.
void assert_direction(const std::vector<Pair>& predicted, const std::vector<int>& pi);

}  // namespace topoleak::eval
