#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "topoleak/graph.hpp"
#include "topoleak/induction.hpp"

namespace topoleak::supervision {

/// Ordered pair of recovered positions (earlier, later).
using Pair = std::pair<int, int>;

struct ScoredPair {
  Pair pair;
  double confidence = 0.0;  // [0, 100]

  bool operator==(const ScoredPair&) const = default;
};

struct WeakLabels {
  std::vector<ScoredPair> e_pos;
  std::vector<Pair> e_neg;
  int k = 0;

  std::vector<Pair> positive_pairs() const;
  nlohmann::json to_json() const;
  static WeakLabels from_json(const nlohmann::json& j);
};

/// Every (i, j) with i < j over `n` recovered positions, lexicographic.
std::vector<Pair> order_consistent_pairs(int n);

/// IDF-weighted token overlap between every order-consistent pair, min-max
/// scaled to [0, 100]. Top k by score, ties broken by lexicographic pair.
/// Throws std::invalid_argument when fewer than two items or k is out of range.
std::vector<ScoredPair> lexical_oracle_topk(const induction::RecoveredOutputs& r, int k);

/// Controlled-precision probe. `truth` must already be expressed in recovered
/// positions. round(k * precision_target) true edges plus sampled non-edges,
/// shuffled, confidences 95, 90, 85, ...
std::vector<ScoredPair> simulated_oracle_topk(const graph::Topology& truth,
                                              const induction::RecoveredOutputs& r, int k,
                                              double precision_target, std::uint64_t seed);

struct Prompt {
  std::string system;
  std::string user;
};

/// Teacher prompt asking for the top k edges.
Prompt render_teacher_prompt(const induction::RecoveredOutputs& r, int k);
/// Direct-inference baseline prompt asking for every pair.
Prompt render_baseline_prompt(const induction::RecoveredOutputs& r);

/// "Agent <i>: <text>" lines, one per item.
std::string render_nodes_block(const std::vector<std::string>& items);
/// Inverse of render_nodes_block for texts without line breaks.
std::vector<std::string> parse_nodes_block(std::string_view block);

struct ParsedResponse {
  std::vector<ScoredPair> entries;
  std::vector<std::string> dropped;  // one reason per rejected entry
};

/// Extracts the first balanced JSON array from `text` and reads
/// {"edge": [s, t], "confidence": c} entries. Entries with s >= t, an
/// out-of-range id (when n_items > 0) or c outside [0, 100] are dropped.
/// Throws ParseError when no array parses.
ParsedResponse parse_teacher_response(std::string_view text, int n_items = 0);

/// e_pos = topk; e_neg = round(neg_ratio * |e_pos|) pairs drawn without
/// replacement from universe \ e_pos.
WeakLabels build_label_sets(const std::vector<ScoredPair>& topk, const std::vector<Pair>& universe,
                            double neg_ratio, std::uint64_t seed);

/// e_pos = topk; e_neg = the round(neg_ratio * |e_pos|) pairs outside e_pos
/// that come last in `ranking` (a full ranking of the universe, strongest
/// first, e.g. lexical_oracle_topk over every pair).
WeakLabels build_label_sets_low_overlap(const std::vector<ScoredPair>& topk,
                                        const std::vector<ScoredPair>& ranking, double neg_ratio);

}  // namespace topoleak::supervision
