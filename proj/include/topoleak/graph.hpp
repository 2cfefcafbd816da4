#pragma once

#include <compare>
#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

namespace topoleak::graph {

/// Directed edge from -> to between agent indices.
struct Edge {
  int from = 0;
  int to = 0;
  auto operator<=>(const Edge&) const = default;
};

/// A DAG over n agents together with one fixed topological ordering. The last
/// agent in the ordering is the decision agent whose output leaves the system.
class Topology {
 public:
  /// Validates: every edge respects `order`, no self loops, no duplicates,
  /// `order` is a permutation of 0..n-1. Edges are stored sorted.
  Topology(int n, std::vector<Edge> edges, std::vector<int> order);

  /// n agents, identity order, no edges.
  static Topology empty(int n);

  int size() const noexcept { return n_; }
  const std::vector<Edge>& edges() const noexcept { return edges_; }
  const std::vector<int>& order() const noexcept { return order_; }
  int decision_agent() const { return order_.back(); }
  int position(int agent) const;
  bool has_edge(int from, int to) const;
  int in_degree(int agent) const;
  int out_degree(int agent) const;

  nlohmann::json to_json() const;
  static Topology from_json(const nlohmann::json& j);

  bool operator==(const Topology&) const = default;

 private:
  int n_;
  std::vector<Edge> edges_;
  std::vector<int> order_;
  std::vector<int> position_;
};

struct TopologyStats {
  double n_avg = 0.0;
  double e_avg = 0.0;
};

/// Largest edge count an n-node DAG can hold.
constexpr long long max_dag_edges(long long n) { return n * (n - 1) / 2; }

/// Random DAG with exactly `target_edge_count` edges. The topological order is
/// a uniform permutation and the edges are drawn uniformly from the
/// order-respecting pairs. Afterwards:
///   - if target_edge_count >= n-1, every non-decision agent is given an
///     outgoing edge (so every agent reaches the decision agent);
///   - otherwise, when there is at least one edge, the decision agent is given
///     in-degree >= 1.
/// Both repairs redirect existing edges, so the edge count is exact.
/// Throws std::invalid_argument for n < 1 and CapacityError when the target
/// exceeds n(n-1)/2.
Topology generate_dag(int n, long long target_edge_count, std::uint64_t seed);

/// Draws the edge count by randomized rounding of `mean_edge_count`, then
/// calls generate_dag. Families built this way match a fractional mean in
/// expectation.
Topology generate_dag_with_mean(int n, double mean_edge_count, std::uint64_t seed);

/// { j : (j, i) in edges }, ascending.
std::vector<int> predecessors(const Topology& t, int i);

TopologyStats family_stats(std::span<const Topology> ts);

}  // namespace topoleak::graph
