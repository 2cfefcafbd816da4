#include "topoleak/graph.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "topoleak/errors.hpp"
#include "topoleak/rng.hpp"

namespace topoleak::graph {

Topology::Topology(int n, std::vector<Edge> edges, std::vector<int> order)
    : n_(n), edges_(std::move(edges)), order_(std::move(order)) {
  if (n_ < 1) throw std::invalid_argument("topology needs at least one agent");
  if (static_cast<int>(order_.size()) != n_) {
    throw std::invalid_argument("order length " + std::to_string(order_.size()) +
                                " does not match n=" + std::to_string(n_));
  }
  position_.assign(n_, -1);
  for (int p = 0; p < n_; ++p) {
    const int a = order_[p];
    if (a < 0 || a >= n_ || position_[a] != -1) {
      throw std::invalid_argument("order is not a permutation of 0..n-1");
    }
    position_[a] = p;
  }
  std::sort(edges_.begin(), edges_.end());
  for (std::size_t k = 0; k < edges_.size(); ++k) {
    const auto& e = edges_[k];
    if (e.from < 0 || e.from >= n_ || e.to < 0 || e.to >= n_) {
      throw std::invalid_argument("edge endpoint out of range");
    }
    if (e.from == e.to) throw std::invalid_argument("self loop on agent " + std::to_string(e.from));
    if (position_[e.from] >= position_[e.to]) {
      throw std::invalid_argument("edge " + std::to_string(e.from) + "->" + std::to_string(e.to) +
                                  " violates the topological order");
    }
    if (k > 0 && edges_[k - 1] == e) throw std::invalid_argument("duplicate edge");
  }
}

Topology Topology::empty(int n) {
  std::vector<int> order(static_cast<std::size_t>(std::max(n, 0)));
  for (int i = 0; i < n; ++i) order[i] = i;
  return Topology(n, {}, std::move(order));
}

int Topology::position(int agent) const {
  if (agent < 0 || agent >= n_) throw std::out_of_range("agent index out of range");
  return position_[agent];
}

bool Topology::has_edge(int from, int to) const {
  return std::binary_search(edges_.begin(), edges_.end(), Edge{from, to});
}

int Topology::in_degree(int agent) const {
  return static_cast<int>(std::count_if(edges_.begin(), edges_.end(),
                                        [agent](const Edge& e) { return e.to == agent; }));
}

int Topology::out_degree(int agent) const {
  return static_cast<int>(std::count_if(edges_.begin(), edges_.end(),
                                        [agent](const Edge& e) { return e.from == agent; }));
}

nlohmann::json Topology::to_json() const {
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& e : edges_) edges.push_back({e.from, e.to});
  return {{"n", n_}, {"edges", std::move(edges)}, {"order", order_}};
}

Topology Topology::from_json(const nlohmann::json& j) {
  std::vector<Edge> edges;
  for (const auto& e : j.at("edges")) {
    if (!e.is_array() || e.size() != 2) throw std::invalid_argument("edge must be a [j, i] pair");
    edges.push_back({e[0].get<int>(), e[1].get<int>()});
  }
  return Topology(j.at("n").get<int>(), std::move(edges), j.at("order").get<std::vector<int>>());
}

namespace {

struct PosEdge {
  int a;
  int b;
  auto operator<=>(const PosEdge&) const = default;
};

}  // namespace

Topology generate_dag(int n, long long target_edge_count, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("generate_dag: n must be >= 1");
  if (target_edge_count < 0) throw std::invalid_argument("generate_dag: negative edge target");
  const long long cap = max_dag_edges(n);
  if (target_edge_count > cap) {
    throw CapacityError("generate_dag: " + std::to_string(target_edge_count) +
                        " edges requested but a " + std::to_string(n) + "-node DAG holds at most " +
                        std::to_string(cap));
  }

  Rng rng(derive_seed(seed, 0x7d3a11u));
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(std::span<int>(order));

  // Work in position space (a < b) until the end.
  std::vector<PosEdge> pairs;
  pairs.reserve(static_cast<std::size_t>(cap));
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b) pairs.push_back({a, b});
  rng.shuffle(std::span<PosEdge>(pairs));
  std::vector<PosEdge> chosen(pairs.begin(), pairs.begin() + target_edge_count);
  std::sort(chosen.begin(), chosen.end());

  auto out_deg = [&](int a) {
    return std::count_if(chosen.begin(), chosen.end(), [a](const PosEdge& e) { return e.a == a; });
  };
  const int last = n - 1;

  if (n > 1 && target_edge_count >= n - 1) {
    for (int u = 0; u < last; ++u) {
      if (out_deg(u) > 0) continue;
      std::vector<std::size_t> donors;
      for (std::size_t k = 0; k < chosen.size(); ++k)
        if (out_deg(chosen[k].a) >= 2) donors.push_back(k);
      // Edge count >= n-1 with a sink at u guarantees a donor exists.
      const std::size_t k = donors[rng.uniform_index(donors.size())];
      const int v = u + 1 + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(last - u)));
      chosen[k] = {u, v};
      std::sort(chosen.begin(), chosen.end());
    }
  } else if (n > 1 && !chosen.empty()) {
    const bool fed = std::any_of(chosen.begin(), chosen.end(),
                                 [last](const PosEdge& e) { return e.b == last; });
    if (!fed) {
      const std::size_t k = rng.uniform_index(chosen.size());
      chosen[k].b = last;
      std::sort(chosen.begin(), chosen.end());
    }
  }

  std::vector<Edge> edges;
  edges.reserve(chosen.size());
  for (const auto& e : chosen) edges.push_back({order[e.a], order[e.b]});
  return Topology(n, std::move(edges), std::move(order));
}

Topology generate_dag_with_mean(int n, double mean_edge_count, std::uint64_t seed) {
  if (!(mean_edge_count >= 0.0)) throw std::invalid_argument("edge mean must be nonnegative");
  Rng rng(derive_seed(seed, 0x51e7u));
  const double base = std::floor(mean_edge_count);
  const double frac = mean_edge_count - base;
  const long long target = static_cast<long long>(base) + (rng.bernoulli(frac) ? 1 : 0);
  return generate_dag(n, std::min(target, max_dag_edges(n)), seed);
}

std::vector<int> predecessors(const Topology& t, int i) {
  if (i < 0 || i >= t.size()) throw std::out_of_range("predecessors: agent index out of range");
  std::vector<int> out;
  for (const auto& e : t.edges())
    if (e.to == i) out.push_back(e.from);
  std::sort(out.begin(), out.end());
  return out;
}

TopologyStats family_stats(std::span<const Topology> ts) {
  if (ts.empty()) throw std::invalid_argument("family_stats: empty topology list");
  double nodes = 0.0;
  double edges = 0.0;
  for (const auto& t : ts) {
    nodes += t.size();
    edges += static_cast<double>(t.edges().size());
  }
  const auto count = static_cast<double>(ts.size());
  return {nodes / count, edges / count};
}

}  // namespace topoleak::graph
