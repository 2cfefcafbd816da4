#include "topoleak/supervision.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>

#include "topoleak/assets.hpp"
#include "topoleak/errors.hpp"
#include "topoleak/rng.hpp"
#include "topoleak/text.hpp"

namespace topoleak::supervision {

std::vector<Pair> WeakLabels::positive_pairs() const {
  std::vector<Pair> out;
  for (const auto& e : e_pos) out.push_back(e.pair);
  return out;
}

nlohmann::json WeakLabels::to_json() const {
  nlohmann::json pos = nlohmann::json::array();
  for (const auto& e : e_pos) pos.push_back({{"edge", {e.pair.first, e.pair.second}}, {"confidence", e.confidence}});
  nlohmann::json neg = nlohmann::json::array();
  for (const auto& [i, j] : e_neg) neg.push_back({i, j});
  return {{"k", k}, {"e_pos", pos}, {"e_neg", neg}};
}

WeakLabels WeakLabels::from_json(const nlohmann::json& j) {
  WeakLabels w;
  w.k = j.at("k").get<int>();
  for (const auto& e : j.at("e_pos")) {
    const auto edge = e.at("edge").get<std::vector<int>>();
    if (edge.size() != 2) throw ParseError("labels: edge must have two ids");
    w.e_pos.push_back({{edge[0], edge[1]}, e.at("confidence").get<double>()});
  }
  for (const auto& e : j.at("e_neg")) {
    const auto edge = e.get<std::vector<int>>();
    if (edge.size() != 2) throw ParseError("labels: edge must have two ids");
    w.e_neg.emplace_back(edge[0], edge[1]);
  }
  return w;
}

std::vector<Pair> order_consistent_pairs(int n) {
  std::vector<Pair> out;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) out.emplace_back(i, j);
  return out;
}

std::vector<ScoredPair> lexical_oracle_topk(const induction::RecoveredOutputs& r, int k) {
  const int n = static_cast<int>(r.items.size());
  if (n < 2) throw std::invalid_argument("lexical oracle: need at least two recovered items");
  const auto universe = order_consistent_pairs(n);
  if (k < 1 || k > static_cast<int>(universe.size())) {
    throw std::invalid_argument("lexical oracle: k=" + std::to_string(k) + " outside [1, " +
                                std::to_string(universe.size()) + "]");
  }
  std::vector<std::set<std::string>> sets;
  std::map<std::string, int> df;
  for (const auto& item : r.items) {
    const auto toks = text::tokenize(item);
    sets.emplace_back(toks.begin(), toks.end());
    for (const auto& t : sets.back()) ++df[t];
  }
  std::vector<double> raw;
  for (const auto& [i, j] : universe) {
    double s = 0.0;
    for (const auto& t : sets[i])
      if (sets[j].contains(t)) s += std::log(static_cast<double>(n) / df[t]);
    raw.push_back(s);
  }
  const auto [lo, hi] = std::minmax_element(raw.begin(), raw.end());
  const double span = *hi - *lo;
  std::vector<ScoredPair> scored;
  for (std::size_t u = 0; u < universe.size(); ++u) {
    const double c = span > 0.0 ? 100.0 * (raw[u] - *lo) / span : 100.0;
    scored.push_back({universe[u], c});
  }
  // universe is already lexicographic, so a stable sort keeps that tie order.
  std::stable_sort(scored.begin(), scored.end(),
                   [](const ScoredPair& a, const ScoredPair& b) { return a.confidence > b.confidence; });
  scored.resize(static_cast<std::size_t>(k));
  return scored;
}

std::vector<ScoredPair> simulated_oracle_topk(const graph::Topology& truth,
                                              const induction::RecoveredOutputs& r, int k,
                                              double precision_target, std::uint64_t seed) {
  const int n = static_cast<int>(r.items.size());
  if (k < 1) throw std::invalid_argument("simulated oracle: k must be >= 1");
  if (!(precision_target >= 0.0 && precision_target <= 1.0))
    throw std::invalid_argument("simulated oracle: precision_target outside [0, 1]");
  if (truth.size() != n) throw std::invalid_argument("simulated oracle: truth size != recovered items");

  std::vector<Pair> edges, non_edges;
  for (const auto& p : order_consistent_pairs(n))
    (truth.has_edge(p.first, p.second) ? edges : non_edges).push_back(p);
  const int n_true = static_cast<int>(std::lround(k * precision_target));
  const int n_false = k - n_true;
  if (n_true > static_cast<int>(edges.size()) || n_false > static_cast<int>(non_edges.size())) {
    throw std::invalid_argument("simulated oracle: cannot draw " + std::to_string(n_true) +
                                " true and " + std::to_string(n_false) + " false edges from " +
                                std::to_string(edges.size()) + " edges and " +
                                std::to_string(non_edges.size()) + " non-edges");
  }
  Rng rng(derive_seed(seed, 0x0bac1eu));
  rng.shuffle(std::span<Pair>(edges));
  rng.shuffle(std::span<Pair>(non_edges));
  std::vector<Pair> chosen(edges.begin(), edges.begin() + n_true);
  chosen.insert(chosen.end(), non_edges.begin(), non_edges.begin() + n_false);
  rng.shuffle(std::span<Pair>(chosen));
  std::vector<ScoredPair> out;
  for (std::size_t r_ = 0; r_ < chosen.size(); ++r_)
    out.push_back({chosen[r_], std::max(0.0, 95.0 - 5.0 * static_cast<double>(r_))});
  return out;
}

namespace {

std::string load(std::string_view name) {
  const auto t = assets::find(name);
  if (!t) throw std::logic_error("missing template asset " + std::string(name));
  return std::string(*t);
}

std::string strip_trailing_newlines(std::string s) {
  while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
  return s;
}

Prompt render(std::string_view system_name, std::string_view user_name,
              const induction::RecoveredOutputs& r, int k) {
  if (r.items.empty()) throw std::invalid_argument("prompt: no recovered items to render");
  Prompt p{strip_trailing_newlines(load(system_name)), strip_trailing_newlines(load(user_name))};
  const auto ks = std::to_string(k);
  p.system = text::replace_all(p.system, "{k}", ks);
  p.user = text::replace_all(p.user, "{k}", ks);
  p.user = text::replace_all(p.user, "{nodes_block}", render_nodes_block(r.items));
  return p;
}

}  // namespace

std::string render_nodes_block(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i > 0) out += '\n';
    out += "Agent " + std::to_string(i) + ": " + items[i];
  }
  return out;
}

std::vector<std::string> parse_nodes_block(std::string_view block) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= block.size()) {
    const auto end = std::min(block.find('\n', start), block.size());
    const auto line = block.substr(start, end - start);
    const std::string prefix = "Agent " + std::to_string(out.size()) + ": ";
    if (!line.starts_with(prefix)) throw ParseError("nodes block: expected line starting with '" + prefix + "'");
    out.emplace_back(line.substr(prefix.size()));
    start = end + 1;
  }
  return out;
}

Prompt render_teacher_prompt(const induction::RecoveredOutputs& r, int k) {
  if (k < 1) throw std::invalid_argument("teacher prompt: k must be >= 1");
  return render("templates/v1/teacher_system.txt", "templates/v1/teacher_user.txt", r, k);
}

Prompt render_baseline_prompt(const induction::RecoveredOutputs& r) {
  const int n = static_cast<int>(r.items.size());
  return render("templates/v1/baseline_system.txt", "templates/v1/baseline_user.txt", r,
                n * (n - 1) / 2);
}

namespace {

// Index one past the bracket matching text[open], honoring JSON strings.
std::optional<std::size_t> match_bracket(std::string_view text, std::size_t open) {
  int depth = 0;
  bool in_string = false;
  for (std::size_t i = open; i < text.size(); ++i) {
    const char c = text[i];
    if (in_string) {
      if (c == '\\') ++i;
      else if (c == '"') in_string = false;
      continue;
    }
    if (c == '"') in_string = true;
    else if (c == '[' || c == '{') ++depth;
    else if (c == ']' || c == '}') {
      if (--depth == 0) return c == ']' ? std::optional(i + 1) : std::nullopt;
    }
  }
  return std::nullopt;
}

}  // namespace

ParsedResponse parse_teacher_response(std::string_view text, int n_items) {
  nlohmann::json array;
  bool found = false;
  for (auto pos = text.find('['); pos != std::string_view::npos; pos = text.find('[', pos + 1)) {
    const auto end = match_bracket(text, pos);
    if (!end) continue;
    auto parsed = nlohmann::json::parse(text.substr(pos, *end - pos), nullptr, false);
    if (parsed.is_discarded() || !parsed.is_array()) continue;
    array = std::move(parsed);
    found = true;
    break;
  }
  if (!found) throw ParseError("teacher response: no JSON array found");

  ParsedResponse out;
  for (std::size_t idx = 0; idx < array.size(); ++idx) {
    const auto& e = array[idx];
    const std::string where = "entry " + std::to_string(idx) + ": ";
    if (!e.is_object() || !e.contains("edge") || !e.contains("confidence")) {
      out.dropped.push_back(where + "missing edge or confidence");
      continue;
    }
    const auto& edge = e["edge"];
    const auto& conf = e["confidence"];
    if (!edge.is_array() || edge.size() != 2 || !edge[0].is_number_integer() ||
        !edge[1].is_number_integer()) {
      out.dropped.push_back(where + "edge is not a pair of integer ids");
      continue;
    }
    if (!conf.is_number()) {
      out.dropped.push_back(where + "confidence is not a number");
      continue;
    }
    const int s = edge[0].get<int>();
    const int t = edge[1].get<int>();
    const double c = conf.get<double>();
    if (s < 0 || t < 0 || (n_items > 0 && (s >= n_items || t >= n_items))) {
      out.dropped.push_back(where + "agent id out of range");
    } else if (s >= t) {
      out.dropped.push_back(where + "edge [" + std::to_string(s) + " -> " + std::to_string(t) +
                            "] violates log order");
    } else if (!(c >= 0.0 && c <= 100.0)) {
      out.dropped.push_back(where + "confidence " + conf.dump() + " outside [0, 100]");
    } else {
      out.entries.push_back({{s, t}, c});
    }
  }
  return out;
}

WeakLabels build_label_sets(const std::vector<ScoredPair>& topk, const std::vector<Pair>& universe,
                            double neg_ratio, std::uint64_t seed) {
  if (!(neg_ratio > 0.0)) throw std::invalid_argument("label sets: neg_ratio must be positive");
  const std::set<Pair> all(universe.begin(), universe.end());
  std::set<Pair> pos;
  WeakLabels w;
  w.k = static_cast<int>(topk.size());
  for (const auto& e : topk) {
    if (!all.contains(e.pair)) throw std::invalid_argument("label sets: top-k pair outside the universe");
    if (pos.insert(e.pair).second) w.e_pos.push_back(e);
  }
  std::vector<Pair> rest;
  for (const auto& p : universe)
    if (!pos.contains(p)) rest.push_back(p);
  const auto want = static_cast<std::size_t>(std::lround(neg_ratio * static_cast<double>(w.e_pos.size())));
  if (want > rest.size()) {
    throw std::invalid_argument("label sets: need " + std::to_string(want) + " negatives but only " +
                                std::to_string(rest.size()) + " pairs remain");
  }
  Rng rng(derive_seed(seed, 0x2e9u));
  rng.shuffle(std::span<Pair>(rest));
  w.e_neg.assign(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(want));
  std::sort(w.e_neg.begin(), w.e_neg.end());
  return w;
}

WeakLabels build_label_sets_low_overlap(const std::vector<ScoredPair>& topk,
                                        const std::vector<ScoredPair>& ranking, double neg_ratio) {
  if (!(neg_ratio > 0.0)) throw std::invalid_argument("label sets: neg_ratio must be positive");
  std::set<Pair> all;
  for (const auto& e : ranking)
    if (!all.insert(e.pair).second) throw std::invalid_argument("label sets: ranking repeats a pair");
  std::set<Pair> pos;
  WeakLabels w;
  w.k = static_cast<int>(topk.size());
  for (const auto& e : topk) {
    if (!all.contains(e.pair)) throw std::invalid_argument("label sets: top-k pair outside the ranking");
    if (pos.insert(e.pair).second) w.e_pos.push_back(e);
  }
  const auto want = static_cast<std::size_t>(std::lround(neg_ratio * static_cast<double>(w.e_pos.size())));
  for (auto it = ranking.rbegin(); it != ranking.rend() && w.e_neg.size() < want; ++it)
    if (!pos.contains(it->pair)) w.e_neg.push_back(it->pair);
  if (w.e_neg.size() < want) {
    throw std::invalid_argument("label sets: need " + std::to_string(want) + " negatives but only " +
                                std::to_string(w.e_neg.size()) + " pairs remain");
  }
  std::sort(w.e_neg.begin(), w.e_neg.end());
  return w;
}

}  // namespace topoleak::supervision
