#include "topoleak/config.hpp"

#include <set>

#include "topoleak/errors.hpp"
#include "topoleak/graph.hpp"
#include "topoleak/io.hpp"

namespace topoleak::config {
namespace {

using nlohmann::json;

// Reads the keys of one object, rejecting anything not consumed.
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ConfigError(name_ + ": expected an object");
  }
  void done() const {
    for (const auto& [key, value] : j_.items())
      if (!seen_.contains(key)) throw ConfigError("unknown config key '" + prefix() + key + "'");
  }

  template <typename T>
  void get(const char* key, T& target) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      target = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError("config key '" + prefix() + key + "' has the wrong type");
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  std::string prefix() const { return name_.empty() ? "" : name_ + "."; }

 private:
  const json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

std::optional<client::EndpointConfig> endpoint_from(const json* j, const std::string& where) {
  if (j == nullptr || j->is_null()) return std::nullopt;
  try {
    return client::EndpointConfig::from_json(*j);
  } catch (const json::exception& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

}  // namespace

RunConfig RunConfig::from_json(const json& j) {
  RunConfig c;
  {
    Section root(j, "");
    root.get("seed", c.seed);
    root.get("perturbations", c.perturbations);
    root.get("tau", c.tau);
    root.get("theta", c.theta);
    root.get("workers", c.workers);
    root.get("out", c.out);
    if (const auto* t = root.child("topology")) {
      Section s(*t, "topology");
      s.get("n", c.topology.n);
      s.get("edge_mean", c.topology.edge_mean);
      s.get("count", c.topology.count);
      s.done();
    }
    if (const auto* a = root.child("agents")) {
      Section s(*a, "agents");
      s.get("rho", c.agents.rho);
      s.get("beta", c.agents.beta);
      s.get("beta_spread", c.agents.beta_spread);
      s.get("output_len", c.agents.output_len);
      s.get("global_vocab", c.agents.global_vocab);
      s.get("role_vocab", c.agents.role_vocab);
      s.get("task_core", c.agents.task_core);
      s.get("task_filler", c.agents.task_filler);
      s.done();
    }
    if (const auto* e = root.child("embedding")) {
      Section s(*e, "embedding");
      s.get("backend", c.embedding.backend);
      s.get("d", c.embedding.d);
      c.embedding.endpoint = endpoint_from(s.child("endpoint"), "embedding.endpoint");
      s.done();
    }
    if (const auto* m = root.child("model")) {
      Section s(*m, "model");
      s.get("hidden", c.model.hidden);
      s.get("latent", c.model.latent);
      s.get("variant", c.model.variant);
      s.get("temperature", c.model.temperature);
      s.done();
    }
    if (const auto* t = root.child("training")) {
      Section s(*t, "training");
      s.get("lr", c.training.lr);
      s.get("epochs", c.training.epochs);
      s.get("alpha", c.training.alpha);
      s.get("w_rec", c.training.w_rec);
      s.get("w_bias", c.training.w_bias);
      s.get("w_lws", c.training.w_lws);
      s.get("scope", c.training.scope);
      s.done();
    }
    if (const auto* sp = root.child("supervision")) {
      Section s(*sp, "supervision");
      s.get("oracle", c.supervision.oracle);
      s.get("k", c.supervision.k);
      s.get("neg_ratio", c.supervision.neg_ratio);
      s.get("negatives", c.supervision.negatives);
      s.get("precision_target", c.supervision.precision_target);
      c.supervision.endpoint = endpoint_from(s.child("endpoint"), "supervision.endpoint");
      s.done();
    }
    root.done();
  }
  c.validate();
  return c;
}

json RunConfig::to_json() const {
  json j = {
      {"seed", seed},
      {"topology", {{"n", topology.n}, {"edge_mean", topology.edge_mean}, {"count", topology.count}}},
      {"agents",
       {{"rho", agents.rho},
        {"beta", agents.beta},
        {"beta_spread", agents.beta_spread},
        {"output_len", agents.output_len},
        {"global_vocab", agents.global_vocab},
        {"role_vocab", agents.role_vocab},
        {"task_core", agents.task_core},
        {"task_filler", agents.task_filler}}},
      {"perturbations", perturbations},
      {"embedding", {{"backend", embedding.backend}, {"d", embedding.d}}},
      {"model",
       {{"hidden", model.hidden},
        {"latent", model.latent},
        {"variant", model.variant},
        {"temperature", model.temperature}}},
      {"training",
       {{"lr", training.lr},
        {"epochs", training.epochs},
        {"alpha", training.alpha},
        {"w_rec", training.w_rec},
        {"w_bias", training.w_bias},
        {"w_lws", training.w_lws},
        {"scope", training.scope}}},
      {"supervision",
       {{"oracle", supervision.oracle},
        {"k", supervision.k},
        {"neg_ratio", supervision.neg_ratio},
        {"negatives", supervision.negatives},
        {"precision_target", supervision.precision_target}}},
      {"tau", tau},
      {"theta", theta},
      {"workers", workers},
      {"out", out},
  };
  if (embedding.endpoint) j["embedding"]["endpoint"] = embedding.endpoint->to_json();
  if (supervision.endpoint) j["supervision"]["endpoint"] = supervision.endpoint->to_json();
  return j;
}

void RunConfig::validate() const {
  require(topology.n >= 2, "topology.n must be >= 2");
  require(topology.edge_mean >= 0.0 &&
              topology.edge_mean <= static_cast<double>(graph::max_dag_edges(topology.n)),
          "topology.edge_mean must lie in [0, n(n-1)/2]");
  require(topology.count >= 1, "topology.count must be >= 1");
  require(agents.rho >= 0.0 && agents.rho <= 1.0, "agents.rho must lie in [0, 1]");
  require(agents.beta >= 0.0 && agents.beta <= 1.0, "agents.beta must lie in [0, 1]");
  require(agents.beta_spread >= 0.0 && agents.beta_spread <= 1.0, "agents.beta_spread must lie in [0, 1]");
  require(agents.output_len >= 1, "agents.output_len must be >= 1");
  require(agents.global_vocab >= 1 && agents.role_vocab >= 1, "agents vocabularies must be non-empty");
  require(agents.task_core >= 0 && agents.task_filler >= 1, "agents.task_filler must be >= 1");
  require(perturbations >= 2, "perturbations must be >= 2");
  require(embedding.backend == "hashing" || embedding.backend == "external",
          "embedding.backend must be hashing or external");
  require(embedding.backend != "external" || embedding.endpoint.has_value(),
          "embedding.endpoint is required for the external backend");
  require(embedding.d >= 1, "embedding.d must be >= 1");
  require(model.hidden >= 1 && model.latent >= 1, "model dimensions must be >= 1");
  require(model.variant == "dual" || model.variant == "sub", "model.variant must be dual or sub");
  require(model.variant != "sub" || model.latent == embedding.d,
          "model.latent must equal embedding.d for the sub variant");
  require(model.temperature > 0.0, "model.temperature must be positive");
  require(training.lr > 0.0, "training.lr must be positive");
  require(training.epochs >= 0, "training.epochs must be >= 0");
  require(training.alpha >= 0.0 && training.alpha < 0.5, "training.alpha must lie in [0, 0.5)");
  require(training.w_rec >= 0.0 && training.w_bias >= 0.0 && training.w_lws >= 0.0,
          "training loss weights must be >= 0");
  require(training.scope == "family" || training.scope == "system",
          "training.scope must be 'family' or 'system'");
  require(supervision.oracle == "lexical" || supervision.oracle == "simulated" ||
              supervision.oracle == "teacher",
          "supervision.oracle must be lexical, simulated or teacher");
  require(supervision.oracle != "teacher" || supervision.endpoint.has_value(),
          "supervision.endpoint is required for the teacher oracle");
  require(supervision.k >= 1 && supervision.k <= graph::max_dag_edges(topology.n),
          "supervision.k must lie in [1, n(n-1)/2]");
  require(supervision.neg_ratio > 0.0, "supervision.neg_ratio must be positive");
  require(supervision.negatives == "low_overlap" || supervision.negatives == "uniform",
          "supervision.negatives must be low_overlap or uniform");
  require(supervision.precision_target >= 0.0 && supervision.precision_target <= 1.0,
          "supervision.precision_target must lie in [0, 1]");
  require(tau >= 0.0 && tau <= 1.0, "tau must lie in [0, 1]");
  require(theta >= 0.0 && theta <= 1.0, "theta must lie in [0, 1]");
  require(workers >= 0, "workers must be >= 0");
}

disentangle::ModelDims RunConfig::dims() const { return {embedding.d, model.hidden, model.latent}; }

disentangle::Variant RunConfig::variant() const { return disentangle::parse_variant(model.variant); }

RunConfig load(const std::optional<std::string>& path) {
  if (!path) {
    RunConfig c;
    c.validate();
    return c;
  }
  std::string text;
  try {
    text = io::read_text(*path);
  } catch (const std::exception& e) {
    throw ConfigError("cannot read config " + *path + ": " + e.what());
  }
  const auto j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config " + *path + " is not valid JSON");
  return RunConfig::from_json(j);
}

std::string snapshot(const RunConfig& c) { return c.to_json().dump(2) + "\n"; }

}  // namespace topoleak::config
