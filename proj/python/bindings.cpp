#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "topoleak/config.hpp"
#include "topoleak/disentangle.hpp"
#include "topoleak/embedding.hpp"
#include "topoleak/errors.hpp"
#include "topoleak/eval.hpp"
#include "topoleak/graph.hpp"
#include "topoleak/induction.hpp"
#include "topoleak/pipeline.hpp"
#include "topoleak/sim.hpp"
#include "topoleak/supervision.hpp"

namespace py = pybind11;
using namespace topoleak;

namespace {

graph::Topology make_topology(int n, const std::vector<std::pair<int, int>>& edges,
                              std::optional<std::vector<int>> order) {
  std::vector<graph::Edge> es;
  for (const auto& [j, i] : edges) es.push_back({j, i});
  if (!order) {
    order.emplace(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) (*order)[static_cast<std::size_t>(k)] = k;
  }
  return graph::Topology(n, std::move(es), *order);
}

std::vector<std::pair<int, int>> edge_pairs(const graph::Topology& t) {
  std::vector<std::pair<int, int>> out;
  for (const auto& e : t.edges()) out.emplace_back(e.from, e.to);
  return out;
}

py::dict run_config_dict(const config::RunConfig& c) { return py::module_::import("json").attr("loads")(c.to_json().dump()); }

config::RunConfig config_from(const py::object& obj) {
  if (obj.is_none()) return config::load(std::nullopt);
  const std::string text = py::module_::import("json").attr("dumps")(obj).cast<std::string>();
  return config::RunConfig::from_json(nlohmann::json::parse(text));
}

}  // namespace

PYBIND11_MODULE(_topoleak, m) {
  m.doc() = "Communication-topology inference workbench";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<CapacityError>(m, "CapacityError", PyExc_ValueError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<StageError>(m, "StageError", PyExc_RuntimeError);
  py::register_exception<TrainingError>(m, "TrainingError", PyExc_RuntimeError);

  py::class_<graph::Topology>(m, "Topology")
      .def(py::init(&make_topology), py::arg("n"), py::arg("edges"), py::arg("order") = py::none())
      .def_property_readonly("n", &graph::Topology::size)
      .def_property_readonly("edges", &edge_pairs)
      .def_property_readonly("order", &graph::Topology::order)
      .def_property_readonly("decision_agent", &graph::Topology::decision_agent)
      .def("has_edge", &graph::Topology::has_edge)
      .def("to_json", [](const graph::Topology& t) { return t.to_json().dump(); })
      .def_static("from_json", [](const std::string& s) { return graph::Topology::from_json(nlohmann::json::parse(s)); })
      .def("__eq__", [](const graph::Topology& a, const graph::Topology& b) { return a == b; })
      .def("__repr__", [](const graph::Topology& t) { return "Topology(" + t.to_json().dump() + ")"; });

  m.def("generate_dag", &graph::generate_dag, py::arg("n"), py::arg("target_edge_count"), py::arg("seed"));
  m.def("generate_dag_with_mean", &graph::generate_dag_with_mean, py::arg("n"), py::arg("mean_edge_count"),
        py::arg("seed"));
  m.def("predecessors", &graph::predecessors, py::arg("topology"), py::arg("i"));
  m.def("family_stats", [](const std::vector<graph::Topology>& ts) {
    const auto s = graph::family_stats(std::span<const graph::Topology>(ts));
    return std::make_pair(s.n_avg, s.e_avg);
  });

  m.def(
      "run_mas",
      [](const graph::Topology& t, double rho, double beta, int output_len, std::uint64_t seed, int perturbation,
         bool adversarial) {
        const auto profiles = sim::make_profiles(t.size(), rho, beta, 0.0, output_len, seed);
        const auto task = sim::perturb_task(sim::make_task(seed), perturbation, seed);
        const auto tb = sim::run_mas(t, profiles, task, adversarial ? sim::Mode::kAdversarial : sim::Mode::kStandard);
        return py::make_tuple(tb.agent_order, tb.true_outputs, tb.final_output);
      },
      py::arg("topology"), py::arg("rho") = 0.35, py::arg("beta") = 0.4, py::arg("output_len") = 64,
      py::arg("seed") = 0, py::arg("perturbation") = 0, py::arg("adversarial") = true,
      "Returns (agent_order, true_outputs, final_output).");

  m.def("build_adversarial_query", [](const std::string& task_text) {
    sim::TaskSpec t;
    t.text = task_text;
    return induction::build_adversarial_query(t).full_text;
  });
  m.def("format_history", &induction::format_history);
  m.def("parse_final_output", [](const std::string& text) {
    const auto s = induction::parse_final_output(text);
    return std::make_pair(s.history, s.reasoning);
  });
  m.def(
      "recover_outputs",
      [](const std::string& text, bool keep_last) {
        induction::RecoverOptions o;
        if (keep_last) o.policy = induction::DedupPolicy::kKeepLast;
        return induction::recover_outputs(text, o).items;
      },
      py::arg("text"), py::arg("keep_last") = false);

  m.def(
      "hashing_embed", [](const std::string& text, int d, std::uint64_t seed) { return embedding::hashing_embed(text, d, seed).values; },
      py::arg("text"), py::arg("d") = embedding::kDefaultDim, py::arg("seed") = 0);

  m.def("infonce", &disentangle::infonce, py::arg("u"), py::arg("v"), py::arg("critic"), py::arg("temperature"));
  m.def("loss_lws", &disentangle::loss_lws, py::arg("z_d"), py::arg("pos"), py::arg("neg"), py::arg("alpha"));

  m.def(
      "score_pairs",
      [](const Eigen::MatrixXd& z) {
        std::vector<int> pi(static_cast<std::size_t>(z.rows()));
        for (int k = 0; k < static_cast<int>(z.rows()); ++k) pi[static_cast<std::size_t>(k)] = k;
        const auto s = eval::score_pairs(z, pi);
        return std::make_pair(s.universe, s.score);
      },
      "Rows are agents in recovered order; returns (universe, scores).");
  m.def("auc", [](const std::vector<std::pair<int, int>>& universe, const std::vector<double>& scores,
                  const graph::Topology& truth) { return eval::auc({universe, scores, {}}, truth); });
  m.def("rouge_l", &eval::rouge_l);
  m.def("precision_at_k", &eval::precision_at_k);

  m.def("lexical_oracle_topk", [](const std::vector<std::string>& items, int k) {
    induction::RecoveredOutputs r;
    r.items = items;
    std::vector<std::pair<std::pair<int, int>, double>> out;
    for (const auto& e : supervision::lexical_oracle_topk(r, k)) out.emplace_back(e.pair, e.confidence);
    return out;
  });
  m.def("render_teacher_prompt", [](const std::vector<std::string>& items, int k) {
    induction::RecoveredOutputs r;
    r.items = items;
    const auto p = supervision::render_teacher_prompt(r, k);
    return std::make_pair(p.system, p.user);
  });
  m.def("parse_teacher_response", [](const std::string& text) {
    const auto p = supervision::parse_teacher_response(text);
    std::vector<std::pair<std::pair<int, int>, double>> out;
    for (const auto& e : p.entries) out.emplace_back(e.pair, e.confidence);
    return std::make_pair(out, p.dropped);
  });

  m.def("default_config", [] { return run_config_dict(config::load(std::nullopt)); });
  m.def(
      "attack",
      [](const py::object& cfg, std::optional<std::string> out) {
        auto c = config_from(cfg);
        if (out) c.out = *out;
        py::gil_scoped_release release;
        return pipeline::cmd_attack(c).mean.metrics_json().dump();
      },
      py::arg("config") = py::none(), py::arg("out") = py::none(),
      "Runs the full attack into the run directory; returns metrics as a JSON string.");
  m.def("report", [](const std::string& run_dir) { return pipeline::cmd_report(run_dir); });
}
