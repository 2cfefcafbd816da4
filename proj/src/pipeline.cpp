#include "topoleak/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

#include "topoleak/embedding.hpp"
#include "topoleak/errors.hpp"
#include "topoleak/io.hpp"
#include "topoleak/rng.hpp"
#include "topoleak/text.hpp"

namespace topoleak::pipeline {
namespace {

using nlohmann::json;

// Salts separating the seed streams of each stage.
enum Salt : std::uint64_t {
  kTopologySalt = 0x701,
  kProfileSalt = 0x702,
  kTaskSalt = 0x703,
  kPerturbSalt = 0x704,
  kEmbedSalt = 0x705,
  kOracleSalt = 0x706,
  kLabelSalt = 0x707,
  kTrainSalt = 0x708,
};

std::uint64_t stream(std::uint64_t seed, Salt salt, int index) {
  return derive_seed(derive_seed(seed, salt), static_cast<std::uint64_t>(index));
}

template <typename Fn>
auto staged(const char* stage, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

int worker_count(const config::RunConfig& cfg) {
  if (cfg.workers > 0) return cfg.workers;
  return std::max(1u, std::thread::hardware_concurrency());
}

// Runs fn(0..count-1) on a small pool; results are written by index, and the
// lowest-index exception wins, so the outcome does not depend on scheduling.
template <typename Fn>
void parallel_for(int count, int workers, Fn&& fn) {
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(count));
  const auto body = [&](int w) {
    for (int i = w; i < count; i += workers) {
      try {
        fn(i);
      } catch (...) {
        errors[static_cast<std::size_t>(i)] = std::current_exception();
      }
    }
  };
  workers = std::clamp(workers, 1, std::max(1, count));
  if (workers == 1) {
    body(0);
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(body, w);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

void write_jsonl(const fs::path& p, const std::vector<json>& lines) {
  std::string out;
  for (const auto& l : lines) out += l.dump() + "\n";
  io::write_text(p, out);
}

std::vector<json> read_jsonl(const fs::path& p) {
  std::vector<json> out;
  std::istringstream in(io::read_text(p));
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(json::parse(line));
  return out;
}

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(digits);
  s << v;
  return s.str();
}

// Position -> agent mapping, position-space truth and recovery quality, all
// derived from traces + recovered outputs.
void finish_system(SystemData& sys, const config::RunConfig& cfg) {
  const auto& first = sys.recovered.front();
  const auto& trace = sys.traces.front();
  const int n_pos = static_cast<int>(first.items.size());
  sys.position_agent.assign(static_cast<std::size_t>(n_pos), -1);
  for (int p = 0; p < n_pos; ++p) {
    for (std::size_t k = 0; k < trace.true_outputs.size(); ++k) {
      if (trace.true_outputs[k] == first.items[static_cast<std::size_t>(p)]) {
        sys.position_agent[static_cast<std::size_t>(p)] = trace.agent_order[k];
        break;
      }
    }
  }
  std::vector<graph::Edge> edges;
  for (int a = 0; a < n_pos; ++a) {
    for (int b = a + 1; b < n_pos; ++b) {
      const int ia = sys.position_agent[static_cast<std::size_t>(a)];
      const int ib = sys.position_agent[static_cast<std::size_t>(b)];
      if (ia >= 0 && ib >= 0 && sys.topology.has_edge(ia, ib)) edges.push_back({a, b});
    }
  }
  std::vector<int> identity(static_cast<std::size_t>(n_pos));
  for (int p = 0; p < n_pos; ++p) identity[static_cast<std::size_t>(p)] = p;
  sys.truth = graph::Topology(n_pos, std::move(edges), identity);

  double recall = 0.0, rouge = 0.0;
  sys.collisions = 0;
  for (std::size_t m = 0; m < sys.recovered.size(); ++m) {
    const auto match = eval::match_recovered(sys.recovered[m].items, sys.traces[m].true_outputs, cfg.theta);
    recall += match.recall;
    rouge += match.mean_rouge_l;
    // Distinct agents whose texts merged into one recovered item.
    sys.collisions += std::max(0, static_cast<int>(sys.traces[m].true_outputs.size()) -
                                      static_cast<int>(sys.recovered[m].items.size()));
  }
  sys.recovery_recall = recall / static_cast<double>(sys.recovered.size());
  sys.rouge_l = rouge / static_cast<double>(sys.recovered.size());
}

embedding::EncoderConfig encoder_config(const config::RunConfig& cfg, const client::CallOptions& call) {
  embedding::EncoderConfig ec;
  ec.dim = cfg.embedding.d;
  ec.seed = derive_seed(cfg.seed, kEmbedSalt);
  if (cfg.embedding.backend == "external") {
    ec.backend = embedding::EncoderConfig::Backend::kExternal;
    ec.remote = client::remote_embedder(*cfg.embedding.endpoint, call);
  }
  return ec;
}

// Agent-major rows (position * M + sample), rounded through float32 so the
// persisted embeddings reproduce training inputs exactly.
Eigen::MatrixXd stack_rows(const std::vector<embedding::EmbeddingVector>& rows, int d) {
  Eigen::MatrixXd h(static_cast<Eigen::Index>(rows.size()), d);
  for (std::size_t r = 0; r < rows.size(); ++r)
    h.row(static_cast<Eigen::Index>(r)) = rows[r].values.transpose().cast<float>().cast<double>();
  return h;
}

std::vector<supervision::ScoredPair> oracle_topk(const config::RunConfig& cfg, const SystemData& sys,
                                                 const client::CallOptions& call) {
  const auto& r = sys.recovered.front();
  const int k = cfg.supervision.k;
  if (cfg.supervision.oracle == "lexical") return supervision::lexical_oracle_topk(r, k);
  if (cfg.supervision.oracle == "simulated") {
    return supervision::simulated_oracle_topk(sys.truth, r, k, cfg.supervision.precision_target,
                                              stream(cfg.seed, kOracleSalt, sys.index));
  }
  const auto prompt = supervision::render_teacher_prompt(r, k);
  const auto text = client::external_agent_call(*cfg.supervision.endpoint, prompt.system, prompt.user, call);
  auto parsed = supervision::parse_teacher_response(text, sys.positions());
  if (static_cast<int>(parsed.entries.size()) > k) parsed.entries.resize(static_cast<std::size_t>(k));
  if (parsed.entries.empty()) throw ParseError("teacher returned no usable edges");
  return parsed.entries;
}

json traces_line(const SystemData& sys, const sim::TraceBundle& t) {
  json j = t.to_json();
  j["system"] = sys.index;
  return j;
}

json recovered_line(const SystemData& sys, int m) {
  json j = sys.recovered[static_cast<std::size_t>(m)].to_json();
  j["system"] = sys.index;
  j["perturbation"] = m;
  return j;
}

json topologies_json(const Prepared& data) {
  json family = json::array();
  for (const auto& s : data.systems) family.push_back(s.topology.to_json());
  return {{"stats", {{"n_avg", data.stats.n_avg}, {"e_avg", data.stats.e_avg}}}, {"topologies", family}};
}

json labels_json(const Prepared& data) {
  json out = json::array();
  for (const auto& s : data.systems) {
    json l = s.labels.to_json();
    l["system"] = s.index;
    out.push_back(l);
  }
  return out;
}

std::vector<graph::Topology> generate_family(const config::RunConfig& cfg) {
  std::vector<graph::Topology> out;
  for (int s = 0; s < cfg.topology.count; ++s)
    out.push_back(graph::generate_dag_with_mean(cfg.topology.n, cfg.topology.edge_mean,
                                                stream(cfg.seed, kTopologySalt, s)));
  return out;
}

std::vector<sim::TraceBundle> simulate_system(const config::RunConfig& cfg, const graph::Topology& t,
                                              int index) {
  const auto profiles = sim::make_profiles(t.size(), cfg.agents.rho, cfg.agents.beta,
                                           cfg.agents.beta_spread, cfg.agents.output_len,
                                           stream(cfg.seed, kProfileSalt, index));
  auto base = sim::make_task(stream(cfg.seed, kTaskSalt, index), cfg.agents.task_core,
                             cfg.agents.task_filler);
  base.task_id = "task-" + std::to_string(index);
  const sim::VocabConfig vocab{cfg.agents.global_vocab, cfg.agents.role_vocab};
  std::vector<sim::TraceBundle> traces;
  for (int m = 0; m < cfg.perturbations; ++m) {
    const auto task = sim::perturb_task(base, m, stream(cfg.seed, kPerturbSalt, index));
    const auto query = induction::build_adversarial_query(task);
    (void)query;  // synthetic agents follow the constraints by construction
    traces.push_back(sim::run_mas(t, profiles, task, sim::Mode::kAdversarial, vocab));
  }
  return traces;
}

void write_csv_losses(const fs::path& p, const AttackResult& r) {
  std::string out = "system,epoch,l_rec,l_bias,l_lws,total\n";
  for (std::size_t s = 0; s < r.systems.size(); ++s) {
    for (const auto& rec : r.systems[s].curve) {
      out += (r.shared_model ? std::string("all") : std::to_string(s)) + "," + std::to_string(rec.epoch) + "," + json(rec.rec).dump() + "," +
             json(rec.bias).dump() + "," + json(rec.lws).dump() + "," + json(rec.total).dump() + "\n";
    }
  }
  io::write_text(p, out);
}

void write_roc(const fs::path& p, const Prepared& data, const AttackResult& r) {
  std::string out = "system,fpr,tpr\n";
  for (std::size_t s = 0; s < r.systems.size(); ++s) {
    if (!r.systems[s].auc_defined) continue;
    for (const auto& [fpr, tpr] : eval::roc_points(r.systems[s].scores, data.systems[s].truth))
      out += std::to_string(s) + "," + json(fpr).dump() + "," + json(tpr).dump() + "\n";
  }
  io::write_text(p, out);
}

json predictions_json(const Prepared& data, const AttackResult& r) {
  json out = json::array();
  for (std::size_t s = 0; s < r.systems.size(); ++s) {
    const auto& sys = data.systems[s];
    const auto& res = r.systems[s];
    json edges = json::array();
    for (const auto& [i, j] : res.report.predicted) edges.push_back({i, j});
    json scores = json::array();
    for (std::size_t u = 0; u < res.scores.universe.size(); ++u)
      scores.push_back({res.scores.universe[u].first, res.scores.universe[u].second, res.scores.score[u]});
    std::vector<int> order(static_cast<std::size_t>(sys.positions()));
    for (int p = 0; p < sys.positions(); ++p) order[static_cast<std::size_t>(p)] = p;
    out.push_back({{"system", sys.index}, {"n", sys.positions()}, {"edges", edges}, {"order", order},
                   {"scores", scores}});
  }
  return out;
}

}  // namespace

const std::vector<std::pair<std::string, std::string>>& run_artifacts() {
  static const std::vector<std::pair<std::string, std::string>> kArtifacts{
      {"config snapshot", "config.json"},   {"topology family", "topologies.json"},
      {"traces", "traces.jsonl"},           {"recovered outputs", "recovered.jsonl"},
      {"embeddings", "embeddings.bin"},     {"embeddings sidecar", "embeddings.json"},
      {"model blob", "model.bin"},          {"model manifest", "model.json"},
      {"labels", "labels.json"},            {"predictions", "predictions.json"},
      {"metrics", "metrics.json"},          {"loss curve", "losses.csv"},
      {"ROC points", "roc.csv"},
  };
  return kArtifacts;
}

Prepared prepare(const config::RunConfig& cfg, const PrepareOptions& options) {
  Prepared data{cfg, {}, {}};
  const int workers = worker_count(cfg);
  const auto& dir = options.dir;
  if (dir) {
    fs::create_directories(*dir);
    io::write_text(*dir / "config.json", config::snapshot(cfg));
  }

  staged("generate", [&] {
    const auto family = generate_family(cfg);
    data.stats = graph::family_stats(family);
    for (int s = 0; s < cfg.topology.count; ++s) {
      SystemData sys;
      sys.index = s;
      sys.topology = family[static_cast<std::size_t>(s)];
      data.systems.push_back(std::move(sys));
    }
    if (dir) io::write_text(*dir / "topologies.json", topologies_json(data).dump(2) + "\n");
  });

  staged("simulate", [&] {
    parallel_for(cfg.topology.count, workers, [&](int s) {
      auto& sys = data.systems[static_cast<std::size_t>(s)];
      sys.traces = simulate_system(cfg, sys.topology, s);
    });
    if (dir) {
      std::vector<json> lines;
      for (const auto& sys : data.systems)
        for (const auto& t : sys.traces) lines.push_back(traces_line(sys, t));
      write_jsonl(*dir / "traces.jsonl", lines);
    }
  });

  staged("recover", [&] {
    parallel_for(cfg.topology.count, workers, [&](int s) {
      auto& sys = data.systems[static_cast<std::size_t>(s)];
      for (const auto& t : sys.traces) {
        auto r = induction::recover_outputs(t.final_output);
        r.source_task = t.task_id + "#" + std::to_string(t.perturbation_index);
        sys.recovered.push_back(std::move(r));
      }
      const auto count = sys.recovered.front().items.size();
      for (const auto& r : sys.recovered) {
        if (r.items.size() != count) {
          throw ParseError("system " + std::to_string(s) +
                           ": perturbations recovered different agent counts");
        }
      }
      if (count < 2) throw ParseError("system " + std::to_string(s) + ": fewer than two agents recovered");
      finish_system(sys, cfg);
    });
    if (dir) {
      std::vector<json> lines;
      for (const auto& sys : data.systems)
        for (int m = 0; m < cfg.perturbations; ++m) lines.push_back(recovered_line(sys, m));
      write_jsonl(*dir / "recovered.jsonl", lines);
    }
  });

  staged("embed", [&] {
    const auto ec = encoder_config(cfg, options.call);
    std::vector<std::vector<embedding::EmbeddingVector>> per_system(data.systems.size());
    parallel_for(cfg.topology.count, workers, [&](int s) {
      auto& sys = data.systems[static_cast<std::size_t>(s)];
      std::vector<std::string> texts;
      for (int p = 0; p < sys.positions(); ++p)
        for (const auto& r : sys.recovered) texts.push_back(r.items[static_cast<std::size_t>(p)]);
      per_system[static_cast<std::size_t>(s)] = embedding::encode_batch(texts, ec);
      sys.batch.agents = sys.positions();
      sys.batch.samples = cfg.perturbations;
      sys.batch.h = stack_rows(per_system[static_cast<std::size_t>(s)], cfg.embedding.d);
      sys.batch.alpha = cfg.training.alpha;
    });
    if (dir) {
      std::vector<embedding::EmbeddingVector> all;
      for (auto& rows : per_system) all.insert(all.end(), rows.begin(), rows.end());
      embedding::save_embeddings(*dir / "embeddings", all, embedding::backend_name(ec.backend));
    }
  });

  staged("supervise", [&] {
    // Sequential: teacher calls, if any, are recorded in a stable order.
    for (auto& sys : data.systems) {
      sys.topk = oracle_topk(cfg, sys, options.call);
      if (cfg.supervision.negatives == "low_overlap") {
        const int all = static_cast<int>(supervision::order_consistent_pairs(sys.positions()).size());
        sys.labels = supervision::build_label_sets_low_overlap(
            sys.topk, supervision::lexical_oracle_topk(sys.recovered.front(), all), cfg.supervision.neg_ratio);
      } else {
        sys.labels = supervision::build_label_sets(sys.topk,
                                                   supervision::order_consistent_pairs(sys.positions()),
                                                   cfg.supervision.neg_ratio,
                                                   stream(cfg.seed, kLabelSalt, sys.index));
      }
      sys.labels.k = cfg.supervision.k;
      sys.batch.pos = sys.labels.positive_pairs();
      sys.batch.neg = sys.labels.e_neg;
    }
    if (dir) io::write_text(*dir / "labels.json", labels_json(data).dump(2) + "\n");
  });
  return data;
}

VariantSpec configured_variant(const config::RunConfig& cfg) {
  return {"cia", cfg.variant(), cfg.dims(),
          {cfg.training.w_rec, cfg.training.w_bias, cfg.training.w_lws, 1.0}};
}

std::vector<VariantSpec> ablation_variants(const config::RunConfig& cfg) {
  auto full = configured_variant(cfg);
  full.name = "full";
  full.variant = disentangle::Variant::kDual;
  auto wo_gbd = full;
  wo_gbd.name = "wo_gbd";
  wo_gbd.weights.bias = 0.0;
  auto wo_lws = full;
  wo_lws.name = "wo_lws";
  wo_lws.weights.lws = 0.0;
  auto sub = full;
  sub.name = "sub";
  sub.variant = disentangle::Variant::kSub;
  sub.dims.latent = sub.dims.input;
  return {full, wo_gbd, wo_lws, sub};
}

SystemResult evaluate_system(const Prepared& data, const SystemData& sys, disentangle::ModelParams params,
                             std::vector<disentangle::LossRecord> curve) {
  const auto& cfg = data.config;
  SystemResult r;
  r.params = std::move(params);
  r.curve = std::move(curve);
  std::vector<int> pi(static_cast<std::size_t>(sys.positions()));
  for (int p = 0; p < sys.positions(); ++p) pi[static_cast<std::size_t>(p)] = p;

  staged("score", [&] {
    r.scores = eval::score_pairs(disentangle::agent_profiles(r.params, sys.batch), pi);
    r.report.predicted = eval::identify_links(r.scores, cfg.tau);
  });
  staged("evaluate", [&] {
    eval::assert_direction(r.report.predicted, pi);
    const auto c = eval::classification_metrics(r.report.predicted, sys.truth, r.scores.universe);
    r.report.acc = c.acc;
    r.report.f1 = c.f1;
    r.report.fpr = c.fpr;
    const auto edges = sys.truth.edges().size();
    r.auc_defined = edges > 0 && edges < r.scores.universe.size();
    r.report.auc = r.auc_defined ? eval::auc(r.scores, sys.truth) : 0.0;
    r.report.precision_at_k = eval::precision_at_k(sys.labels.positive_pairs(), sys.truth);
    r.report.recovery_recall = sys.recovery_recall;
    r.report.rouge_l = sys.rouge_l;
  });
  return r;
}

AttackResult attack(const Prepared& data, const VariantSpec& spec) {
  const auto& cfg = data.config;
  AttackResult out;
  out.variant = spec.name;
  const auto train_on = [&](std::vector<disentangle::TrainBatch> batches, std::uint64_t index) {
    disentangle::TrainConfig tc;
    tc.lr = cfg.training.lr;
    tc.epochs = cfg.training.epochs;
    tc.seed = stream(cfg.seed, kTrainSalt, index);
    tc.temperature = cfg.model.temperature;
    tc.weights = spec.weights;
    return staged("train", [&] { return disentangle::train(batches, spec.dims, spec.variant, tc); });
  };
  if (cfg.training.scope == "family") {
    std::vector<disentangle::TrainBatch> batches;
    for (const auto& sys : data.systems) batches.push_back(sys.batch);
    auto trained = train_on(std::move(batches), 0);
    const auto params = disentangle::rounded_to_float32(trained.params);
    for (std::size_t s = 0; s < data.systems.size(); ++s)
      out.systems.push_back(evaluate_system(data, data.systems[s], params, s == 0 ? trained.curve : std::vector<disentangle::LossRecord>{}));
    out.shared_model = true;
  } else {
    for (const auto& sys : data.systems) {
      auto trained = train_on({sys.batch}, static_cast<std::uint64_t>(sys.index));
      out.systems.push_back(evaluate_system(data, sys, disentangle::rounded_to_float32(trained.params),
                                            std::move(trained.curve)));
    }
  }
  const auto n = static_cast<double>(out.systems.size());
  for (const auto& s : out.systems) {
    if (s.auc_defined) {
      out.mean.auc += s.report.auc;
      ++out.auc_systems;
    }
    out.mean.acc += s.report.acc / n;
    out.mean.f1 += s.report.f1 / n;
    out.mean.fpr += s.report.fpr / n;
    out.mean.precision_at_k += s.report.precision_at_k / n;
    out.mean.recovery_recall += s.report.recovery_recall / n;
    out.mean.rouge_l += s.report.rouge_l / n;
  }
  if (out.auc_systems > 0) out.mean.auc /= out.auc_systems;
  return out;
}

json AttackResult::metrics_json(const Prepared& data) const {
  json j = mean.metrics_json();
  j["variant"] = variant;
  j["auc_systems"] = auc_systems;
  j["model_scope"] = shared_model ? "family" : "system";
  json per = json::array();
  int collisions = 0;
  int degenerate = 0;
  for (std::size_t s = 0; s < systems.size(); ++s) {
    const auto& sys = data.systems[s];
    json m = systems[s].report.metrics_json();
    if (!systems[s].auc_defined) m["auc"] = nullptr;
    m["system"] = sys.index;
    m["n"] = sys.topology.size();
    m["edges"] = sys.topology.edges().size();
    m["predicted_edges"] = systems[s].report.predicted.size();
    m["collisions"] = sys.collisions;
    m["degenerate_pairs"] = systems[s].scores.degenerate.size();
    collisions += sys.collisions;
    degenerate += static_cast<int>(systems[s].scores.degenerate.size());
    per.push_back(m);
  }
  j["collisions"] = collisions;
  j["degenerate_pairs"] = degenerate;
  j["systems"] = per;
  return j;
}

void write_attack_artifacts(const fs::path& dir, const Prepared& data, const AttackResult& result) {
  staged("persist", [&] {
    fs::create_directories(dir);
    std::vector<disentangle::ModelParams> models;
    for (const auto& s : result.systems) {
      models.push_back(s.params);
      if (result.shared_model) break;
    }
    disentangle::save_params(dir / "model", models);
    io::write_text(dir / "predictions.json", predictions_json(data, result).dump(2) + "\n");
    write_csv_losses(dir / "losses.csv", result);
    write_roc(dir / "roc.csv", data, result);
    io::write_text(dir / "metrics.json", result.metrics_json(data).dump(2) + "\n");
  });
}

AttackResult cmd_attack(const config::RunConfig& cfg, const PrepareOptions& options) {
  PrepareOptions opts = options;
  if (!opts.dir) opts.dir = fs::path(cfg.out);
  const auto data = prepare(cfg, opts);
  auto result = attack(data, configured_variant(cfg));
  write_attack_artifacts(*opts.dir, data, result);
  staged("report", [&] { io::write_text(*opts.dir / "report.md", cmd_report(*opts.dir)); });
  return result;
}

json AblationResult::to_json(const Prepared& data) const {
  json vars = json::array();
  json deltas = json::object();
  const AttackResult* full = nullptr;
  for (std::size_t v = 0; v < variants.size(); ++v)
    if (errors[v].empty() && variants[v].variant == "full") full = &variants[v];
  for (std::size_t v = 0; v < variants.size(); ++v) {
    if (!errors[v].empty()) {
      vars.push_back({{"name", variants[v].variant}, {"error", errors[v]}});
      continue;
    }
    json m = variants[v].mean.metrics_json();
    vars.push_back({{"name", variants[v].variant}, {"metrics", m}, {"auc_systems", variants[v].auc_systems}});
    if (full != nullptr && &variants[v] != full) {
      json d = json::object();
      const json fm = full->mean.metrics_json();
      for (const auto& [key, value] : fm.items()) d[key] = value.get<double>() - m[key].get<double>();
      deltas[variants[v].variant] = d;
    }
  }
  (void)data;
  return {{"variants", vars}, {"deltas_full_minus_variant", deltas}};
}

AblationResult cmd_ablate(const config::RunConfig& cfg, const PrepareOptions& options) {
  PrepareOptions opts = options;
  if (!opts.dir) opts.dir = fs::path(cfg.out);
  const auto data = prepare(cfg, opts);
  AblationResult out;
  std::string table = "| variant | AUC | ACC | F1 | FPR |\n|---|---|---|---|---|\n";
  for (const auto& spec : ablation_variants(cfg)) {
    try {
      auto r = attack(data, spec);
      write_attack_artifacts(*opts.dir / spec.name, data, r);
      table += "| " + spec.name + " | " + fmt(r.mean.auc) + " | " + fmt(r.mean.acc) + " | " + fmt(r.mean.f1) +
               " | " + fmt(r.mean.fpr) + " |\n";
      out.variants.push_back(std::move(r));
      out.errors.emplace_back();
    } catch (const std::exception& e) {
      AttackResult failed;
      failed.variant = spec.name;
      out.variants.push_back(std::move(failed));
      out.errors.emplace_back(e.what());
      table += "| " + spec.name + " | failed | | | |\n";
    }
  }
  io::write_text(*opts.dir / "ablation.json", out.to_json(data).dump(2) + "\n");
  io::write_text(*opts.dir / "ablation.md", "# Ablation\n\n" + table);
  return out;
}

void cmd_gen_topology(const config::RunConfig& cfg) {
  const fs::path dir(cfg.out);
  fs::create_directories(dir);
  io::write_text(dir / "config.json", config::snapshot(cfg));
  staged("generate", [&] {
    Prepared data{cfg, {}, {}};
    const auto family = generate_family(cfg);
    data.stats = graph::family_stats(family);
    for (int s = 0; s < cfg.topology.count; ++s) {
      SystemData sys;
      sys.index = s;
      sys.topology = family[static_cast<std::size_t>(s)];
      data.systems.push_back(std::move(sys));
    }
    io::write_text(dir / "topologies.json", topologies_json(data).dump(2) + "\n");
  });
}

void cmd_simulate(const config::RunConfig& cfg) {
  const fs::path dir(cfg.out);
  cmd_gen_topology(cfg);
  const auto family = generate_family(cfg);
  staged("simulate", [&] {
    std::vector<std::vector<json>> per(family.size());
    parallel_for(cfg.topology.count, worker_count(cfg), [&](int s) {
      SystemData sys;
      sys.index = s;
      for (const auto& t : simulate_system(cfg, family[static_cast<std::size_t>(s)], s))
        per[static_cast<std::size_t>(s)].push_back(traces_line(sys, t));
    });
    std::vector<json> lines;
    for (auto& p : per) lines.insert(lines.end(), p.begin(), p.end());
    write_jsonl(dir / "traces.jsonl", lines);
  });
}

namespace {

void require_artifacts(const fs::path& dir, const std::vector<std::string>& files) {
  std::vector<std::string> missing;
  for (const auto& [name, file] : run_artifacts())
    if (std::find(files.begin(), files.end(), file) != files.end() && !fs::exists(dir / file))
      missing.push_back(name + " (" + file + ")");
  if (!missing.empty()) throw ConfigError("run directory " + dir.string() + " is missing: " + text::join(missing, ", "));
}

Prepared load_prepared(const fs::path& dir) {
  Prepared data;
  data.config = config::RunConfig::from_json(json::parse(io::read_text(dir / "config.json")));
  const auto& cfg = data.config;
  const auto topo = json::parse(io::read_text(dir / "topologies.json"));
  data.stats = {topo.at("stats").at("n_avg").get<double>(), topo.at("stats").at("e_avg").get<double>()};
  for (const auto& t : topo.at("topologies")) {
    SystemData sys;
    sys.index = static_cast<int>(data.systems.size());
    sys.topology = graph::Topology::from_json(t);
    data.systems.push_back(std::move(sys));
  }
  const auto system_of = [&](const json& j) -> SystemData& {
    const auto s = j.at("system").get<std::size_t>();
    if (s >= data.systems.size()) throw ParseError("artifact refers to unknown system " + std::to_string(s));
    return data.systems[s];
  };
  for (const auto& j : read_jsonl(dir / "traces.jsonl")) system_of(j).traces.push_back(sim::TraceBundle::from_json(j));
  for (const auto& j : read_jsonl(dir / "recovered.jsonl"))
    system_of(j).recovered.push_back(induction::RecoveredOutputs::from_json(j));
  for (auto& sys : data.systems) {
    if (sys.traces.empty() || sys.recovered.size() != sys.traces.size())
      throw ParseError("system " + std::to_string(sys.index) + ": traces and recovered outputs disagree");
    finish_system(sys, cfg);
  }
  const auto emb = embedding::load_embeddings(dir / "embeddings");
  std::size_t offset = 0;
  for (auto& sys : data.systems) {
    const auto rows = static_cast<std::size_t>(sys.positions()) * sys.recovered.size();
    if (offset + rows > emb.rows.size()) throw ParseError("embeddings: fewer rows than recovered outputs");
    const std::vector<embedding::EmbeddingVector> part(emb.rows.begin() + static_cast<std::ptrdiff_t>(offset),
                                                       emb.rows.begin() + static_cast<std::ptrdiff_t>(offset + rows));
    offset += rows;
    sys.batch.agents = sys.positions();
    sys.batch.samples = static_cast<int>(sys.recovered.size());
    sys.batch.h = stack_rows(part, cfg.embedding.d);
    sys.batch.alpha = cfg.training.alpha;
  }
  for (const auto& j : json::parse(io::read_text(dir / "labels.json"))) {
    auto& sys = system_of(j);
    sys.labels = supervision::WeakLabels::from_json(j);
    sys.topk = sys.labels.e_pos;
    sys.batch.pos = sys.labels.positive_pairs();
    sys.batch.neg = sys.labels.e_neg;
  }
  return data;
}

}  // namespace

json cmd_eval(const fs::path& run_dir) {
  require_artifacts(run_dir, {"config.json", "topologies.json", "traces.jsonl", "recovered.jsonl",
                              "embeddings.bin", "embeddings.json", "model.bin", "model.json", "labels.json"});
  const auto data = staged("evaluate", [&] { return load_prepared(run_dir); });
  const auto models = staged("evaluate", [&] { return disentangle::load_params(run_dir / "model"); });
  const bool shared = data.config.training.scope == "family";
  if (models.size() != (shared ? 1 : data.systems.size()))
    throw StageError("evaluate", "model blob holds " + std::to_string(models.size()) + " models for " +
                                     std::to_string(data.systems.size()) + " systems");
  AttackResult result;
  result.variant = "cia";
  result.shared_model = shared;
  for (std::size_t s = 0; s < data.systems.size(); ++s)
    result.systems.push_back(evaluate_system(data, data.systems[s], models[shared ? 0 : s]));
  const auto n = static_cast<double>(result.systems.size());
  for (const auto& s : result.systems) {
    if (s.auc_defined) {
      result.mean.auc += s.report.auc;
      ++result.auc_systems;
    }
    result.mean.acc += s.report.acc / n;
    result.mean.f1 += s.report.f1 / n;
    result.mean.fpr += s.report.fpr / n;
    result.mean.precision_at_k += s.report.precision_at_k / n;
    result.mean.recovery_recall += s.report.recovery_recall / n;
    result.mean.rouge_l += s.report.rouge_l / n;
  }
  if (result.auc_systems > 0) result.mean.auc /= result.auc_systems;
  const auto metrics = result.metrics_json(data);
  staged("persist", [&] {
    io::write_text(run_dir / "metrics.json", metrics.dump(2) + "\n");
    io::write_text(run_dir / "predictions.json", predictions_json(data, result).dump(2) + "\n");
    write_roc(run_dir / "roc.csv", data, result);
  });
  return metrics;
}

std::string cmd_report(const fs::path& run_dir) {
  std::vector<std::string> files;
  for (const auto& [name, file] : run_artifacts()) files.push_back(file);
  require_artifacts(run_dir, files);

  const auto cfg = json::parse(io::read_text(run_dir / "config.json"));
  const auto topo = json::parse(io::read_text(run_dir / "topologies.json"));
  const auto metrics = json::parse(io::read_text(run_dir / "metrics.json"));

  std::string out = "# Attack report\n\n## Configuration\n\n| key | value |\n|---|---|\n";
  const auto flat = cfg.flatten();
  for (const auto& [key, value] : flat.items()) out += "| `" + key + "` | " + value.dump() + " |\n";

  struct Target {
    const char* family;
    double n_avg, e_avg;
  };
  static constexpr Target kTargets[] = {
      {"MMLU / G-Designer", 7.0, 8.99},      {"MMLU / AGP", 6.0, 10.87},
      {"MMLU / ARG-Designer", 5.42, 7.84},   {"GSM8K / G-Designer", 5.0, 8.19},
      {"GSM8K / AGP", 5.0, 8.45},            {"GSM8K / ARG-Designer", 3.07, 3.14},
      {"SVAMP / G-Designer", 5.0, 8.15},     {"SVAMP / AGP", 5.0, 8.41},
      {"SVAMP / ARG-Designer", 3.05, 3.10},  {"HumanEval / G-Designer", 6.0, 11.38},
      {"HumanEval / AGP", 6.0, 11.54},       {"HumanEval / ARG-Designer", 4.24, 5.49},
  };
  const double n_avg = topo.at("stats").at("n_avg").get<double>();
  const double e_avg = topo.at("stats").at("e_avg").get<double>();
  const Target* nearest = &kTargets[0];
  for (const auto& t : kTargets) {
    const auto dist = [&](const Target& x) { return std::hypot(x.n_avg - n_avg, x.e_avg - e_avg); };
    if (dist(t) < dist(*nearest)) nearest = &t;
  }
  out += "\n## Topology statistics\n\n| family | N_avg | E_avg |\n|---|---|---|\n";
  out += "| generated (" + std::to_string(topo.at("topologies").size()) + " systems) | " + fmt(n_avg, 2) + " | " +
         fmt(e_avg, 2) + " |\n";
  out += "| nearest target: " + std::string(nearest->family) + " | " + fmt(nearest->n_avg, 2) + " | " +
         fmt(nearest->e_avg, 2) + " |\n";

  static constexpr std::pair<const char*, const char*> kMetrics[] = {
      {"AUC", "auc"}, {"ACC", "acc"}, {"F1", "f1"}, {"FPR", "fpr"}, {"Precision@k", "precision_at_k"},
      {"Recovery recall", "recovery_recall"}, {"ROUGE-L", "rouge_l"},
  };
  out += "\n## Metrics\n\n| metric | value |\n|---|---|\n";
  for (const auto& [label, key] : kMetrics) out += "| " + std::string(label) + " | " + fmt(metrics.at(key).get<double>()) + " |\n";
  out += "\nAUC is averaged over " + std::to_string(metrics.at("auc_systems").get<int>()) +
         " systems whose ground truth has both edges and non-edges.\n";

  out += "\n## Per-system results\n\n| system | n | edges | predicted | AUC | FPR | F1 |\n|---|---|---|---|---|---|---|\n";
  for (const auto& s : metrics.at("systems")) {
    out += "| " + std::to_string(s.at("system").get<int>()) + " | " + std::to_string(s.at("n").get<int>()) +
           " | " + std::to_string(s.at("edges").get<int>()) + " | " +
           std::to_string(s.at("predicted_edges").get<int>()) + " | " +
           (s.at("auc").is_null() ? std::string("n/a") : fmt(s.at("auc").get<double>())) + " | " +
           fmt(s.at("fpr").get<double>()) + " | " + fmt(s.at("f1").get<double>()) + " |\n";
  }

  out += "\n## Loss curves\n\nPer-epoch losses are in `losses.csv` (system, epoch, l_rec, l_bias, l_lws, total).\n";
  {
    std::istringstream in(io::read_text(run_dir / "losses.csv"));
    std::string line, header;
    std::getline(in, header);
    std::map<std::string, std::pair<std::string, std::string>> ends;
    while (std::getline(in, line)) {
      const auto sys = line.substr(0, line.find(','));
      auto& e = ends[sys];
      if (e.first.empty()) e.first = line;
      e.second = line;
    }
    if (!ends.empty()) {
      out += "\nFirst and last recorded epochs:\n\n```csv\n" + header + "\n";
      for (const auto& [sys, e] : ends) out += e.first + "\n" + e.second + "\n";
      out += "```\n";
    }
  }
  out += "\n## ROC points\n\n(fpr, tpr) points per system are in `roc.csv`.\n";
  out += "\n## Notes\n\n- recovered-text collisions: " + std::to_string(metrics.at("collisions").get<int>()) +
         "\n- zero-vector pairs scored 0.5: " + std::to_string(metrics.at("degenerate_pairs").get<int>()) + "\n";
  return out;
}

}  // namespace topoleak::pipeline
