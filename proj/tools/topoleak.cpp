// topoleak: command-line front end for the attack pipeline.
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "topoleak/config.hpp"
#include "topoleak/errors.hpp"
#include "topoleak/io.hpp"
#include "topoleak/pipeline.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kStageFailure = 3;

struct Flags {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> variant;
};

void add_flags(CLI::App* cmd, Flags& f, bool with_variant) {
  cmd->add_option("--config", f.config, "JSON run configuration");
  cmd->add_option("--seed", f.seed, "Seed (overrides the config)");
  cmd->add_option("--out", f.out, "Output / run directory (overrides the config)");
  if (with_variant)
    cmd->add_option("--variant", f.variant, "Model variant (overrides the config)")
        ->check(CLI::IsMember({"dual", "sub"}));
}

topoleak::config::RunConfig resolve(const Flags& f) {
  auto cfg = topoleak::config::load(f.config);
  if (f.seed) cfg.seed = *f.seed;
  if (f.out) cfg.out = *f.out;
  if (f.variant) {
    cfg.model.variant = *f.variant;
    if (*f.variant == "sub") cfg.model.latent = cfg.embedding.d;
  }
  cfg.validate();
  return cfg;
}

void print_metrics(const topoleak::eval::EdgePredictionReport& m) {
  std::printf("auc=%.4f acc=%.4f f1=%.4f fpr=%.4f precision@k=%.4f recall=%.4f rouge_l=%.4f\n", m.auc, m.acc,
              m.f1, m.fpr, m.precision_at_k, m.recovery_recall, m.rouge_l);
}

}  // namespace

int main(int argc, char** argv) {
  namespace pl = topoleak::pipeline;
  CLI::App app{"Communication-topology inference workbench"};
  app.require_subcommand(1);

  Flags gen_f, sim_f, attack_f, ablate_f, eval_f, report_f;
  auto* gen = app.add_subcommand("gen-topology", "Generate a topology family");
  add_flags(gen, gen_f, false);
  auto* simulate = app.add_subcommand("simulate", "Generate topologies and run the agents");
  add_flags(simulate, sim_f, false);
  auto* attack = app.add_subcommand("attack", "Run the full attack and write a run directory");
  add_flags(attack, attack_f, true);
  auto* ablate = app.add_subcommand("ablate", "Compare full, w/o GBD, w/o LWS and sub variants");
  add_flags(ablate, ablate_f, false);
  auto* eval = app.add_subcommand("eval", "Re-score a finished run directory");
  add_flags(eval, eval_f, false);
  auto* report = app.add_subcommand("report", "Render report.md for a finished run directory");
  add_flags(report, report_f, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigError;
  }

  try {
    if (gen->parsed()) {
      const auto cfg = resolve(gen_f);
      pl::cmd_gen_topology(cfg);
      std::cout << "wrote " << cfg.out << "/topologies.json\n";
    } else if (simulate->parsed()) {
      const auto cfg = resolve(sim_f);
      pl::cmd_simulate(cfg);
      std::cout << "wrote " << cfg.out << "/traces.jsonl\n";
    } else if (attack->parsed()) {
      const auto cfg = resolve(attack_f);
      const auto r = pl::cmd_attack(cfg);
      print_metrics(r.mean);
      std::cout << "wrote " << cfg.out << "\n";
    } else if (ablate->parsed()) {
      const auto cfg = resolve(ablate_f);
      const auto r = pl::cmd_ablate(cfg);
      bool failed = false;
      for (std::size_t v = 0; v < r.variants.size(); ++v) {
        std::printf("%-7s ", r.variants[v].variant.c_str());
        if (r.errors[v].empty()) {
          print_metrics(r.variants[v].mean);
        } else {
          failed = true;
          std::printf("failed: %s\n", r.errors[v].c_str());
        }
      }
      std::cout << "wrote " << cfg.out << "/ablation.json\n";
      if (failed) return kStageFailure;
    } else if (eval->parsed()) {
      const auto dir = eval_f.out ? *eval_f.out : resolve(eval_f).out;
      const auto m = pl::cmd_eval(dir);
      std::cout << m.dump(2) << "\n";
    } else if (report->parsed()) {
      const auto dir = report_f.out ? *report_f.out : resolve(report_f).out;
      const auto text = pl::cmd_report(dir);
      topoleak::io::write_text(std::filesystem::path(dir) / "report.md", text);
      std::cout << "wrote " << dir << "/report.md\n";
    }
  } catch (const topoleak::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const topoleak::StageError& e) {
    std::cerr << e.what() << "\n";
    return kStageFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kStageFailure;
  }
  return kOk;
}
