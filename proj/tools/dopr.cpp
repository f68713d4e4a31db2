// dopr: command-line front end for the training laboratory.
//
// Exit codes: 0 success, 1 runtime failure, 2 validation failure.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "dopr/experiment.hpp"
#include "dopr/textio.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kOk = 0;
constexpr int kRuntime = 1;
constexpr int kValidation = 2;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool force = false;
  std::string data;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON experiment config");
  cmd->add_option("--seed", c.seed, "Override the seed");
  cmd->add_option("--out", c.out, "Output directory (defaults to output_dir from the config)");
  cmd->add_flag("--force", c.force, "Allow writing into a non-empty output directory");
}

dopr::ExperimentConfig load(const Common& c, dopr::ExperimentKind kind) {
  auto cfg = c.config.empty() ? dopr::parse_experiment(nlohmann::json::object()) : dopr::load_experiment(c.config);
  cfg.kind = kind;
  if (!c.out.empty()) cfg.output_dir = c.out;
  if (c.seed) {
    if (kind == dopr::ExperimentKind::Theory)
      cfg.theory.seed = *c.seed;
    else
      cfg.train.seed = *c.seed;
  }
  // Re-validate with the kind forced by the subcommand.
  return dopr::parse_experiment(dopr::to_json(cfg));
}

void print_sweep(const dopr::SweepResult& res, const fs::path& dir) {
  for (const auto& w : res.warnings) std::cerr << "warning: " << w << '\n';
  std::cout << dopr::format_summary(res.rows);
  std::cout << "summary written to " << (dir / "summary.csv").string() << '\n';
}

int sweep_status(const dopr::SweepResult& res) {
  for (const auto& r : res.rows)
    if (r.status != "ok") return kRuntime;
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dynamic one-shot policy refinement laboratory"};
  app.require_subcommand(1);

  Common gen, train, scale, budget, ablate, theory, report;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  add_common(gen_cmd, gen);
  auto* train_cmd = app.add_subcommand("train", "Run a single training job");
  add_common(train_cmd, train);
  train_cmd->add_option("--data", train.data, "Train on an existing dataset file instead of generating one");
  auto* scale_cmd = app.add_subcommand("sweep-data-scale", "Sweep training subset sizes");
  add_common(scale_cmd, scale);
  auto* budget_cmd = app.add_subcommand("sweep-budget", "Compare algorithms at equal rollout budgets");
  add_common(budget_cmd, budget);
  auto* ablate_cmd = app.add_subcommand("ablate", "Compare acquisition variants");
  add_common(ablate_cmd, ablate);
  auto* theory_cmd = app.add_subcommand("verify-theory", "Check the convergence bound on toy objectives");
  add_common(theory_cmd, theory);
  auto* report_cmd = app.add_subcommand("report", "Summarize an experiment directory");
  add_common(report_cmd, report);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kValidation;
  }

  try {
    if (*gen_cmd) {
      auto cfg = load(gen, dopr::ExperimentKind::SingleRun);
      if (gen.seed) cfg.task.seed = *gen.seed;
      const fs::path dir = cfg.output_dir;
      dopr::prepare_output_dir(dir, gen.force);
      dopr::save_dataset(dopr::generate_dataset(cfg.task), dir / "dataset.txt");
      std::cout << "wrote " << (dir / "dataset.txt").string() << '\n';
      return kOk;
    }
    if (*train_cmd) {
      auto cfg = load(train, dopr::ExperimentKind::SingleRun);
      const fs::path dir = cfg.output_dir;
      dopr::prepare_output_dir(dir, train.force);
      dopr::RunResult res;
      if (!train.data.empty()) {
        const auto dataset = dopr::load_dataset(train.data);
        cfg.task = dataset.spec;
        cfg.train.validate(dataset.spec.num_instances);
        dopr::save_dataset(dataset, dir / "dataset.txt");
        dopr::textio::write_atomic(dir / "config.resolved.json", dopr::to_json(cfg).dump(2) + "\n");
        res = dopr::run(cfg.train, dataset, dir);
      } else {
        res = dopr::run_single(cfg, dir);
      }
      std::cout << "steps=" << res.state.step << " cumulative_rollouts=" << res.state.ledger.total()
                << " final_eval_accuracy=" << res.final_eval_accuracy
                << " final_full_accuracy=" << res.final_full_accuracy << '\n';
      return kOk;
    }
    if (*scale_cmd || *budget_cmd || *ablate_cmd) {
      const auto kind = *scale_cmd   ? dopr::ExperimentKind::DataScaleSweep
                        : *budget_cmd ? dopr::ExperimentKind::BudgetSweep
                                      : dopr::ExperimentKind::Ablation;
      const auto& c = *scale_cmd ? scale : *budget_cmd ? budget : ablate;
      auto cfg = load(c, kind);
      const fs::path dir = cfg.output_dir;
      dopr::prepare_output_dir(dir, c.force);
      const auto res = kind == dopr::ExperimentKind::DataScaleSweep ? dopr::run_data_scale_sweep(cfg, dir)
                       : kind == dopr::ExperimentKind::BudgetSweep  ? dopr::run_budget_sweep(cfg, dir)
                                                                    : dopr::run_ablation(cfg, dir);
      print_sweep(res, dir);
      return sweep_status(res);
    }
    if (*theory_cmd) {
      auto cfg = load(theory, dopr::ExperimentKind::Theory);
      const auto outcome = dopr::run_theory(cfg.theory);
      const auto text = dopr::format_theory(outcome);
      std::cout << text;
      if (!theory.out.empty()) {
        dopr::prepare_output_dir(theory.out, theory.force);
        dopr::textio::write_atomic(fs::path(theory.out) / "bound_report.txt", text);
      }
      return outcome.passed() ? kOk : kRuntime;
    }
    if (*report_cmd) {
      if (report.out.empty()) throw dopr::ConfigError("report: --out <dir> is required");
      const auto text = dopr::render_report(report.out);
      std::cout << text;
      dopr::textio::write_atomic(fs::path(report.out) / "report.md", text);
      return kOk;
    }
  } catch (const dopr::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kRuntime;
}
