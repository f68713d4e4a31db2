#pragma once

// Experiment configuration and orchestration behind the command-line tool:
// single runs, data-scale and equal-budget sweeps, selector ablations, and the
// convergence-bound check.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dopr/error.hpp"
#include "dopr/tasks.hpp"
#include "dopr/theory.hpp"
#include "dopr/trainers.hpp"

#include <json.hpp>

namespace dopr {

enum class ExperimentKind { SingleRun, DataScaleSweep, BudgetSweep, Ablation, Theory };

/// Every offending field, each prefixed with its JSON path.
class ValidationError : public ConfigError {
 public:
  explicit ValidationError(std::vector<std::string> issues);
  const std::vector<std::string>& issues() const { return issues_; }

 private:
  std::vector<std::string> issues_;
};

struct SweepConfig {
  /// nullopt stands for the full dataset.
  std::vector<std::optional<std::int64_t>> subset_sizes = {4, 8, 16, std::nullopt};
  std::vector<std::int64_t> budgets = {10000};
  std::vector<Algo> algorithms = {Algo::Dopr, Algo::Grpo};
  std::vector<SelectorVariant> variants = {SelectorVariant::EmUcb, SelectorVariant::PlainUcb,
                                           SelectorVariant::VarianceOnly};
  /// Rollout budget of the constrained ablation leg.
  std::int64_t ablation_budget = 10000;
};

struct TheoryConfig {
  std::int64_t dim = 4;
  double curvature = 2.0;
  double epsilon = 2.0;
  double epsilon_prime = 0.02;
  double alpha = 0.5;
  std::int64_t steps = 40;
  std::int64_t repeats = 1000;
  std::vector<double> sweep_epsilon_primes = {0.2, 0.02, 2e-3, 2e-4, 2e-5, 2e-6, 2e-7, 2e-8};
  std::int64_t pl_samples = 100000;
  std::uint64_t seed = 0;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::SingleRun;
  TaskSpec task;
  TrainConfig train;
  SweepConfig sweep;
  TheoryConfig theory;
  std::string output_dir = "runs/out";
};

std::string_view experiment_name(ExperimentKind kind);
std::string_view variant_name(SelectorVariant variant);
std::optional<SelectorVariant> parse_variant(std::string_view name);
Algo algo_for_variant(SelectorVariant variant);

/// Parses and validates; throws ValidationError listing every problem.
ExperimentConfig parse_experiment(const nlohmann::json& doc);
ExperimentConfig load_experiment(const std::filesystem::path& path);
/// Fully materialized config (every default written out).
nlohmann::ordered_json to_json(const ExperimentConfig& cfg);

/// Refuses (ConfigError) when `dir` exists and is non-empty unless `force`.
void prepare_output_dir(const std::filesystem::path& dir, bool force);

struct SummaryRow {
  std::string experiment;
  std::string leg;
  std::string algo;
  std::string subset_size;  ///< number or "full"
  std::string budget;       ///< number or empty
  std::string variant;
  std::int64_t steps = 0;
  std::int64_t cumulative_rollouts = 0;
  double final_eval_accuracy = 0.0;
  double final_full_accuracy = 0.0;
  std::string status = "ok";  ///< "ok" or "failed: <reason>"
};

inline constexpr std::string_view kSummaryHeader =
    "experiment,leg,algo,subset_size,budget,variant,steps,cumulative_rollouts,"
    "final_eval_accuracy,final_full_accuracy,status";

std::string format_summary(const std::vector<SummaryRow>& rows);
std::vector<SummaryRow> parse_summary(const std::string& text, const std::string& origin = "<memory>");

struct SweepResult {
  std::vector<SummaryRow> rows;
  std::vector<std::string> warnings;
};

/// Writes dataset.txt, metrics.csv, config.resolved.json, checkpoint.txt and
/// stats.txt under `dir` (which must already be prepared).
RunResult run_single(const ExperimentConfig& cfg, const std::filesystem::path& dir);

SweepResult run_data_scale_sweep(const ExperimentConfig& cfg, const std::filesystem::path& dir);
SweepResult run_budget_sweep(const ExperimentConfig& cfg, const std::filesystem::path& dir);
SweepResult run_ablation(const ExperimentConfig& cfg, const std::filesystem::path& dir);

struct TheoryOutcome {
  theory::BoundReport noiseless;
  theory::BoundReport boundary_noise;
  theory::ScalingFit scaling;
  theory::PlSmoothCheck pl_smooth;
  std::vector<std::string> failures;
  bool passed() const { return failures.empty(); }
};

TheoryOutcome run_theory(const TheoryConfig& cfg);
std::string format_theory(const TheoryOutcome& outcome);

/// Markdown summary of an experiment directory, with published figures
/// listed as labeled references.
std::string render_report(const std::filesystem::path& dir);

}  // namespace dopr
