#pragma once

// Training loops: DoPR (probe the batch, refine one selected instance), the
// full-batch GRPO baseline and the fixed-instance One-Shot baseline, all with
// exact rollout accounting.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dopr/grpo.hpp"
#include "dopr/kernels.hpp"
#include "dopr/policy.hpp"
#include "dopr/selector.hpp"
#include "dopr/tasks.hpp"

namespace dopr {

enum class Algo { Dopr, Grpo, OneShot, DoprUcb, DoprNone, DoprRandom };

std::string_view algo_name(Algo algo);
std::optional<Algo> parse_algo(std::string_view name);
bool is_dopr_family(Algo algo);
/// Acquisition variant used by a DoPR-family algorithm.
SelectorVariant variant_for(Algo algo);

struct TrainConfig {
  Algo algo = Algo::Dopr;
  std::int32_t batch_size = 8;  ///< K
  std::int64_t total_steps = 200;
  std::optional<std::int64_t> rollout_budget;
  std::optional<std::int64_t> subset_size;
  std::uint64_t seed = 0;
  GrpoConfig grpo;  ///< grpo.group_size is G.
  SelectorConfig selector;
  std::int64_t eval_every = 1;
  /// Write checkpoint + stats every N steps when an output dir is given; 0 = end only.
  std::int64_t checkpoint_every = 0;
  /// Warm-start policy: bias toward targets and logit noise.
  double init_prior = 3.0;
  double init_noise = 1.5;
  RewardMode reward = RewardMode::Binary;
  /// One-Shot instance; defaults to the lowest id of the training subset.
  std::optional<std::int64_t> one_shot_instance;
  Execution exec = Execution::Parallel;

  std::int32_t group_size() const { return grpo.group_size; }
  /// Rollouts one step of `algo` consumes.
  std::int64_t rollouts_per_step() const;
  /// Throws ConfigError listing every violated constraint.
  void validate(std::int64_t dataset_size) const;
};

class RolloutLedger {
 public:
  explicit RolloutLedger(std::int64_t num_instances = 0)
      : histogram_(static_cast<std::size_t>(num_instances), 0) {}

  void record_step(std::int64_t rollouts) {
    per_step_.push_back(rollouts);
    total_ += rollouts;
  }
  void record_selection(std::int64_t id) { ++histogram_.at(static_cast<std::size_t>(id)); }

  std::int64_t total() const { return total_; }
  const std::vector<std::int64_t>& per_step() const { return per_step_; }
  const std::vector<std::int64_t>& selection_histogram() const { return histogram_; }

 private:
  std::vector<std::int64_t> per_step_;
  std::int64_t total_ = 0;
  std::vector<std::int64_t> histogram_;
};

struct MetricsRow {
  std::int64_t step = 0;
  std::int64_t cumulative_rollouts = 0;
  std::optional<double> train_mean_reward;
  std::optional<double> eval_accuracy;
  std::optional<double> mean_response_length;
  double update_wall_time_s = 0.0;
  std::optional<std::int64_t> selected_id;

  bool operator==(const MetricsRow&) const = default;
};

inline constexpr std::string_view kMetricsHeader =
    "step,cumulative_rollouts,train_mean_reward,eval_accuracy,mean_response_length,"
    "update_wall_time_s,selected_id";

std::string format_metrics_row(const MetricsRow& row);
MetricsRow parse_metrics_row(const std::string& line, const std::string& context);
std::vector<MetricsRow> parse_metrics_csv(const std::string& text, const std::string& origin = "<memory>");

/// Everything a step reads and mutates.
struct TrainState {
  PolicyParams params;
  PolicyParams ref;  ///< Frozen initial policy for the KL term.
  Selector selector;
  RolloutLedger ledger;
  std::int64_t step = 0;
  std::vector<std::int64_t> subset;  ///< Training instance ids, ascending.
  std::int64_t one_shot_id = 0;
  /// Rollouts of the most recent step, in sampling order (for inspection).
  std::vector<RolloutRecord> last_rollouts;
  /// The group used for the most recent update.
  std::vector<RolloutRecord> last_group;
};

/// Training subset: the first n of a seeded permutation, sorted. Prefixes of
/// the same permutation, so subsets for one seed are nested.
std::vector<std::int64_t> choose_subset(std::int64_t dataset_size, std::optional<std::int64_t> n,
                                        std::uint64_t seed);

TrainState init_state(const TrainConfig& cfg, const Dataset& dataset);

/// K instance ids drawn uniformly without replacement from the subset.
std::vector<std::int64_t> draw_batch(const std::vector<std::int64_t>& subset, std::int32_t k,
                                     std::uint64_t seed);

MetricsRow dopr_step(TrainState& state, const TrainConfig& cfg, const Dataset& dataset);
MetricsRow grpo_step(TrainState& state, const TrainConfig& cfg, const Dataset& dataset);
MetricsRow one_shot_step(TrainState& state, const TrainConfig& cfg, const Dataset& dataset);
/// Dispatches on cfg.algo.
MetricsRow train_step(TrainState& state, const TrainConfig& cfg, const Dataset& dataset);

/// Greedy exact-match rate over `ids`.
double eval_accuracy(const PolicyParams& params, const Dataset& dataset,
                     const std::vector<std::int64_t>& ids, Execution exec = Execution::Parallel);

struct RunResult {
  std::vector<MetricsRow> rows;  ///< Row 0 is the initial policy (step 0).
  TrainState state;
  double final_eval_accuracy = 0.0;  ///< Over the training subset.
  double final_full_accuracy = 0.0;  ///< Over every dataset instance.
  bool budget_exhausted = false;
};

/// Runs until total_steps or until the next step would exceed rollout_budget.
/// With an output dir, appends metrics.csv as rows are produced and writes
/// checkpoint.txt / stats.txt atomically.
RunResult run(const TrainConfig& cfg, const Dataset& dataset,
              const std::optional<std::filesystem::path>& output_dir = std::nullopt);

}  // namespace dopr
