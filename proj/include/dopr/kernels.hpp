#pragma once

// Data-parallel inner loops of a training step.
//
// Every kernel has a serial reference and an OpenMP version. Both consume the
// same per-item seeds and reduce partial results in the same fixed index
// order, so their outputs are bitwise identical regardless of thread count.

#include <cstdint>
#include <span>
#include <vector>

#include "dopr/policy.hpp"
#include "dopr/tasks.hpp"

namespace dopr {

enum class Execution { Serial, Parallel };

namespace kernels {

/// One rollout's share of the clipped-surrogate objective.
struct TermJob {
  const RolloutRecord* rollout = nullptr;
  double advantage = 0.0;
  /// Multiplies both value and gradient, e.g. 1 / (G * num_groups).
  double scale = 1.0;
};

struct SurrogateSettings {
  double clip_eps = 0.2;
  double kl_beta = 0.0;
};

/// Value and gradient rows (length() x symbols, row-major) for one rollout:
/// scale / |o| * sum_t [ min(F A, clip(F) A) - beta (F_ref - ln F_ref - 1) ].
struct RolloutTerm {
  double objective = 0.0;
  std::vector<double> grad_rows;
};

RolloutTerm rollout_term(const PolicyParams& new_params, const PolicyParams& old_params,
                         const PolicyParams& ref_params, const TermJob& job,
                         const SurrogateSettings& settings);

namespace serial {

/// rollouts[k] is drawn for ids[k] with a generator seeded by seeds[k], then
/// scored against the dataset.
std::vector<RolloutRecord> sample_rollouts(const PolicyParams& params, const Dataset& dataset,
                                           std::span<const std::int64_t> ids,
                                           std::span<const std::uint64_t> seeds, RewardMode mode);

/// grad += sum_j term_j.grad; returns sum_j term_j.objective.
double accumulate_terms(PolicyParams& grad, const PolicyParams& new_params,
                        const PolicyParams& old_params, const PolicyParams& ref_params,
                        std::span<const TermJob> jobs, const SurrogateSettings& settings);

std::int64_t count_greedy_correct(const PolicyParams& params, const Dataset& dataset,
                                  std::span<const std::int64_t> ids);

}  // namespace serial

namespace parallel {

std::vector<RolloutRecord> sample_rollouts(const PolicyParams& params, const Dataset& dataset,
                                           std::span<const std::int64_t> ids,
                                           std::span<const std::uint64_t> seeds, RewardMode mode);

double accumulate_terms(PolicyParams& grad, const PolicyParams& new_params,
                        const PolicyParams& old_params, const PolicyParams& ref_params,
                        std::span<const TermJob> jobs, const SurrogateSettings& settings);

std::int64_t count_greedy_correct(const PolicyParams& params, const Dataset& dataset,
                                  std::span<const std::int64_t> ids);

}  // namespace parallel

std::vector<RolloutRecord> sample_rollouts(Execution exec, const PolicyParams& params,
                                           const Dataset& dataset, std::span<const std::int64_t> ids,
                                           std::span<const std::uint64_t> seeds, RewardMode mode);

double accumulate_terms(Execution exec, PolicyParams& grad, const PolicyParams& new_params,
                        const PolicyParams& old_params, const PolicyParams& ref_params,
                        std::span<const TermJob> jobs, const SurrogateSettings& settings);

std::int64_t count_greedy_correct(Execution exec, const PolicyParams& params, const Dataset& dataset,
                                  std::span<const std::int64_t> ids);

}  // namespace kernels
}  // namespace dopr
