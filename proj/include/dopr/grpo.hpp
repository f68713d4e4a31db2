#pragma once

// Group-relative policy optimization: advantages, importance ratios, the
// clipped surrogate with a KL penalty, its exact gradient, and a plain
// gradient-ascent step.

#include <cstdint>
#include <span>
#include <vector>

#include "dopr/kernels.hpp"
#include "dopr/policy.hpp"

namespace dopr {

struct GrpoConfig {
  double clip_eps = 0.2;
  double kl_beta = 0.01;
  double learning_rate = 0.05;
  std::int32_t group_size = 8;
  std::int32_t inner_epochs = 1;
  double std_floor = 1e-8;
  /// Global gradient-norm clip; 0 disables.
  double grad_clip = 10.0;

  void validate() const;
};

struct GroupBatch {
  std::int64_t instance_id = 0;
  std::vector<RolloutRecord> rollouts;  ///< Sampled from the old snapshot.
};

/// (r - mean) / max(std_pop, std_floor); all zeros when the group is constant.
std::vector<double> group_advantages(std::span<const double> rewards, double std_floor);

/// Per-token pi_new / pi_old.
std::vector<double> ratio(const PolicyParams& new_params, const PolicyParams& old_params,
                          const RolloutRecord& rollout);

/// F - ln F - 1. Throws std::domain_error for F <= 0.
double kl_estimate(double ratio_value);

struct LossAndGrad {
  double objective = 0.0;
  PolicyParams grad;
};

/// Objective and exact gradient for one group.
LossAndGrad grpo_loss_and_grad(const PolicyParams& new_params, const PolicyParams& old_params,
                               const PolicyParams& ref_params, const GroupBatch& batch,
                               const GrpoConfig& cfg, Execution exec = Execution::Parallel);

/// Average over several groups (the multi-instance GRPO batch).
LossAndGrad grpo_loss_and_grad(const PolicyParams& new_params, const PolicyParams& old_params,
                               const PolicyParams& ref_params, std::span<const GroupBatch> batches,
                               const GrpoConfig& cfg, Execution exec = Execution::Parallel);

/// Objective value only.
double grpo_objective(const PolicyParams& new_params, const PolicyParams& old_params,
                      const PolicyParams& ref_params, std::span<const GroupBatch> batches,
                      const GrpoConfig& cfg);

/// params += learning_rate * clip(gradient). Returns the gradient norm before
/// clipping.
double apply_update(PolicyParams& params, const PolicyParams& gradient, const GrpoConfig& cfg);

}  // namespace dopr
