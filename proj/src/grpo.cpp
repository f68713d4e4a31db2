#include "dopr/grpo.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "dopr/error.hpp"

namespace dopr {

void GrpoConfig::validate() const {
  std::ostringstream err;
  if (!(clip_eps > 0.0 && clip_eps < 1.0)) err << "clip_eps must be in (0, 1); ";
  if (!(kl_beta >= 0.0)) err << "kl_beta must be >= 0; ";
  if (!(learning_rate > 0.0)) err << "learning_rate must be > 0; ";
  if (group_size < 2) err << "group_size must be >= 2; ";
  if (inner_epochs < 1) err << "inner_epochs must be >= 1; ";
  if (!(std_floor >= 0.0)) err << "std_floor must be >= 0; ";
  if (!(grad_clip >= 0.0)) err << "grad_clip must be >= 0; ";
  auto msg = err.str();
  if (!msg.empty()) throw ConfigError("invalid grpo config: " + msg.substr(0, msg.size() - 2));
}

std::vector<double> group_advantages(std::span<const double> rewards, double std_floor) {
  if (rewards.size() < 2) throw std::invalid_argument("group_advantages needs at least 2 rewards");
  const auto n = static_cast<double>(rewards.size());
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double sd = std::sqrt(var / n);
  std::vector<double> adv(rewards.size(), 0.0);
  const double denom = std::max(sd, std_floor);
  if (sd == 0.0 || denom == 0.0) return adv;
  for (std::size_t i = 0; i < rewards.size(); ++i) adv[i] = (rewards[i] - mean) / denom;
  return adv;
}

std::vector<double> ratio(const PolicyParams& new_params, const PolicyParams& old_params,
                          const RolloutRecord& rollout) {
  const auto ln = logprob(new_params, rollout.instance_id, rollout.tokens);
  const auto lo = logprob(old_params, rollout.instance_id, rollout.tokens);
  std::vector<double> out(ln.size());
  for (std::size_t t = 0; t < ln.size(); ++t) out[t] = std::exp(ln[t] - lo[t]);
  return out;
}

double kl_estimate(double ratio_value) {
  if (!(ratio_value > 0.0)) throw std::domain_error("kl_estimate requires a positive ratio");
  return ratio_value - std::log(ratio_value) - 1.0;
}

namespace {

std::vector<kernels::TermJob> build_jobs(std::span<const GroupBatch> batches,
                                         const GrpoConfig& cfg) {
  if (batches.empty()) throw std::invalid_argument("no groups in batch");
  std::vector<kernels::TermJob> jobs;
  const double per_group = 1.0 / static_cast<double>(batches.size());
  for (const auto& batch : batches) {
    if (batch.rollouts.empty()) throw std::invalid_argument("group has no rollouts");
    std::vector<double> rewards;
    for (const auto& r : batch.rollouts) {
      if (r.tokens.empty()) throw std::invalid_argument("empty rollout in group");
      if (r.instance_id != batch.instance_id)
        throw std::invalid_argument("rollout instance id differs from its group");
      rewards.push_back(r.reward);
    }
    const auto adv = group_advantages(rewards, cfg.std_floor);
    const double scale = per_group / static_cast<double>(batch.rollouts.size());
    for (std::size_t i = 0; i < batch.rollouts.size(); ++i)
      jobs.push_back({&batch.rollouts[i], adv[i], scale});
  }
  return jobs;
}

}  // namespace

LossAndGrad grpo_loss_and_grad(const PolicyParams& new_params, const PolicyParams& old_params,
                               const PolicyParams& ref_params, std::span<const GroupBatch> batches,
                               const GrpoConfig& cfg, Execution exec) {
  const auto jobs = build_jobs(batches, cfg);
  LossAndGrad out{0.0, PolicyParams(new_params.dims())};
  out.objective = kernels::accumulate_terms(exec, out.grad, new_params, old_params, ref_params, jobs,
                                            {cfg.clip_eps, cfg.kl_beta});
  return out;
}

LossAndGrad grpo_loss_and_grad(const PolicyParams& new_params, const PolicyParams& old_params,
                               const PolicyParams& ref_params, const GroupBatch& batch,
                               const GrpoConfig& cfg, Execution exec) {
  return grpo_loss_and_grad(new_params, old_params, ref_params, std::span(&batch, 1), cfg, exec);
}

double grpo_objective(const PolicyParams& new_params, const PolicyParams& old_params,
                      const PolicyParams& ref_params, std::span<const GroupBatch> batches,
                      const GrpoConfig& cfg) {
  const auto jobs = build_jobs(batches, cfg);
  double total = 0.0;
  for (const auto& job : jobs)
    total += kernels::rollout_term(new_params, old_params, ref_params, job,
                                   {cfg.clip_eps, cfg.kl_beta})
                 .objective;
  return total;
}

double apply_update(PolicyParams& params, const PolicyParams& gradient, const GrpoConfig& cfg) {
  if (!(params.dims() == gradient.dims())) throw std::invalid_argument("gradient shape mismatch");
  double sq = 0.0;
  for (double g : gradient.flat()) sq += g * g;
  const double norm = std::sqrt(sq);
  double step = cfg.learning_rate;
  if (cfg.grad_clip > 0.0 && norm > cfg.grad_clip) step *= cfg.grad_clip / norm;
  if (step == 0.0) return norm;
  auto p = params.flat();
  auto g = gradient.flat();
  for (std::size_t i = 0; i < p.size(); ++i) p[i] += step * g[i];
  return norm;
}

}  // namespace dopr
