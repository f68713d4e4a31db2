#include <stdexcept>

#include "dopr/kernels.hpp"
#include "kernels_detail.hpp"

namespace dopr::kernels::parallel {

std::vector<RolloutRecord> sample_rollouts(const PolicyParams& params, const Dataset& dataset,
                                           std::span<const std::int64_t> ids,
                                           std::span<const std::uint64_t> seeds, RewardMode mode) {
  if (ids.size() != seeds.size()) throw std::invalid_argument("ids/seeds length mismatch");
  const auto n = static_cast<std::ptrdiff_t>(ids.size());
  std::vector<RolloutRecord> out(ids.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t k = 0; k < n; ++k) {
    const auto i = static_cast<std::size_t>(k);
    Rng rng(seeds[i]);
    out[i] = sample(params, ids[i], rng);
    out[i].reward = score(dataset.spec, dataset.at(ids[i]), out[i].tokens, mode);
  }
  return out;
}

double accumulate_terms(PolicyParams& grad, const PolicyParams& new_params,
                        const PolicyParams& old_params, const PolicyParams& ref_params,
                        std::span<const TermJob> jobs, const SurrogateSettings& settings) {
  detail::check_shapes(grad, new_params, old_params, ref_params);
  for (const auto& job : jobs)
    if (job.rollout->tokens.empty()) throw std::invalid_argument("empty rollout");
  const auto n = static_cast<std::ptrdiff_t>(jobs.size());
  std::vector<RolloutTerm> terms(jobs.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t j = 0; j < n; ++j) {
    const auto i = static_cast<std::size_t>(j);
    terms[i] = rollout_term(new_params, old_params, ref_params, jobs[i], settings);
  }
  // Fixed-order reduction, identical to the serial accumulation.
  double objective = 0.0;
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    objective += terms[j].objective;
    detail::add_rows(grad, jobs[j].rollout->instance_id, terms[j].grad_rows);
  }
  return objective;
}

std::int64_t count_greedy_correct(const PolicyParams& params, const Dataset& dataset,
                                  std::span<const std::int64_t> ids) {
  const auto n = static_cast<std::ptrdiff_t>(ids.size());
  std::int64_t correct = 0;
#pragma omp parallel for schedule(static) reduction(+ : correct)
  for (std::ptrdiff_t k = 0; k < n; ++k) {
    const auto id = ids[static_cast<std::size_t>(k)];
    if (verify(dataset.spec, dataset.at(id), greedy_decode(params, id)) == 1.0) ++correct;
  }
  return correct;
}

}  // namespace dopr::kernels::parallel
