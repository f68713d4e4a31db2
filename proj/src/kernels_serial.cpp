#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dopr/kernels.hpp"
#include "kernels_detail.hpp"

namespace dopr::kernels {

RolloutTerm rollout_term(const PolicyParams& new_params, const PolicyParams& old_params,
                         const PolicyParams& ref_params, const TermJob& job,
                         const SurrogateSettings& settings) {
  const RolloutRecord& r = *job.rollout;
  if (r.tokens.empty()) throw std::invalid_argument("empty rollout");
  const auto id = r.instance_id;
  const auto len = r.tokens.size();
  const auto symbols = static_cast<std::size_t>(new_params.dims().symbols);
  const double weight = job.scale / static_cast<double>(len);
  const double adv = job.advantage;
  const double lo = 1.0 - settings.clip_eps;
  const double hi = 1.0 + settings.clip_eps;

  RolloutTerm term;
  term.grad_rows.assign(len * symbols, 0.0);
  double value = 0.0;
  for (std::size_t t = 0; t < len; ++t) {
    const auto pos = static_cast<std::int32_t>(t);
    const auto tok = static_cast<std::size_t>(r.tokens[t]);
    const auto lp_new = log_softmax(new_params.row(id, pos));
    const double l_new = lp_new[tok];
    const double l_old = log_softmax(old_params.row(id, pos))[tok];
    const double l_ref = log_softmax(ref_params.row(id, pos))[tok];

    const double f = std::exp(l_new - l_old);
    const double unclipped = f * adv;
    const double clipped = std::clamp(f, lo, hi) * adv;
    double surrogate = unclipped;
    double d_surrogate = unclipped;  // d(F A)/d l_new = F A
    if (clipped < unclipped) {
      surrogate = clipped;
      d_surrogate = 0.0;
    }

    const double log_f_ref = l_new - l_ref;
    const double f_ref = std::exp(log_f_ref);
    const double kl = f_ref - log_f_ref - 1.0;
    value += surrogate - settings.kl_beta * kl;

    // d l_new / d logits = onehot(tok) - softmax(new row)
    const double w = weight * (d_surrogate - settings.kl_beta * (f_ref - 1.0));
    if (w != 0.0) {
      double* g = term.grad_rows.data() + t * symbols;
      for (std::size_t v = 0; v < symbols; ++v) g[v] = -w * std::exp(lp_new[v]);
      g[tok] += w;
    }
  }
  term.objective = weight * value;
  return term;
}

namespace serial {

std::vector<RolloutRecord> sample_rollouts(const PolicyParams& params, const Dataset& dataset,
                                           std::span<const std::int64_t> ids,
                                           std::span<const std::uint64_t> seeds, RewardMode mode) {
  if (ids.size() != seeds.size()) throw std::invalid_argument("ids/seeds length mismatch");
  std::vector<RolloutRecord> out(ids.size());
  for (std::size_t k = 0; k < ids.size(); ++k) {
    Rng rng(seeds[k]);
    out[k] = sample(params, ids[k], rng);
    out[k].reward = score(dataset.spec, dataset.at(ids[k]), out[k].tokens, mode);
  }
  return out;
}

double accumulate_terms(PolicyParams& grad, const PolicyParams& new_params,
                        const PolicyParams& old_params, const PolicyParams& ref_params,
                        std::span<const TermJob> jobs, const SurrogateSettings& settings) {
  detail::check_shapes(grad, new_params, old_params, ref_params);
  double objective = 0.0;
  for (const auto& job : jobs) {
    auto term = rollout_term(new_params, old_params, ref_params, job, settings);
    objective += term.objective;
    detail::add_rows(grad, job.rollout->instance_id, term.grad_rows);
  }
  return objective;
}

std::int64_t count_greedy_correct(const PolicyParams& params, const Dataset& dataset,
                                  std::span<const std::int64_t> ids) {
  std::int64_t correct = 0;
  for (auto id : ids)
    if (verify(dataset.spec, dataset.at(id), greedy_decode(params, id)) == 1.0) ++correct;
  return correct;
}

}  // namespace serial

std::vector<RolloutRecord> sample_rollouts(Execution exec, const PolicyParams& params,
                                           const Dataset& dataset, std::span<const std::int64_t> ids,
                                           std::span<const std::uint64_t> seeds, RewardMode mode) {
  return exec == Execution::Serial ? serial::sample_rollouts(params, dataset, ids, seeds, mode)
                                   : parallel::sample_rollouts(params, dataset, ids, seeds, mode);
}

double accumulate_terms(Execution exec, PolicyParams& grad, const PolicyParams& new_params,
                        const PolicyParams& old_params, const PolicyParams& ref_params,
                        std::span<const TermJob> jobs, const SurrogateSettings& settings) {
  return exec == Execution::Serial
             ? serial::accumulate_terms(grad, new_params, old_params, ref_params, jobs, settings)
             : parallel::accumulate_terms(grad, new_params, old_params, ref_params, jobs, settings);
}

std::int64_t count_greedy_correct(Execution exec, const PolicyParams& params, const Dataset& dataset,
                                  std::span<const std::int64_t> ids) {
  return exec == Execution::Serial ? serial::count_greedy_correct(params, dataset, ids)
                                   : parallel::count_greedy_correct(params, dataset, ids);
}

}  // namespace dopr::kernels
