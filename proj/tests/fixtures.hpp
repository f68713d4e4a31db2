#pragma once

// Random GRPO problems and a central-difference gradient check shared by the
// unit tests and the acceptance suite.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "dopr/grpo.hpp"
#include "dopr/rng.hpp"
#include "oracles.hpp"

namespace fixture {

struct GrpoProblem {
  dopr::PolicyParams now, old, ref;
  std::vector<dopr::GroupBatch> groups;
  dopr::GrpoConfig cfg;
};

/// V <= 3, T_max <= 3, G = 4; one or two groups; rollouts drawn from `old`.
inline GrpoProblem random_problem(std::uint64_t seed) {
  dopr::Rng rng(seed);
  const auto v = static_cast<std::int32_t>(1 + rng.below(3));
  const auto tmax = static_cast<std::int32_t>(1 + rng.below(3));
  const dopr::PolicyDims dims{2, tmax + 1, v + 1};
  GrpoProblem p{dopr::PolicyParams(dims), dopr::PolicyParams(dims), dopr::PolicyParams(dims), {}, {}};
  for (auto& x : p.old.flat()) x = rng.normal();
  for (std::size_t i = 0; i < dims.size(); ++i) {
    p.now.flat()[i] = p.old.flat()[i] + 0.3 * rng.normal();
    p.ref.flat()[i] = p.old.flat()[i] + 0.3 * rng.normal();
  }
  p.cfg.group_size = 4;
  p.cfg.clip_eps = 0.2;
  p.cfg.kl_beta = 0.1 * rng.uniform();
  const auto num_groups = 1 + rng.below(2);
  for (std::uint64_t g = 0; g < num_groups; ++g) {
    dopr::GroupBatch batch{static_cast<std::int64_t>(g), {}};
    for (int i = 0; i < 4; ++i) {
      auto r = dopr::sample(p.old, batch.instance_id, rng);
      r.reward = rng.uniform() < 0.5 ? 1.0 : 0.0;
      batch.rollouts.push_back(r);
    }
    p.groups.push_back(batch);
  }
  return p;
}

/// Smallest distance of any surrogate ratio to 1 - eps or 1 + eps.
inline double clip_margin(const GrpoProblem& p) {
  double m = INFINITY;
  for (const auto& g : p.groups)
    for (const auto& r : g.rollouts)
      for (double f : dopr::ratio(p.now, p.old, r))
        m = std::min({m, std::abs(f - (1.0 - p.cfg.clip_eps)), std::abs(f - (1.0 + p.cfg.clip_eps))});
  return m;
}

struct FdResult {
  double rel_err = 0.0;
  double objective_err = 0.0;  ///< |library objective - oracle objective|
};

inline FdResult finite_difference(const GrpoProblem& p, double h = 1e-5) {
  const auto lg = dopr::grpo_loss_and_grad(p.now, p.old, p.ref, p.groups, p.cfg);
  auto f = [&](const dopr::PolicyParams& x) {
    return oracle::objective(x, p.old, p.ref, p.groups, p.cfg.clip_eps, p.cfg.kl_beta,
                             p.cfg.std_floor);
  };
  double diff = 0.0, gn = 0.0, fn = 0.0;
  for (std::size_t k = 0; k < p.now.flat().size(); ++k) {
    auto plus = p.now, minus = p.now;
    plus.flat()[k] += h;
    minus.flat()[k] -= h;
    const double fd = (f(plus) - f(minus)) / (2 * h);
    const double g = lg.grad.flat()[k];
    diff += (fd - g) * (fd - g);
    gn += g * g;
    fn += fd * fd;
  }
  const double scale = std::sqrt(std::max(gn, fn));
  FdResult out;
  out.rel_err = scale < 1e-9 ? std::sqrt(diff) : std::sqrt(diff) / scale;
  out.objective_err = std::abs(lg.objective - f(p.now));
  return out;
}

}  // namespace fixture

namespace fixture {

struct SelectorCheck {
  double max_err = 0.0;        ///< over mu, var, U, S
  int argmax_mismatches = 0;
  int invariance_failures = 0;  ///< selected index moved under entropy shift / scale
};

/// Replays a random probe/select history through dopr::Selector and an
/// independent fold, comparing every intermediate quantity.
inline SelectorCheck selector_history(std::uint64_t seed) {
  dopr::Rng rng(seed);
  dopr::SelectorConfig cfg;
  cfg.rho1 = 0.05 + 0.95 * rng.uniform();
  cfg.rho2 = 0.05 + 0.95 * rng.uniform();
  cfg.lambda = 2.0 * rng.uniform();
  const auto variant = rng.below(3);
  cfg.variant = variant == 0 ? dopr::SelectorVariant::EmUcb
                : variant == 1 ? dopr::SelectorVariant::PlainUcb
                               : dopr::SelectorVariant::VarianceOnly;
  const std::int64_t n = 4 + static_cast<std::int64_t>(rng.below(12));
  const auto k = static_cast<std::int32_t>(1 + rng.below(static_cast<std::uint64_t>(n)));
  const auto steps = 1 + rng.below(30);
  dopr::Selector sel(n, cfg);
  std::vector<oracle::Stats> ref(static_cast<std::size_t>(n));
  std::vector<double> last_h(static_cast<std::size_t>(n), 0.0);
  SelectorCheck out;
  auto err = [&](double a, double b) { out.max_err = std::max(out.max_err, std::abs(a - b)); };
  for (std::uint64_t t = 0; t < steps; ++t) {
    std::vector<std::int64_t> pool(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) pool[static_cast<std::size_t>(i)] = i;
    std::vector<std::int64_t> batch;
    for (std::int32_t j = 0; j < k; ++j) {
      const auto pick = rng.below(pool.size());
      batch.push_back(pool[pick]);
      pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
    }
    for (auto id : batch) {
      const double r = rng.uniform() < 0.5 ? 1.0 : 0.0;
      const double h = 2.0 * rng.uniform();
      sel.observe(id, r, h);
      oracle::fold(ref[static_cast<std::size_t>(id)], r, cfg.rho1, cfg.rho2);
      last_h[static_cast<std::size_t>(id)] = h;
    }
    std::vector<double> hs, want;
    for (auto id : batch) hs.push_back(last_h[static_cast<std::size_t>(id)]);
    std::vector<double> us;
    for (std::size_t j = 0; j < batch.size(); ++j) {
      const auto& s = ref[static_cast<std::size_t>(batch[j])];
      double u = 0.0;
      if (cfg.variant == dopr::SelectorVariant::EmUcb)
        u = oracle::ucb(oracle::gate(hs[j], hs, cfg.sigmoid_eps), static_cast<std::int64_t>(t), s.n);
      else if (cfg.variant == dopr::SelectorVariant::PlainUcb)
        u = oracle::ucb(1.0, static_cast<std::int64_t>(t), s.n);
      us.push_back(u);
      want.push_back(std::sqrt(s.var) + (cfg.variant == dopr::SelectorVariant::VarianceOnly ? 0.0 : cfg.lambda * u));
    }

    // Invariance probe: the winner under shifted / scaled entropies, scored
    // through the same library path that select() uses.
    std::vector<std::size_t> moved;
    if (cfg.variant == dopr::SelectorVariant::EmUcb && batch.size() > 1) {
      const double c = 5.0 * rng.uniform() - 2.5;
      const double scale = 0.5 + 1.5 * rng.uniform();
      for (int mode = 0; mode < 2; ++mode) {
        std::vector<double> hx;
        for (double h : hs) hx.push_back(mode == 0 ? h + c : h * scale);
        std::vector<double> sc;
        dopr::Rng none(0);
        for (std::size_t j = 0; j < batch.size(); ++j) {
          const auto& st = sel.stats(batch[j]);
          const double g = dopr::entropy_gate(hx[j], hx, cfg.sigmoid_eps);
          sc.push_back(dopr::acquisition_score(st, dopr::ucb_term(st, g, static_cast<std::int64_t>(t), cfg), cfg, none));
        }
        moved.push_back(dopr::argmax_first(sc));
      }
    }

    dopr::Rng unused(0);
    const auto got = sel.select(batch, static_cast<std::int64_t>(t), unused);
    for (std::size_t j = 0; j < batch.size(); ++j) {
      const auto& s = ref[static_cast<std::size_t>(batch[j])];
      err(sel.stats(batch[j]).mu, s.mu);
      err(sel.stats(batch[j]).var, s.var);
      err(got.ucb[j], us[j]);
      err(got.scores[j], want[j]);
    }
    const auto best = oracle::argmax(want);
    if (got.position != best) ++out.argmax_mismatches;
    for (auto m : moved)
      if (m != got.position) ++out.invariance_failures;
    ++ref[static_cast<std::size_t>(batch[best])].n;
  }
  return out;
}

}  // namespace fixture
