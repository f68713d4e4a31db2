#include <gtest/gtest.h>

#include <cmath>

#include "dopr/error.hpp"
#include "dopr/grpo.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace dopr;

TEST(Grpo, AdvantageExamples) {
  const auto a = group_advantages(std::vector<double>{1, 0, 0, 1}, 1e-8);
  EXPECT_EQ(a, (std::vector<double>{1, -1, -1, 1}));
  EXPECT_EQ(group_advantages(std::vector<double>{1, 1, 1, 1}, 1e-8), std::vector<double>(4, 0.0));
  EXPECT_EQ(group_advantages(std::vector<double>{1, 1, 1, 1}, 0.0), std::vector<double>(4, 0.0));
  const std::vector<double> r{1, 0, 0, 0};
  const auto b = group_advantages(r, 1e-8);
  const auto o = oracle::advantages(r, 1e-8);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(b[i], o[i], 1e-15);
  EXPECT_NEAR(b[0], std::sqrt(3.0), 1e-12);
  EXPECT_NEAR(b[1], -1.0 / std::sqrt(3.0), 1e-12);
  EXPECT_THROW(group_advantages(std::vector<double>{1}, 1e-8), std::invalid_argument);
}

TEST(Grpo, AdvantageInvariances) {
  Rng rng(4);
  for (int k = 0; k < 200; ++k) {
    std::vector<double> r(6);
    for (auto& x : r) x = rng.uniform();
    const auto a = group_advantages(r, 1e-8);
    auto shifted = r;
    for (auto& x : shifted) x += 3.5;
    const auto s = group_advantages(shifted, 1e-8);
    auto scaled = r;
    for (auto& x : scaled) x *= 7.0;
    const auto c = group_advantages(scaled, 1e-8);
    for (std::size_t i = 0; i < r.size(); ++i) {
      EXPECT_NEAR(a[i], s[i], 1e-9);
      EXPECT_EQ(a[i] > 0, c[i] > 0);
    }
    EXPECT_EQ(std::max_element(a.begin(), a.end()) - a.begin(),
              std::max_element(c.begin(), c.end()) - c.begin());
  }
}

TEST(Grpo, KlExamples) {
  EXPECT_EQ(kl_estimate(1.0), 0.0);
  EXPECT_NEAR(kl_estimate(0.5), 0.5 - std::log(0.5) - 1, 1e-15);
  EXPECT_NEAR(kl_estimate(0.5), 0.1931, 5e-5);
  EXPECT_NEAR(kl_estimate(2.0), 0.3069, 5e-5);
  EXPECT_THROW(kl_estimate(0.0), std::domain_error);
  EXPECT_THROW(kl_estimate(-1.0), std::domain_error);
}

TEST(Grpo, KlNonNegativeOnLogGrid) {
  for (int i = 0; i <= 6000; ++i) {
    const double f = std::pow(10.0, -3.0 + i * 1e-3);
    const double k = kl_estimate(f);
    EXPECT_GE(k, 0.0);
    if (i == 3000)
      EXPECT_EQ(k, 0.0);
    else
      EXPECT_GT(k, 0.0) << f;
  }
}

TEST(Grpo, RatioExamples) {
  auto p = fixture::random_problem(5);
  const auto& r = p.groups[0].rollouts[0];
  for (double f : ratio(p.old, p.old, r)) EXPECT_EQ(f, 1.0);
  const auto f = ratio(p.now, p.old, r);
  const auto ln = logprob(p.now, r.instance_id, r.tokens);
  const auto lo = logprob(p.old, r.instance_id, r.tokens);
  for (std::size_t t = 0; t < f.size(); ++t) {
    EXPECT_GT(f[t], 0.0);
    EXPECT_NEAR(f[t], std::exp(ln[t] - lo[t]), 1e-12);
  }
  // Raising a token's probability from 1/4 to 1/2 doubles the ratio.
  PolicyParams a(PolicyDims{1, 1, 4}), b(PolicyDims{1, 1, 4});
  b.row(0, 0)[1] = std::log(3.0);
  RolloutRecord one{0, {1}, {std::log(0.25)}, 0.0};
  EXPECT_NEAR(ratio(b, a, one)[0], 2.0, 1e-12);
}

TEST(Grpo, ObjectiveMatchesOracle) {
  for (std::uint64_t s = 0; s < 100; ++s) {
    const auto p = fixture::random_problem(s);
    const double o = oracle::objective(p.now, p.old, p.ref, p.groups, p.cfg.clip_eps,
                                       p.cfg.kl_beta, p.cfg.std_floor);
    EXPECT_NEAR(grpo_objective(p.now, p.old, p.ref, p.groups, p.cfg), o, 1e-12);
    EXPECT_NEAR(grpo_loss_and_grad(p.now, p.old, p.ref, p.groups, p.cfg).objective, o, 1e-12);
  }
}

TEST(Grpo, GradientMatchesFiniteDifferences) {
  int tested = 0;
  for (std::uint64_t s = 1000; tested < 200; ++s) {
    const auto p = fixture::random_problem(s);
    if (fixture::clip_margin(p) < 1e-6) continue;
    const auto r = fixture::finite_difference(p);
    EXPECT_LT(r.rel_err, 1e-5) << "seed " << s;
    ++tested;
  }
}

TEST(Grpo, FirstEpochIsScoreFunctionGradient) {
  for (std::uint64_t s = 0; s < 50; ++s) {
    auto p = fixture::random_problem(s);
    p.cfg.kl_beta = 0.0;
    const auto lg = grpo_loss_and_grad(p.old, p.old, p.old, p.groups, p.cfg);
    PolicyParams want(p.old.dims());
    const double ng = static_cast<double>(p.groups.size());
    for (const auto& g : p.groups) {
      std::vector<double> rewards;
      for (const auto& r : g.rollouts) rewards.push_back(r.reward);
      const auto adv = oracle::advantages(rewards, 1e-8);
      for (std::size_t i = 0; i < g.rollouts.size(); ++i) {
        const auto& r = g.rollouts[i];
        const auto gl = grad_logprob(p.old, r.instance_id, r.tokens);
        const double w = adv[i] / (ng * 4.0 * r.length());
        for (std::size_t k = 0; k < want.flat().size(); ++k) want.flat()[k] += w * gl.flat()[k];
      }
    }
    for (std::size_t k = 0; k < want.flat().size(); ++k)
      EXPECT_NEAR(lg.grad.flat()[k], want.flat()[k], 1e-12);
  }
}

TEST(Grpo, EqualRewardsGiveZero) {
  auto p = fixture::random_problem(9);
  p.cfg.kl_beta = 0.0;
  for (auto& g : p.groups)
    for (auto& r : g.rollouts) r.reward = 1.0;
  const auto lg = grpo_loss_and_grad(p.now, p.old, p.ref, p.groups, p.cfg);
  EXPECT_EQ(lg.objective, 0.0);
  for (double x : lg.grad.flat()) EXPECT_EQ(x, 0.0);
}

TEST(Grpo, ClippedBranchBlocksGradient) {
  // One position, two symbols; both rollouts pushed past the clip range in
  // the direction their advantage rewards.
  PolicyParams old(PolicyDims{1, 1, 2}), now(PolicyDims{1, 1, 2});
  now.row(0, 0)[0] = 1.0;
  GroupBatch g{0, {{0, {0}, {std::log(0.5)}, 1.0}, {0, {1}, {std::log(0.5)}, 0.0}}};
  GrpoConfig cfg;
  cfg.group_size = 2;
  cfg.kl_beta = 0.0;
  const auto lg = grpo_loss_and_grad(now, old, old, g, cfg);
  for (double x : lg.grad.flat()) EXPECT_EQ(x, 0.0);
  EXPECT_NEAR(lg.objective, 0.5 * (1.2 - 0.8), 1e-12);
  // Inside the clip range the gradient is live again.
  now.row(0, 0)[0] = 0.1;
  const auto live = grpo_loss_and_grad(now, old, old, g, cfg);
  EXPECT_GT(std::abs(live.grad.flat()[0]), 0.1);
}

TEST(Grpo, RejectsBadBatches) {
  auto p = fixture::random_problem(2);
  auto empty = p.groups;
  empty[0].rollouts[0].tokens.clear();
  EXPECT_THROW(grpo_loss_and_grad(p.now, p.old, p.ref, empty, p.cfg), std::invalid_argument);
  auto wrong = p.groups;
  wrong[0].rollouts[1].instance_id = 1 - wrong[0].instance_id;
  EXPECT_THROW(grpo_loss_and_grad(p.now, p.old, p.ref, wrong, p.cfg), std::invalid_argument);
  EXPECT_THROW(grpo_loss_and_grad(p.now, p.old, p.ref, std::vector<GroupBatch>{}, p.cfg),
               std::invalid_argument);
}

TEST(Grpo, ApplyUpdate) {
  PolicyParams p(PolicyDims{1, 2, 5});
  for (std::size_t i = 0; i < p.flat().size(); ++i) p.flat()[i] = 0.1 * static_cast<double>(i);
  const auto before = p;
  GrpoConfig cfg;
  cfg.learning_rate = 0.5;
  PolicyParams g(p.dims());
  apply_update(p, g, cfg);
  EXPECT_EQ(p, before);

  g.flat()[0] = 60.0;
  g.flat()[3] = 80.0;
  EXPECT_NEAR(apply_update(p, g, cfg), 100.0, 1e-12);
  double sq = 0.0;
  for (std::size_t i = 0; i < p.flat().size(); ++i)
    sq += (p.flat()[i] - before.flat()[i]) * (p.flat()[i] - before.flat()[i]);
  EXPECT_NEAR(std::sqrt(sq), 10.0 * cfg.learning_rate, 1e-12);

  p = before;
  cfg.learning_rate = 0.0;
  apply_update(p, g, cfg);
  EXPECT_EQ(p, before);
  EXPECT_THROW(apply_update(p, PolicyParams(PolicyDims{1, 1, 5}), cfg), std::invalid_argument);
}

TEST(Grpo, ConfigValidation) {
  GrpoConfig c;
  EXPECT_NO_THROW(c.validate());
  c.clip_eps = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.group_size = 1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.learning_rate = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.kl_beta = -1;
  EXPECT_THROW(c.validate(), ConfigError);
}
