#include <gtest/gtest.h>

#include <cstring>
#include <omp.h>

#include "dopr/kernels.hpp"
#include "dopr/theory.hpp"
#include "fixtures.hpp"

using namespace dopr;

namespace {

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

bool same_bits(const PolicyParams& a, const PolicyParams& b) {
  if (!(a.dims() == b.dims())) return false;
  return std::memcmp(a.flat().data(), b.flat().data(), a.flat().size_bytes()) == 0;
}

struct Setup {
  Dataset data;
  PolicyParams params;
  std::vector<std::int64_t> ids;
  std::vector<std::uint64_t> seeds;
};

Setup setup(std::uint64_t seed) {
  TaskSpec s;
  s.num_instances = 16;
  s.seed = seed;
  Setup out{generate_dataset(s), {}, {}, {}};
  out.params = warm_start(out.data, 2.0, 1.0, seed);
  for (std::int64_t i = 0; i < 200; ++i) {
    out.ids.push_back(i % 16);
    out.seeds.push_back(derive_seed(seed, i));
  }
  return out;
}

class Threads : public ::testing::Test {
 protected:
  void SetUp() override {
    saved_ = omp_get_max_threads();
    omp_set_num_threads(4);
  }
  void TearDown() override { omp_set_num_threads(saved_); }
  int saved_ = 1;
};

}  // namespace

TEST_F(Threads, SampleRolloutsIdentical) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto u = setup(s);
    for (auto mode : {RewardMode::Binary, RewardMode::Partial}) {
      const auto a = kernels::serial::sample_rollouts(u.params, u.data, u.ids, u.seeds, mode);
      const auto b = kernels::parallel::sample_rollouts(u.params, u.data, u.ids, u.seeds, mode);
      ASSERT_EQ(a.size(), b.size());
      for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].tokens, b[i].tokens);
        EXPECT_EQ(a[i].instance_id, u.ids[i]);
        EXPECT_TRUE(same_bits(a[i].reward, b[i].reward));
        for (std::size_t t = 0; t < a[i].logprobs.size(); ++t)
          EXPECT_TRUE(same_bits(a[i].logprobs[t], b[i].logprobs[t]));
      }
    }
  }
}

TEST_F(Threads, AccumulateTermsIdentical) {
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto p = fixture::random_problem(s);
    std::vector<kernels::TermJob> jobs;
    for (const auto& g : p.groups)
      for (std::size_t i = 0; i < g.rollouts.size(); ++i)
        jobs.push_back({&g.rollouts[i], 0.3 * static_cast<double>(i) - 0.5, 0.125});
    PolicyParams ga(p.now.dims()), gb(p.now.dims());
    const kernels::SurrogateSettings st{0.2, 0.05};
    const double va = kernels::serial::accumulate_terms(ga, p.now, p.old, p.ref, jobs, st);
    const double vb = kernels::parallel::accumulate_terms(gb, p.now, p.old, p.ref, jobs, st);
    EXPECT_TRUE(same_bits(va, vb));
    EXPECT_TRUE(same_bits(ga, gb));
    const auto la = grpo_loss_and_grad(p.now, p.old, p.ref, p.groups, p.cfg, Execution::Serial);
    const auto lb = grpo_loss_and_grad(p.now, p.old, p.ref, p.groups, p.cfg, Execution::Parallel);
    EXPECT_TRUE(same_bits(la.objective, lb.objective));
    EXPECT_TRUE(same_bits(la.grad, lb.grad));
  }
}

TEST_F(Threads, LargeBatchGradientIdentical) {
  const auto u = setup(9);
  const auto rollouts = kernels::serial::sample_rollouts(u.params, u.data, u.ids, u.seeds, RewardMode::Binary);
  auto now = u.params;
  Rng rng(1);
  for (auto& x : now.flat()) x += 0.1 * rng.normal();
  std::vector<kernels::TermJob> jobs;
  for (std::size_t i = 0; i < rollouts.size(); ++i) jobs.push_back({&rollouts[i], rng.normal(), 1.0 / 200});
  PolicyParams ga(now.dims()), gb(now.dims());
  const double va = kernels::serial::accumulate_terms(ga, now, u.params, u.params, jobs, {0.2, 0.01});
  const double vb = kernels::parallel::accumulate_terms(gb, now, u.params, u.params, jobs, {0.2, 0.01});
  EXPECT_TRUE(same_bits(va, vb));
  EXPECT_TRUE(same_bits(ga, gb));
}

TEST_F(Threads, GreedyCountIdentical) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto u = setup(s);
    std::vector<std::int64_t> all(16);
    for (std::int64_t i = 0; i < 16; ++i) all[static_cast<std::size_t>(i)] = i;
    const auto a = kernels::serial::count_greedy_correct(u.params, u.data, all);
    EXPECT_EQ(a, kernels::parallel::count_greedy_correct(u.params, u.data, all));
    std::int64_t manual = 0;
    for (auto id : all) {
      auto want = u.data.at(id).target;
      want.push_back(u.data.spec.eos());
      manual += greedy_decode(u.params, id) == want;
    }
    EXPECT_EQ(a, manual);
  }
}

TEST_F(Threads, TheoryRepeatsIdentical) {
  const auto obj = theory::ToyObjective::quadratic(4, 2.0, 0.2);
  const auto x0 = theory::point_with_gap(obj, 2.0);
  const auto a = theory::sgd_trajectory(obj, x0, 0.5, 20, 257, 3, Execution::Serial);
  const auto b = theory::sgd_trajectory(obj, x0, 0.5, 20, 257, 3, Execution::Parallel);
  ASSERT_EQ(a.mean_gap.size(), b.mean_gap.size());
  for (std::size_t t = 0; t < a.mean_gap.size(); ++t) {
    EXPECT_TRUE(same_bits(a.mean_gap[t], b.mean_gap[t]));
    EXPECT_TRUE(same_bits(a.std_err[t], b.std_err[t]));
  }
}

TEST(Kernels, RolloutTermRejectsEmpty) {
  PolicyParams p(PolicyDims{1, 2, 3});
  RolloutRecord empty;
  EXPECT_THROW(kernels::rollout_term(p, p, p, {&empty, 1.0, 1.0}, {}), std::invalid_argument);
}

TEST(Kernels, MismatchedSeedsRejected) {
  const auto u = setup(0);
  std::vector<std::uint64_t> short_seeds(3);
  EXPECT_THROW(kernels::serial::sample_rollouts(u.params, u.data, u.ids, short_seeds, RewardMode::Binary),
               std::invalid_argument);
  EXPECT_THROW(kernels::parallel::sample_rollouts(u.params, u.data, u.ids, short_seeds, RewardMode::Binary),
               std::invalid_argument);
}
