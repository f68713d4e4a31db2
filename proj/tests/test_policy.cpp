#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "dopr/error.hpp"
#include "dopr/policy.hpp"
#include "oracles.hpp"

using namespace dopr;

namespace {

PolicyParams zeros(std::int64_t n, std::int32_t v, std::int32_t tmax) {
  return PolicyParams(PolicyDims{n, tmax + 1, v + 1});
}

PolicyParams random_params(std::int64_t n, std::int32_t v, std::int32_t tmax, std::uint64_t seed,
                           double scale = 1.0) {
  auto p = zeros(n, v, tmax);
  Rng rng(seed);
  for (auto& x : p.flat()) x = scale * rng.normal();
  return p;
}

}  // namespace

TEST(Policy, UniformLogprobs) {
  const auto p = zeros(1, 3, 3);
  const auto lp = logprob(p, 0, std::vector<Token>{2, 0, 3});
  ASSERT_EQ(lp.size(), 3u);
  double sum = 0.0;
  for (double x : lp) {
    EXPECT_NEAR(x, -1.3862943611198906, 1e-12);
    sum += x;
  }
  EXPECT_NEAR(sum, -4.1588830833596715, 1e-12);
  EXPECT_TRUE(logprob(p, 0, std::vector<Token>{}).empty());
}

TEST(Policy, LogprobMatchesBruteForce) {
  auto p = zeros(1, 3, 2);
  p.row(0, 0)[1] = std::log(3.0);
  EXPECT_NEAR(logprob(p, 0, std::vector<Token>{1})[0], std::log(0.5), 1e-12);
  EXPECT_NEAR(logprob(p, 0, std::vector<Token>{1})[0], oracle::token_logprob(p, 0, 0, 1), 1e-12);
}

TEST(Policy, LogprobRejectsBadInput) {
  const auto p = zeros(2, 3, 2);
  EXPECT_THROW(logprob(p, 0, std::vector<Token>{4}), std::invalid_argument);
  EXPECT_THROW(logprob(p, 0, std::vector<Token>{-1}), std::invalid_argument);
  EXPECT_THROW(logprob(p, 5, std::vector<Token>{0}), std::invalid_argument);
  EXPECT_THROW(logprob(p, 0, std::vector<Token>{0, 0, 0, 0}), std::invalid_argument);
}

TEST(Policy, EntropyExamples) {
  auto p = zeros(1, 3, 2);
  EXPECT_NEAR(mean_entropy(p, 0, 1), std::log(4.0), 1e-12);
  EXPECT_NEAR(mean_entropy(p, 0, 3), std::log(4.0), 1e-12);
  p.row(0, 0)[0] = std::log(3.0);
  const std::vector<double> q{0.5, 1.0 / 6, 1.0 / 6, 1.0 / 6};
  double h = 0.0;
  for (double x : q) h -= x * std::log(x);
  EXPECT_NEAR(mean_entropy(p, 0, 1), h, 1e-12);
  EXPECT_NEAR(h, 1.2425, 5e-5);
  p.row(0, 1)[2] = 1e9;
  EXPECT_NEAR(entropy(p.row(0, 1)), 0.0, 1e-12);
  EXPECT_THROW(mean_entropy(p, 0, 0), std::invalid_argument);
  EXPECT_THROW(mean_entropy(p, 0, 4), std::invalid_argument);
}

TEST(Policy, EntropyShiftInvariant) {
  auto p = random_params(3, 5, 3, 7);
  Rng rng(1);
  for (int k = 0; k < 50; ++k) {
    const auto id = static_cast<std::int64_t>(rng.below(3));
    const auto pos = static_cast<std::int32_t>(rng.below(4));
    const double before = entropy(p.row(id, pos));
    const double c = 100.0 * (rng.uniform() - 0.5);
    for (auto& x : p.row(id, pos)) x += c;
    EXPECT_NEAR(entropy(p.row(id, pos)), before, 1e-12);
  }
}

TEST(Policy, SoftmaxSumsToOne) {
  const auto p = random_params(4, 6, 4, 3, 5.0);
  for (std::int64_t id = 0; id < 4; ++id)
    for (std::int32_t pos = 0; pos < 5; ++pos) {
      double s = 0.0;
      for (double x : softmax(p.row(id, pos))) s += x;
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  std::vector<double> huge{1e300, 0.0, -1e300};
  const auto q = softmax(huge);
  EXPECT_EQ(q[0], 1.0);
  EXPECT_EQ(q[2], 0.0);
}

TEST(Policy, SaturatedEosStopsImmediately) {
  auto p = zeros(1, 3, 3);
  p.row(0, 0)[3] = 1e9;
  Rng rng(5);
  const auto r = sample(p, 0, rng);
  EXPECT_EQ(r.tokens, std::vector<Token>{3});
  EXPECT_EQ(r.length(), 1);
}

TEST(Policy, SampleDeterministicAndConsistent) {
  const auto p = random_params(2, 4, 3, 9);
  Rng a(42), b(42);
  for (int k = 0; k < 200; ++k) {
    const auto r1 = sample(p, 1, a);
    const auto r2 = sample(p, 1, b);
    ASSERT_EQ(r1, r2);
    ASSERT_LE(r1.length(), 4);
    ASSERT_GE(r1.length(), 1);
    const auto lp = logprob(p, 1, r1.tokens);
    ASSERT_EQ(lp.size(), r1.logprobs.size());
    for (std::size_t t = 0; t < lp.size(); ++t) {
      EXPECT_LE(r1.logprobs[t], 0.0);
      EXPECT_NEAR(lp[t], r1.logprobs[t], 1e-12);
    }
    // Only the last token may be EOS.
    for (std::size_t t = 0; t + 1 < r1.tokens.size(); ++t) EXPECT_NE(r1.tokens[t], 4);
  }
}

TEST(Policy, SamplingFrequenciesWithinThreeSe) {
  // V = 2, T_max = 1: first-position frequencies over 1e5 draws.
  auto p = zeros(1, 2, 1);
  p.row(0, 0)[0] = 0.4;
  p.row(0, 0)[1] = -0.3;
  p.row(0, 0)[2] = 0.1;
  const auto q = oracle::probs(p.row(0, 0));
  const int n = 100000;
  std::vector<int> counts(3, 0);
  Rng rng(2024);
  for (int k = 0; k < n; ++k) ++counts[static_cast<std::size_t>(sample(p, 0, rng).tokens[0])];
  for (std::size_t v = 0; v < 3; ++v) {
    const double se = std::sqrt(q[v] * (1 - q[v]) / n);
    EXPECT_NEAR(counts[v] / static_cast<double>(n), q[v], 3 * se) << "symbol " << v;
  }
}

TEST(Policy, GradientUniformRow) {
  const auto p = zeros(2, 3, 2);
  const auto g = grad_logprob(p, 0, std::vector<Token>{2});
  const std::vector<double> want{-0.25, -0.25, 0.75, -0.25};
  for (std::size_t v = 0; v < 4; ++v) EXPECT_NEAR(g.row(0, 0)[v], want[v], 1e-15);
  for (std::int32_t pos = 1; pos < 3; ++pos)
    for (double x : g.row(0, pos)) EXPECT_EQ(x, 0.0);
  for (double x : g.row(1, 0)) EXPECT_EQ(x, 0.0);
}

TEST(Policy, GradientMatchesFiniteDifferences) {
  Rng rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    auto p = random_params(2, 4, 3, 100 + static_cast<std::uint64_t>(trial));
    Rng srng(trial);
    const auto r = sample(p, 1, srng);
    const auto g = grad_logprob(p, 1, r.tokens);
    const double h = 1e-5;
    auto total = [&](const PolicyParams& q) {
      double s = 0.0;
      for (std::size_t t = 0; t < r.tokens.size(); ++t)
        s += oracle::token_logprob(q, 1, static_cast<std::int32_t>(t), r.tokens[t]);
      return s;
    };
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < p.flat().size(); ++k) {
      auto plus = p, minus = p;
      plus.flat()[k] += h;
      minus.flat()[k] -= h;
      const double fd = (total(plus) - total(minus)) / (2 * h);
      num += (fd - g.flat()[k]) * (fd - g.flat()[k]);
      den += g.flat()[k] * g.flat()[k];
    }
    EXPECT_LT(std::sqrt(num) / std::max(std::sqrt(den), 1e-12), 1e-6) << "trial " << trial;
  }
}

TEST(Policy, GradientRowsSumToZero) {
  const auto p = random_params(3, 5, 4, 8, 3.0);
  Rng rng(3);
  for (int k = 0; k < 30; ++k) {
    const auto r = sample(p, 2, rng);
    const auto g = grad_logprob(p, 2, r.tokens);
    for (std::int32_t pos = 0; pos < 5; ++pos) {
      double s = 0.0;
      for (double x : g.row(2, pos)) s += x;
      EXPECT_NEAR(s, 0.0, 1e-12);
    }
  }
}

TEST(Policy, GreedyDecodeStopsAtEos) {
  auto p = zeros(1, 3, 3);
  p.row(0, 0)[2] = 1;
  p.row(0, 1)[3] = 1;
  p.row(0, 2)[1] = 5;
  EXPECT_EQ(greedy_decode(p, 0), (std::vector<Token>{2, 3}));
  // Ties go to the lowest symbol.
  EXPECT_EQ(greedy_decode(zeros(1, 3, 1), 0), (std::vector<Token>{0, 0}));
}

TEST(Policy, WarmStartShape) {
  TaskSpec s;
  s.num_instances = 10;
  s.vocab_size = 5;
  s.min_len = 2;
  s.max_len = 4;
  const auto d = generate_dataset(s);
  const auto p = warm_start(d, 3.0, 0.0, 1);
  for (const auto& inst : d.instances) {
    auto want = inst.target;
    want.push_back(s.eos());
    EXPECT_EQ(greedy_decode(p, inst.id), want);
  }
  EXPECT_EQ(warm_start(d, 0.0, 0.0, 1), PolicyParams(PolicyDims::for_task(s)));
  EXPECT_EQ(warm_start(d, 3.0, 1.5, 9), warm_start(d, 3.0, 1.5, 9));
  EXPECT_NE(warm_start(d, 3.0, 1.5, 9), warm_start(d, 3.0, 1.5, 10));
}

TEST(Policy, CheckpointRoundTrip) {
  const auto p = random_params(3, 4, 2, 12, 7.0);
  EXPECT_EQ(parse_checkpoint(format_checkpoint(p)), p);
  const auto dir = std::filesystem::temp_directory_path() / "dopr_test_policy";
  std::filesystem::create_directories(dir);
  save_checkpoint(p, dir / "c.txt");
  EXPECT_EQ(load_checkpoint(dir / "c.txt"), p);
  std::filesystem::remove_all(dir);
  EXPECT_THROW(parse_checkpoint(""), FormatError);
  auto text = format_checkpoint(p);
  text.replace(text.find("e"), 1, "x");
  EXPECT_THROW(parse_checkpoint(text), FormatError);
}
