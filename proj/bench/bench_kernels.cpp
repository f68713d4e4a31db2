// Serial reference vs OpenMP kernels. Arg(0) is serial, Arg(1) parallel.

#include <benchmark/benchmark.h>

#include "dopr/kernels.hpp"
#include "dopr/theory.hpp"

using namespace dopr;

namespace {

struct Workload {
  Dataset data;
  PolicyParams params;
  std::vector<std::int64_t> ids;
  std::vector<std::uint64_t> seeds;
};

// 64 prompts x 64 samples, the size of one K=G=8 GRPO step repeated.
const Workload& workload() {
  static const Workload w = [] {
    Workload out{generate_dataset(TaskSpec{}), {}, {}, {}};
    out.params = warm_start(out.data, 3.0, 1.5, 0);
    for (std::int64_t i = 0; i < 4096; ++i) {
      out.ids.push_back(i % 64);
      out.seeds.push_back(derive_seed(1, static_cast<std::uint64_t>(i)));
    }
    return out;
  }();
  return w;
}

Execution exec_of(const benchmark::State& st) { return st.range(0) ? Execution::Parallel : Execution::Serial; }

void BM_SampleRollouts(benchmark::State& st) {
  const auto& w = workload();
  for (auto _ : st) {
    auto r = st.range(0) ? kernels::parallel::sample_rollouts(w.params, w.data, w.ids, w.seeds, RewardMode::Binary)
                         : kernels::serial::sample_rollouts(w.params, w.data, w.ids, w.seeds, RewardMode::Binary);
    benchmark::DoNotOptimize(r.data());
  }
  st.SetItemsProcessed(st.iterations() * static_cast<std::int64_t>(w.ids.size()));
}

void BM_AccumulateTerms(benchmark::State& st) {
  const auto& w = workload();
  static const auto rollouts =
      kernels::serial::sample_rollouts(w.params, w.data, w.ids, w.seeds, RewardMode::Binary);
  std::vector<kernels::TermJob> jobs;
  for (std::size_t i = 0; i < rollouts.size(); ++i)
    jobs.push_back({&rollouts[i], (i % 2) ? 1.0 : -1.0, 1.0 / static_cast<double>(rollouts.size())});
  const kernels::SurrogateSettings s{0.2, 0.01};
  for (auto _ : st) {
    PolicyParams grad(w.params.dims());
    const double v = st.range(0) ? kernels::parallel::accumulate_terms(grad, w.params, w.params, w.params, jobs, s)
                                 : kernels::serial::accumulate_terms(grad, w.params, w.params, w.params, jobs, s);
    benchmark::DoNotOptimize(v);
  }
  st.SetItemsProcessed(st.iterations() * static_cast<std::int64_t>(jobs.size()));
}

void BM_GreedyEval(benchmark::State& st) {
  const auto& w = workload();
  for (auto _ : st) {
    const auto n = st.range(0) ? kernels::parallel::count_greedy_correct(w.params, w.data, w.ids)
                               : kernels::serial::count_greedy_correct(w.params, w.data, w.ids);
    benchmark::DoNotOptimize(n);
  }
  st.SetItemsProcessed(st.iterations() * static_cast<std::int64_t>(w.ids.size()));
}

void BM_TheoryRepeats(benchmark::State& st) {
  auto obj = theory::ToyObjective::quadratic(4, 2.0, 0.2);
  const auto x0 = theory::point_with_gap(obj, 2.0);
  for (auto _ : st) {
    auto t = theory::sgd_trajectory(obj, x0, 0.5, 40, 1000, 3, exec_of(st));
    benchmark::DoNotOptimize(t.mean_gap.data());
  }
  st.SetItemsProcessed(st.iterations() * 1000);
}

}  // namespace

BENCHMARK(BM_SampleRollouts)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_AccumulateTerms)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GreedyEval)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_TheoryRepeats)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
