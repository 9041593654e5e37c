// Microbenchmarks for the per-case hot paths: metric evaluation dominated by
// the distance transforms, and the resampling statistics behind the report.

#include <benchmark/benchmark.h>

#include <cstdint>
#include <utility>
#include <vector>

#include "segeval/metrics.hpp"
#include "segeval/rng.hpp"
#include "segeval/stats.hpp"
#include "segeval/synth.hpp"
#include "segeval/voxel_grid.hpp"

using namespace segeval;

namespace {

// A study-sized case: lesion plus two plausible raters, built once.
struct CaseFixture {
  BinaryMask ref;
  BinaryMask pred;
};

CaseFixture make_case(std::uint64_t seed) {
  LesionSpec lesion;
  lesion.seed = seed;
  BinaryMask truth = generate_lesion(lesion);
  BinaryMask ref = perturb_rater(truth, {-0.9, 0.9, 0.02, 0.0}, derive_seed(seed, 1));
  BinaryMask pred = perturb_rater(truth, {-1.6, 1.6, 0.03, 0.0}, derive_seed(seed, 2));
  return {std::move(ref), std::move(pred)};
}

void BM_EvaluatePair(benchmark::State& state) {
  const CaseFixture c = make_case(42);
  for (auto _ : state) {
    benchmark::DoNotOptimize(evaluate_pair(c.pred, c.ref, 5.0));
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_EvaluatePair)->Unit(benchmark::kMillisecond);

void BM_Hd95(benchmark::State& state) {
  const CaseFixture c = make_case(43);
  for (auto _ : state) {
    benchmark::DoNotOptimize(hd95(c.pred, c.ref));
  }
}
BENCHMARK(BM_Hd95)->Unit(benchmark::kMillisecond);

void BM_SurfaceDice(benchmark::State& state) {
  const CaseFixture c = make_case(44);
  for (auto _ : state) {
    benchmark::DoNotOptimize(surface_dice_at_tolerance(c.pred, c.ref, 5.0));
  }
}
BENCHMARK(BM_SurfaceDice)->Unit(benchmark::kMillisecond);

void BM_GenerateLesion(benchmark::State& state) {
  LesionSpec lesion;
  lesion.seed = 7;
  for (auto _ : state) {
    benchmark::DoNotOptimize(generate_lesion(lesion));
    ++lesion.seed;
  }
}
BENCHMARK(BM_GenerateLesion)->Unit(benchmark::kMillisecond);

void BM_PerturbRater(benchmark::State& state) {
  LesionSpec lesion;
  lesion.seed = 8;
  const BinaryMask truth = generate_lesion(lesion);
  std::uint64_t seed = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(perturb_rater(truth, {-1.6, 1.6, 0.03, 0.0}, ++seed));
  }
}
BENCHMARK(BM_PerturbRater)->Unit(benchmark::kMillisecond);

void BM_BootstrapMedianCi(benchmark::State& state) {
  Rng rng(9);
  std::vector<double> sample(32);
  for (double& v : sample) v = rng.normal();
  const int resamples = static_cast<int>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(bootstrap_median_ci(sample, resamples, 11));
  }
}
BENCHMARK(BM_BootstrapMedianCi)->Arg(1000)->Arg(10000)->Unit(benchmark::kMicrosecond);

void BM_WilcoxonExact(benchmark::State& state) {
  Rng rng(10);
  std::vector<double> d(state.range(0));
  for (std::size_t i = 0; i < d.size(); ++i) {
    d[i] = (static_cast<double>(i) + 1.0 + rng.unit()) * (rng.bernoulli(0.5) ? 1.0 : -1.0);
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(wilcoxon_one_sided(d));
  }
}
BENCHMARK(BM_WilcoxonExact)->Arg(15)->Arg(25)->Unit(benchmark::kMicrosecond);

void BM_HolmAdjust(benchmark::State& state) {
  Rng rng(12);
  std::vector<double> p(14);
  for (double& v : p) v = rng.unit();
  for (auto _ : state) {
    benchmark::DoNotOptimize(holm_adjust(p));
  }
}
BENCHMARK(BM_HolmAdjust);

}  // namespace

BENCHMARK_MAIN();
