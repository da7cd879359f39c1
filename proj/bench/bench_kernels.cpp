// Serial reference kernels against their OpenMP counterparts on a 400 x 2000
// heterogeneous synthetic snapshot.

#include <benchmark/benchmark.h>

#include "bivalid/bicm.hpp"
#include "bivalid/pvalue.hpp"
#include "bivalid/synth.hpp"

using namespace bivalid;

namespace {

const Snapshot& fixture() {
  static const Snapshot snap = [] {
    SynthSpec s;
    s.holders = 400;
    s.assets = 2000;
    s.holder_law.kind = DegreeLaw::Kind::power_law;
    s.holder_law.exponent = 1.8;
    s.holder_law.min_degree = 10;
    s.holder_law.max_degree = 600;
    s.asset_law.kind = DegreeLaw::Kind::power_law;
    s.asset_law.exponent = 2.2;
    s.asset_law.min_degree = 1;
    s.asset_law.max_degree = 200;
    s.seed = 7;
    return generate(s);
  }();
  return snap;
}

const BicmSolution& solution() {
  static const BicmSolution sol = fit_bicm(degree_sequence(fixture()));
  return sol;
}

void BM_OverlapsSerial(benchmark::State& st) {
  for (auto _ : st) benchmark::DoNotOptimize(overlaps_serial(fixture(), Layer::holders));
}

void BM_OverlapsParallel(benchmark::State& st) {
  const int workers = static_cast<int>(st.range(0));
  for (auto _ : st) benchmark::DoNotOptimize(overlaps(fixture(), Layer::holders, workers));
}

void BM_PValuesSerial(benchmark::State& st) {
  const auto pairs = overlaps(fixture(), Layer::holders);
  for (auto _ : st) benchmark::DoNotOptimize(p_values_serial(solution(), Layer::holders, pairs, Backend::exact));
}

void BM_PValuesParallel(benchmark::State& st) {
  const auto pairs = overlaps(fixture(), Layer::holders);
  const int workers = static_cast<int>(st.range(0));
  for (auto _ : st)
    benchmark::DoNotOptimize(p_values(solution(), Layer::holders, pairs, Backend::exact, workers));
}

}  // namespace

BENCHMARK(BM_OverlapsSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_OverlapsParallel)->Arg(1)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PValuesSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PValuesParallel)->Arg(1)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
