#include <benchmark/benchmark.h>

#include "desync/analysis.hpp"
#include "desync/engine.hpp"
#include "desync/matrixio.hpp"
#include "desync/workloads.hpp"

using namespace desync;

namespace {

SystemSpec two_domain(int n_ranks) {
  SystemSpec sys;
  sys.n_ranks = n_ranks;
  int half = n_ranks / 2;
  sys.domains.push_back({0, half, 8e9, 40e9, DomainKind::Memory});
  sys.domains.push_back({half, n_ranks, 8e9, 40e9, DomainKind::Memory});
  sys.network.latency = 1e-6;
  sys.network.bandwidth = 12.5e9;
  return sys;
}

Scenario triad(int n_ranks, int n_iters, bool noise) {
  TriadConfig c;
  c.n_ranks = n_ranks;
  c.distances = {1, -1};
  c.total_bytes = 2.4e9;
  c.n_iters = n_iters;
  Scenario s = make_triad_scenario(c, two_domain(n_ranks));
  if (noise) s.noise = {NoiseKind::Uniform, 0.05, 1};
  return s;
}

}  // namespace

static void BM_TriadRun(benchmark::State& state) {
  ValidatedScenario v = validate_scenario(triad((int)state.range(0), 100, false));
  for (auto _ : state) benchmark::DoNotOptimize(run(v, 0).end_time);
  state.SetItemsProcessed(state.iterations() * state.range(0) * 100);
}
BENCHMARK(BM_TriadRun)->Arg(16)->Arg(64)->Arg(256);

static void BM_TriadRunNoisy(benchmark::State& state) {
  ValidatedScenario v = validate_scenario(triad((int)state.range(0), 100, true));
  for (auto _ : state) benchmark::DoNotOptimize(run(v, 0).end_time);
  state.SetItemsProcessed(state.iterations() * state.range(0) * 100);
}
BENCHMARK(BM_TriadRunNoisy)->Arg(16)->Arg(64)->Arg(256);

static void BM_SpmvmRun(benchmark::State& state) {
  SparseMatrix m = gen_banded(40000, 3000, 12, 1);
  SystemSpec sys = two_domain(40);
  ValidatedScenario v =
      validate_scenario(make_spmvm_scenario(m, SpmvmMode::SplitWait, false, 50, 8, sys));
  for (auto _ : state) benchmark::DoNotOptimize(run(v, 0).end_time);
}
BENCHMARK(BM_SpmvmRun);

static void BM_CommMatrix(benchmark::State& state) {
  SparseMatrix m = gen_banded((std::int64_t)state.range(0), 3000, 12, 1);
  for (auto _ : state) {
    auto part = partition_rows(m, 40);
    benchmark::DoNotOptimize(build_comm_matrix(m, part, 8).volumes.data());
  }
}
BENCHMARK(BM_CommMatrix)->Arg(40000)->Arg(200000);

static void BM_Wavefront(benchmark::State& state) {
  Scenario s = triad(40, 400, true);
  Trace t = run(validate_scenario(s), 0);
  for (auto _ : state)
    benchmark::DoNotOptimize(
        measure_wavefront(t, 0.25 * t.end_time, t.end_time, s.system).slope);
}
BENCHMARK(BM_Wavefront);

BENCHMARK_MAIN();
