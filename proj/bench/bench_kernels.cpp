#include "unimul/bench.hpp"
#include "unimul/kernels.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace unimul;

namespace {

DenseMatrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  DenseMatrix m(r, c);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (auto &x : m.data()) {
    x = dist(rng);
  }
  return m;
}

template <void (*Kernel)(ConstView, ConstView, MutView)>
void gemm(benchmark::State &state) {
  auto n = static_cast<std::size_t>(state.range(0));
  auto a = random_matrix(n, n, 1);
  auto b = random_matrix(n, n, 2);
  DenseMatrix c(n, n);
  for (auto _ : state) {
    Kernel(a.view(), b.view(), c.view());
    benchmark::ClobberMemory();
  }
  state.counters["flops"] = benchmark::Counter(
      2.0 * static_cast<double>(n * n * n), benchmark::Counter::kIsIterationInvariantRate);
}

void run(benchmark::State &state, ExecMode mode) {
  RunConfig cfg;
  cfg.m = cfg.n = cfg.k = static_cast<std::size_t>(state.range(0));
  cfg.p = 4;
  cfg.exec.mode = mode;
  for (auto _ : state) {
    auto res = run_one(cfg);
    if (!res.pass) {
      state.SkipWithError("verification failed");
      break;
    }
  }
}

void run_lockstep(benchmark::State &state) { run(state, ExecMode::Lockstep); }
void run_threaded(benchmark::State &state) { run(state, ExecMode::Threaded); }

} // namespace

BENCHMARK(gemm<kernels::gemm_serial>)->Name("gemm_serial")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(gemm<kernels::gemm_omp>)->Name("gemm_omp")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(run_lockstep)->Arg(64)->Arg(192)->Unit(benchmark::kMillisecond);
BENCHMARK(run_threaded)->Arg(64)->Arg(192)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
