#include <benchmark/benchmark.h>

#include "imvc/kernels.hpp"
#include "imvc/ot.hpp"
#include "imvc/rng.hpp"

using namespace imvc;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(r, c);
  for (double& x : m.values()) x = rng.uniform(-1.0, 1.0);
  return m;
}

template <Matrix (*Mul)(const Matrix&, const Matrix&)>
void bm_matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix a = random_matrix(n, n, 1), b = random_matrix(n, n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(Mul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}

template <void (*Softmax)(Matrix&)>
void bm_softmax(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix a = random_matrix(n, 64, 3);
  for (auto _ : state) {
    Matrix m = a;
    Softmax(m);
    benchmark::DoNotOptimize(m.values().data());
  }
}

template <Vector (*LogMatvec)(const Matrix&, std::span<const double>)>
void bm_log_matvec(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix a = random_matrix(n, 64, 4);
  const Vector x(64, -1.0);
  for (auto _ : state) benchmark::DoNotOptimize(LogMatvec(a, x));
}

void bm_pot(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(5);
  Matrix p(n, 10);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (double& x : p.row(i)) s += (x = rng.uniform(0.05, 1.0));
    for (double& x : p.row(i)) x /= s;
  }
  const Matrix c = ot::pot_cost(p);
  ot::PotConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(ot::pot_uot_scaling(c, 0.5, cfg));
  state.counters["threads"] = static_cast<double>(kernels::max_threads());
}

}  // namespace

BENCHMARK(bm_matmul<kernels::serial::matmul>)->Name("matmul/serial")->Arg(64)->Arg(256);
BENCHMARK(bm_matmul<kernels::parallel::matmul>)->Name("matmul/parallel")->Arg(64)->Arg(256);
BENCHMARK(bm_matmul<kernels::serial::matmul_tn>)->Name("matmul_tn/serial")->Arg(256);
BENCHMARK(bm_matmul<kernels::parallel::matmul_tn>)->Name("matmul_tn/parallel")->Arg(256);
BENCHMARK(bm_softmax<kernels::serial::softmax_rows_inplace>)->Name("softmax/serial")->Arg(4096);
BENCHMARK(bm_softmax<kernels::parallel::softmax_rows_inplace>)->Name("softmax/parallel")->Arg(4096);
BENCHMARK(bm_log_matvec<kernels::serial::log_matvec>)->Name("log_matvec/serial")->Arg(4096);
BENCHMARK(bm_log_matvec<kernels::parallel::log_matvec>)->Name("log_matvec/parallel")->Arg(4096);
BENCHMARK(bm_pot)->Name("pot_uot_scaling")->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
