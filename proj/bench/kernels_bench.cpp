// OpenMP kernels against their serial references. Set OMP_NUM_THREADS to vary the team.
#include <benchmark/benchmark.h>

#include <random>

#include "qean/numerics.hpp"

namespace {

using qean::Matrix;

Matrix input(std::size_t rows, std::size_t cols, unsigned seed) {
  std::mt19937_64 rng(seed);
  return qean::random_normal(rows, cols, 1.0, rng);
}

template <Matrix (*F)(const Matrix&, const Matrix&)>
void bm_product(benchmark::State& state, bool transpose_a) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix a = transpose_a ? input(n, n / 2, 1) : input(n / 2, n, 1);
  const Matrix b = input(n, n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(F(a, b));
}

void bm_matmul(benchmark::State& s) { bm_product<qean::matmul>(s, false); }
void bm_matmul_serial(benchmark::State& s) { bm_product<qean::serial::matmul>(s, false); }
void bm_matmul_nt(benchmark::State& s) { bm_product<qean::matmul_nt>(s, false); }
void bm_matmul_nt_serial(benchmark::State& s) { bm_product<qean::serial::matmul_nt>(s, false); }
void bm_matmul_tn(benchmark::State& s) { bm_product<qean::matmul_tn>(s, true); }
void bm_matmul_tn_serial(benchmark::State& s) { bm_product<qean::serial::matmul_tn>(s, true); }

template <Matrix (*F)(const Matrix&)>
void bm_softmax_impl(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix m = input(n, n, 3);
  for (auto _ : state) benchmark::DoNotOptimize(F(m));
}

void bm_softmax(benchmark::State& s) { bm_softmax_impl<qean::softmax_rows>(s); }
void bm_softmax_serial(benchmark::State& s) { bm_softmax_impl<qean::serial::softmax_rows>(s); }

template <Matrix (*F)(const Matrix&, const qean::ConvKernel&)>
void bm_conv_impl(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix x = input(n, 64, 4);
  qean::ConvKernel k(64, 16, 3);
  k.weights = input(3 * 64, 16, 5);
  for (auto _ : state) benchmark::DoNotOptimize(F(x, k));
}

void bm_conv1d(benchmark::State& s) { bm_conv_impl<qean::conv1d>(s); }
void bm_conv1d_serial(benchmark::State& s) { bm_conv_impl<qean::serial::conv1d>(s); }

}  // namespace

BENCHMARK(bm_matmul)->Arg(64)->Arg(256);
BENCHMARK(bm_matmul_serial)->Arg(64)->Arg(256);
BENCHMARK(bm_matmul_nt)->Arg(64)->Arg(256);
BENCHMARK(bm_matmul_nt_serial)->Arg(64)->Arg(256);
BENCHMARK(bm_matmul_tn)->Arg(64)->Arg(256);
BENCHMARK(bm_matmul_tn_serial)->Arg(64)->Arg(256);
BENCHMARK(bm_softmax)->Arg(64)->Arg(512);
BENCHMARK(bm_softmax_serial)->Arg(64)->Arg(512);
BENCHMARK(bm_conv1d)->Arg(90)->Arg(1024);
BENCHMARK(bm_conv1d_serial)->Arg(90)->Arg(1024);

BENCHMARK_MAIN();
