#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "lhdff/kernels.hpp"

using namespace lhdff::kernels;

namespace {

std::vector<double> random_values(std::size_t n) {
  std::mt19937_64 rng(n);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

template <bool Parallel>
void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const GemmArgs g{n, n, n, false, false, false};
  const auto a = random_values(n * n), b = random_values(n * n);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    if constexpr (Parallel) {
      parallel::gemm(g, a, b, c);
    } else {
      serial::gemm(g, a, b, c);
    }
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * 2 * n * n * n));
}

// Encoder-shaped 3x3 convolution: batch 8, C -> C channels, 96 x 32.
template <bool Parallel>
void BM_ConvForward(benchmark::State& state) {
  const auto ch = static_cast<std::size_t>(state.range(0));
  const ConvShape s{8, ch, ch, 96, 32};
  const auto x = random_values(8 * ch * 96 * 32), k = random_values(ch * ch * 9), bias = random_values(ch);
  std::vector<double> y(x.size());
  for (auto _ : state) {
    if constexpr (Parallel) {
      parallel::conv3x3_forward(s, x, k, bias, y);
    } else {
      serial::conv3x3_forward(s, x, k, bias, y);
    }
    benchmark::DoNotOptimize(y.data());
  }
}

template <bool Parallel>
void BM_ConvBackward(benchmark::State& state) {
  const auto ch = static_cast<std::size_t>(state.range(0));
  const ConvShape s{8, ch, ch, 96, 32};
  const auto x = random_values(8 * ch * 96 * 32), k = random_values(ch * ch * 9), dy = random_values(x.size());
  std::vector<double> dx(x.size()), dk(k.size()), db(ch);
  for (auto _ : state) {
    std::fill(dx.begin(), dx.end(), 0.0);
    std::fill(dk.begin(), dk.end(), 0.0);
    std::fill(db.begin(), db.end(), 0.0);
    if constexpr (Parallel) {
      parallel::conv3x3_backward_input(s, dy, k, dx);
      parallel::conv3x3_backward_params(s, x, dy, dk, db);
    } else {
      serial::conv3x3_backward_input(s, dy, k, dx);
      serial::conv3x3_backward_params(s, x, dy, dk, db);
    }
    benchmark::DoNotOptimize(dk.data());
  }
}

}  // namespace

BENCHMARK(BM_Gemm<false>)->Name("gemm/serial")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_Gemm<true>)->Name("gemm/parallel")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_ConvForward<false>)->Name("conv3x3_forward/serial")->Arg(8)->Arg(32);
BENCHMARK(BM_ConvForward<true>)->Name("conv3x3_forward/parallel")->Arg(8)->Arg(32);
BENCHMARK(BM_ConvBackward<false>)->Name("conv3x3_backward/serial")->Arg(8)->Arg(32);
BENCHMARK(BM_ConvBackward<true>)->Name("conv3x3_backward/parallel")->Arg(8)->Arg(32);

BENCHMARK_MAIN();
