// SPDX-License-Identifier: Apache-2.0
// Parallel kernels against their serial reference versions.

#include <benchmark/benchmark.h>

#include <vector>

#include "gssl/kernels.hpp"
#include "gssl/rng.hpp"

using namespace gssl;
using namespace gssl::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

ConvShape conv_shape(int batch) { return {batch, 16, 32, 32, 16, 3, 1, 1}; }

template <bool Parallel>
void BM_Gemm(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  auto a = random_vec(static_cast<std::size_t>(n) * n, 1), b = random_vec(static_cast<std::size_t>(n) * n, 2);
  std::vector<double> c(static_cast<std::size_t>(n) * n);
  for (auto _ : state) {
    if constexpr (Parallel) gemm(Trans::No, Trans::No, n, n, n, 1.0, a.data(), n, b.data(), n, 0.0, c.data(), n);
    else reference::gemm(Trans::No, Trans::No, n, n, n, 1.0, a.data(), n, b.data(), n, 0.0, c.data(), n);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * 2LL * n * n * n);
}

template <bool Parallel>
void BM_ConvForward(benchmark::State& state) {
  const auto s = conv_shape(static_cast<int>(state.range(0)));
  auto x = random_vec(s.input_size(), 3), w = random_vec(s.weight_size(), 4);
  std::vector<double> y(s.output_size());
  for (auto _ : state) {
    if constexpr (Parallel) conv2d_forward(s, x, w, y);
    else reference::conv2d_forward(s, x, w, y);
    benchmark::DoNotOptimize(y.data());
  }
}

template <bool Parallel>
void BM_ConvBackwardWeight(benchmark::State& state) {
  const auto s = conv_shape(static_cast<int>(state.range(0)));
  auto x = random_vec(s.input_size(), 5), gy = random_vec(s.output_size(), 6);
  std::vector<double> gw(s.weight_size());
  for (auto _ : state) {
    if constexpr (Parallel) conv2d_backward_weight(s, x, gy, gw);
    else reference::conv2d_backward_weight(s, x, gy, gw);
    benchmark::DoNotOptimize(gw.data());
  }
}

template <bool Parallel>
void BM_BatchNorm(benchmark::State& state) {
  const BatchNormShape s{static_cast<int>(state.range(0)), 32, 256};
  const std::size_t n = static_cast<std::size_t>(s.batch) * s.channels * s.plane;
  auto x = random_vec(n, 7), gamma = random_vec(32, 8), beta = random_vec(32, 9);
  std::vector<double> y(n), xh(n), mean(32), var(32);
  for (auto _ : state) {
    if constexpr (Parallel) batchnorm_forward_train(s, x, gamma, beta, 1e-5, y, xh, mean, var);
    else reference::batchnorm_forward_train(s, x, gamma, beta, 1e-5, y, xh, mean, var);
    benchmark::DoNotOptimize(y.data());
  }
}

}  // namespace

BENCHMARK(BM_Gemm<true>)->Arg(64)->Arg(256);
BENCHMARK(BM_Gemm<false>)->Arg(64)->Arg(256);
BENCHMARK(BM_ConvForward<true>)->Arg(8)->Arg(32);
BENCHMARK(BM_ConvForward<false>)->Arg(8)->Arg(32);
BENCHMARK(BM_ConvBackwardWeight<true>)->Arg(8)->Arg(32);
BENCHMARK(BM_ConvBackwardWeight<false>)->Arg(8)->Arg(32);
BENCHMARK(BM_BatchNorm<true>)->Arg(32)->Arg(128);
BENCHMARK(BM_BatchNorm<false>)->Arg(32)->Arg(128);

BENCHMARK_MAIN();
