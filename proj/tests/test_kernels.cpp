// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <omp.h>

#include <cmath>
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

void expect_close(const std::vector<double>& a, const std::vector<double>& b, double tol = 1e-11) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) ASSERT_NEAR(a[i], b[i], tol * (1.0 + std::abs(b[i]))) << "index " << i;
}

struct ThreadScope {
  int saved = omp_get_max_threads();
  explicit ThreadScope(int n) { omp_set_num_threads(n); }
  ~ThreadScope() { omp_set_num_threads(saved); }
};

const ConvShape kConvCases[] = {
    {2, 3, 8, 8, 4, 3, 1, 1},
    {5, 4, 9, 7, 6, 3, 2, 1},
    {3, 2, 6, 6, 5, 1, 2, 0},
    {9, 3, 12, 12, 8, 7, 2, 3},
};

}  // namespace

TEST(Gemm, MatchesReferenceForAllTransposes) {
  const int m = 37, n = 29, k = 41;
  for (Trans ta : {Trans::No, Trans::Yes}) {
    for (Trans tb : {Trans::No, Trans::Yes}) {
      auto a = random_vec(static_cast<std::size_t>(m) * k, 1);
      auto b = random_vec(static_cast<std::size_t>(k) * n, 2);
      auto c0 = random_vec(static_cast<std::size_t>(m) * n, 3);
      auto c1 = c0;
      const int lda = ta == Trans::No ? k : m;
      const int ldb = tb == Trans::No ? n : k;
      gemm(ta, tb, m, n, k, 0.7, a.data(), lda, b.data(), ldb, 0.3, c0.data(), n);
      reference::gemm(ta, tb, m, n, k, 0.7, a.data(), lda, b.data(), ldb, 0.3, c1.data(), n);
      expect_close(c0, c1);
    }
  }
}

TEST(Gemm, LargeProblemUsesParallelPathAndAgrees) {
  const int m = 256, n = 128, k = 64;
  auto a = random_vec(static_cast<std::size_t>(m) * k, 4);
  auto b = random_vec(static_cast<std::size_t>(k) * n, 5);
  std::vector<double> c0(static_cast<std::size_t>(m) * n), c1(c0.size());
  gemm(Trans::No, Trans::No, m, n, k, 1.0, a.data(), k, b.data(), n, 0.0, c0.data(), n);
  reference::gemm(Trans::No, Trans::No, m, n, k, 1.0, a.data(), k, b.data(), n, 0.0, c1.data(), n);
  expect_close(c0, c1);
}

TEST(Conv, ForwardMatchesReference) {
  for (const auto& s : kConvCases) {
    auto x = random_vec(s.input_size(), 10);
    auto w = random_vec(s.weight_size(), 11);
    std::vector<double> y0(s.output_size()), y1(s.output_size());
    conv2d_forward(s, x, w, y0);
    reference::conv2d_forward(s, x, w, y1);
    expect_close(y0, y1);
  }
}

TEST(Conv, BackwardInputMatchesReference) {
  for (const auto& s : kConvCases) {
    auto gy = random_vec(s.output_size(), 12);
    auto w = random_vec(s.weight_size(), 13);
    std::vector<double> g0(s.input_size(), 9.0), g1(s.input_size(), -9.0);
    conv2d_backward_input(s, gy, w, g0);
    reference::conv2d_backward_input(s, gy, w, g1);
    expect_close(g0, g1);
  }
}

TEST(Conv, BackwardWeightAccumulatesLikeReference) {
  for (const auto& s : kConvCases) {
    auto x = random_vec(s.input_size(), 14);
    auto gy = random_vec(s.output_size(), 15);
    auto g0 = random_vec(s.weight_size(), 16);
    auto g1 = g0;
    conv2d_backward_weight(s, x, gy, g0);
    reference::conv2d_backward_weight(s, x, gy, g1);
    expect_close(g0, g1);
  }
}

TEST(Conv, ResultsIndependentOfThreadCount) {
  const ConvShape s{11, 3, 10, 10, 5, 3, 1, 1};
  auto x = random_vec(s.input_size(), 20);
  auto w = random_vec(s.weight_size(), 21);
  auto gy = random_vec(s.output_size(), 22);
  auto run = [&](int threads) {
    ThreadScope scope(threads);
    std::vector<double> y(s.output_size()), gx(s.input_size()), gw(s.weight_size(), 0.0);
    conv2d_forward(s, x, w, y);
    conv2d_backward_input(s, gy, w, gx);
    conv2d_backward_weight(s, x, gy, gw);
    y.insert(y.end(), gx.begin(), gx.end());
    y.insert(y.end(), gw.begin(), gw.end());
    return y;
  };
  EXPECT_EQ(run(1), run(3));
  EXPECT_EQ(run(1), run(4));
}

TEST(BatchNorm, ForwardAndBackwardMatchReference) {
  const BatchNormShape s{6, 5, 49};
  const std::size_t n = static_cast<std::size_t>(s.batch) * s.channels * s.plane;
  auto x = random_vec(n, 30);
  auto gamma = random_vec(s.channels, 31);
  auto beta = random_vec(s.channels, 32);
  std::vector<double> y0(n), y1(n), xh0(n), xh1(n), m0(s.channels), m1(s.channels), v0(s.channels), v1(s.channels);
  batchnorm_forward_train(s, x, gamma, beta, 1e-5, y0, xh0, m0, v0);
  reference::batchnorm_forward_train(s, x, gamma, beta, 1e-5, y1, xh1, m1, v1);
  expect_close(y0, y1);
  expect_close(xh0, xh1);
  expect_close(m0, m1);
  expect_close(v0, v1);

  std::vector<double> inv(s.channels);
  for (int c = 0; c < s.channels; ++c) inv[c] = 1.0 / std::sqrt(v0[c] + 1e-5);
  auto gy = random_vec(n, 33);
  std::vector<double> gx0(n), gx1(n), gg0(s.channels, 0.5), gg1(s.channels, 0.5), gb0(s.channels, 0.0),
      gb1(s.channels, 0.0);
  batchnorm_backward(s, gy, xh0, gamma, inv, gx0, gg0, gb0);
  reference::batchnorm_backward(s, gy, xh0, gamma, inv, gx1, gg1, gb1);
  expect_close(gx0, gx1, 1e-9);
  expect_close(gg0, gg1);
  expect_close(gb0, gb1);
}

TEST(BatchNorm, NormalizedOutputHasZeroMeanUnitVariance) {
  const BatchNormShape s{4, 2, 16};
  const std::size_t n = static_cast<std::size_t>(s.batch) * s.channels * s.plane;
  auto x = random_vec(n, 40);
  std::vector<double> gamma(2, 1.0), beta(2, 0.0), y(n), xh(n), mean(2), var(2);
  batchnorm_forward_train(s, x, gamma, beta, 0.0, y, xh, mean, var);
  for (int c = 0; c < 2; ++c) {
    double sum = 0.0, sq = 0.0;
    for (int b = 0; b < s.batch; ++b)
      for (int p = 0; p < s.plane; ++p) {
        const double v = y[(static_cast<std::size_t>(b) * s.channels + c) * s.plane + p];
        sum += v;
        sq += v * v;
      }
    EXPECT_NEAR(sum / 64.0, 0.0, 1e-12);
    EXPECT_NEAR(sq / 64.0, 1.0, 1e-12);
  }
}
