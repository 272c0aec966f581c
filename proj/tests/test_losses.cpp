// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "gssl/errors.hpp"
#include "gssl/losses.hpp"
#include "gssl/oracles.hpp"
#include "gssl/rng.hpp"

using namespace gssl;
using namespace gssl::loss;

namespace {

Tensor random_logits(int b, int k, std::uint64_t seed, double scale = 2.0) {
  Tensor t({b, k});
  Rng rng(seed);
  for (double& v : t.values()) v = rng.uniform(-scale, scale);
  return t;
}

}  // namespace

TEST(LdamMargins, MatchesDerivedValues) {
  // 0.5 * (16/1000)^(1/4) at 50 digits.
  auto m = ldam_margins(std::vector<int>{1000, 16});
  EXPECT_NEAR(m.deltas[0], 0.177827941003892, 1e-12);
  EXPECT_DOUBLE_EQ(m.deltas[1], 0.5);
  EXPECT_EQ(m.scale, 30.0);
}

TEST(LdamMargins, BalancedEqualAndMonotone) {
  auto bal = ldam_margins(std::vector<int>(6, 500));
  for (double d : bal.deltas) EXPECT_EQ(d, 0.5);
  auto m = ldam_margins(std::vector<int>{5000, 2997, 1796, 645, 50});
  for (std::size_t j = 1; j < m.deltas.size(); ++j) EXPECT_GT(m.deltas[j], m.deltas[j - 1]);
  EXPECT_THROW(ldam_margins(std::vector<int>{10, 0}), DomainError);
}

TEST(DrwWeights, MatchDerivedValues) {
  // (1 - 0.9999^5000) / (1 - 0.9999^50) = 78.889872176617509...
  auto w = drw_weights(std::vector<int>{5000, 50});
  EXPECT_NEAR(w.weights[1] / w.weights[0], 78.8898721766175, 1e-9);
  EXPECT_NEAR(w.weights[0], 0.0250344623856510, 1e-12);
  EXPECT_NEAR(w.weights[1], 1.97496553761435, 1e-12);
}

TEST(DrwWeights, BalancedExactlyOneAndMonotone) {
  for (double v : drw_weights(std::vector<int>(7, 321)).weights) EXPECT_EQ(v, 1.0);
  auto w = drw_weights(std::vector<int>{900, 400, 100, 10, 1});
  for (std::size_t j = 1; j < w.weights.size(); ++j) EXPECT_GE(w.weights[j], w.weights[j - 1]);
  EXPECT_THROW(drw_weights(std::vector<int>{1, 2}, 1.0), DomainError);
  EXPECT_THROW(drw_weights(std::vector<int>{1, 2}, 0.0), DomainError);
}

TEST(DrwWeights, SmallBetaApproachesUniform) {
  auto w = drw_weights(std::vector<int>{1000, 3}, 1e-9);
  EXPECT_NEAR(w.weights[0], 1.0, 1e-8);
  EXPECT_NEAR(w.weights[1], 1.0, 1e-8);
}

TEST(TaskCe, UniformAndLimit) {
  auto u = task_ce(Tensor({2, 16}), std::vector<int>{0, 15});
  EXPECT_NEAR(u.per_sample[0], 2.772588722239781, 1e-14);
  auto big = task_ce(Tensor::from_rows({{800.0, 0.0, 0.0}}), std::vector<int>{0});
  EXPECT_EQ(big.per_sample[0], 0.0);
  EXPECT_THROW(task_ce(Tensor({1, 3}), std::vector<int>{3}), DomainError);
  EXPECT_THROW(task_ce(Tensor({2, 3}), std::vector<int>{0}), ShapeError);
}

TEST(TaskCe, MatchesOracle) {
  for (int trial = 0; trial < 100; ++trial) {
    auto z = random_logits(8, 6, trial, 5.0);
    Rng rng(1000 + trial);
    std::vector<int> y(8);
    for (int& v : y) v = static_cast<int>(rng.uniform_int(6));
    auto r = task_ce(z, y);
    for (int i = 0; i < 8; ++i)
      EXPECT_NEAR(r.per_sample[i], static_cast<double>(oracle::ce_oracle(z.row(i), y[i])), 1e-10);
  }
}

TEST(LdamLoss, ZeroMarginUnitScaleIsPlainCe) {
  auto z = random_logits(4, 3, 1);
  std::vector<int> y{0, 2, 1, 1};
  ClassMargins m{{0.0, 0.0, 0.0}, 0.5, 1.0};
  auto l = ldam_loss(z, y, m);
  auto ce = task_ce(z, y);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(l.per_sample[i], ce.per_sample[i], 1e-14);
}

TEST(LdamLoss, HandExample) {
  // Logits (0.5, 0), target 1 with margin 0.5, s=1: adjusted (0.5, -0.5) gives 1 + ln(1 + e^-1).
  ClassMargins m{{0.5, 0.5}, 0.5, 1.0};
  auto l = ldam_loss(Tensor::from_rows({{0.5, 0.0}}), std::vector<int>{1}, m);
  EXPECT_NEAR(l.per_sample[0], 1.31326168751822, 1e-12);
}

TEST(LdamLoss, UniformWeightsEqualNoWeights) {
  auto z = random_logits(5, 4, 2);
  std::vector<int> y{0, 1, 2, 3, 3};
  auto m = ldam_margins(std::vector<int>{100, 50, 20, 5});
  ClassWeights ones{{1.0, 1.0, 1.0, 1.0}, 0.9999};
  auto a = ldam_loss(z, y, m);
  auto b = ldam_loss(z, y, m, &ones);
  EXPECT_EQ(a.mean, b.mean);
  EXPECT_EQ(a.grad, b.grad);
}

TEST(LdamLoss, WeightedMeanNormalizesByAppliedWeights) {
  auto z = random_logits(3, 2, 3);
  std::vector<int> y{0, 1, 1};
  ClassMargins m{{0.2, 0.5}, 0.5, 30.0};
  ClassWeights w{{0.5, 1.5}, 0.9999};
  auto plain = ldam_loss(z, y, m);
  auto weighted = ldam_loss(z, y, m, &w);
  const double expect = (0.5 * plain.per_sample[0] + 1.5 * plain.per_sample[1] + 1.5 * plain.per_sample[2]) / 3.5;
  EXPECT_NEAR(weighted.mean, expect, 1e-12);
}

TEST(LdamLoss, RejectsBadInput) {
  ClassMargins m{{0.1, 0.2}, 0.5, 30.0};
  EXPECT_THROW(ldam_loss(Tensor::from_rows({{NAN, 0.0}}), std::vector<int>{0}, m), NumericError);
  EXPECT_THROW(ldam_loss(Tensor({1, 2}), std::vector<int>{2}, m), DomainError);
  EXPECT_THROW(ldam_loss(Tensor({1, 3}), std::vector<int>{0}, m), ShapeError);
}

TEST(LdamLoss, GradientMatchesFiniteDifferences) {
  auto m = ldam_margins(std::vector<int>{500, 100, 30, 4});
  auto w = drw_weights(std::vector<int>{500, 100, 30, 4});
  for (int trial = 0; trial < 20; ++trial) {
    auto z = random_logits(4, 4, 50 + trial, 0.3);
    std::vector<int> y{trial % 4, (trial + 1) % 4, 3, 0};
    const ClassWeights* wp = trial % 2 ? &w : nullptr;
    auto r = ldam_loss(z, y, m, wp);
    auto f = [&](std::span<const double> p) {
      Tensor t({4, 4});
      std::copy(p.begin(), p.end(), t.data());
      return ldam_loss(t, y, m, wp).mean;
    };
    auto rep = oracle::fd_gradient("ldam", f, {z.values().begin(), z.values().end()}, r.grad.values());
    EXPECT_TRUE(rep.passed) << rep.detail;
  }
}

TEST(GatedLoss, HandExampleAndReductions) {
  auto r = gated_total_loss(1.0, Tensor::from_rows({{0.5, 0.5}}), {{2.0}, {4.0}}, 0.1);
  EXPECT_NEAR(r.breakdown.l_tot, 1.3, 1e-15);
  EXPECT_EQ(r.breakdown.per_task_gated, (std::vector<double>{1.0, 2.0}));

  auto zero = gated_total_loss(0.731, Tensor::from_rows({{0.2, 0.8}, {0.6, 0.4}}), {{3.0, 1.0}, {2.0, 5.0}}, 0.0);
  EXPECT_EQ(zero.breakdown.l_tot, 0.731);

  auto single = gated_total_loss(2.0, Tensor({3, 1}, 1.0), {{1.0, 2.0, 6.0}}, 0.1);
  EXPECT_NEAR(single.breakdown.l_tot, 2.0 + 0.1 * 3.0, 1e-15);
}

TEST(GatedLoss, CompositionIdentityAndConvexity) {
  Rng rng(4);
  for (int trial = 0; trial < 500; ++trial) {
    const int b = 1 + static_cast<int>(rng.uniform_int(8)), t = 1 + static_cast<int>(rng.uniform_int(3));
    Tensor g({b, t});
    for (int i = 0; i < b; ++i) {
      double s = 0.0;
      for (double& v : g.row(i)) s += v = rng.uniform(0.01, 1.0);
      for (double& v : g.row(i)) v /= s;
    }
    std::vector<std::vector<double>> losses(t, std::vector<double>(b));
    for (auto& l : losses)
      for (double& v : l) v = rng.uniform(0.0, 4.0);
    const double lambda = rng.uniform(0.0, 2.0);
    auto r = gated_total_loss(0.5, g, losses, lambda);
    double sum = 0.0;
    for (int n = 0; n < t; ++n) {
      sum += r.breakdown.per_task_gated[n];
      double mean = 0.0;
      for (double v : losses[n]) mean += v / b;
      EXPECT_LE(r.breakdown.per_task_gated[n], mean + 1e-12);
    }
    EXPECT_NEAR(r.breakdown.l_tot - 0.5, lambda * sum, 1e-9);
  }
}

TEST(GatedLoss, Validation) {
  EXPECT_THROW(gated_total_loss(0.0, Tensor::from_rows({{0.5, 0.5}}), {{1.0}, {1.0}}, -0.1), DomainError);
  EXPECT_THROW(gated_total_loss(0.0, Tensor::from_rows({{0.5, 0.6}}), {{1.0}, {1.0}}, 0.1), DomainError);
  EXPECT_THROW(gated_total_loss(0.0, Tensor::from_rows({{0.5, 0.5}}), {{1.0}}, 0.1), ShapeError);
  EXPECT_THROW(gated_total_loss(0.0, Tensor::from_rows({{0.5, 0.5}}), {{1.0, 2.0}, {1.0}}, 0.1), ShapeError);
}

TEST(GatedLoss, GradientsMatchFiniteDifferences) {
  Tensor g = Tensor::from_rows({{0.2, 0.3, 0.5}, {0.7, 0.2, 0.1}});
  std::vector<std::vector<double>> losses{{1.0, 2.0}, {0.5, 3.0}, {2.5, 0.1}};
  auto r = gated_total_loss(1.0, g, losses, 0.3);
  auto f_gate = [&](std::span<const double> p) {
    // Evaluate the formula directly; perturbed rows no longer sum to one.
    double s = 0.0;
    for (int n = 0; n < 3; ++n)
      for (int i = 0; i < 2; ++i) s += p[i * 3 + n] * losses[n][i] / 2.0;
    return 1.0 + 0.3 * s;
  };
  auto rep = oracle::fd_gradient("gate", f_gate, {g.values().begin(), g.values().end()}, r.grad_gate.values());
  EXPECT_TRUE(rep.passed) << rep.detail;
  std::vector<double> flat, analytic;
  for (int n = 0; n < 3; ++n)
    for (int i = 0; i < 2; ++i) {
      flat.push_back(losses[n][i]);
      analytic.push_back(r.grad_task_losses[n][i]);
    }
  auto f_loss = [&](std::span<const double> p) {
    std::vector<std::vector<double>> l(3, std::vector<double>(2));
    for (int n = 0; n < 3; ++n)
      for (int i = 0; i < 2; ++i) l[n][i] = p[n * 2 + i];
    return gated_total_loss(1.0, g, l, 0.3).breakdown.l_tot;
  };
  auto rep2 = oracle::fd_gradient("task losses", f_loss, flat, analytic);
  EXPECT_TRUE(rep2.passed) << rep2.detail;
}
