// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "gssl/model.hpp"
#include "gssl/oracles.hpp"
#include "gssl/selftest.hpp"

using namespace gssl;
using namespace gssl::oracle;
using transforms::TaskKind;

TEST(CeOracle, UniformLogits) {
  std::vector<double> z(6, 0.3);
  EXPECT_NEAR(static_cast<double>(ce_oracle(z, 2)), 1.791759469228055, 1e-15);
}

TEST(MarginOracle, DerivedValue) {
  auto m = ldam_margin_oracle(std::vector<int>{1000, 16}, 0.5L);
  EXPECT_NEAR(static_cast<double>(m[0]), 0.17783, 1e-4);
  EXPECT_EQ(m[1], 0.5L);
}

TEST(DrwOracle, DerivedRatio) {
  auto w = drw_raw_oracle(std::vector<int>{5000, 50}, 0.9999L);
  EXPECT_NEAR(static_cast<double>(w[1] / w[0]), 78.89, 0.1);
}

TEST(ProfileOracle, Endpoints) {
  auto p = profile_oracle(10, 5000, 0.02L);
  EXPECT_EQ(p.front(), 5000);
  EXPECT_EQ(p.back(), 100);
}

TEST(FdGradient, QuadraticCalibration) {
  auto f = [](std::span<const double> x) { return 3.0 * x[0] * x[0] - x[1] * x[1] + 0.5 * x[0] * x[1]; };
  std::vector<double> x{0.7, -1.3};
  std::vector<double> g{6.0 * 0.7 + 0.5 * -1.3, -2.0 * -1.3 + 0.5 * 0.7};
  auto r = fd_gradient("quadratic", f, x, g, 1e-4, 1e-8);
  EXPECT_TRUE(r.passed) << r.detail;
  EXPECT_LT(r.max_rel_error, 1e-8);
}

TEST(FdGradient, DetectsWrongGradientAndNonFinite) {
  auto f = [](std::span<const double> x) { return x[0] * x[0]; };
  std::vector<double> wrong{1.0};
  auto r = fd_gradient("bad", f, {1.0}, wrong);
  EXPECT_FALSE(r.passed);
  EXPECT_EQ(r.block, "bad");
  auto nan = [](std::span<const double>) { return NAN; };
  EXPECT_FALSE(fd_gradient("nan", nan, {1.0}, wrong).passed);
}

TEST(Enumeration, CardinalitiesAndDecodability) {
  auto img = distinct_image(8, 8);
  auto lorot = enumerate_outcomes(TaskKind::LorotE, img);
  auto flip = enumerate_outcomes(TaskKind::QuadFlip, img, 1);
  auto shuffle = enumerate_outcomes(TaskKind::ChannelShuffle, img, 2);
  EXPECT_EQ(lorot.size(), 16u);
  EXPECT_EQ(flip.size(), 2u);
  EXPECT_EQ(shuffle.size(), 6u);
  EXPECT_FALSE(outcomes_decodable(lorot));
  EXPECT_EQ(distinct_images(lorot), 13u);
  EXPECT_TRUE(lorot_structure_holds(lorot, img));
  EXPECT_TRUE(outcomes_decodable(flip));
  EXPECT_TRUE(outcomes_decodable(shuffle));
  auto dup = flip;
  dup.push_back({img, 2});
  EXPECT_FALSE(outcomes_decodable(dup));
  auto broken = lorot;
  broken[5].image = broken[6].image;
  EXPECT_FALSE(lorot_structure_holds(broken, img));
}

TEST(Selftest, AllChecksPass) {
  auto results = selftest::run();
  for (const auto& r : results) EXPECT_TRUE(r.passed) << r.name << ": " << r.detail;
  EXPECT_TRUE(selftest::all_passed(results));
}

TEST(Selftest, InjectedWrongMarginFormulaIsNamed) {
  selftest::Targets t;
  // Inverse square root instead of inverse fourth root.
  t.ldam_margins = [](std::span<const int> counts, double max_margin, double scale) {
    loss::ClassMargins m;
    m.scale = scale;
    double top = 0.0;
    for (int n : counts) top = std::max(top, 1.0 / std::sqrt(static_cast<double>(n)));
    for (int n : counts) m.deltas.push_back(max_margin / std::sqrt(static_cast<double>(n)) / top);
    return m;
  };
  auto results = selftest::run(t);
  std::vector<std::string> failed;
  for (const auto& r : results)
    if (!r.passed) failed.push_back(r.name);
  ASSERT_FALSE(failed.empty());
  EXPECT_EQ(failed.front(), "ldam_margins");
  EXPECT_FALSE(selftest::all_passed(results));
}

TEST(Selftest, InjectedGateFaultIsNamed) {
  selftest::Targets t;
  t.gate_distribution = [](const Tensor& z) {
    Tensor g = nn::gate_distribution(z);
    for (double& v : g.values()) v *= 1.01;
    return g;
  };
  auto results = selftest::run(t);
  bool gate_failed = false;
  for (const auto& r : results)
    if (r.name == "gate_distribution") gate_failed = !r.passed;
  EXPECT_TRUE(gate_failed);
}
