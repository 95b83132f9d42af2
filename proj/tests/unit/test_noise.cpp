#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "sqglab/noise.hpp"
#include "test_util.hpp"

using namespace sqg;
using sqg::testing::random_field;
using sqg::testing::rel_diff;

namespace {

NoiseModel mixed_model(const GridPtr& grid) {
  std::vector<NoiseCoefficient> dirs;
  dirs.push_back({0.5, random_field(grid, 11, 2.0, 0.2)});
  dirs.push_back({0.0, random_field(grid, 12, 2.0, 0.2)});
  dirs.push_back({-0.3, std::nullopt});
  auto g = PointwiseMap::table({-2, 0, 2}, {0.2, 1.0, 0.4}, 1.0);
  return NoiseModel(grid, std::move(dirs), g);
}

}  // namespace

TEST(PointwiseMap, TableInterpolatesAndIsFlatOutside) {
  auto g = PointwiseMap::table({-1, 0, 2}, {1.0, 0.5, 2.0}, 2.0);
  EXPECT_DOUBLE_EQ(g(-1), 1.0);
  EXPECT_DOUBLE_EQ(g(0), 0.5);
  EXPECT_DOUBLE_EQ(g(2), 2.0);
  EXPECT_DOUBLE_EQ(g(-5), 1.0);
  EXPECT_DOUBLE_EQ(g(7), 2.0);
  EXPECT_EQ(g.derivative(-5), 0.0);
  for (double x : {-0.7, -0.2, 0.3, 1.1, 1.9}) {
    double fd = (g(x + 1e-6) - g(x - 1e-6)) / 2e-6;
    EXPECT_NEAR(g.derivative(x), fd, 1e-6);
  }
}

TEST(PointwiseMap, TableRejectsBadInput) {
  EXPECT_THROW(PointwiseMap::table({0}, {1}, 1), ConfigError);
  EXPECT_THROW(PointwiseMap::table({0, 0}, {1, 2}, 10), ConfigError);
  EXPECT_THROW(PointwiseMap::table({0, 1}, {1, NAN}, 10), ConfigError);
  EXPECT_THROW(PointwiseMap::table({0, 1}, {0, 5}, 1), ConfigError);
  EXPECT_THROW(PointwiseMap::constant(INFINITY), ConfigError);
}

TEST(NoiseModel, AdditiveModeExample) {
  auto grid = make_grid(4);
  auto G = NoiseModel::additive_mode(grid, {1, 2}, 0.5);
  auto th = random_field(grid, 1);
  std::vector<double> y{3.0};
  auto out = apply_G(G, th, y);
  EXPECT_EQ(out, SpectralField::basis(grid, {1, 2}, 1.5));
  EXPECT_NEAR(hs_norm_G(G, th), 0.5, 1e-15);
  EXPECT_TRUE(G.is_additive());
}

TEST(NoiseModel, LinearConstantExample) {
  auto grid = make_grid(5);
  auto G = NoiseModel::linear_constant(grid, {1.0, 2.0});
  auto th = random_field(grid, 2);
  std::vector<double> y{0.5, -1.0};
  auto out = apply_G(G, th, y);
  EXPECT_LT(rel_diff(out, -1.5 * th), 1e-15);
  EXPECT_NEAR(hs_norm_G(G, th), std::sqrt(5.0) * l2_norm(th), 1e-12);
  EXPECT_DOUBLE_EQ(G.declared_bound(), 5.0);
}

TEST(NoiseModel, PhysicalPathAgreesWithSpectralShortcut) {
  // A zero spatial field forces the pointwise path; it must match the shortcut.
  auto grid = make_grid(6);
  NoiseModel fast = NoiseModel::linear_constant(grid, {0.7});
  NoiseModel slow(grid, {{0.7, SpectralField(grid)}}, PointwiseMap::identity());
  auto th = random_field(grid, 3);
  std::vector<double> y{1.3};
  // Products are dealiased, so the pointwise path keeps every retained mode.
  EXPECT_LT(rel_diff(fast.apply(th, y), slow.apply(th, y)), 1e-13);
}

TEST(NoiseModel, LinearInControl) {
  auto grid = make_grid(6);
  auto G = mixed_model(grid);
  auto th = random_field(grid, 4);
  std::vector<double> a{0.3, -1.2, 0.8}, b{1.1, 0.1, -0.4}, ab(3);
  for (int j = 0; j < 3; ++j) ab[j] = 2.0 * a[j] - 3.0 * b[j];
  auto lhs = G.apply(th, ab);
  auto rhs = 2.0 * G.apply(th, a) - 3.0 * G.apply(th, b);
  EXPECT_LT(rel_diff(lhs, rhs), 1e-13);
}

TEST(NoiseModel, TransposeIsAdjoint) {
  auto grid = make_grid(6);
  auto G = mixed_model(grid);
  auto th = random_field(grid, 5);
  auto mu = random_field(grid, 6);
  std::vector<double> y{0.4, -0.9, 1.5};
  auto gt = G.apply_transpose(th, mu);
  double rhs = 0.0;
  for (int j = 0; j < 3; ++j) rhs += y[j] * gt[j];
  EXPECT_NEAR(dot(G.apply(th, y), mu), rhs, 1e-12 * std::abs(rhs));
}

TEST(NoiseModel, LinearizationMatchesFiniteDifference) {
  auto grid = make_grid(6);
  auto G = mixed_model(grid);
  auto th = random_field(grid, 7);
  auto h = random_field(grid, 8);
  auto mu = random_field(grid, 9);
  std::vector<double> y{0.4, -0.9, 1.5};
  const double s = 1e-6;
  double fd = (dot(G.apply(th + s * h, y), mu) - dot(G.apply(th - s * h, y), mu)) / (2 * s);
  EXPECT_NEAR(dot(G.linearized(th, y, mu), h), fd, 1e-6 * std::max(1.0, std::abs(fd)));
}

TEST(NoiseModel, LipschitzInState) {
  auto grid = make_grid(6);
  auto G = mixed_model(grid);
  const double lip = G.nonlinearity().derivative_bound() * std::sqrt(G.coefficient_sup());
  for (std::uint64_t s = 0; s < 5; ++s) {
    auto a = random_field(grid, 20 + s);
    auto b = random_field(grid, 40 + s);
    std::vector<double> y{0.6, 0.8, 0.0};
    // |G(a)y - G(b)y| <= |y| sup|g'| sup|beta| |a - b| on the collocation grid.
    double lhs = l2_norm(G.apply(a, y) - G.apply(b, y));
    EXPECT_LE(lhs, 1.0 * lip * l2_norm(a - b) * (1 + 1e-12));
  }
}

TEST(NoiseModel, DeclaredBoundIsEnforced) {
  auto grid = make_grid(4);
  EXPECT_THROW(NoiseModel(grid, {{2.0, std::nullopt}}, PointwiseMap::identity(), 3.0), ConfigError);
  EXPECT_NO_THROW(NoiseModel(grid, {{2.0, std::nullopt}}, PointwiseMap::identity(), 4.0));
  EXPECT_THROW(NoiseModel(grid, {}, PointwiseMap::identity()), ConfigError);
  auto other = make_grid(5);
  EXPECT_THROW(NoiseModel(grid, {{0.0, SpectralField(other)}}, PointwiseMap::identity()), ConfigError);
  auto G = NoiseModel::linear_constant(grid, {1.0});
  std::vector<double> y{1.0, 2.0};
  EXPECT_THROW(G.apply(SpectralField(grid), y), std::invalid_argument);
}

TEST(NoiseModel, CoefficientSupIsPointwiseSum) {
  // b_1 = 1 + 0.5 cos x1, b_2 = 0.5: max of b_1^2 + b_2^2 at x1 = 0.
  auto grid = make_grid(4);
  auto f = SpectralField::basis(grid, {-1, 0}, std::sqrt(2.0) * std::numbers::pi * 0.5);
  NoiseModel G(grid, {{1.0, f}, {0.5, std::nullopt}}, PointwiseMap::identity());
  EXPECT_NEAR(G.coefficient_sup(), 1.5 * 1.5 + 0.25, 1e-12);
}

TEST(Hypotheses, IntegrabilityBoundary) {
  EXPECT_TRUE(integrability_holds(0.75, 8));
  EXPECT_FALSE(integrability_holds(0.75, 4));
  EXPECT_FALSE(integrability_holds(0.5, 100));
  EXPECT_FALSE(integrability_holds(0.9, -2));
}

TEST(Hypotheses, ValidationExamples) {
  auto grid = make_grid(6);
  auto G = mixed_model(grid);
  auto rep = validate_hypotheses(G, 0.75, 8, 1.0);
  EXPECT_DOUBLE_EQ(rep.r, 0.75);
  EXPECT_TRUE(rep.all_passed());
  ASSERT_NE(rep.find("integrability"), nullptr);
  EXPECT_TRUE(*rep.find("integrability")->passed);
  ASSERT_NE(rep.find("lipschitz_L2"), nullptr);
  EXPECT_FALSE(rep.find("lipschitz_L2")->passed.has_value());

  auto bad = validate_hypotheses(G, 0.5, 8, 1.0);
  EXPECT_FALSE(bad.all_passed());
  EXPECT_FALSE(*bad.find("subcritical")->passed);
  EXPECT_FALSE(*bad.find("integrability")->passed);
  EXPECT_DOUBLE_EQ(bad.r, 1.0);

  auto rough = validate_hypotheses(G, 0.75, 8, 0.4);
  EXPECT_FALSE(*rough.find("smoothness_small_noise")->passed);
}

TEST(Seeds, SplitMixReferenceValues) {
  std::uint64_t s = 0;
  EXPECT_EQ(splitmix64(s), 0xE220A8397B1DCDAFULL);
  EXPECT_EQ(splitmix64(s), 0x6E789E6AA1B965F4ULL);
  EXPECT_EQ(mix64(0, 0), 0xE220A8397B1DCDAFULL);
  EXPECT_EQ(mix64(0, 1), 0x6E789E6AA1B965F4ULL);
}

TEST(Seeds, StreamsAreDistinct) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t i = 0; i < 1000; ++i) seen.insert(mix64(42, i));
  EXPECT_EQ(seen.size(), 1000u);
}

TEST(NoisePath, DeterministicWithUnitVariance) {
  auto a = NoisePath::generate(9, 3, 0.01, 20000);
  auto b = NoisePath::generate(9, 3, 0.01, 20000);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, NoisePath::generate(10, 3, 0.01, 20000));
  double sum = 0, sq = 0;
  for (double w : a.increments) {
    sum += w;
    sq += w * w;
  }
  double n = static_cast<double>(a.increments.size());
  EXPECT_NEAR(sum / n, 0.0, 5.0 * 0.1 / std::sqrt(n));
  EXPECT_NEAR(sq / n / 0.01, 1.0, 0.03);
  EXPECT_EQ(a.at(5)[2], a.increments[17]);
  EXPECT_THROW(NoisePath::generate(1, 0, 0.1, 3), std::invalid_argument);
}
