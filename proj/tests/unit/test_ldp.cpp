#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "sqglab/ldp.hpp"
#include "test_util.hpp"

using namespace sqg;
using sqg::testing::random_field;

namespace {

DynamicsConfig cfg_for(int n, double dt, double T = 1.0) {
  DynamicsConfig c;
  c.resolution = n;
  c.dt = dt;
  c.horizon = T;
  return c;
}

RareEventSpec coefficient_event(double eta) {
  RareEventSpec s;
  s.observable = {ObservableKind::Coefficient, {1, 0}};
  s.eta = eta;
  return s;
}

// Variance of the exponential Euler OU recursion x_{n+1} = e^{-dt}(x_n + sqrt(eps) b dW_n).
double ou_variance(double eps, double b, const DynamicsConfig& cfg) {
  const std::size_t K = cfg.steps();
  double v = 0.0;
  for (std::size_t n = 0; n < K; ++n) v += eps * b * b * cfg.dt * std::exp(-2.0 * cfg.dt * static_cast<double>(K - n));
  return v;
}

double upper_tail(double eta, double var) { return 0.5 * std::erfc(eta / std::sqrt(2.0 * var)); }

}  // namespace

TEST(Wilson, ReferenceValues) {
  auto a = wilson_interval(5, 10);
  EXPECT_NEAR(a.lo, 0.236593, 1e-6);
  EXPECT_NEAR(a.hi, 0.763407, 1e-6);
  auto z = wilson_interval(0, 10);
  EXPECT_EQ(z.lo, 0.0);
  EXPECT_NEAR(z.hi, kZ95 * kZ95 / (10 + kZ95 * kZ95), 1e-12);
  auto f = wilson_interval(10, 10);
  EXPECT_EQ(f.hi, 1.0);
  EXPECT_NEAR(f.lo, 10 / (10 + kZ95 * kZ95), 1e-12);
}

TEST(Estimate, SureAndImpossibleEvents) {
  auto grid = make_grid(4);
  auto cfg = cfg_for(4, 0.05, 0.5);
  auto G = NoiseModel::linear_constant(grid, {1.0});
  auto th0 = random_field(grid, 1);
  auto sure = coefficient_event(-std::numeric_limits<double>::infinity());
  auto e = estimate_probability(sure, th0, G, cfg, 0.1, 50, 3, Estimator::Naive);
  EXPECT_EQ(e.hits, 50u);
  EXPECT_EQ(e.p_hat, 1.0);
  ASSERT_TRUE(e.eps_log_p.has_value());
  EXPECT_EQ(*e.eps_log_p, 0.0);
  auto never = coefficient_event(std::numeric_limits<double>::infinity());
  auto z = estimate_probability(never, th0, G, cfg, 0.1, 50, 3, Estimator::Naive);
  EXPECT_EQ(z.p_hat, 0.0);
  EXPECT_FALSE(z.eps_log_p.has_value());
  EXPECT_GT(z.ci_hi, 0.0);
}

TEST(Estimate, ZeroNoiseIsDeterministicOutcome) {
  auto grid = make_grid(4);
  auto cfg = cfg_for(4, 0.05, 0.5);
  auto G = NoiseModel::additive_mode(grid, {1, 0}, 0.0);
  auto th0 = SpectralField::basis(grid, {1, 0}, 1.0);
  double x_T = std::exp(-0.5);
  auto below = estimate_probability(coefficient_event(x_T - 1e-9), th0, G, cfg, 0.3, 20, 1, Estimator::Naive);
  auto above = estimate_probability(coefficient_event(x_T + 1e-9), th0, G, cfg, 0.3, 20, 1, Estimator::Naive);
  EXPECT_EQ(below.p_hat, 1.0);
  EXPECT_EQ(above.p_hat, 0.0);
}

TEST(Estimate, NaiveMatchesGaussianTail) {
  auto grid = make_grid(1);
  auto cfg = cfg_for(1, 0.05);
  const double eps = 0.2;
  auto G = NoiseModel::additive_mode(grid, {1, 0}, 1.0);
  double var = ou_variance(eps, 1.0, cfg);
  double eta = 1.5 * std::sqrt(var);
  double exact = upper_tail(eta, var);
  auto e = estimate_probability(coefficient_event(eta), SpectralField(grid), G, cfg, eps, 20000, 17,
                                Estimator::Naive);
  double sd = std::sqrt(exact * (1 - exact) / 20000);
  EXPECT_NEAR(e.p_hat, exact, 4.0 * sd);
  EXPECT_LT(e.ci_lo, e.p_hat);
  EXPECT_GT(e.ci_hi, e.p_hat);
}

TEST(Estimate, TiltedMatchesGaussianTail) {
  // Tilt with the minimum-energy control of the scalar reach problem.
  auto grid = make_grid(1);
  auto cfg = cfg_for(1, 0.05);
  const double eps = 0.05;
  auto G = NoiseModel::additive_mode(grid, {1, 0}, 1.0);
  const double eta = 1.0;
  double var = ou_variance(eps, 1.0, cfg);
  double exact = upper_tail(eta, var);
  ASSERT_LT(exact, 1e-6);
  Control v = Control::zeros(1, 1.0, cfg.steps());
  for (std::size_t c = 0; c < v.cells(); ++c) {
    double t = 0.5 * (v.grid()[c] + v.grid()[c + 1]);
    v.cell(c)[0] = eta * 2.0 * std::exp(-(1.0 - t)) / (1.0 - std::exp(-2.0));
  }
  auto e = estimate_probability(coefficient_event(eta), SpectralField(grid), G, cfg, eps, 20000, 5,
                                Estimator::Tilted, &v);
  EXPECT_NEAR(e.p_hat / exact, 1.0, 0.05);
  EXPECT_LT(e.ci_lo, exact);
  EXPECT_GT(e.ci_hi, exact);
  EXPECT_GT(e.ess, 100.0);
  EXPECT_EQ(e.method, Estimator::Tilted);
}

TEST(Estimate, TiltedWithZeroControlEqualsNaive) {
  auto grid = make_grid(4);
  auto cfg = cfg_for(4, 0.05, 0.5);
  auto G = NoiseModel::linear_constant(grid, {1.0});
  auto th0 = random_field(grid, 2);
  auto spec = coefficient_event(th0.coefficient({1, 0}));
  auto v = Control::zeros(1, 0.5, 5);
  auto a = estimate_probability(spec, th0, G, cfg, 0.2, 300, 9, Estimator::Naive);
  auto b = estimate_probability(spec, th0, G, cfg, 0.2, 300, 9, Estimator::Tilted, &v);
  EXPECT_EQ(a.hits, b.hits);
  EXPECT_DOUBLE_EQ(a.p_hat, b.p_hat);
  EXPECT_DOUBLE_EQ(b.ess, static_cast<double>(b.hits));
}

TEST(Estimate, WorkerCountDoesNotChangeResults) {
  auto grid = make_grid(6);
  auto cfg = cfg_for(6, 0.05, 0.5);
  auto G = NoiseModel::linear_constant(grid, {1.0, 0.3});
  auto th0 = random_field(grid, 3);
  RareEventSpec spec;
  spec.observable = {ObservableKind::L2Norm, {1, 0}};
  spec.eta = l2_norm(solve_deterministic(th0, cfg).final_state);
  auto a = estimate_probability(spec, th0, G, cfg, 0.1, 97, 123, Estimator::Naive, nullptr, 1);
  auto b = estimate_probability(spec, th0, G, cfg, 0.1, 97, 123, Estimator::Naive, nullptr, 3);
  EXPECT_EQ(a.hits, b.hits);
  EXPECT_EQ(a.p_hat, b.p_hat);
  EXPECT_EQ(a.ci_lo, b.ci_lo);
  EXPECT_GT(a.hits, 0u);
  EXPECT_LT(a.hits, 97u);
}

TEST(Estimate, RejectsBadInputs) {
  auto grid = make_grid(4);
  auto cfg = cfg_for(4, 0.05, 0.5);
  auto G = NoiseModel::linear_constant(grid, {1.0});
  auto th0 = random_field(grid, 1);
  auto spec = coefficient_event(0.0);
  EXPECT_THROW(estimate_probability(spec, th0, G, cfg, 0.0, 10, 1, Estimator::Naive), ConfigError);
  EXPECT_THROW(estimate_probability(spec, th0, G, cfg, 0.1, 0, 1, Estimator::Naive), ConfigError);
  EXPECT_THROW(estimate_probability(spec, th0, G, cfg, 0.1, 10, 1, Estimator::Tilted), ConfigError);
  auto wrong = Control::zeros(2, 0.5, 5);
  EXPECT_THROW(estimate_probability(spec, th0, G, cfg, 0.1, 10, 1, Estimator::Tilted, &wrong), ConfigError);
  EXPECT_THROW(run_scaling_study(spec, th0, G, cfg, {0.1, 0.2}, 10, 1, Estimator::Naive), ConfigError);
}

TEST(ScalingFit, RecoversSyntheticLine) {
  ScalingStudy st;
  for (double eps : {0.4, 0.2, 0.1, 0.05}) {
    ScalingPoint pt;
    pt.epsilon = eps;
    pt.estimate.p_hat = std::exp((-1.3 + 0.7 * eps) / eps);
    pt.estimate.eps_log_p = -1.3 + 0.7 * eps;
    st.points.push_back(pt);
  }
  auto fit = scaling_fit(st, 1.3);
  ASSERT_TRUE(fit.informative);
  EXPECT_NEAR(fit.limit, -1.3, 1e-12);
  EXPECT_NEAR(fit.slope, 0.7, 1e-12);
  ASSERT_TRUE(fit.relative_gap.has_value());
  EXPECT_NEAR(*fit.relative_gap, 0.0, 1e-12);
}

TEST(ScalingFit, NeedsThreeInformativePoints) {
  ScalingStudy st;
  for (double eps : {0.2, 0.1, 0.05}) {
    ScalingPoint pt;
    pt.epsilon = eps;
    if (eps > 0.06) pt.estimate.eps_log_p = -1.0;
    st.points.push_back(pt);
  }
  auto fit = scaling_fit(st);
  EXPECT_FALSE(fit.informative);
  EXPECT_NE(fit.note.find("non-informative"), std::string::npos);
}

TEST(Equivalence, ZeroNoiseGapIsDeterministic) {
  // G = 0: the diffusion-only process is frozen and the small-time one decays.
  auto grid = make_grid(4);
  auto cfg = cfg_for(4, 0.05);
  auto G = NoiseModel::additive_mode(grid, {1, 0}, 0.0);
  auto th0 = SpectralField::basis(grid, {1, 0}, 1.0);
  auto rep = exponential_equivalence(th0, {0.2, 0.1}, 1e-3, 10, 1, cfg, G);
  ASSERT_EQ(rep.points.size(), 2u);
  for (const auto& pt : rep.points) {
    double gap = std::pow(1.0 - std::exp(-pt.epsilon), 2.0);
    EXPECT_NEAR(pt.mean_sup_gap, gap, 1e-12);
    EXPECT_EQ(pt.estimate.p_hat, gap > 1e-3 ? 1.0 : 0.0);
  }
  EXPECT_FALSE(rep.strictly_decreasing);
}

TEST(Equivalence, GapShrinksWithEpsilon) {
  auto grid = make_grid(6);
  auto cfg = cfg_for(6, 0.05);
  auto G = NoiseModel::additive_mode(grid, {1, 1}, 1.0);
  auto th0 = random_field(grid, 4, 1.5);
  auto rep = exponential_equivalence(th0, {0.2, 0.1, 0.05}, 1e-3, 200, 8, cfg, G);
  EXPECT_GT(rep.points[0].mean_sup_gap, rep.points[1].mean_sup_gap);
  EXPECT_GT(rep.points[1].mean_sup_gap, rep.points[2].mean_sup_gap);
  EXPECT_THROW(exponential_equivalence(th0, {0.1, 0.2}, 1e-3, 10, 8, cfg, G), ConfigError);
}

TEST(LpTail, TableShapeAndMonotonicity) {
  auto grid = make_grid(6);
  auto cfg = cfg_for(6, 0.05, 0.5);
  auto G = NoiseModel::linear_constant(grid, {1.0});
  auto th0 = random_field(grid, 5);
  const double p = 8.0;
  double base = std::pow(lp_norm(to_physical(th0), p), p);
  auto tab = lp_tail_study(th0, {0.5, 0.25}, {1.0 * base, 2.0 * base, 4.0 * base}, p, 200, 3, cfg, G);
  EXPECT_NEAR(tab.initial_lp_power, base, 1e-12 * base);
  ASSERT_EQ(tab.cells.size(), 6u);
  EXPECT_EQ(tab.cells[4].epsilon, 0.25);
  EXPECT_EQ(tab.cells[4].M, 2.0 * base);
  EXPECT_TRUE(tab.non_increasing);
  EXPECT_GE(tab.cells[0].estimate.hits, tab.cells[1].estimate.hits);
  EXPECT_THROW(lp_tail_study(th0, {0.5}, {base}, 4.0, 10, 3, cfg, G), ConfigError);
  EXPECT_THROW(lp_tail_study(th0, {0.5}, {}, p, 10, 3, cfg, G), ConfigError);
}
