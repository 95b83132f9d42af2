#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "sqglab/dynamics.hpp"
#include "test_util.hpp"

using namespace sqg;
using sqg::testing::random_field;
using sqg::testing::rel_diff;

namespace {

constexpr double kPi = std::numbers::pi;

// Brute-force oracle: evaluates theta, R-perp theta and grad theta by direct
// trigonometric sums on a dense grid, then projects u . grad theta onto every
// retained basis function by quadrature.
SpectralField transport_oracle(const SpectralField& th, int dense) {
  const WaveGrid& g = th.grid();
  const double norm = std::sqrt(2.0) * kPi;
  auto u = riesz_velocity(th);
  SpectralField out(th.grid_ptr());
  std::vector<double> prod(static_cast<std::size_t>(dense) * dense);
  for (int a = 0; a < dense; ++a) {
    for (int b = 0; b < dense; ++b) {
      double x1 = 2 * kPi * a / dense, x2 = 2 * kPi * b / dense;
      double u1 = 0, u2 = 0, d1 = 0, d2 = 0;
      for (std::size_t i = 0; i < g.size(); ++i) {
        auto k = g.wavevector(i);
        double ph = k.k1 * x1 + k.k2 * x2;
        bool up = i < g.upper_count();
        double e = (up ? std::sin(ph) : std::cos(ph)) / norm;
        double de = (up ? std::cos(ph) : -std::sin(ph)) / norm;
        u1 += u.u1[i] * e;
        u2 += u.u2[i] * e;
        d1 += th[i] * k.k1 * de;
        d2 += th[i] * k.k2 * de;
      }
      prod[static_cast<std::size_t>(a) * dense + b] = u1 * d1 + u2 * d2;
    }
  }
  const double cell = 4 * kPi * kPi / (dense * dense);
  for (std::size_t i = 0; i < g.size(); ++i) {
    auto k = g.wavevector(i);
    bool up = i < g.upper_count();
    double acc = 0;
    for (int a = 0; a < dense; ++a) {
      for (int b = 0; b < dense; ++b) {
        double ph = k.k1 * 2 * kPi * a / dense + k.k2 * 2 * kPi * b / dense;
        acc += prod[static_cast<std::size_t>(a) * dense + b] * (up ? std::sin(ph) : std::cos(ph)) / norm;
      }
    }
    out[i] = acc * cell;
  }
  return out;
}

DynamicsConfig config(int N, double dt, double T) {
  DynamicsConfig c;
  c.resolution = N;
  c.dt = dt;
  c.horizon = T;
  return c;
}

}  // namespace

TEST(NonlinearTerm, SingleModeIsZero) {
  auto g = make_grid(6);
  for (Wavevector k : {Wavevector{1, 0}, {2, 3}, {-1, -4}, {0, 5}}) {
    auto b = nonlinear_term(SpectralField::basis(g, k, 2.5));
    EXPECT_LT(l2_norm(b), 1e-13);
  }
}

TEST(NonlinearTerm, SinePairMatchesQuadratureOracle) {
  auto g = make_grid(4);
  const double c = std::sqrt(2.0) * kPi;
  auto th = SpectralField::basis(g, {1, 0}, c) + SpectralField::basis(g, {0, 1}, c);
  auto b = nonlinear_term(th);
  auto ref = transport_oracle(th, 40);
  EXPECT_LT(l2_norm(b - ref), 1e-10);
}

TEST(NonlinearTerm, GenericFieldMatchesQuadratureOracle) {
  auto g = make_grid(4);
  const double c = std::sqrt(2.0) * kPi;
  auto th = SpectralField::basis(g, {1, 0}, c) + SpectralField::basis(g, {0, -2}, c) +
            SpectralField::basis(g, {1, 1}, 0.5 * c);
  auto b = nonlinear_term(th);
  auto ref = transport_oracle(th, 40);
  EXPECT_GT(l2_norm(ref), 0.1);
  EXPECT_LT(l2_norm(b - ref), 1e-10 * l2_norm(ref));
}

TEST(NonlinearTerm, OrthogonalToTheta) {
  for (int N : {8, 16, 32}) {
    auto g = make_grid(N);
    for (std::uint64_t s = 0; s < 10; ++s) {
      auto th = random_field(g, 1000 * N + s, 0.8);
      auto b = nonlinear_term(th);
      EXPECT_LE(std::abs(dot(b, th)), 1e-10 * l2_norm(b) * l2_norm(th));
    }
  }
}

TEST(NonlinearTerm, SkewSymmetryWithSharedVelocity) {
  auto g = make_grid(16);
  auto w = random_field(g, 5);
  auto th = random_field(g, 6), ph = random_field(g, 7);
  auto u = riesz_velocity(w);
  double lhs = dot(transport(u.u1, u.u2, th), ph);
  double rhs = -dot(transport(u.u1, u.u2, ph), th);
  EXPECT_NEAR(lhs, rhs, 1e-10 * std::abs(lhs));
}

TEST(NonlinearTerm, InverseLambdaCancellation) {
  auto g = make_grid(16);
  for (std::uint64_t s = 0; s < 5; ++s) {
    auto a = random_field(g, 50 + s), b = random_field(g, 60 + s);
    auto ua = riesz_velocity(a), ub = riesz_velocity(b);
    auto d = transport(ua.u1 - ub.u1, ua.u2 - ub.u2, a);
    auto w = apply_lambda_power(a - b, -1.0);
    EXPECT_LE(std::abs(dot(d, w)), 1e-10 * l2_norm(d) * l2_norm(w));
  }
}

TEST(NonlinearTerm, TransposeMatchesDirectionalDerivative) {
  auto g = make_grid(8);
  auto th = random_field(g, 1), h = random_field(g, 2), mu = random_field(g, 3);
  // B is quadratic, so the central difference is exact up to rounding.
  auto dB = nonlinear_term(th + h) - nonlinear_term(th - h);
  dB *= 0.5;
  double lhs = dot(mu, dB);
  double rhs = dot(nonlinear_term_transpose(th, mu), h);
  EXPECT_NEAR(lhs, rhs, 1e-11 * std::abs(lhs));
}

TEST(PhiFunctions, SeriesAndClosedFormAgree) {
  for (double z : {-1e-2 * (1 - 1e-12), -1.0000001e-2, -0.5, -1e-8, 0.0}) {
    double ref1 = z == 0.0 ? 1.0 : std::expm1(z) / z;
    EXPECT_NEAR(phi1(z), ref1, 1e-15);
  }
  EXPECT_NEAR(phi2(-0.00999999), phi2(-0.01000001), 1e-8);
  EXPECT_DOUBLE_EQ(phi2(0.0), 0.5);
  EXPECT_NEAR(phi2(-2.0), (std::exp(-2.0) - 1 + 2) / 4, 1e-15);
}

TEST(DynamicsConfig, Validation) {
  auto c = config(8, 0.01, 1.0);
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.steps(), 100u);
  auto bad = c;
  bad.kappa = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = c;
  bad.dt = -1;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = c;
  bad.horizon = 0.001;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = c;
  bad.resolution = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = c;
  bad.alpha = 0.4;
  EXPECT_NO_THROW(bad.validate());
  EXPECT_TRUE(bad.outside_subcritical());
  EXPECT_FALSE(c.outside_subcritical());
  EXPECT_EQ(parse_time_scheme(to_string(TimeScheme::ExponentialEuler)), TimeScheme::ExponentialEuler);
  EXPECT_THROW(parse_time_scheme("rk4"), ConfigError);
}

TEST(SolveDeterministic, SingleModeExactDecay) {
  for (auto scheme : {TimeScheme::ExponentialEuler, TimeScheme::HeunExponential}) {
    auto cfg = config(6, 0.05, 2.0);
    cfg.scheme = scheme;
    cfg.kappa = 0.7;
    cfg.drift_scale = 0.3;
    auto g = make_grid(6);
    for (Wavevector k : {Wavevector{1, 0}, {2, -1}}) {
      auto th0 = SpectralField::basis(g, k);
      auto tr = solve_deterministic(th0, cfg);
      double lam = cfg.drift_scale * cfg.kappa * std::pow(k.k1 * k.k1 + k.k2 * k.k2, cfg.alpha);
      for (std::size_t i = 0; i < tr.stamps(); ++i) {
        EXPECT_NEAR(tr.snapshots[i].coefficient(k), std::exp(-lam * tr.times[i]), 1e-8);
      }
      EXPECT_NEAR(tr.times.back(), cfg.horizon, cfg.dt);
    }
  }
}

TEST(SolveDeterministic, ZeroStaysZero) {
  auto g = make_grid(8);
  auto tr = solve_deterministic(SpectralField(g), config(8, 0.1, 1.0));
  for (const auto& s : tr.snapshots) EXPECT_EQ(l2_norm(s), 0.0);
}

TEST(SolveDeterministic, NormsNonIncreasingAndConsistent) {
  auto g = make_grid(16);
  auto th0 = random_field(g, 77, 1.5, 2.0);
  RecordOptions rec;
  rec.stride = 3;
  rec.delta = 0.8;
  rec.p = 6.0;
  auto tr = solve_deterministic(th0, config(16, 0.01, 0.5), rec);
  ASSERT_EQ(tr.stamps(), tr.snapshots.size());
  EXPECT_DOUBLE_EQ(tr.times.back(), 0.5);
  for (std::size_t i = 0; i < tr.stamps(); ++i) {
    if (i > 0) {
      EXPECT_LT(tr.times[i - 1], tr.times[i]);
      EXPECT_LE(tr.norms[i].l2, tr.norms[i - 1].l2 * (1 + 1e-12));
    }
    NormRecord r = measure(tr.snapshots[i], tr.alpha, rec);
    EXPECT_NEAR(r.l2, tr.norms[i].l2, 1e-10 * r.l2);
    EXPECT_NEAR(r.h_alpha, tr.norms[i].h_alpha, 1e-10 * r.h_alpha);
    EXPECT_NEAR(r.h_delta, tr.norms[i].h_delta, 1e-10 * r.h_delta);
    EXPECT_NEAR(r.h_minus_half, tr.norms[i].h_minus_half, 1e-10 * r.h_minus_half);
    EXPECT_NEAR(r.lp, tr.norms[i].lp, 1e-10 * r.lp);
    EXPECT_EQ(tr.snapshots[i].grid_ptr(), g);
  }
  EXPECT_EQ(tr.final_state, tr.snapshots.back());
}

TEST(SolveDeterministic, SelfConvergenceAtSecondOrder) {
  auto g = make_grid(16);
  auto th0 = random_field(g, 78, 1.5, 3.0);
  std::vector<SpectralField> ends;
  for (double dt : {0.04, 0.02, 0.01, 0.005}) {
    RecordOptions rec;
    rec.keep_snapshots = false;
    ends.push_back(solve_deterministic(th0, config(16, dt, 0.4), rec).final_state);
  }
  double e1 = l2_norm(ends[0] - ends[1]);
  double e2 = l2_norm(ends[1] - ends[2]);
  double e3 = l2_norm(ends[2] - ends[3]);
  EXPECT_GT(e1 / e2, 3.0);
  EXPECT_GT(e2 / e3, 3.5);
}

TEST(SolveDeterministic, BlowUpIsReported) {
  auto g = make_grid(16);
  auto th0 = random_field(g, 79, 0.0, 1e3);
  auto cfg = config(16, 1.0, 200.0);
  cfg.alpha = 0.2;
  cfg.kappa = 1e-3;
  cfg.scheme = TimeScheme::ExponentialEuler;
  try {
    solve_deterministic(th0, cfg);
    FAIL() << "expected blow-up";
  } catch (const BlowUpError& e) {
    EXPECT_GT(e.step(), 0u);
    EXPECT_FALSE(std::isnan(e.last_l2()));
    EXPECT_NE(std::string(e.what()).find("step"), std::string::npos);
  }
}

TEST(SolveDeterministic, RejectsMismatchedResolution) {
  auto g = make_grid(8);
  EXPECT_THROW(solve_deterministic(SpectralField(g), config(16, 0.1, 1.0)), ConfigError);
}

TEST(SolveSkeleton, ZeroControlEqualsDeterministic) {
  auto g = make_grid(12);
  auto th0 = random_field(g, 80, 1.2, 2.0);
  auto cfg = config(12, 0.02, 0.6);
  auto G = NoiseModel::linear_constant(g, {0.5, -0.3});
  auto v = Control::zeros(2, 0.6, 7);
  auto a = solve_skeleton(th0, v, G, cfg);
  auto b = solve_deterministic(th0, cfg);
  ASSERT_EQ(a.stamps(), b.stamps());
  for (std::size_t i = 0; i < a.stamps(); ++i) EXPECT_LE(rel_diff(a.snapshots[i], b.snapshots[i]), 1e-12);
}

TEST(SolveSkeleton, ScalarVariationOfConstants) {
  auto g = make_grid(4);
  Wavevector k{1, 1};
  const double b = 0.8, vbar = 1.7, x0 = 0.3;
  auto G = NoiseModel::additive_mode(g, k, b);
  auto cfg = config(4, 0.01, 1.5);
  cfg.kappa = 0.6;
  auto v = Control::constant(1, 1.5, 10, std::vector<double>{vbar});
  auto tr = solve_skeleton(SpectralField::basis(g, k, x0), v, G, cfg);
  double lam = cfg.kappa * std::pow(2.0, cfg.alpha);
  for (std::size_t i = 0; i < tr.stamps(); ++i) {
    double t = tr.times[i];
    double ref = std::exp(-lam * t) * x0 + b * vbar * -std::expm1(-lam * t) / lam;
    EXPECT_NEAR(tr.snapshots[i].coefficient(k), ref, 1e-8);
  }
}

TEST(SolveSkeleton, AprioriFunctionalsFinite) {
  auto g = make_grid(8);
  auto th0 = random_field(g, 81, 1.5);
  auto G = NoiseModel::linear_constant(g, {0.4});
  auto cfg = config(8, 0.02, 0.4);
  auto v = Control::constant(1, 0.4, 4, std::vector<double>{1.0});
  RecordOptions rec;
  rec.delta = 0.6;
  rec.p = 8.0;
  auto tr = solve_skeleton(th0, v, G, cfg, rec);
  auto rep = monitor_apriori(tr, 0.6, 8.0);
  EXPECT_TRUE(rep.finite);
  EXPECT_GT(rep.sup_energy, 0.0);
  EXPECT_GT(rep.dissipation_integral, 0.0);
  EXPECT_DOUBLE_EQ(rep.n0, 6.0);
}

TEST(SolveSkeleton, RejectsHorizonMismatch) {
  auto g = make_grid(4);
  auto G = NoiseModel::additive_mode(g, {1, 0}, 1.0);
  auto v = Control::zeros(1, 2.0, 4);
  EXPECT_THROW(solve_skeleton(SpectralField(g), v, G, config(4, 0.1, 1.0)), ConfigError);
  auto w = Control::zeros(2, 1.0, 4);
  EXPECT_THROW(solve_skeleton(SpectralField(g), w, G, config(4, 0.1, 1.0)), std::invalid_argument);
}

TEST(DelayKernel, NormalizedBumpOnOneTwo) {
  EXPECT_EQ(delay_kernel(1.0), 0.0);
  EXPECT_EQ(delay_kernel(2.0), 0.0);
  EXPECT_EQ(delay_kernel(0.5), 0.0);
  EXPECT_GT(delay_kernel(1.5), 0.0);
  // Independent composite Simpson integration.
  const int n = 20000;
  double acc = 0.0;
  for (int i = 0; i <= n; ++i) {
    double w = (i == 0 || i == n) ? 1 : (i % 2 ? 4 : 2);
    acc += w * delay_kernel(1.0 + static_cast<double>(i) / n);
  }
  EXPECT_NEAR(acc / (3.0 * n), 1.0, 1e-10);
  const auto& q = delay_quadrature();
  ASSERT_EQ(q.nodes.size(), 16u);
  double sum = 0.0;
  for (double w : q.weights) sum += w;
  // 16-point midpoint rule on the bump: about 2e-4 off unit mass
  EXPECT_NEAR(sum, 1.0, 5e-4);
}

TEST(SolveDelayed, FirstWindowIsPureDecayOfMollifiedDatum) {
  auto g = make_grid(8);
  auto th0 = random_field(g, 82, 1.0);
  const double delta = 0.2;
  auto cfg = config(8, 0.02, 0.6);
  auto tr = solve_delayed_mollified(th0, delta, nullptr, nullptr, cfg);
  LinearPropagator lin(*g, cfg.alpha, cfg.kappa, 1.0, cfg.dt);
  SpectralField x = poisson_mollify(th0, delta);
  EXPECT_LE(l2_norm(x), l2_norm(th0));
  for (std::size_t n = 0; n * cfg.dt <= delta + 1e-12; ++n) {
    EXPECT_LT(rel_diff(tr.snapshots[n], x), 1e-14) << n;
    for (std::size_t i = 0; i < x.size(); ++i) x[i] *= lin.decay[i];
  }
  // After the first window the delayed velocity is active.
  auto det = solve_deterministic(poisson_mollify(th0, delta), cfg);
  EXPECT_GT(rel_diff(tr.final_state, det.final_state), 1e-8);
}

TEST(SolveDelayed, SingleModeDecaysExactly) {
  auto g = make_grid(6);
  auto th0 = SpectralField::basis(g, {2, 1});
  auto cfg = config(6, 0.05, 1.0);
  auto tr = solve_delayed_mollified(th0, 0.25, nullptr, nullptr, cfg);
  double lam = std::pow(5.0, cfg.alpha);
  EXPECT_NEAR(tr.final_state.coefficient({2, 1}), std::exp(-0.25 * std::sqrt(5.0)) * std::exp(-lam), 1e-8);
}

TEST(SolveDelayed, ApproachesMainSolverAsDeltaShrinks) {
  auto g = make_grid(8);
  auto th0 = random_field(g, 83, 1.5, 3.0);
  auto cfg = config(8, 0.0125, 1.0);
  auto det = solve_deterministic(th0, cfg);
  double prev = INFINITY;
  for (double delta : {0.2, 0.1, 0.05}) {
    auto tr = solve_delayed_mollified(th0, delta, nullptr, nullptr, cfg);
    double sup = 0.0;
    for (std::size_t i = 0; i < tr.stamps(); ++i) sup = std::max(sup, l2_norm(tr.snapshots[i] - det.snapshots[i]));
    EXPECT_LT(sup, prev) << delta;
    prev = sup;
  }
}

TEST(SolveDelayed, Preconditions) {
  auto g = make_grid(4);
  auto cfg = config(4, 0.01, 1.0);
  SpectralField z(g);
  EXPECT_THROW(solve_delayed_mollified(z, 0.0, nullptr, nullptr, cfg), ConfigError);
  EXPECT_THROW(solve_delayed_mollified(z, -0.1, nullptr, nullptr, cfg), ConfigError);
  EXPECT_THROW(solve_delayed_mollified(z, 0.3, nullptr, nullptr, cfg), ConfigError);
  auto coarse = config(4, 0.5, 1.0);
  EXPECT_THROW(solve_delayed_mollified(z, 0.25, nullptr, nullptr, coarse), ConfigError);
}

TEST(MonitorApriori, Examples) {
  EXPECT_DOUBLE_EQ(transport_exponent(0.75, 8.0), 6.0);
  EXPECT_THROW(transport_exponent(0.75, 4.0), std::invalid_argument);
  auto g = make_grid(4);
  RecordOptions rec;
  rec.delta = 0.5;
  rec.p = 8.0;
  auto tr = solve_deterministic(SpectralField(g), config(4, 0.1, 1.0), rec);
  auto rep = monitor_apriori(tr, 0.5, 8.0);
  EXPECT_EQ(rep.sup_energy, 0.0);
  EXPECT_EQ(rep.dissipation_integral, 0.0);
  EXPECT_EQ(rep.transport_functional, 0.0);
  EXPECT_THROW(monitor_apriori(tr, 0.5, 4.0), std::invalid_argument);
  EXPECT_THROW(monitor_apriori(tr, 0.7, 8.0), std::invalid_argument);
}

TEST(MonitorApriori, TrapezoidOnKnownDecay) {
  auto g = make_grid(4);
  auto th0 = SpectralField::basis(g, {1, 0});
  RecordOptions rec;
  rec.delta = 0.5;
  rec.p = 8.0;
  auto cfg = config(4, 0.001, 1.0);
  auto tr = solve_deterministic(th0, cfg, rec);
  auto rep = monitor_apriori(tr, 0.5, 8.0);
  // |Lambda^{delta+alpha} theta|^2 = exp(-2t) for |k| = 1.
  EXPECT_NEAR(rep.dissipation_integral, -std::expm1(-2.0) / 2.0, 1e-6);
  double lp8 = tr.norms[0].lp;
  EXPECT_NEAR(rep.sup_energy, 1.0 + std::pow(lp8, 8.0), 1e-12);
}
