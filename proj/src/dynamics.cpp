#include "sqglab/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <boost/math/quadrature/tanh_sinh.hpp>

namespace sqg {

std::string to_string(TimeScheme scheme) {
  return scheme == TimeScheme::ExponentialEuler ? "exponential-euler" : "heun-exponential";
}

TimeScheme parse_time_scheme(const std::string& name) {
  if (name == "exponential-euler") return TimeScheme::ExponentialEuler;
  if (name == "heun-exponential") return TimeScheme::HeunExponential;
  throw ConfigError("unknown time scheme '" + name + "'");
}

void DynamicsConfig::validate() const {
  std::vector<std::string> errors;
  if (!(kappa > 0.0) || !std::isfinite(kappa)) errors.push_back("kappa must be > 0");
  if (!(dt > 0.0) || !std::isfinite(dt)) errors.push_back("dt must be > 0");
  if (!(horizon >= dt) || !std::isfinite(horizon)) errors.push_back("horizon must be >= dt");
  if (resolution < 1 || resolution > WaveGrid::kMaxResolution) {
    errors.push_back("resolution out of range");
  }
  if (!std::isfinite(alpha) || alpha <= 0.0) errors.push_back("alpha must be > 0");
  if (!std::isfinite(drift_scale) || drift_scale < 0.0) errors.push_back("drift_scale must be >= 0");
  if (!errors.empty()) {
    std::string msg = "invalid dynamics config:";
    for (const auto& e : errors) msg += " " + e + ";";
    throw ConfigError(msg);
  }
}

std::size_t DynamicsConfig::steps() const {
  auto n = static_cast<long long>(std::llround(horizon / dt));
  return static_cast<std::size_t>(std::max<long long>(n, 1));
}

namespace {

std::string blowup_message(std::size_t step, double time, double l2, double ha) {
  std::ostringstream os;
  os.precision(17);
  os << "blow-up: non-finite state at step " << step << " (t = " << time
     << "); last finite |theta|_L2 = " << l2 << ", |theta|_H^alpha = " << ha;
  return os.str();
}

}  // namespace

BlowUpError::BlowUpError(std::size_t step, double time, double last_l2, double last_h_alpha)
    : std::runtime_error(blowup_message(step, time, last_l2, last_h_alpha)),
      step_(step),
      time_(time),
      last_l2_(last_l2),
      last_h_alpha_(last_h_alpha) {}

NormRecord measure(const SpectralField& theta, double alpha, const RecordOptions& options) {
  NormRecord r;
  r.l2 = l2_norm(theta);
  r.h_alpha = sobolev_norm(theta, alpha);
  r.h_delta = sobolev_norm(theta, options.delta);
  r.h_delta_alpha = sobolev_norm(theta, options.delta + alpha);
  r.h_minus_half = sobolev_norm(theta, -0.5);
  if (options.track_lp) r.lp = lp_norm(to_physical(theta), options.p);
  return r;
}

TrajectoryRecorder::TrajectoryRecorder(GridPtr grid, double alpha, RecordOptions options,
                                       std::size_t total_steps)
    : total_steps_(total_steps) {
  if (options.stride == 0) throw ConfigError("stride must be >= 1");
  if (options.track_lp && options.p < 1.0) throw ConfigError("L^p tracking needs p >= 1");
  tr_.grid = std::move(grid);
  tr_.alpha = alpha;
  tr_.options = options;
}

void TrajectoryRecorder::record(std::size_t step, double t, const SpectralField& theta) {
  if (step % tr_.options.stride != 0 && step != total_steps_) return;
  tr_.times.push_back(t);
  tr_.norms.push_back(measure(theta, tr_.alpha, tr_.options));
  if (tr_.options.keep_snapshots) tr_.snapshots.push_back(theta);
}

Trajectory TrajectoryRecorder::finish(SpectralField final_state) && {
  tr_.final_state = std::move(final_state);
  return std::move(tr_);
}

double phi1(double z) {
  if (z == 0.0) return 1.0;
  return std::expm1(z) / z;
}

double phi2(double z) {
  if (std::abs(z) < 1e-2) {
    return 0.5 + z * (1.0 / 6.0 + z * (1.0 / 24.0 + z * (1.0 / 120.0 + z / 720.0)));
  }
  return (std::expm1(z) - z) / (z * z);
}

LinearPropagator::LinearPropagator(const WaveGrid& grid, double alpha, double kappa,
                                   double drift_scale, double dt) {
  const std::size_t n = grid.size();
  decay.resize(n);
  phi1_dt.resize(n);
  phi2_dt.resize(n);
  rate.resize(n);
  auto mags = grid.magnitudes();
  for (std::size_t i = 0; i < n; ++i) {
    double L = -drift_scale * kappa * std::pow(mags[i], 2.0 * alpha);
    double z = L * dt;
    rate[i] = L;
    decay[i] = std::exp(z);
    phi1_dt[i] = dt * phi1(z);
    phi2_dt[i] = dt * phi2(z);
  }
}

SpectralField exponential_step(const LinearPropagator& lin, TimeScheme scheme,
                               const SpectralField& theta, double t, double dt, const DriftFn& drift,
                               const SpectralField* xi, StepTape* tape) {
  const std::size_t n = theta.size();
  SpectralField d0 = drift(theta, t);
  SpectralField s(theta.grid_ptr());
  for (std::size_t i = 0; i < n; ++i) {
    double a = theta[i] + (xi ? (*xi)[i] : 0.0);
    s[i] = lin.decay[i] * a + lin.phi1_dt[i] * d0[i];
  }
  if (tape) {
    tape->start = theta;
    tape->predictor = s;
  }
  if (scheme == TimeScheme::ExponentialEuler) return s;
  SpectralField d1 = drift(s, t + dt);
  for (std::size_t i = 0; i < n; ++i) s[i] += lin.phi2_dt[i] * (d1[i] - d0[i]);
  return s;
}

SpectralField transport(const SpectralField& u1, const SpectralField& u2, const SpectralField& theta) {
  PhysicalField a1 = to_physical(u1);
  PhysicalField a2 = to_physical(u2);
  PhysicalField g1 = to_physical(partial(theta, 1));
  PhysicalField g2 = to_physical(partial(theta, 2));
  PhysicalField prod(theta.grid_ptr());
  auto out = prod.values();
  auto v1 = a1.values(), v2 = a2.values(), d1 = g1.values(), d2 = g2.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = v1[i] * d1[i] + v2[i] * d2[i];
  return to_spectral(prod);
}

SpectralField nonlinear_term(const SpectralField& theta) {
  Velocity u = riesz_velocity(theta);
  return transport(u.u1, u.u2, theta);
}

SpectralField nonlinear_term_transpose(const SpectralField& theta, const SpectralField& mu) {
  Velocity u = riesz_velocity(theta);
  SpectralField out = transport(u.u1, u.u2, mu);
  out *= -1.0;
  PhysicalField m = to_physical(mu);
  for (int j = 1; j <= 2; ++j) {
    SpectralField w = project_product(m, to_physical(partial(theta, j)));
    out -= riesz_component(w, j);
  }
  return out;
}

void check_finite_state(const SpectralField& state, const SpectralField& previous,
                        std::size_t step, double t, double alpha) {
  if (state.all_finite()) return;
  throw BlowUpError(step, t, l2_norm(previous), sobolev_norm(previous, alpha));
}

namespace {

void require_same_grid(const SpectralField& theta0, const DynamicsConfig& cfg) {
  if (theta0.empty()) throw std::invalid_argument("initial field has no grid");
  if (theta0.grid().resolution() != cfg.resolution) {
    throw ConfigError("initial field resolution does not match config");
  }
  if (!theta0.all_finite()) throw std::invalid_argument("initial field is not finite");
}

void require_control(const Control& v, const NoiseModel& G, const DynamicsConfig& cfg,
                     const SpectralField& theta0) {
  if (v.dimension() != G.dimension()) {
    throw std::invalid_argument("control dimension does not match noise model");
  }
  if (std::abs(v.horizon() - cfg.horizon) > 1e-9 * cfg.horizon) {
    throw ConfigError("control horizon does not match config horizon");
  }
  if (G.grid_ptr()->resolution() != theta0.grid().resolution()) {
    throw ConfigError("noise model grid does not match state grid");
  }
}

}  // namespace

Trajectory solve_deterministic(const SpectralField& theta0, const DynamicsConfig& cfg,
                               const RecordOptions& rec) {
  cfg.validate();
  require_same_grid(theta0, cfg);
  const std::size_t steps = cfg.steps();
  LinearPropagator lin(theta0.grid(), cfg.alpha, cfg.kappa, cfg.drift_scale, cfg.dt);
  const double s = cfg.drift_scale;
  DriftFn drift = [s](const SpectralField& x, double) {
    SpectralField b = nonlinear_term(x);
    b *= -s;
    return b;
  };
  TrajectoryRecorder recorder(theta0.grid_ptr(), cfg.alpha, rec, steps);
  SpectralField theta = theta0;
  recorder.record(0, 0.0, theta);
  for (std::size_t n = 0; n < steps; ++n) {
    double t = static_cast<double>(n) * cfg.dt;
    SpectralField next = exponential_step(lin, cfg.scheme, theta, t, cfg.dt, drift);
    check_finite_state(next, theta, n + 1, t + cfg.dt, cfg.alpha);
    theta = std::move(next);
    recorder.record(n + 1, static_cast<double>(n + 1) * cfg.dt, theta);
  }
  return std::move(recorder).finish(std::move(theta));
}

Trajectory solve_skeleton(const SpectralField& theta0, const Control& v, const NoiseModel& G,
                          const DynamicsConfig& cfg, const RecordOptions& rec) {
  cfg.validate();
  require_same_grid(theta0, cfg);
  require_control(v, G, cfg, theta0);
  const std::size_t steps = cfg.steps();
  LinearPropagator lin(theta0.grid(), cfg.alpha, cfg.kappa, cfg.drift_scale, cfg.dt);
  const double s = cfg.drift_scale;
  std::span<const double> y;
  DriftFn drift = [s, &G, &y](const SpectralField& x, double) {
    SpectralField d = nonlinear_term(x);
    d *= -s;
    d += G.apply(x, y);
    return d;
  };
  TrajectoryRecorder recorder(theta0.grid_ptr(), cfg.alpha, rec, steps);
  SpectralField theta = theta0;
  recorder.record(0, 0.0, theta);
  for (std::size_t n = 0; n < steps; ++n) {
    double t = static_cast<double>(n) * cfg.dt;
    y = v.cell(v.cell_at(t + 0.5 * cfg.dt));
    SpectralField next = exponential_step(lin, cfg.scheme, theta, t, cfg.dt, drift);
    check_finite_state(next, theta, n + 1, t + cfg.dt, cfg.alpha);
    theta = std::move(next);
    recorder.record(n + 1, static_cast<double>(n + 1) * cfg.dt, theta);
  }
  return std::move(recorder).finish(std::move(theta));
}

namespace {

double bump(double tau) {
  double x = 2.0 * tau - 3.0;
  if (x <= -1.0 || x >= 1.0) return 0.0;
  return std::exp(-1.0 / (1.0 - x * x));
}

double bump_mass() {
  static const double mass = [] {
    boost::math::quadrature::tanh_sinh<double> integrator;
    return integrator.integrate([](double tau) { return bump(tau); }, 1.0, 2.0);
  }();
  return mass;
}

}  // namespace

double delay_kernel(double tau) { return bump(tau) / bump_mass(); }

const DelayQuadrature& delay_quadrature() {
  static const DelayQuadrature q = [] {
    constexpr int kNodes = 16;
    DelayQuadrature r;
    for (int i = 0; i < kNodes; ++i) {
      double tau = 1.0 + (i + 0.5) / kNodes;
      r.nodes.push_back(tau);
      r.weights.push_back(delay_kernel(tau) / kNodes);
    }
    return r;
  }();
  return q;
}

Trajectory solve_delayed_mollified(const SpectralField& theta0, double delta,
                                   const Control* v, const NoiseModel* G,
                                   const DynamicsConfig& cfg, const RecordOptions& rec) {
  cfg.validate();
  require_same_grid(theta0, cfg);
  if (!(delta > 0.0) || !std::isfinite(delta)) throw ConfigError("delta must be > 0");
  double windows = cfg.horizon / delta;
  if (std::abs(windows - std::round(windows)) > 1e-9 * std::max(1.0, windows)) {
    throw ConfigError("delta must divide the horizon");
  }
  if (cfg.dt > delta * (1.0 + 1e-12)) throw ConfigError("dt must not exceed delta");
  if ((v == nullptr) != (G == nullptr)) {
    throw std::invalid_argument("control and noise model must be given together");
  }
  if (v) require_control(*v, *G, cfg, theta0);

  const std::size_t steps = cfg.steps();
  const double dt = cfg.dt;
  LinearPropagator lin(theta0.grid(), cfg.alpha, cfg.kappa, cfg.drift_scale, dt);
  const double s = cfg.drift_scale;
  const DelayQuadrature& quad = delay_quadrature();
  std::vector<SpectralField> history;
  history.reserve(steps + 1);

  // Weighted sum of the history at t - delta * tau, zero before t = 0.
  auto delayed_average = [&](double t) {
    SpectralField acc(theta0.grid_ptr());
    for (std::size_t q = 0; q < quad.nodes.size(); ++q) {
      double r = t - delta * quad.nodes[q];
      if (r < 0.0) continue;
      double pos = r / dt;
      auto lo = static_cast<std::size_t>(std::floor(pos));
      lo = std::min(lo, history.size() - 1);
      double w = pos - static_cast<double>(lo);
      acc.axpy(quad.weights[q] * (1.0 - w), history[lo]);
      if (w > 0.0 && lo + 1 < history.size()) acc.axpy(quad.weights[q] * w, history[lo + 1]);
    }
    return riesz_velocity(poisson_mollify(acc, delta));
  };

  std::span<const double> y;
  DriftFn drift = [&](const SpectralField& x, double t) {
    Velocity u = delayed_average(t);
    SpectralField d = transport(u.u1, u.u2, x);
    d *= -s;
    if (G) d += G->apply(x, y);
    return d;
  };

  TrajectoryRecorder recorder(theta0.grid_ptr(), cfg.alpha, rec, steps);
  SpectralField theta = poisson_mollify(theta0, delta);
  history.push_back(theta);
  recorder.record(0, 0.0, theta);
  for (std::size_t n = 0; n < steps; ++n) {
    double t = static_cast<double>(n) * dt;
    if (v) y = v->cell(v->cell_at(t + 0.5 * dt));
    SpectralField next = exponential_step(lin, cfg.scheme, theta, t, dt, drift);
    check_finite_state(next, theta, n + 1, t + dt, cfg.alpha);
    theta = std::move(next);
    history.push_back(theta);
    recorder.record(n + 1, static_cast<double>(n + 1) * dt, theta);
  }
  return std::move(recorder).finish(std::move(theta));
}

double transport_exponent(double alpha, double p) {
  double denom = alpha - 0.5 - 1.0 / p;
  if (!(p >= 1.0) || !(denom > 0.0)) {
    throw std::invalid_argument("alpha - 1/2 - 1/p must be > 0 (integrability condition)");
  }
  return alpha / denom;
}

AprioriReport monitor_apriori(const Trajectory& tr, double delta, double p) {
  AprioriReport rep;
  rep.n0 = transport_exponent(tr.alpha, p);
  if (tr.options.delta != delta || tr.options.p != p || !tr.options.track_lp) {
    throw std::invalid_argument("trajectory norms were recorded for a different (delta, p)");
  }
  for (std::size_t i = 0; i < tr.stamps(); ++i) {
    const NormRecord& r = tr.norms[i];
    rep.sup_energy = std::max(rep.sup_energy, r.h_delta * r.h_delta + std::pow(r.lp, p));
    if (i == 0) continue;
    const NormRecord& q = tr.norms[i - 1];
    double h = tr.times[i] - tr.times[i - 1];
    rep.dissipation_integral +=
        0.5 * h * (r.h_delta_alpha * r.h_delta_alpha + q.h_delta_alpha * q.h_delta_alpha);
    rep.transport_functional += 0.5 * h * (std::pow(r.lp, rep.n0) + std::pow(q.lp, rep.n0));
  }
  rep.finite = std::isfinite(rep.sup_energy) && std::isfinite(rep.dissipation_integral) &&
               std::isfinite(rep.transport_functional);
  return rep;
}

}  // namespace sqg
