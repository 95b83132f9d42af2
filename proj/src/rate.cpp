#include "sqglab/rate.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace sqg {

double action(const Control& v) { return 0.5 * v.squared_norm(); }

std::string to_string(ObservableKind kind) {
  switch (kind) {
    case ObservableKind::Coefficient: return "coefficient";
    case ObservableKind::L2Norm: return "l2";
    case ObservableKind::HMinusHalfNorm: return "h-1/2";
  }
  return "?";
}

ObservableKind parse_observable(const std::string& name) {
  if (name == "coefficient") return ObservableKind::Coefficient;
  if (name == "l2") return ObservableKind::L2Norm;
  if (name == "h-1/2") return ObservableKind::HMinusHalfNorm;
  throw ConfigError("unknown observable '" + name + "'");
}

double Observable::evaluate(const SpectralField& theta) const {
  switch (kind) {
    case ObservableKind::Coefficient: return theta.coefficient(mode);
    case ObservableKind::L2Norm: return l2_norm(theta);
    case ObservableKind::HMinusHalfNorm: return sobolev_norm(theta, -0.5);
  }
  return 0.0;
}

SpectralField Observable::gradient(const SpectralField& theta) const {
  SpectralField g(theta.grid_ptr());
  if (kind == ObservableKind::Coefficient) {
    auto idx = theta.grid().index_of(mode);
    if (!idx) throw ConfigError("observable mode outside the grid");
    g[*idx] = 1.0;
    return g;
  }
  double o = evaluate(theta);
  if (o == 0.0) return g;
  auto mags = theta.grid().magnitudes();
  for (std::size_t i = 0; i < g.size(); ++i) {
    double w = kind == ObservableKind::L2Norm ? 1.0 : 1.0 / mags[i];
    g[i] = w * theta[i] / o;
  }
  return g;
}

std::string to_string(TargetKind kind) {
  switch (kind) {
    case TargetKind::AtLeast: return "at-least";
    case TargetKind::AtMost: return "at-most";
    case TargetKind::Ball: return "ball";
  }
  return "?";
}

TargetKind parse_target(const std::string& name) {
  if (name == "at-least") return TargetKind::AtLeast;
  if (name == "at-most") return TargetKind::AtMost;
  if (name == "ball") return TargetKind::Ball;
  throw ConfigError("unknown target kind '" + name + "'");
}

double Target::signed_distance(double o) const {
  switch (kind) {
    case TargetKind::AtLeast: return eta - o;
    case TargetKind::AtMost: return o - eta;
    case TargetKind::Ball: return std::abs(o - eta) - radius;
  }
  return 0.0;
}

double Target::distance(double o) const { return std::max(0.0, signed_distance(o)); }

double Target::distance_slope(double o) const {
  if (signed_distance(o) <= 0.0) return 0.0;
  switch (kind) {
    case TargetKind::AtLeast: return -1.0;
    case TargetKind::AtMost: return 1.0;
    case TargetKind::Ball: return o > eta ? 1.0 : -1.0;
  }
  return 0.0;
}

std::string to_string(SkeletonFlavor flavor) {
  return flavor == SkeletonFlavor::SmallNoise ? "small-noise" : "small-time";
}

SkeletonFlavor parse_skeleton_flavor(const std::string& name) {
  if (name == "small-noise") return SkeletonFlavor::SmallNoise;
  if (name == "small-time") return SkeletonFlavor::SmallTimeDriftFree;
  throw ConfigError("unknown skeleton flavor '" + name + "'");
}

ActionProblem::ActionProblem(SpectralField theta0_, NoiseModel G_, DynamicsConfig cfg_)
    : theta0(std::move(theta0_)), G(std::move(G_)), cfg(cfg_) {}

void ActionProblem::validate() const {
  std::vector<std::string> errors;
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    errors.emplace_back(e.what());
  }
  if (theta0.empty() || theta0.grid().resolution() != cfg.resolution) {
    errors.emplace_back("initial field resolution does not match config");
  }
  if (G.grid_ptr()->resolution() != cfg.resolution) {
    errors.emplace_back("noise model grid does not match config");
  }
  if (!std::isfinite(target.eta)) errors.emplace_back("target threshold must be finite");
  if (target.kind == TargetKind::Ball && !(target.radius >= 0.0)) {
    errors.emplace_back("ball radius must be >= 0");
  }
  if (observable.kind == ObservableKind::Coefficient && !theta0.empty() &&
      !theta0.grid().index_of(observable.mode)) {
    errors.emplace_back("observable mode outside the grid");
  }
  if (penalties.empty()) errors.emplace_back("penalty schedule is empty");
  for (std::size_t i = 0; i < penalties.size(); ++i) {
    if (!(penalties[i] > 0.0)) errors.emplace_back("penalties must be > 0");
    if (i > 0 && !(penalties[i] > penalties[i - 1])) {
      errors.emplace_back("penalty schedule must be strictly increasing");
    }
  }
  if (!(settings.gradient_tolerance > 0.0)) errors.emplace_back("gradient tolerance must be > 0");
  if (settings.max_iterations < 1) errors.emplace_back("max_iterations must be >= 1");
  if (!(settings.armijo > 0.0 && settings.armijo < 1.0)) errors.emplace_back("armijo must be in (0,1)");
  if (!(settings.backtrack > 0.0 && settings.backtrack < 1.0)) {
    errors.emplace_back("backtrack must be in (0,1)");
  }
  if (settings.memory < 1) errors.emplace_back("memory must be >= 1");
  if (!errors.empty()) {
    std::string msg = "invalid action problem:";
    for (const auto& e : errors) msg += " " + e + ";";
    throw ConfigError(msg);
  }
}

std::size_t ActionProblem::cells() const { return control_cells ? control_cells : cfg.steps(); }

Control ActionProblem::zero_control() const {
  return Control::zeros(G.dimension(), cfg.horizon, cells());
}

DynamicsConfig ActionProblem::effective_config() const {
  DynamicsConfig c = cfg;
  if (flavor == SkeletonFlavor::SmallTimeDriftFree) c.drift_scale = 0.0;
  return c;
}

namespace {

struct ForwardTape {
  std::vector<StepTape> tapes;
  std::vector<std::size_t> cell;
  SpectralField final_state;
};

struct SkeletonSystem {
  const ActionProblem& p;
  DynamicsConfig cfg;
  LinearPropagator lin;

  explicit SkeletonSystem(const ActionProblem& prob)
      : p(prob),
        cfg(prob.effective_config()),
        lin(prob.theta0.grid(), cfg.alpha, cfg.kappa, cfg.drift_scale, cfg.dt) {}

  SpectralField drift(const SpectralField& x, std::span<const double> y) const {
    SpectralField d(x.grid_ptr());
    if (cfg.drift_scale != 0.0) {
      d = nonlinear_term(x);
      d *= -cfg.drift_scale;
    }
    d += p.G.apply(x, y);
    return d;
  }

  // J_D(x)^T mu for fixed y.
  SpectralField drift_transpose(const SpectralField& x, std::span<const double> y,
                                const SpectralField& mu) const {
    SpectralField out = p.G.linearized(x, y, mu);
    if (cfg.drift_scale != 0.0) out.axpy(-cfg.drift_scale, nonlinear_term_transpose(x, mu));
    return out;
  }
};

void check_control(const ActionProblem& p, const Control& v) {
  if (v.dimension() != p.G.dimension()) throw std::invalid_argument("control dimension mismatch");
  if (std::abs(v.horizon() - p.cfg.horizon) > 1e-9 * p.cfg.horizon) {
    throw ConfigError("control horizon does not match config horizon");
  }
}

ForwardTape run_forward(const SkeletonSystem& sys, const Control& v, bool keep) {
  const ActionProblem& p = sys.p;
  check_control(p, v);
  const std::size_t steps = sys.cfg.steps();
  const double dt = sys.cfg.dt;
  ForwardTape tape;
  if (keep) {
    tape.tapes.resize(steps);
    tape.cell.resize(steps);
  }
  std::span<const double> y;
  DriftFn drift = [&sys, &y](const SpectralField& x, double) { return sys.drift(x, y); };
  SpectralField theta = p.theta0;
  for (std::size_t n = 0; n < steps; ++n) {
    double t = static_cast<double>(n) * dt;
    std::size_t c = v.cell_at(t + 0.5 * dt);
    y = v.cell(c);
    SpectralField next = exponential_step(sys.lin, sys.cfg.scheme, theta, t, dt, drift, nullptr,
                                          keep ? &tape.tapes[n] : nullptr);
    check_finite_state(next, theta, n + 1, t + dt, sys.cfg.alpha);
    if (keep) tape.cell[n] = c;
    theta = std::move(next);
  }
  tape.final_state = std::move(theta);
  return tape;
}

SpectralField hadamard(std::span<const double> w, const SpectralField& f) {
  SpectralField out = f;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= w[i];
  return out;
}

void add_to(std::span<double> acc, const std::vector<double>& x) {
  for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += x[j];
}

}  // namespace

SpectralField forward_state(const ActionProblem& p, const Control& v) {
  SkeletonSystem sys(p);
  return run_forward(sys, v, false).final_state;
}

double forward_observable(const ActionProblem& p, const Control& v) {
  return p.observable.evaluate(forward_state(p, v));
}

PenaltyEvaluation evaluate_penalty(const ActionProblem& p, const Control& v, double lambda) {
  if (!(lambda > 0.0)) throw std::invalid_argument("penalty weight must be > 0");
  SkeletonSystem sys(p);
  ForwardTape tape = run_forward(sys, v, true);
  PenaltyEvaluation ev;
  ev.action = action(v);
  ev.observable = p.observable.evaluate(tape.final_state);
  ev.distance = p.target.distance(ev.observable);
  ev.objective = ev.action + 0.5 * lambda * ev.distance * ev.distance;

  // raw[c] = dJ/dv_c; starts from the action term.
  Control raw = v;
  for (std::size_t c = 0; c < raw.cells(); ++c) {
    for (double& x : raw.cell(c)) x *= raw.width(c);
  }
  double scale = lambda * ev.distance * p.target.distance_slope(ev.observable);
  if (scale != 0.0) {
    SpectralField adj = p.observable.gradient(tape.final_state);
    adj *= scale;
    const LinearPropagator& lin = sys.lin;
    const bool heun = sys.cfg.scheme == TimeScheme::HeunExponential;
    for (std::size_t n = tape.tapes.size(); n-- > 0;) {
      const StepTape& st = tape.tapes[n];
      std::span<const double> y = v.cell(tape.cell[n]);
      std::span<double> gy = raw.cell(tape.cell[n]);
      SpectralField lam_s = adj;
      SpectralField lam_da;
      if (heun) {
        SpectralField mu = hadamard(lin.phi2_dt, adj);
        lam_s += sys.drift_transpose(st.predictor, y, mu);
        add_to(gy, p.G.apply_transpose(st.predictor, mu));
        lam_da = hadamard(lin.phi1_dt, lam_s);
        lam_da -= mu;
      } else {
        lam_da = hadamard(lin.phi1_dt, lam_s);
      }
      add_to(gy, p.G.apply_transpose(st.start, lam_da));
      adj = hadamard(lin.decay, lam_s);
      adj += sys.drift_transpose(st.start, y, lam_da);
    }
  }
  for (std::size_t c = 0; c < raw.cells(); ++c) {
    for (double& x : raw.cell(c)) x /= raw.width(c);
  }
  ev.gradient = std::move(raw);
  return ev;
}

Control gradient_action_penalty(const ActionProblem& p, const Control& v, double lambda) {
  return evaluate_penalty(p, v, lambda).gradient;
}

double analytic_rate_linear(double lambda_mode, double b, double eta, double T) {
  if (b == 0.0 || !std::isfinite(b)) throw std::invalid_argument("b must be nonzero (uncontrollable)");
  if (!(T > 0.0)) throw std::invalid_argument("T must be > 0");
  if (!(lambda_mode >= 0.0)) throw std::invalid_argument("lambda_mode must be >= 0");
  if (lambda_mode == 0.0) return eta * eta / (2.0 * b * b * T);
  return eta * eta * lambda_mode / (b * b * -std::expm1(-2.0 * lambda_mode * T));
}

namespace {

// Working variables z = v sqrt(width), in which the action is 1/2 |z|^2.
std::vector<double> to_z(const Control& v) {
  std::vector<double> z(v.values().begin(), v.values().end());
  for (std::size_t c = 0; c < v.cells(); ++c) {
    double w = std::sqrt(v.width(c));
    for (std::size_t j = 0; j < v.dimension(); ++j) z[c * v.dimension() + j] *= w;
  }
  return z;
}

Control from_z(const Control& like, const std::vector<double>& z) {
  Control v = like;
  auto vals = v.values();
  for (std::size_t c = 0; c < v.cells(); ++c) {
    double w = std::sqrt(v.width(c));
    for (std::size_t j = 0; j < v.dimension(); ++j) vals[c * v.dimension() + j] = z[c * v.dimension() + j] / w;
  }
  return v;
}

std::vector<double> grad_z(const Control& g) {
  // dJ/dz = raw / sqrt(width) = L2-gradient * sqrt(width)
  return to_z(g);
}

double dotv(const std::vector<double>& a, const std::vector<double>& b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

double normv(const std::vector<double>& a) { return std::sqrt(dotv(a, a)); }

struct StageResult {
  Control v;
  PenaltyEvaluation eval;
  bool converged = false;
};

StageResult lbfgs_stage(const ActionProblem& p, Control v, double lambda, std::vector<double>& trace) {
  const OptimizerSettings& s = p.settings;
  PenaltyEvaluation ev = evaluate_penalty(p, v, lambda);
  std::vector<double> x = to_z(v);
  std::vector<double> g = grad_z(ev.gradient);
  std::deque<std::pair<std::vector<double>, std::vector<double>>> memory;
  StageResult out;
  for (int it = 0; it < s.max_iterations; ++it) {
    double gnorm = normv(g);
    if (gnorm <= s.gradient_tolerance * std::max(1.0, std::abs(ev.objective))) {
      out.converged = true;
      break;
    }
    // Two-loop recursion.
    std::vector<double> q = g;
    std::vector<double> alpha(memory.size());
    for (std::size_t i = memory.size(); i-- > 0;) {
      const auto& [si, yi] = memory[i];
      alpha[i] = dotv(si, q) / dotv(yi, si);
      for (std::size_t k = 0; k < q.size(); ++k) q[k] -= alpha[i] * yi[k];
    }
    double gamma = 1.0;
    if (!memory.empty()) {
      const auto& [sl, yl] = memory.back();
      gamma = dotv(sl, yl) / dotv(yl, yl);
    } else {
      gamma = 1.0 / std::max(1.0, gnorm);
    }
    for (double& e : q) e *= gamma;
    for (std::size_t i = 0; i < memory.size(); ++i) {
      const auto& [si, yi] = memory[i];
      double beta = dotv(yi, q) / dotv(yi, si);
      for (std::size_t k = 0; k < q.size(); ++k) q[k] += (alpha[i] - beta) * si[k];
    }
    std::vector<double> d(q.size());
    for (std::size_t k = 0; k < q.size(); ++k) d[k] = -q[k];
    double slope = dotv(g, d);
    if (!(slope < 0.0)) {
      memory.clear();
      for (std::size_t k = 0; k < d.size(); ++k) d[k] = -g[k] / std::max(1.0, gnorm);
      slope = dotv(g, d);
    }

    double step = 1.0;
    bool accepted = false;
    std::vector<double> xn(x.size());
    PenaltyEvaluation evn;
    for (int bt = 0; bt < s.max_backtracks; ++bt) {
      for (std::size_t k = 0; k < x.size(); ++k) xn[k] = x[k] + step * d[k];
      try {
        evn = evaluate_penalty(p, from_z(v, xn), lambda);
        if (evn.objective <= ev.objective + s.armijo * step * slope) {
          accepted = true;
          break;
        }
      } catch (const BlowUpError&) {
      }
      step *= s.backtrack;
    }
    if (!accepted) {
      if (memory.empty()) break;
      memory.clear();
      continue;
    }
    std::vector<double> gn = grad_z(evn.gradient);
    std::vector<double> sk(x.size()), yk(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) {
      sk[k] = xn[k] - x[k];
      yk[k] = gn[k] - g[k];
    }
    if (dotv(sk, yk) > 1e-14 * normv(sk) * normv(yk)) {
      memory.emplace_back(std::move(sk), std::move(yk));
      if (static_cast<int>(memory.size()) > s.memory) memory.pop_front();
    }
    x = std::move(xn);
    g = std::move(gn);
    ev = std::move(evn);
    trace.push_back(ev.objective);
  }
  out.v = from_z(v, x);
  out.eval = std::move(ev);
  return out;
}

// Open-loop control of the scalar reach problem on the most controllable mode.
std::optional<Control> oracle_start(const ActionProblem& p, double o0) {
  const SpectralField& th = p.theta0;
  const WaveGrid& grid = th.grid();
  std::size_t best_mode = 0, best_dir = 0;
  double best = 0.0;
  auto consider = [&](std::size_t i) {
    SpectralField e(th.grid_ptr());
    e[i] = 1.0;
    auto col = p.G.apply_transpose(th, e);
    for (std::size_t j = 0; j < col.size(); ++j) {
      if (std::abs(col[j]) > std::abs(best)) {
        best = col[j];
        best_mode = i;
        best_dir = j;
      }
    }
  };
  if (p.observable.kind == ObservableKind::Coefficient) {
    consider(*grid.index_of(p.observable.mode));
  } else {
    for (std::size_t i = 0; i < grid.size(); ++i) consider(i);
  }
  if (best == 0.0) return std::nullopt;

  double shift = p.target.eta - o0;
  if (p.observable.kind != ObservableKind::Coefficient && th[best_mode] < 0.0) shift = -shift;

  DynamicsConfig cfg = p.effective_config();
  double lam = cfg.drift_scale * cfg.kappa * std::pow(grid.magnitudes()[best_mode], 2.0 * cfg.alpha);
  double T = cfg.horizon;
  Control v = p.zero_control();
  for (std::size_t c = 0; c < v.cells(); ++c) {
    double t = 0.5 * (v.grid()[c] + v.grid()[c + 1]);
    double k = lam == 0.0 ? 1.0 / (best * T)
                          : 2.0 * lam * std::exp(-lam * (T - t)) / (best * -std::expm1(-2.0 * lam * T));
    v.cell(c)[best_dir] = shift * k;
  }
  return v;
}

Control scaled(const Control& v, double c) {
  Control out = v;
  out *= c;
  return out;
}

}  // namespace

RateEstimate minimize_action(const ActionProblem& p) {
  p.validate();
  RateEstimate est;
  Control v = p.zero_control();
  double o0 = forward_observable(p, v);
  if (p.target.contains(o0)) {
    est.control = v;
    est.value = 0.0;
    est.observable = o0;
    est.residual = 0.0;
    est.converged = true;
    est.message = "zero control already reaches the target";
    return est;
  }

  PenaltyEvaluation ev0 = evaluate_penalty(p, v, p.penalties.front());
  double g0 = std::sqrt(ev0.gradient.squared_norm());
  if (g0 == 0.0) {
    if (auto start = oracle_start(p, o0)) {
      v = *start;
    } else {
      est.control = v;
      est.observable = o0;
      est.residual = p.target.distance(o0);
      est.message = "target is not reachable from the zero control (no controllable direction)";
      return est;
    }
  }

  bool stages_ok = true;
  for (double lambda : p.penalties) {
    StageResult r = lbfgs_stage(p, std::move(v), lambda, est.trace);
    stages_ok = r.converged;
    v = std::move(r.v);
  }

  // Rescale the control along its ray onto the target boundary.
  double o = forward_observable(p, v);
  double g1 = p.target.signed_distance(o);
  if (v.squared_norm() > 0.0 && g1 != 0.0) {
    double c0 = 1.0, c1 = g1 > 0.0 ? 1.0 + 1e-3 : 1.0 - 1e-3;
    double f0 = g1, f1 = p.target.signed_distance(forward_observable(p, scaled(v, c1)));
    double tol = 1e-14 * std::max(1.0, std::abs(p.target.eta));
    for (int it = 0; it < 60 && std::abs(f1) > tol && f1 != f0; ++it) {
      double c2 = c1 - f1 * (c1 - c0) / (f1 - f0);
      if (!std::isfinite(c2) || c2 <= 0.0) break;
      c0 = c1;
      f0 = f1;
      c1 = c2;
      f1 = p.target.signed_distance(forward_observable(p, scaled(v, c1)));
    }
    if (std::isfinite(f1) && std::max(0.0, f1) <= std::max(0.0, g1)) {
      v = scaled(v, c1);
      est.restored = true;
    }
  }

  est.control = v;
  est.value = action(v);
  est.observable = forward_observable(p, v);
  est.residual = p.target.distance(est.observable);
  est.converged = stages_ok && est.residual <= p.settings.residual_tolerance;
  est.message = est.converged ? "converged"
                : stages_ok   ? "terminal residual above tolerance"
                              : "final penalty stage did not meet the gradient tolerance";
  return est;
}

}  // namespace sqg
