#include "sqglab/stochastic.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace sqg {

std::string to_string(Flavor flavor) {
  switch (flavor) {
    case Flavor::SmallNoise: return "small-noise";
    case Flavor::SmallTime: return "small-time";
    case Flavor::DiffusionOnly: return "diffusion-only";
  }
  return "?";
}

Flavor parse_flavor(const std::string& name) {
  if (name == "small-noise") return Flavor::SmallNoise;
  if (name == "small-time") return Flavor::SmallTime;
  if (name == "diffusion-only") return Flavor::DiffusionOnly;
  throw ConfigError("unknown process flavor '" + name + "'");
}

namespace {

DynamicsConfig flavored(DynamicsConfig cfg, double epsilon, Flavor flavor) {
  if (flavor == Flavor::SmallTime) cfg.drift_scale = epsilon;
  if (flavor == Flavor::DiffusionOnly) cfg.drift_scale = 0.0;
  return cfg;
}

}  // namespace

StochasticStepper::StochasticStepper(const NoiseModel& G, const DynamicsConfig& cfg, double epsilon,
                                     Flavor flavor)
    : G_(G),
      cfg_(flavored(cfg, epsilon, flavor)),
      epsilon_(epsilon),
      sqrt_eps_(std::sqrt(epsilon)),
      flavor_(flavor),
      steps_(cfg.steps()),
      lin_(*G.grid_ptr(), cfg_.alpha, cfg_.kappa, cfg_.drift_scale, cfg_.dt) {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw ConfigError("epsilon must be >= 0");
  cfg_.validate();
  if (G.grid_ptr()->resolution() != cfg_.resolution) {
    throw ConfigError("noise model grid does not match config resolution");
  }
}

SpectralField StochasticStepper::step(const SpectralField& theta, std::size_t n,
                                      std::span<const double> dW, std::span<const double> tilt,
                                      double* log_weight) const {
  const std::size_t m = G_.dimension();
  if (dW.size() != m) throw std::invalid_argument("increment dimension mismatch");
  const bool tilted = !tilt.empty();
  if (tilted && tilt.size() != m) throw std::invalid_argument("tilt dimension mismatch");
  if (tilted && !(epsilon_ > 0.0)) throw ConfigError("tilted sampling needs epsilon > 0");
  const double dt = cfg_.dt;

  SpectralField xi;
  if (epsilon_ > 0.0 || tilted) {
    std::vector<double> w(m);
    for (std::size_t j = 0; j < m; ++j) w[j] = sqrt_eps_ * dW[j] + (tilted ? tilt[j] * dt : 0.0);
    xi = G_.apply(theta, w);
  }
  if (tilted && log_weight) {
    double vw = 0.0, vv = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      vw += tilt[j] * dW[j];
      vv += tilt[j] * tilt[j];
    }
    *log_weight += -vw / sqrt_eps_ - 0.5 * vv * dt / epsilon_;
  }

  const double t = static_cast<double>(n) * dt;
  SpectralField next;
  if (flavor_ == Flavor::DiffusionOnly) {
    next = theta;
    if (!xi.empty()) next += xi;
  } else {
    const double s = cfg_.drift_scale;
    DriftFn drift = [s](const SpectralField& x, double) {
      SpectralField b = nonlinear_term(x);
      b *= -s;
      return b;
    };
    next = exponential_step(lin_, cfg_.scheme, theta, t, dt, drift, xi.empty() ? nullptr : &xi);
  }
  check_finite_state(next, theta, n + 1, t + dt, cfg_.alpha);
  return next;
}

void check_path(const NoisePath& path, const NoiseModel& G, const DynamicsConfig& cfg) {
  if (path.dimension != G.dimension()) {
    throw std::invalid_argument("noise path dimension does not match noise model");
  }
  if (path.steps != cfg.steps()) throw std::invalid_argument("noise path step count mismatch");
  if (std::abs(path.dt - cfg.dt) > 1e-14 * cfg.dt) {
    throw std::invalid_argument("noise path dt does not match config dt");
  }
}

namespace {

TiltedRun run(const SpectralField& theta0, double epsilon, const NoiseModel& G, const Control* v,
              const DynamicsConfig& cfg, const NoisePath& path, const RecordOptions& rec,
              Flavor flavor) {
  StochasticStepper stepper(G, cfg, epsilon, flavor);
  check_path(path, G, cfg);
  if (theta0.empty() || theta0.grid().resolution() != cfg.resolution) {
    throw ConfigError("initial field resolution does not match config");
  }
  if (v) {
    if (v->dimension() != G.dimension()) throw std::invalid_argument("control dimension mismatch");
    if (std::abs(v->horizon() - cfg.horizon) > 1e-9 * cfg.horizon) {
      throw ConfigError("control horizon does not match config horizon");
    }
  }
  const std::size_t steps = stepper.steps();
  TrajectoryRecorder recorder(theta0.grid_ptr(), cfg.alpha, rec, steps);
  TiltedRun out;
  SpectralField theta = theta0;
  recorder.record(0, 0.0, theta);
  for (std::size_t n = 0; n < steps; ++n) {
    std::span<const double> tilt;
    if (v) tilt = v->cell(v->cell_at((static_cast<double>(n) + 0.5) * cfg.dt));
    theta = stepper.step(theta, n, path.at(n), tilt, &out.log_weight);
    recorder.record(n + 1, static_cast<double>(n + 1) * cfg.dt, theta);
  }
  out.trajectory = std::move(recorder).finish(std::move(theta));
  return out;
}

}  // namespace

Trajectory simulate_small_noise(const SpectralField& theta0, double epsilon, const NoiseModel& G,
                                const DynamicsConfig& cfg, const NoisePath& path,
                                const RecordOptions& rec) {
  return run(theta0, epsilon, G, nullptr, cfg, path, rec, Flavor::SmallNoise).trajectory;
}

Trajectory simulate_small_time(const SpectralField& theta0, double epsilon, const NoiseModel& G,
                               const DynamicsConfig& cfg, const NoisePath& path,
                               const RecordOptions& rec) {
  return run(theta0, epsilon, G, nullptr, cfg, path, rec, Flavor::SmallTime).trajectory;
}

Trajectory simulate_diffusion_only(const SpectralField& theta0, double epsilon, const NoiseModel& G,
                                   const DynamicsConfig& cfg, const NoisePath& path,
                                   const RecordOptions& rec) {
  return run(theta0, epsilon, G, nullptr, cfg, path, rec, Flavor::DiffusionOnly).trajectory;
}

TiltedRun simulate_tilted(const SpectralField& theta0, double epsilon, const NoiseModel& G,
                          const Control& v, const DynamicsConfig& cfg, const NoisePath& path,
                          const RecordOptions& rec, Flavor flavor) {
  if (!(epsilon > 0.0)) throw ConfigError("tilted sampling needs epsilon > 0");
  return run(theta0, epsilon, G, &v, cfg, path, rec, flavor);
}

}  // namespace sqg
