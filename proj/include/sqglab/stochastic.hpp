#pragma once

// Exponential Euler-Maruyama integration of
//   d theta = -s (A_alpha theta + B(theta)) dt + sqrt(eps) G(theta) dW
// in three flavours, plus the control-shifted process with its discrete
// likelihood ratio.

#include <span>
#include <string>

#include "sqglab/control.hpp"
#include "sqglab/dynamics.hpp"
#include "sqglab/noise.hpp"

namespace sqg {

enum class Flavor {
  SmallNoise,     // drift scale from the config (1 for the standard equation)
  SmallTime,      // drift scale eps
  DiffusionOnly,  // no drift at all
};

std::string to_string(Flavor flavor);
Flavor parse_flavor(const std::string& name);

class StochasticStepper {
 public:
  // The config's own drift_scale is used for SmallNoise and overridden otherwise.
  StochasticStepper(const NoiseModel& G, const DynamicsConfig& cfg, double epsilon, Flavor flavor);

  std::size_t steps() const { return steps_; }
  double dt() const { return cfg_.dt; }
  double epsilon() const { return epsilon_; }
  const DynamicsConfig& config() const { return cfg_; }

  // One step from t_n = n dt with Wiener increment dW.  A non-empty tilt v
  // shifts the increment by v dt / sqrt(eps) and adds the step's log
  // likelihood ratio to *log_weight.
  SpectralField step(const SpectralField& theta, std::size_t n, std::span<const double> dW,
                     std::span<const double> tilt = {}, double* log_weight = nullptr) const;

 private:
  const NoiseModel& G_;
  DynamicsConfig cfg_;
  double epsilon_;
  double sqrt_eps_;
  Flavor flavor_;
  std::size_t steps_;
  LinearPropagator lin_;
};

void check_path(const NoisePath& path, const NoiseModel& G, const DynamicsConfig& cfg);

Trajectory simulate_small_noise(const SpectralField& theta0, double epsilon, const NoiseModel& G,
                                const DynamicsConfig& cfg, const NoisePath& path,
                                const RecordOptions& rec = {});
Trajectory simulate_small_time(const SpectralField& theta0, double epsilon, const NoiseModel& G,
                               const DynamicsConfig& cfg, const NoisePath& path,
                               const RecordOptions& rec = {});
// Only dt, horizon, resolution and alpha (for recorded norms) are read from cfg.
Trajectory simulate_diffusion_only(const SpectralField& theta0, double epsilon, const NoiseModel& G,
                                   const DynamicsConfig& cfg, const NoisePath& path,
                                   const RecordOptions& rec = {});

struct TiltedRun {
  Trajectory trajectory;
  double log_weight = 0.0;
};

// Small-noise flavour driven by dW + v dt / sqrt(eps); requires eps > 0.
TiltedRun simulate_tilted(const SpectralField& theta0, double epsilon, const NoiseModel& G,
                          const Control& v, const DynamicsConfig& cfg, const NoisePath& path,
                          const RecordOptions& rec = {}, Flavor flavor = Flavor::SmallNoise);

}  // namespace sqg
