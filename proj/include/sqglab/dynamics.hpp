#pragma once

// Deterministic transport-dissipation dynamics
//   d theta / dt = -s (A_alpha theta + B(theta)) + G(theta) v(t),
// A_alpha = kappa Lambda^{2 alpha}, B(theta) = u . grad theta, u = R-perp theta,
// integrated with exponential time differencing (exact per-mode propagator).

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sqglab/control.hpp"
#include "sqglab/noise.hpp"
#include "sqglab/spectral.hpp"

namespace sqg {

enum class TimeScheme { ExponentialEuler, HeunExponential };

std::string to_string(TimeScheme scheme);
TimeScheme parse_time_scheme(const std::string& name);

struct DynamicsConfig {
  double alpha = 0.75;
  double kappa = 1.0;
  // Multiplies both A_alpha and the transport term.
  double drift_scale = 1.0;
  int resolution = 16;
  double dt = 0.01;
  double horizon = 1.0;
  TimeScheme scheme = TimeScheme::HeunExponential;

  // Throws ConfigError on kappa <= 0, dt <= 0, T < dt, N < 1.
  void validate() const;
  bool outside_subcritical() const { return alpha <= 0.5; }
  std::size_t steps() const;

  friend bool operator==(const DynamicsConfig&, const DynamicsConfig&) = default;
};

class BlowUpError : public std::runtime_error {
 public:
  BlowUpError(std::size_t step, double time, double last_l2, double last_h_alpha);
  std::size_t step() const { return step_; }
  double time() const { return time_; }
  double last_l2() const { return last_l2_; }
  double last_h_alpha() const { return last_h_alpha_; }

 private:
  std::size_t step_;
  double time_;
  double last_l2_;
  double last_h_alpha_;
};

struct NormRecord {
  double l2 = 0.0;
  double h_alpha = 0.0;
  double h_delta = 0.0;
  double h_delta_alpha = 0.0;
  double h_minus_half = 0.0;
  double lp = 0.0;  // ||theta||_{L^p}; zero when L^p tracking is off
};

struct RecordOptions {
  std::size_t stride = 1;
  bool keep_snapshots = true;
  double delta = 1.0;
  double p = 4.0;
  bool track_lp = true;
};

struct Trajectory {
  GridPtr grid;
  double alpha = 0.0;
  RecordOptions options;
  std::vector<double> times;
  std::vector<SpectralField> snapshots;  // empty unless options.keep_snapshots
  std::vector<NormRecord> norms;
  SpectralField final_state;

  std::size_t stamps() const { return times.size(); }
};

NormRecord measure(const SpectralField& theta, double alpha, const RecordOptions& options);

// Collects stamps every `stride` steps plus the final step.
class TrajectoryRecorder {
 public:
  TrajectoryRecorder(GridPtr grid, double alpha, RecordOptions options, std::size_t total_steps);
  void record(std::size_t step, double t, const SpectralField& theta);
  Trajectory finish(SpectralField final_state) &&;

 private:
  Trajectory tr_;
  std::size_t total_steps_;
};

// Per-mode factors of the linear part L_k = -s kappa |k|^{2 alpha}:
// E = exp(L dt), dt phi1(L dt), dt phi2(L dt).
struct LinearPropagator {
  LinearPropagator(const WaveGrid& grid, double alpha, double kappa, double drift_scale, double dt);
  std::vector<double> decay;
  std::vector<double> phi1_dt;
  std::vector<double> phi2_dt;
  std::vector<double> rate;  // L_k
};

double phi1(double z);
double phi2(double z);

using DriftFn = std::function<SpectralField(const SpectralField& state, double t)>;

// Intermediate states of one step, kept for reverse-mode differentiation.
struct StepTape {
  SpectralField start;
  SpectralField predictor;
};

// One exponential step.  The optional additive increment xi (a noise term)
// enters as E (theta + xi); with xi absent this is ETD1 or ETD-RK2.
SpectralField exponential_step(const LinearPropagator& lin, TimeScheme scheme,
                               const SpectralField& theta, double t, double dt, const DriftFn& drift,
                               const SpectralField* xi = nullptr, StepTape* tape = nullptr);

// P_N[u . grad theta] for band-limited u.
SpectralField transport(const SpectralField& u1, const SpectralField& u2, const SpectralField& theta);
// B(theta) = P_N[(R-perp theta) . grad theta].
SpectralField nonlinear_term(const SpectralField& theta);
// (D B(theta))^T mu.
SpectralField nonlinear_term_transpose(const SpectralField& theta, const SpectralField& mu);

void check_finite_state(const SpectralField& state, const SpectralField& previous,
                        std::size_t step, double t, double alpha);

Trajectory solve_deterministic(const SpectralField& theta0, const DynamicsConfig& cfg,
                               const RecordOptions& rec = {});

// Piecewise-constant v is sampled at the midpoint of each time step.
Trajectory solve_skeleton(const SpectralField& theta0, const Control& v, const NoiseModel& G,
                          const DynamicsConfig& cfg, const RecordOptions& rec = {});

// Fixed compactly supported bump on (1, 2) used for the delayed velocity,
// normalized to unit integral.
double delay_kernel(double tau);
// Midpoint nodes and weights of the tau-integral.
struct DelayQuadrature {
  std::vector<double> nodes;
  std::vector<double> weights;
};
const DelayQuadrature& delay_quadrature();

// Velocity uses Poisson-mollified R-perp of the history delayed by tau * delta;
// it is frozen from the solution's own past, so each delta-window is linear.
Trajectory solve_delayed_mollified(const SpectralField& theta0, double delta,
                                   const Control* v, const NoiseModel* G,
                                   const DynamicsConfig& cfg, const RecordOptions& rec = {});

struct AprioriReport {
  double sup_energy = 0.0;             // sup_t (|Lambda^delta theta|^2 + ||theta||_p^p)
  double dissipation_integral = 0.0;   // int |Lambda^{delta+alpha} theta|^2
  double transport_functional = 0.0;   // int ||theta||_p^{N0}
  double n0 = 0.0;
  bool finite = true;
};

double transport_exponent(double alpha, double p);

// Throws std::invalid_argument when alpha - 1/2 - 1/p <= 0 or when the
// trajectory was recorded for another (delta, p).
AprioriReport monitor_apriori(const Trajectory& tr, double delta, double p);

}  // namespace sqg
