#pragma once

// Monte Carlo side: rare-event probabilities (naive and tilted), eps log p
// scaling fits, the coupled small-time / diffusion-only equivalence study and
// the L^p tail table.  Sample i always uses seed mix64(master, i), and
// per-sample results are reduced in index order, so every estimate is
// independent of the worker count.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sqglab/control.hpp"
#include "sqglab/dynamics.hpp"
#include "sqglab/noise.hpp"
#include "sqglab/rate.hpp"
#include "sqglab/stochastic.hpp"

namespace sqg {

enum class Direction { AtLeast, AtMost };

struct RareEventSpec {
  Flavor flavor = Flavor::SmallNoise;
  Observable observable;
  bool sup_over_stamps = false;  // sup over stored stamps instead of the value at T
  std::size_t stride = 1;
  double eta = 0.0;  // may be +-infinity
  Direction direction = Direction::AtLeast;

  bool hit(double value) const {
    return direction == Direction::AtLeast ? value >= eta : value <= eta;
  }
};

enum class Estimator { Naive, Tilted };

std::string to_string(Estimator method);
Estimator parse_estimator(const std::string& name);
std::string to_string(Direction direction);
Direction parse_direction(const std::string& name);

struct ProbabilityEstimate {
  Estimator method = Estimator::Naive;
  std::size_t samples = 0;
  std::size_t hits = 0;
  double p_hat = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  // Effective sample size: samples for naive, (sum w)^2 / sum w^2 over hits for tilted.
  double ess = 0.0;
  // eps log p_hat; nullopt when p_hat = 0.
  std::optional<double> eps_log_p;
};

inline constexpr double kZ95 = 1.959963984540054;

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};
// Wilson score interval for k successes out of n.
Interval wilson_interval(double k, double n, double z = kZ95);

// Tilted runs use the Girsanov-shifted dynamics with control `tilt`.
ProbabilityEstimate estimate_probability(const RareEventSpec& spec, const SpectralField& theta0,
                                         const NoiseModel& G, const DynamicsConfig& cfg,
                                         double epsilon, std::size_t n, std::uint64_t master_seed,
                                         Estimator method, const Control* tilt = nullptr,
                                         unsigned workers = 1);

struct ScalingPoint {
  double epsilon = 0.0;
  ProbabilityEstimate estimate;
};

struct ScalingStudy {
  Estimator method = Estimator::Naive;
  std::vector<ScalingPoint> points;  // epsilon strictly decreasing
};

ScalingStudy run_scaling_study(const RareEventSpec& spec, const SpectralField& theta0,
                               const NoiseModel& G, const DynamicsConfig& cfg,
                               const std::vector<double>& epsilons, std::size_t n,
                               std::uint64_t master_seed, Estimator method,
                               const Control* tilt = nullptr, unsigned workers = 1);

struct ScalingFit {
  bool informative = false;
  std::vector<double> epsilons;
  std::vector<double> eps_log_p;
  double slope = 0.0;
  double limit = 0.0;  // intercept of the least-squares line in eps
  std::optional<double> relative_gap;  // |limit + I_ref| / I_ref
  std::string note;
};

// Least-squares line through (eps, eps log p_hat) over points with hits.
ScalingFit scaling_fit(const ScalingStudy& study, std::optional<double> I_ref = std::nullopt);

struct EquivalencePoint {
  double epsilon = 0.0;
  ProbabilityEstimate estimate;
  double mean_sup_gap = 0.0;
};

struct EquivalenceReport {
  double eta = 0.0;
  std::vector<EquivalencePoint> points;
  // eps log q_hat strictly decreasing along the grid (point estimates).
  bool strictly_decreasing = false;
  // Each eps log q_hat lies below the previous one with the CIs mapped to the
  // eps log scale not overlapping.
  bool separated_by_ci = false;
  std::string note;
};

// q(eps) = P(sup_t |theta(t) - v(t)|^2_{H^{-1/2}} > eta) with theta the
// small-time process and v the diffusion-only process on the same path.
EquivalenceReport exponential_equivalence(const SpectralField& theta0,
                                          const std::vector<double>& epsilons, double eta,
                                          std::size_t n, std::uint64_t master_seed,
                                          const DynamicsConfig& cfg, const NoiseModel& G,
                                          std::size_t stride = 1, unsigned workers = 1);

struct TailCell {
  double epsilon = 0.0;
  double M = 0.0;
  ProbabilityEstimate estimate;
};

struct TailTable {
  double initial_lp_power = 0.0;  // |theta0|_{L^p}^p
  std::vector<TailCell> cells;    // epsilon-major, M in the given order
  // For every epsilon, eps log p_hat is non-increasing along increasing M
  // (a missing value counts as -infinity).
  bool non_increasing = false;
};

// P(sup_t |theta(t)|_{L^p}^p > M) for the given flavour; thresholds M are absolute.
TailTable lp_tail_study(const SpectralField& theta0, const std::vector<double>& epsilons,
                        const std::vector<double>& thresholds, double p, std::size_t n,
                        std::uint64_t master_seed, const DynamicsConfig& cfg, const NoiseModel& G,
                        Flavor flavor = Flavor::SmallTime, std::size_t stride = 1,
                        unsigned workers = 1);

}  // namespace sqg
