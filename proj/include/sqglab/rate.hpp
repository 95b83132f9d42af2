#pragma once

// Minimum-action side: action functional, control-to-observable map through
// the skeleton equation, adjoint gradients of the penalized objective
//   J(v) = 1/2 int |v|^2 + lambda/2 dist(O(theta_v(T)), target)^2,
// and penalty-continuation minimization.

#include <optional>
#include <string>
#include <vector>

#include "sqglab/control.hpp"
#include "sqglab/dynamics.hpp"
#include "sqglab/noise.hpp"

namespace sqg {

double action(const Control& v);

enum class ObservableKind { Coefficient, L2Norm, HMinusHalfNorm };

struct Observable {
  ObservableKind kind = ObservableKind::Coefficient;
  Wavevector mode{1, 0};  // for Coefficient

  double evaluate(const SpectralField& theta) const;
  // dO/dtheta in coefficient space (zero where O is not differentiable).
  SpectralField gradient(const SpectralField& theta) const;
};

std::string to_string(ObservableKind kind);
ObservableKind parse_observable(const std::string& name);

enum class TargetKind { AtLeast, AtMost, Ball };

struct Target {
  TargetKind kind = TargetKind::AtLeast;
  double eta = 0.0;     // threshold, or ball centre
  double radius = 0.0;  // Ball only

  // Signed distance: <= 0 inside the set.
  double signed_distance(double o) const;
  double distance(double o) const;
  // d(distance)/dO; the one-sided value 0 on the boundary.
  double distance_slope(double o) const;
  bool contains(double o) const { return signed_distance(o) <= 0.0; }
};

std::string to_string(TargetKind kind);
TargetKind parse_target(const std::string& name);

enum class SkeletonFlavor {
  SmallNoise,          // theta' = -A theta - B(theta) + G(theta) v
  SmallTimeDriftFree,  // f' = G(f) v
};

std::string to_string(SkeletonFlavor flavor);
SkeletonFlavor parse_skeleton_flavor(const std::string& name);

struct OptimizerSettings {
  int max_iterations = 200;
  double gradient_tolerance = 1e-8;
  double armijo = 1e-4;
  double backtrack = 0.5;
  int max_backtracks = 50;
  int memory = 8;
  double residual_tolerance = 1e-8;
};

struct ActionProblem {
  ActionProblem(SpectralField theta0, NoiseModel G, DynamicsConfig cfg);

  SpectralField theta0;
  NoiseModel G;
  DynamicsConfig cfg;
  SkeletonFlavor flavor = SkeletonFlavor::SmallNoise;
  Observable observable;
  Target target;
  std::size_t control_cells = 0;  // 0: one cell per time step
  std::vector<double> penalties{10.0, 1e2, 1e3, 1e4};
  OptimizerSettings settings;

  // Throws ConfigError listing every problem found.
  void validate() const;
  std::size_t cells() const;
  Control zero_control() const;
  // Dynamics actually integrated for the chosen flavour.
  DynamicsConfig effective_config() const;
};

// Terminal state of the skeleton flavour under control v.
SpectralField forward_state(const ActionProblem& p, const Control& v);
double forward_observable(const ActionProblem& p, const Control& v);

struct PenaltyEvaluation {
  double objective = 0.0;
  double action = 0.0;
  double observable = 0.0;
  double distance = 0.0;
  Control gradient;  // L2([0,T]) gradient: cell values of the Riesz representer
};

// Objective and its exact gradient through the discrete scheme.
PenaltyEvaluation evaluate_penalty(const ActionProblem& p, const Control& v, double lambda);
Control gradient_action_penalty(const ActionProblem& p, const Control& v, double lambda);

struct RateEstimate {
  double value = 0.0;  // action(control)
  Control control;
  double observable = 0.0;
  double residual = 0.0;  // dist(O, target) at the returned control
  bool converged = false;
  bool restored = false;  // final feasibility rescaling applied
  std::vector<double> trace;
  std::string message;
};

RateEstimate minimize_action(const ActionProblem& p);

// Minimum of 1/2 int v^2 steering x' = -lambda x + b v from 0 to eta at T.
double analytic_rate_linear(double lambda_mode, double b, double eta, double T);

}  // namespace sqg
