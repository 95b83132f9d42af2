#include "sqglab/ldp.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <stdexcept>
#include <thread>

namespace sqg {

std::string to_string(Estimator method) { return method == Estimator::Naive ? "naive" : "tilted"; }

Estimator parse_estimator(const std::string& name) {
  if (name == "naive") return Estimator::Naive;
  if (name == "tilted") return Estimator::Tilted;
  throw ConfigError("unknown estimator '" + name + "'");
}

std::string to_string(Direction direction) {
  return direction == Direction::AtLeast ? "at-least" : "at-most";
}

Direction parse_direction(const std::string& name) {
  if (name == "at-least") return Direction::AtLeast;
  if (name == "at-most") return Direction::AtMost;
  throw ConfigError("unknown direction '" + name + "'");
}

Interval wilson_interval(double k, double n, double z) {
  if (!(n > 0.0)) return {0.0, 1.0};
  double p = k / n;
  double z2 = z * z;
  double denom = 1.0 + z2 / n;
  double centre = (p + z2 / (2.0 * n)) / denom;
  double half = z / denom * std::sqrt(std::max(0.0, p * (1.0 - p) / n + z2 / (4.0 * n * n)));
  Interval r{std::max(0.0, centre - half), std::min(1.0, centre + half)};
  if (k == 0.0) r.lo = 0.0;
  if (k == n) r.hi = 1.0;
  r.lo = std::min(r.lo, p);
  r.hi = std::max(r.hi, p);
  return r;
}

namespace {

unsigned resolve_workers(unsigned workers, std::size_t n) {
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  return static_cast<unsigned>(std::min<std::size_t>(workers, std::max<std::size_t>(n, 1)));
}

// Runs body(i) for i in [0, n); sample i always lands in slot i.  The
// exception of the lowest failing index is rethrown.
template <class Body>
void parallel_for(std::size_t n, unsigned workers, Body&& body) {
  workers = resolve_workers(workers, n);
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::size_t> error_index(workers, n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) {
        try {
          body(i);
        } catch (...) {
          errors[w] = std::current_exception();
          error_index[w] = i;
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  std::size_t first = n;
  std::exception_ptr err;
  for (unsigned w = 0; w < workers; ++w) {
    if (errors[w] && error_index[w] < first) {
      first = error_index[w];
      err = errors[w];
    }
  }
  if (err) std::rethrow_exception(err);
}

std::optional<double> eps_log(double epsilon, double p) {
  if (!(p > 0.0)) return std::nullopt;
  return epsilon * std::log(p);
}

ProbabilityEstimate naive_estimate(const std::vector<char>& hit, double epsilon) {
  ProbabilityEstimate e;
  e.method = Estimator::Naive;
  e.samples = hit.size();
  for (char h : hit) e.hits += h ? 1 : 0;
  double n = static_cast<double>(e.samples);
  e.p_hat = static_cast<double>(e.hits) / n;
  Interval ci = wilson_interval(static_cast<double>(e.hits), n);
  e.ci_lo = ci.lo;
  e.ci_hi = ci.hi;
  e.ess = n;
  e.eps_log_p = eps_log(epsilon, e.p_hat);
  return e;
}

// Plain importance-sampling mean of indicator * weight; the discrete
// likelihood ratio has unit mean exactly, so no normalizer is estimated.
ProbabilityEstimate tilted_estimate(const std::vector<char>& hit, const std::vector<double>& lw,
                                    double epsilon) {
  ProbabilityEstimate e;
  e.method = Estimator::Tilted;
  e.samples = hit.size();
  const double n = static_cast<double>(e.samples);
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < lw.size(); ++i) {
    if (hit[i]) {
      mx = std::max(mx, lw[i]);
      ++e.hits;
    }
  }
  if (e.hits == 0) {
    e.ci_hi = wilson_interval(0.0, n).hi;
    e.eps_log_p = std::nullopt;
    return e;
  }
  double s = 0.0, s2 = 0.0;
  for (std::size_t i = 0; i < lw.size(); ++i) {
    if (!hit[i]) continue;
    double w = std::exp(lw[i] - mx);
    s += w;
    s2 += w * w;
  }
  e.ess = s * s / s2;
  const double scale = std::exp(mx);
  const double mean = s / n;
  const double var = std::max(0.0, s2 / n - mean * mean) / std::max(1.0, n - 1.0);
  const double half = kZ95 * std::sqrt(var) * scale;
  e.p_hat = mean * scale;
  e.ci_lo = std::max(0.0, e.p_hat - half);
  e.ci_hi = std::max(e.p_hat, std::min(1.0, e.p_hat + half));
  e.eps_log_p = eps_log(epsilon, e.p_hat);
  return e;
}

void check_epsilon_grid(const std::vector<double>& epsilons) {
  if (epsilons.empty()) throw ConfigError("epsilon grid is empty");
  for (std::size_t i = 0; i < epsilons.size(); ++i) {
    if (!(epsilons[i] > 0.0)) throw ConfigError("epsilon values must be > 0");
    if (i > 0 && !(epsilons[i] < epsilons[i - 1])) {
      throw ConfigError("epsilon grid must be strictly decreasing");
    }
  }
}

void check_inputs(const SpectralField& theta0, const NoiseModel& G, const DynamicsConfig& cfg,
                  double epsilon, std::size_t n) {
  cfg.validate();
  if (n < 1) throw ConfigError("sample count must be >= 1");
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be > 0");
  if (theta0.empty() || theta0.grid().resolution() != cfg.resolution ||
      G.grid_ptr()->resolution() != cfg.resolution) {
    throw ConfigError("field, noise model and config resolutions must agree");
  }
}

}  // namespace

ProbabilityEstimate estimate_probability(const RareEventSpec& spec, const SpectralField& theta0,
                                         const NoiseModel& G, const DynamicsConfig& cfg,
                                         double epsilon, std::size_t n, std::uint64_t master_seed,
                                         Estimator method, const Control* tilt, unsigned workers) {
  check_inputs(theta0, G, cfg, epsilon, n);
  if (spec.stride == 0) throw ConfigError("stride must be >= 1");
  if (std::isnan(spec.eta)) throw ConfigError("threshold must not be NaN");
  if (method == Estimator::Tilted) {
    if (!tilt) throw ConfigError("tilted estimator needs a control");
    if (tilt->dimension() != G.dimension()) throw ConfigError("tilt control dimension mismatch");
    if (std::abs(tilt->horizon() - cfg.horizon) > 1e-9 * cfg.horizon) {
      throw ConfigError("tilt control horizon does not match config horizon");
    }
  }
  StochasticStepper stepper(G, cfg, epsilon, spec.flavor);
  const std::size_t steps = stepper.steps();
  const std::size_t m = G.dimension();
  const double dt = cfg.dt;
  std::vector<char> hit(n, 0);
  std::vector<double> lw(n, 0.0);

  parallel_for(n, workers, [&](std::size_t i) {
    NoisePath path = NoisePath::generate(mix64(master_seed, i), m, dt, steps);
    SpectralField theta = theta0;
    double value = spec.observable.evaluate(theta);
    double sup = value;
    double logw = 0.0;
    for (std::size_t k = 0; k < steps; ++k) {
      std::span<const double> v;
      if (method == Estimator::Tilted) v = tilt->cell(tilt->cell_at((static_cast<double>(k) + 0.5) * dt));
      theta = stepper.step(theta, k, path.at(k), v, &logw);
      if (spec.sup_over_stamps && ((k + 1) % spec.stride == 0 || k + 1 == steps)) {
        double o = spec.observable.evaluate(theta);
        sup = spec.direction == Direction::AtLeast ? std::max(sup, o) : std::min(sup, o);
      }
    }
    value = spec.sup_over_stamps ? sup : spec.observable.evaluate(theta);
    hit[i] = spec.hit(value) ? 1 : 0;
    lw[i] = logw;
  });

  return method == Estimator::Naive ? naive_estimate(hit, epsilon) : tilted_estimate(hit, lw, epsilon);
}

ScalingStudy run_scaling_study(const RareEventSpec& spec, const SpectralField& theta0,
                               const NoiseModel& G, const DynamicsConfig& cfg,
                               const std::vector<double>& epsilons, std::size_t n,
                               std::uint64_t master_seed, Estimator method, const Control* tilt,
                               unsigned workers) {
  check_epsilon_grid(epsilons);
  ScalingStudy study;
  study.method = method;
  for (double eps : epsilons) {
    study.points.push_back(
        {eps, estimate_probability(spec, theta0, G, cfg, eps, n, master_seed, method, tilt, workers)});
  }
  return study;
}

ScalingFit scaling_fit(const ScalingStudy& study, std::optional<double> I_ref) {
  ScalingFit fit;
  for (const auto& pt : study.points) {
    if (pt.estimate.eps_log_p) {
      fit.epsilons.push_back(pt.epsilon);
      fit.eps_log_p.push_back(*pt.estimate.eps_log_p);
    }
  }
  const std::size_t k = fit.epsilons.size();
  if (k < 3) {
    fit.note = "non-informative: fewer than 3 epsilon values with nonzero estimates";
    return fit;
  }
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    mx += fit.epsilons[i];
    my += fit.eps_log_p[i];
  }
  mx /= static_cast<double>(k);
  my /= static_cast<double>(k);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    double dx = fit.epsilons[i] - mx;
    sxx += dx * dx;
    sxy += dx * (fit.eps_log_p[i] - my);
  }
  fit.slope = sxy / sxx;
  fit.limit = my - fit.slope * mx;
  fit.informative = true;
  if (I_ref && *I_ref != 0.0) fit.relative_gap = std::abs(fit.limit + *I_ref) / std::abs(*I_ref);
  fit.note = "finite-grid linear extrapolation of eps log p_hat to eps -> 0";
  return fit;
}

EquivalenceReport exponential_equivalence(const SpectralField& theta0,
                                          const std::vector<double>& epsilons, double eta,
                                          std::size_t n, std::uint64_t master_seed,
                                          const DynamicsConfig& cfg, const NoiseModel& G,
                                          std::size_t stride, unsigned workers) {
  check_epsilon_grid(epsilons);
  if (stride == 0) throw ConfigError("stride must be >= 1");
  if (!std::isfinite(eta)) throw ConfigError("eta must be finite");
  EquivalenceReport rep;
  rep.eta = eta;
  const std::size_t m = G.dimension();
  for (double eps : epsilons) {
    check_inputs(theta0, G, cfg, eps, n);
    StochasticStepper drift(G, cfg, eps, Flavor::SmallTime);
    StochasticStepper diffusion(G, cfg, eps, Flavor::DiffusionOnly);
    const std::size_t steps = drift.steps();
    std::vector<char> hit(n, 0);
    std::vector<double> gap(n, 0.0);
    parallel_for(n, workers, [&](std::size_t i) {
      NoisePath path = NoisePath::generate(mix64(master_seed, i), m, cfg.dt, steps);
      SpectralField a = theta0, b = theta0;
      double sup = 0.0;
      for (std::size_t k = 0; k < steps; ++k) {
        a = drift.step(a, k, path.at(k));
        b = diffusion.step(b, k, path.at(k));
        if ((k + 1) % stride == 0 || k + 1 == steps) {
          double d = sobolev_norm(a - b, -0.5);
          sup = std::max(sup, d * d);
        }
      }
      gap[i] = sup;
      hit[i] = sup > eta ? 1 : 0;
    });
    EquivalencePoint pt;
    pt.epsilon = eps;
    pt.estimate = naive_estimate(hit, eps);
    for (double g : gap) pt.mean_sup_gap += g;
    pt.mean_sup_gap /= static_cast<double>(n);
    rep.points.push_back(std::move(pt));
  }
  bool dec = true, sep = true;
  for (std::size_t i = 1; i < rep.points.size(); ++i) {
    const auto& prev = rep.points[i - 1];
    const auto& cur = rep.points[i];
    if (!prev.estimate.eps_log_p || !cur.estimate.eps_log_p) {
      dec = false;
      sep = false;
      continue;
    }
    if (!(*cur.estimate.eps_log_p < *prev.estimate.eps_log_p)) dec = false;
    double cur_hi = cur.epsilon * std::log(cur.estimate.ci_hi);
    double prev_lo = prev.estimate.ci_lo > 0.0 ? prev.epsilon * std::log(prev.estimate.ci_lo)
                                               : -std::numeric_limits<double>::infinity();
    if (!(cur_hi < prev_lo)) sep = false;
  }
  rep.strictly_decreasing = dec && rep.points.size() >= 2;
  rep.separated_by_ci = sep && rep.points.size() >= 2;
  rep.note = "finite-grid trend test of eps log q_hat; the limit itself is not reachable";
  return rep;
}

TailTable lp_tail_study(const SpectralField& theta0, const std::vector<double>& epsilons,
                        const std::vector<double>& thresholds, double p, std::size_t n,
                        std::uint64_t master_seed, const DynamicsConfig& cfg, const NoiseModel& G,
                        Flavor flavor, std::size_t stride, unsigned workers) {
  check_epsilon_grid(epsilons);
  if (!integrability_holds(cfg.alpha, p)) {
    throw ConfigError("p violates the integrability condition 0 < 1/p < alpha - 1/2");
  }
  if (thresholds.empty()) throw ConfigError("threshold grid is empty");
  if (stride == 0) throw ConfigError("stride must be >= 1");
  TailTable table;
  table.initial_lp_power = std::pow(lp_norm(to_physical(theta0), p), p);
  const std::size_t m = G.dimension();
  bool monotone = true;
  for (double eps : epsilons) {
    check_inputs(theta0, G, cfg, eps, n);
    StochasticStepper stepper(G, cfg, eps, flavor);
    const std::size_t steps = stepper.steps();
    std::vector<double> sup(n, 0.0);
    parallel_for(n, workers, [&](std::size_t i) {
      NoisePath path = NoisePath::generate(mix64(master_seed, i), m, cfg.dt, steps);
      SpectralField theta = theta0;
      double s = table.initial_lp_power;
      for (std::size_t k = 0; k < steps; ++k) {
        theta = stepper.step(theta, k, path.at(k));
        if ((k + 1) % stride == 0 || k + 1 == steps) {
          s = std::max(s, std::pow(lp_norm(to_physical(theta), p), p));
        }
      }
      sup[i] = s;
    });
    double previous = std::numeric_limits<double>::infinity();
    bool sorted_thresholds = true;
    for (std::size_t j = 0; j < thresholds.size(); ++j) {
      if (j > 0 && !(thresholds[j] > thresholds[j - 1])) sorted_thresholds = false;
      std::vector<char> hit(n);
      for (std::size_t i = 0; i < n; ++i) hit[i] = sup[i] > thresholds[j] ? 1 : 0;
      TailCell cell{eps, thresholds[j], naive_estimate(hit, eps)};
      double v = cell.estimate.eps_log_p.value_or(-std::numeric_limits<double>::infinity());
      if (sorted_thresholds && v > previous) monotone = false;
      previous = v;
      table.cells.push_back(std::move(cell));
    }
    if (!sorted_thresholds) monotone = false;
  }
  table.non_increasing = monotone;
  return table;
}

}  // namespace sqg
