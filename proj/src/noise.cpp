#include "sqglab/noise.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace sqg {

// --- PointwiseMap ----------------------------------------------------------

PointwiseMap PointwiseMap::constant(double c) {
  if (!std::isfinite(c)) throw ConfigError("constant nonlinearity must be finite");
  PointwiseMap g;
  g.kind_ = Kind::Constant;
  g.constant_ = c;
  return g;
}

PointwiseMap PointwiseMap::identity() {
  PointwiseMap g;
  g.kind_ = Kind::Identity;
  g.constant_ = 0.0;
  return g;
}

namespace {

struct HermiteBasis {
  double h00, h10, h01, h11;
  double d00, d10, d01, d11;
};

HermiteBasis hermite(double t) {
  const double t2 = t * t;
  const double t3 = t2 * t;
  return {2 * t3 - 3 * t2 + 1, t3 - 2 * t2 + t, -2 * t3 + 3 * t2, t3 - t2,
          6 * t2 - 6 * t,      3 * t2 - 4 * t + 1, -6 * t2 + 6 * t, 3 * t2 - 2 * t};
}

}  // namespace

PointwiseMap PointwiseMap::table(std::vector<double> nodes, std::vector<double> values,
                                 double derivative_bound) {
  if (nodes.size() < 2 || nodes.size() != values.size()) {
    throw ConfigError("table nonlinearity needs >= 2 nodes and one value per node");
  }
  for (std::size_t i = 1; i < nodes.size(); ++i) {
    if (!(nodes[i] > nodes[i - 1])) throw ConfigError("table nodes must be strictly increasing");
  }
  for (double v : values) {
    if (!std::isfinite(v)) throw ConfigError("table values must be finite");
  }
  if (!(derivative_bound >= 0.0)) throw ConfigError("table derivative bound must be >= 0");

  PointwiseMap g;
  g.kind_ = Kind::Table;
  g.constant_ = 0.0;
  g.nodes_ = std::move(nodes);
  g.values_ = std::move(values);
  g.derivative_bound_ = derivative_bound;
  const std::size_t n = g.nodes_.size();
  g.slopes_.assign(n, 0.0);
  for (std::size_t i = 1; i + 1 < n; ++i) {
    g.slopes_[i] = (g.values_[i + 1] - g.values_[i - 1]) / (g.nodes_[i + 1] - g.nodes_[i - 1]);
  }
  double worst = 0.0;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    for (int s = 0; s <= 64; ++s) {
      const double x = g.nodes_[i] + (g.nodes_[i + 1] - g.nodes_[i]) * s / 64.0;
      worst = std::max(worst, std::abs(g.derivative(x)));
    }
  }
  if (worst > derivative_bound * (1.0 + 1e-12)) {
    std::ostringstream msg;
    msg << "table nonlinearity slope " << worst << " exceeds declared derivative bound "
        << derivative_bound;
    throw ConfigError(msg.str());
  }
  return g;
}

double PointwiseMap::operator()(double x) const {
  switch (kind_) {
    case Kind::Constant:
      return constant_;
    case Kind::Identity:
      return x;
    case Kind::Table:
      break;
  }
  if (x <= nodes_.front()) return values_.front();
  if (x >= nodes_.back()) return values_.back();
  const auto i = static_cast<std::size_t>(
      std::upper_bound(nodes_.begin(), nodes_.end(), x) - nodes_.begin() - 1);
  const double h = nodes_[i + 1] - nodes_[i];
  const auto b = hermite((x - nodes_[i]) / h);
  return b.h00 * values_[i] + b.h10 * h * slopes_[i] + b.h01 * values_[i + 1] +
         b.h11 * h * slopes_[i + 1];
}

double PointwiseMap::derivative(double x) const {
  switch (kind_) {
    case Kind::Constant:
      return 0.0;
    case Kind::Identity:
      return 1.0;
    case Kind::Table:
      break;
  }
  if (x <= nodes_.front() || x >= nodes_.back()) return 0.0;
  const auto i = static_cast<std::size_t>(
      std::upper_bound(nodes_.begin(), nodes_.end(), x) - nodes_.begin() - 1);
  const double h = nodes_[i + 1] - nodes_[i];
  const auto b = hermite((x - nodes_[i]) / h);
  return (b.d00 * values_[i] + b.d10 * h * slopes_[i] + b.d01 * values_[i + 1] +
          b.d11 * h * slopes_[i + 1]) /
         h;
}

// --- NoiseModel --------------------------------------------------------------

NoiseModel::NoiseModel(GridPtr grid, std::vector<NoiseCoefficient> directions, PointwiseMap g,
                       std::optional<double> declared_bound, double smoothness)
    : grid_(std::move(grid)),
      directions_(std::move(directions)),
      g_(std::move(g)),
      declared_bound_(0.0),
      smoothness_(smoothness) {
  if (!grid_) throw ConfigError("noise model: null grid");
  if (directions_.empty()) throw ConfigError("noise model needs at least one direction (m >= 1)");
  samples_.reserve(directions_.size());
  for (std::size_t j = 0; j < directions_.size(); ++j) {
    const auto& d = directions_[j];
    if (!std::isfinite(d.constant)) {
      throw ConfigError("noise direction " + std::to_string(j + 1) + ": non-finite constant");
    }
    std::vector<double> s(grid_->physical_points(), d.constant);
    if (d.field) {
      if (d.field->grid_ptr() != grid_) {
        throw ConfigError("noise direction " + std::to_string(j + 1) + ": grid mismatch");
      }
      if (!d.field->all_finite()) {
        throw ConfigError("noise direction " + std::to_string(j + 1) + ": non-finite coefficient");
      }
      const auto phys = to_physical(*d.field);
      for (std::size_t i = 0; i < s.size(); ++i) s[i] += phys.values()[i];
    }
    samples_.push_back(std::move(s));
  }
  declared_bound_ = declared_bound.value_or(coefficient_sup());
  if (coefficient_sup() > declared_bound_ * (1.0 + 1e-12)) {
    std::ostringstream msg;
    msg << "noise coefficients violate the declared bound: max_x sum_j b_j(x)^2 = "
        << coefficient_sup() << " > " << declared_bound_;
    throw ConfigError(msg.str());
  }
}

NoiseModel NoiseModel::additive_mode(GridPtr grid, Wavevector mode, double amplitude) {
  NoiseCoefficient b;
  b.field = SpectralField::basis(grid, mode, amplitude);
  return NoiseModel(std::move(grid), {b}, PointwiseMap::constant(1.0));
}

NoiseModel NoiseModel::linear_constant(GridPtr grid, std::vector<double> constants) {
  std::vector<NoiseCoefficient> dirs;
  double bound = 0.0;
  for (double c : constants) {
    dirs.push_back({c, std::nullopt});
    bound += c * c;
  }
  return NoiseModel(std::move(grid), std::move(dirs), PointwiseMap::identity(), bound);
}

double NoiseModel::coefficient_sup() const {
  double best = 0.0;
  for (std::size_t i = 0; i < grid_->physical_points(); ++i) {
    double acc = 0.0;
    for (const auto& s : samples_) acc += s[i] * s[i];
    best = std::max(best, acc);
  }
  return best;
}

bool NoiseModel::spectral_only_multiplier() const {
  return std::all_of(directions_.begin(), directions_.end(),
                     [](const NoiseCoefficient& d) { return !d.field.has_value(); });
}

SpectralField NoiseModel::apply(const SpectralField& theta, std::span<const double> y) const {
  if (y.size() != dimension()) {
    throw std::invalid_argument("apply_G: control has dimension " + std::to_string(y.size()) +
                                ", noise model has " + std::to_string(dimension()));
  }
  if (theta.grid_ptr() != grid_) throw std::invalid_argument("apply_G: grid mismatch");
  SpectralField out(grid_);
  if (g_.kind() == PointwiseMap::Kind::Constant) {
    // Constant parts of b_j are mean modes and drop out.
    for (std::size_t j = 0; j < dimension(); ++j) {
      if (directions_[j].field && y[j] != 0.0) out.axpy(y[j] * g_.constant_value(), *directions_[j].field);
    }
    return out;
  }
  if (g_.kind() == PointwiseMap::Kind::Identity && spectral_only_multiplier()) {
    double s = 0.0;
    for (std::size_t j = 0; j < dimension(); ++j) s += y[j] * directions_[j].constant;
    out = theta;
    out *= s;
    return out;
  }
  const auto phys = to_physical(theta);
  PhysicalField prod(grid_);
  auto pv = prod.values();
  const auto tv = phys.values();
  for (std::size_t i = 0; i < pv.size(); ++i) {
    double beta = 0.0;
    for (std::size_t j = 0; j < dimension(); ++j) beta += y[j] * samples_[j][i];
    pv[i] = beta * g_(tv[i]);
  }
  return to_spectral(prod);
}

std::vector<double> NoiseModel::apply_transpose(const SpectralField& theta,
                                                const SpectralField& mu) const {
  std::vector<double> out(dimension(), 0.0);
  std::vector<double> unit(dimension(), 0.0);
  for (std::size_t j = 0; j < dimension(); ++j) {
    unit[j] = 1.0;
    out[j] = dot(apply(theta, unit), mu);
    unit[j] = 0.0;
  }
  return out;
}

SpectralField NoiseModel::linearized(const SpectralField& theta, std::span<const double> y,
                                     const SpectralField& mu) const {
  if (y.size() != dimension()) throw std::invalid_argument("linearized G: dimension mismatch");
  SpectralField out(grid_);
  if (g_.kind() == PointwiseMap::Kind::Constant) return out;
  if (g_.kind() == PointwiseMap::Kind::Identity && spectral_only_multiplier()) {
    double s = 0.0;
    for (std::size_t j = 0; j < dimension(); ++j) s += y[j] * directions_[j].constant;
    out = mu;
    out *= s;
    return out;
  }
  const auto phys_theta = to_physical(theta);
  const auto phys_mu = to_physical(mu);
  PhysicalField prod(grid_);
  auto pv = prod.values();
  for (std::size_t i = 0; i < pv.size(); ++i) {
    double beta = 0.0;
    for (std::size_t j = 0; j < dimension(); ++j) beta += y[j] * samples_[j][i];
    pv[i] = beta * g_.derivative(phys_theta.values()[i]) * phys_mu.values()[i];
  }
  return to_spectral(prod);
}

SpectralField apply_G(const NoiseModel& G, const SpectralField& theta, std::span<const double> y) {
  return G.apply(theta, y);
}

double hs_norm_G(const NoiseModel& G, const SpectralField& theta) {
  std::vector<double> unit(G.dimension(), 0.0);
  double acc = 0.0;
  for (std::size_t j = 0; j < G.dimension(); ++j) {
    unit[j] = 1.0;
    const auto col = G.apply(theta, unit);
    acc += dot(col, col);
    unit[j] = 0.0;
  }
  return std::sqrt(acc);
}

// --- hypotheses ---------------------------------------------------------------

bool ValidationReport::all_passed() const {
  return std::all_of(checks.begin(), checks.end(),
                     [](const HypothesisCheck& c) { return c.passed.value_or(true); });
}

const HypothesisCheck* ValidationReport::find(const std::string& name) const {
  for (const auto& c : checks) {
    if (c.name == name) return &c;
  }
  return nullptr;
}

bool integrability_holds(double alpha, double p) {
  return p > 0.0 && 1.0 / p < alpha - 0.5;
}

namespace {

SpectralField probe_field(const GridPtr& grid, GaussianStream& rng) {
  SpectralField f(grid);
  const auto ev = grid->eigenvalues();
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = rng() / (1.0 + ev[i]);
  return f;
}

// sum_j ||Lambda^s (G(a) - G(b)) f_j||^2, with b optional.
double hs_sobolev_sq(const NoiseModel& G, const SpectralField& a, const SpectralField* b, double s) {
  std::vector<double> unit(G.dimension(), 0.0);
  double acc = 0.0;
  for (std::size_t j = 0; j < G.dimension(); ++j) {
    unit[j] = 1.0;
    auto col = G.apply(a, unit);
    if (b) col -= G.apply(*b, unit);
    acc += sobolev_inner(col, col, s);
    unit[j] = 0.0;
  }
  return acc;
}

std::string fmt(double x) {
  std::ostringstream os;
  os.precision(6);
  os << x;
  return os.str();
}

}  // namespace

ValidationReport validate_hypotheses(const NoiseModel& G, double alpha, double p, double delta,
                                     int probes, std::uint64_t probe_seed) {
  ValidationReport rep;
  rep.r = std::max(2.0 - 2.0 * alpha, alpha);

  rep.checks.push_back({"subcritical", alpha > 0.5, alpha,
                        "alpha = " + fmt(alpha) + (alpha > 0.5 ? " > 1/2" : " <= 1/2: outside subcritical theory")});
  const double gap = alpha - 0.5;
  rep.checks.push_back({"integrability", integrability_holds(alpha, p), p > 0 ? 1.0 / p : 0.0,
                        "need 0 < 1/p < alpha - 1/2: 1/p = " +
                            fmt(p > 0 ? 1.0 / p : 0.0) + ", alpha - 1/2 = " + fmt(gap)});
  rep.checks.push_back({"smoothness_small_noise", delta > 2.0 - 2.0 * alpha, delta,
                        "need delta > 2 - 2 alpha = " + fmt(2.0 - 2.0 * alpha) +
                            "; r = " + fmt(rep.r)});
  const double small_time_req = std::max(0.75 - alpha / 2.0, alpha - 0.5);
  rep.checks.push_back({"smoothness_small_time", delta >= small_time_req, delta,
                        "need delta >= (3/4 - alpha/2) v (alpha - 1/2) = " + fmt(small_time_req)});
  const double sup = G.coefficient_sup();
  rep.checks.push_back({"coefficient_bound", sup <= G.declared_bound() * (1.0 + 1e-12), sup,
                        "max_x sum_j b_j(x)^2 = " + fmt(sup) + " vs declared " + fmt(G.declared_bound())});

  GaussianStream rng(probe_seed);
  double growth_h = 0.0, growth_delta = 0.0, lip_h = 0.0, lip_neg = 0.0, lp_ratio = 0.0;
  for (int i = 0; i < probes; ++i) {
    const auto a = probe_field(G.grid_ptr(), rng);
    const auto b = probe_field(G.grid_ptr(), rng);
    const double na = dot(a, a);
    growth_h = std::max(growth_h, hs_sobolev_sq(G, a, nullptr, 0.0) / (na + 1.0));
    growth_delta = std::max(growth_delta, hs_sobolev_sq(G, a, nullptr, delta) /
                                              (1.0 + sobolev_inner(a, a, delta)));
    const auto diff = a - b;
    const double dn = dot(diff, diff);
    if (dn > 0.0) lip_h = std::max(lip_h, hs_sobolev_sq(G, a, &b, 0.0) / dn);
    const double dneg = sobolev_inner(diff, diff, -0.5);
    if (dneg > 0.0) lip_neg = std::max(lip_neg, hs_sobolev_sq(G, a, &b, -0.5) / dneg);
    if (p >= 1.0) {
      std::vector<double> unit(G.dimension(), 0.0);
      std::vector<double> sq(G.grid_ptr()->physical_points(), 0.0);
      for (std::size_t j = 0; j < G.dimension(); ++j) {
        unit[j] = 1.0;
        const auto col = to_physical(G.apply(a, unit));
        for (std::size_t x = 0; x < sq.size(); ++x) sq[x] += col.values()[x] * col.values()[x];
        unit[j] = 0.0;
      }
      double lhs = 0.0;
      for (double s : sq) lhs += std::pow(s, p / 2.0);
      const double cell = 4.0 * std::numbers::pi * std::numbers::pi / static_cast<double>(sq.size());
      const double lp = lp_norm(to_physical(a), p);
      lp_ratio = std::max(lp_ratio, cell * lhs / (std::pow(lp, p) + 1.0));
    }
  }
  rep.checks.push_back({"growth_L2", std::nullopt, growth_h,
                        "empirical sup ||G||^2_{L2(U,H)} / (|theta|^2 + 1)"});
  rep.checks.push_back({"growth_H_delta", std::nullopt, growth_delta,
                        "empirical L in ||G||^2_{L2(U,H^delta)} <= L (1 + ||theta||^2_{H^delta})"});
  rep.checks.push_back({"lipschitz_L2", std::nullopt, lip_h,
                        "empirical L1 in ||G(a) - G(b)||^2_{L2(U,H)} <= L1 |a - b|^2"});
  rep.checks.push_back({"lipschitz_H_minus_half", std::nullopt, lip_neg,
                        "empirical L2 for the H^{-1/2} Lipschitz condition"});
  rep.checks.push_back({"Lp_growth", std::nullopt, lp_ratio,
                        "empirical constant in the L^p growth condition"});
  return rep;
}

// --- seeds ------------------------------------------------------------------

std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t mix64(std::uint64_t master, std::uint64_t index) {
  std::uint64_t state = master + index * 0x9E3779B97F4A7C15ULL;
  return splitmix64(state);
}

double GaussianStream::uniform() {
  return static_cast<double>((engine_() >> 11) + 1) * 0x1.0p-53;
}

double GaussianStream::operator()() {
  if (spare_) {
    const double z = *spare_;
    spare_.reset();
    return z;
  }
  const double u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double phi = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(phi);
  return r * std::cos(phi);
}

NoisePath NoisePath::generate(std::uint64_t seed, std::size_t dimension, double dt,
                              std::size_t steps) {
  if (dimension == 0 || !(dt > 0.0)) throw std::invalid_argument("NoisePath: need m >= 1, dt > 0");
  NoisePath path;
  path.seed = seed;
  path.dt = dt;
  path.dimension = dimension;
  path.steps = steps;
  path.increments.resize(dimension * steps);
  GaussianStream rng(seed);
  const double scale = std::sqrt(dt);
  for (auto& w : path.increments) w = scale * rng();
  return path;
}

NoisePath NoisePath::zeros(std::size_t dimension, double dt, std::size_t steps) {
  NoisePath path;
  path.dt = dt;
  path.dimension = dimension;
  path.steps = steps;
  path.increments.assign(dimension * steps, 0.0);
  return path;
}

}  // namespace sqg
