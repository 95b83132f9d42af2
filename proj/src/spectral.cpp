#include "sqglab/spectral.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>
#include <numbers>
#include <string>
#include <tuple>

namespace sqg {

namespace {

// FFTW planning is not thread-safe; execution on fresh arrays is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

bool is_smooth_size(int n) {
  for (int p : {2, 3, 5}) {
    while (n % p == 0) n /= p;
  }
  return n == 1;
}

int padded_size(int resolution) {
  int m = 3 * resolution + 1;
  while (!is_smooth_size(m)) ++m;
  return m;
}

// sqrt(2) * pi: L2 norm of sin(k.x) on [0, 2pi)^2
constexpr double kBasisNorm = std::numbers::sqrt2 * std::numbers::pi;

void require_same_grid(const SpectralField& a, const SpectralField& b) {
  if (a.grid_ptr() != b.grid_ptr()) {
    throw std::invalid_argument("spectral fields live on different grids");
  }
}

void require_finite(const SpectralField& f, const char* op) {
  if (!f.all_finite()) {
    throw std::invalid_argument(std::string(op) + ": non-finite coefficient");
  }
}

}  // namespace

struct WaveGrid::FftPlans {
  fftw_plan forward = nullptr;   // r2c
  fftw_plan backward = nullptr;  // c2r
  ~FftPlans() {
    std::lock_guard lock(planner_mutex());
    if (forward) fftw_destroy_plan(forward);
    if (backward) fftw_destroy_plan(backward);
  }
};

WaveGrid::WaveGrid(int resolution) : resolution_(resolution) {
  if (resolution < 1) {
    throw ConfigError("grid resolution must be >= 1, got " + std::to_string(resolution));
  }
  if (resolution > kMaxResolution) {
    throw ConfigError("grid resolution exceeds " + std::to_string(kMaxResolution));
  }
  physical_size_ = padded_size(resolution);

  const int n2 = resolution * resolution;
  std::vector<Wavevector> upper;
  std::vector<Wavevector> lower;
  for (int k1 = -resolution; k1 <= resolution; ++k1) {
    for (int k2 = -resolution; k2 <= resolution; ++k2) {
      const int e = k1 * k1 + k2 * k2;
      if (e == 0 || e > n2) continue;
      (in_upper_half({k1, k2}) ? upper : lower).push_back({k1, k2});
    }
  }
  auto canonical = [](const Wavevector& a, const Wavevector& b) {
    const int ea = a.k1 * a.k1 + a.k2 * a.k2;
    const int eb = b.k1 * b.k1 + b.k2 * b.k2;
    if (ea != eb) return ea < eb;
    if (a.k1 != b.k1) return a.k1 < b.k1;
    return a.k2 < b.k2;
  };
  std::sort(upper.begin(), upper.end(), canonical);
  std::sort(lower.begin(), lower.end(), canonical);
  modes_ = upper;
  modes_.insert(modes_.end(), lower.begin(), lower.end());

  eigenvalues_.reserve(modes_.size());
  magnitudes_.reserve(modes_.size());
  for (const auto& k : modes_) {
    const int e = k.k1 * k.k1 + k.k2 * k.k2;
    eigenvalues_.push_back(e);
    magnitudes_.push_back(std::sqrt(static_cast<double>(e)));
  }
  mirror_.resize(modes_.size());
  for (std::size_t i = 0; i < modes_.size(); ++i) {
    mirror_[i] = *index_of({-modes_[i].k1, -modes_[i].k2});
  }

  const int m = physical_size_;
  const int half = m / 2 + 1;
  fft_slot_.resize(upper_count());
  fft_slot_conj_.resize(upper_count());
  for (std::size_t i = 0; i < upper_count(); ++i) {
    const auto& k = modes_[i];
    const int r = ((k.k1 % m) + m) % m;
    fft_slot_[i] = static_cast<std::size_t>(r) * half + k.k2;
    const int rc = ((-k.k1 % m) + m) % m;
    fft_slot_conj_[i] = static_cast<std::size_t>(rc) * half;  // only used when k2 == 0
  }

  plans_ = std::make_unique<FftPlans>();
  std::vector<double> real(physical_points());
  std::vector<std::complex<double>> cplx(static_cast<std::size_t>(m) * half);
  auto* c = reinterpret_cast<fftw_complex*>(cplx.data());
  std::lock_guard lock(planner_mutex());
  const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
  plans_->forward = fftw_plan_dft_r2c_2d(m, m, real.data(), c, flags);
  plans_->backward = fftw_plan_dft_c2r_2d(m, m, c, real.data(), flags | FFTW_DESTROY_INPUT);
}

WaveGrid::~WaveGrid() = default;

std::optional<std::size_t> WaveGrid::index_of(Wavevector k) const {
  const int e = k.k1 * k.k1 + k.k2 * k.k2;
  if (e == 0 || e > resolution_ * resolution_) return std::nullopt;
  // Each half is sorted separately.
  const std::size_t h = upper_count();
  auto find_in = [&](std::size_t lo, std::size_t hi) -> std::optional<std::size_t> {
    auto key = [](const Wavevector& a) {
      return std::tuple(a.k1 * a.k1 + a.k2 * a.k2, a.k1, a.k2);
    };
    auto first = modes_.begin() + static_cast<std::ptrdiff_t>(lo);
    auto last = modes_.begin() + static_cast<std::ptrdiff_t>(hi);
    auto pos = std::lower_bound(first, last, k, [&](const Wavevector& a, const Wavevector& b) {
      return key(a) < key(b);
    });
    if (pos != last && *pos == k) return static_cast<std::size_t>(pos - modes_.begin());
    return std::nullopt;
  };
  return in_upper_half(k) ? find_in(0, h) : find_in(h, modes_.size());
}

void WaveGrid::synthesize(std::span<const double> coeffs, std::span<double> values) const {
  if (coeffs.size() != size() || values.size() != physical_points()) {
    throw std::invalid_argument("synthesize: size mismatch");
  }
  const int m = physical_size_;
  const std::size_t half = static_cast<std::size_t>(m / 2 + 1);
  std::vector<std::complex<double>> buf(static_cast<std::size_t>(m) * half);
  const double scale = 1.0 / (2.0 * kBasisNorm);
  for (std::size_t i = 0; i < upper_count(); ++i) {
    const double a = coeffs[i];             // sine part
    const double b = coeffs[mirror_[i]];    // cosine part
    const std::complex<double> fk(b * scale, -a * scale);
    buf[fft_slot_[i]] = fk;
    if (modes_[i].k2 == 0) buf[fft_slot_conj_[i]] = std::conj(fk);
  }
  fftw_execute_dft_c2r(plans_->backward, reinterpret_cast<fftw_complex*>(buf.data()),
                       values.data());
}

void WaveGrid::analyze(std::span<const double> values, std::span<double> coeffs) const {
  if (coeffs.size() != size() || values.size() != physical_points()) {
    throw std::invalid_argument("analyze: size mismatch");
  }
  const int m = physical_size_;
  const std::size_t half = static_cast<std::size_t>(m / 2 + 1);
  std::vector<std::complex<double>> buf(static_cast<std::size_t>(m) * half);
  std::vector<double> in(values.begin(), values.end());
  fftw_execute_dft_r2c(plans_->forward, in.data(), reinterpret_cast<fftw_complex*>(buf.data()));
  const double scale = 2.0 * kBasisNorm / static_cast<double>(physical_points());
  for (std::size_t i = 0; i < upper_count(); ++i) {
    const auto fk = buf[fft_slot_[i]];
    coeffs[i] = -fk.imag() * scale;
    coeffs[mirror_[i]] = fk.real() * scale;
  }
}

GridPtr make_grid(int resolution) {
  return std::make_shared<const WaveGrid>(resolution);
}

// --- SpectralField -------------------------------------------------------

SpectralField::SpectralField(GridPtr grid) : grid_(std::move(grid)) {
  if (!grid_) throw std::invalid_argument("SpectralField: null grid");
  coeffs_.assign(grid_->size(), 0.0);
}

SpectralField::SpectralField(GridPtr grid, std::vector<double> coeffs)
    : grid_(std::move(grid)), coeffs_(std::move(coeffs)) {
  if (!grid_) throw std::invalid_argument("SpectralField: null grid");
  if (coeffs_.size() != grid_->size()) {
    throw std::invalid_argument("SpectralField: expected " + std::to_string(grid_->size()) +
                                " coefficients, got " + std::to_string(coeffs_.size()));
  }
  if (!all_finite()) throw std::invalid_argument("SpectralField: non-finite coefficient");
}

SpectralField SpectralField::basis(GridPtr grid, Wavevector k, double amplitude) {
  SpectralField f(std::move(grid));
  auto idx = f.grid().index_of(k);
  if (!idx) {
    throw std::invalid_argument("wavevector (" + std::to_string(k.k1) + "," +
                                std::to_string(k.k2) + ") is not on the grid");
  }
  f.coeffs_[*idx] = amplitude;
  return f;
}

double SpectralField::coefficient(Wavevector k) const {
  auto idx = grid_->index_of(k);
  return idx ? coeffs_[*idx] : 0.0;
}

bool SpectralField::all_finite() const {
  return std::all_of(coeffs_.begin(), coeffs_.end(), [](double c) { return std::isfinite(c); });
}

SpectralField& SpectralField::operator+=(const SpectralField& other) {
  require_same_grid(*this, other);
  for (std::size_t i = 0; i < coeffs_.size(); ++i) coeffs_[i] += other.coeffs_[i];
  return *this;
}

SpectralField& SpectralField::operator-=(const SpectralField& other) {
  require_same_grid(*this, other);
  for (std::size_t i = 0; i < coeffs_.size(); ++i) coeffs_[i] -= other.coeffs_[i];
  return *this;
}

SpectralField& SpectralField::operator*=(double s) {
  for (auto& c : coeffs_) c *= s;
  return *this;
}

SpectralField& SpectralField::axpy(double s, const SpectralField& other) {
  require_same_grid(*this, other);
  for (std::size_t i = 0; i < coeffs_.size(); ++i) coeffs_[i] += s * other.coeffs_[i];
  return *this;
}

SpectralField operator+(SpectralField a, const SpectralField& b) { return a += b; }
SpectralField operator-(SpectralField a, const SpectralField& b) { return a -= b; }
SpectralField operator*(double s, SpectralField a) { return a *= s; }

double dot(const SpectralField& a, const SpectralField& b) {
  require_same_grid(a, b);
  double acc = 0.0;
  auto ca = a.coeffs();
  auto cb = b.coeffs();
  for (std::size_t i = 0; i < ca.size(); ++i) acc += ca[i] * cb[i];
  return acc;
}

double l2_norm(const SpectralField& f) { return std::sqrt(dot(f, f)); }

// --- PhysicalField -------------------------------------------------------

PhysicalField::PhysicalField(GridPtr grid) : grid_(std::move(grid)) {
  if (!grid_) throw std::invalid_argument("PhysicalField: null grid");
  values_.assign(grid_->physical_points(), 0.0);
}

PhysicalField::PhysicalField(GridPtr grid, std::vector<double> values)
    : grid_(std::move(grid)), values_(std::move(values)) {
  if (!grid_) throw std::invalid_argument("PhysicalField: null grid");
  if (values_.size() != grid_->physical_points()) {
    throw std::invalid_argument("PhysicalField: sample count does not match the grid");
  }
}

// --- multipliers ---------------------------------------------------------

SpectralField apply_lambda_power(const SpectralField& f, double s) {
  require_finite(f, "apply_lambda_power");
  SpectralField out = f;
  if (s == 0.0) return out;
  const auto ev = f.grid().eigenvalues();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] *= std::pow(static_cast<double>(ev[i]), 0.5 * s);
  }
  return out;
}

double sobolev_inner(const SpectralField& a, const SpectralField& b, double s) {
  require_same_grid(a, b);
  const auto ev = a.grid().eigenvalues();
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double w = s == 0.0 ? 1.0 : std::pow(static_cast<double>(ev[i]), s);
    acc += w * a[i] * b[i];
  }
  return acc;
}

double sobolev_norm(const SpectralField& f, double s) {
  return std::sqrt(sobolev_inner(f, f, s));
}

SpectralField partial(const SpectralField& f, int j) {
  if (j != 1 && j != 2) throw std::invalid_argument("partial: direction must be 1 or 2");
  const auto& grid = f.grid();
  SpectralField out(f.grid_ptr());
  for (std::size_t i = 0; i < f.size(); ++i) {
    const auto& k = grid.wavevector(i);
    out[grid.mirror(i)] = (j == 1 ? k.k1 : k.k2) * f[i];
  }
  return out;
}

SpectralField riesz_component(const SpectralField& theta, int j) {
  if (j != 1 && j != 2) throw std::invalid_argument("riesz_component: direction must be 1 or 2");
  const auto& grid = theta.grid();
  const auto mag = grid.magnitudes();
  SpectralField out(theta.grid_ptr());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const auto& k = grid.wavevector(i);
    // psi_k = -theta_k / |k|; u1 = -d2 psi, u2 = d1 psi
    const double w = theta[i] / mag[i];
    out[grid.mirror(i)] = j == 1 ? k.k2 * w : -k.k1 * w;
  }
  return out;
}

Velocity riesz_velocity(const SpectralField& theta) {
  return {riesz_component(theta, 1), riesz_component(theta, 2)};
}

SpectralField poisson_mollify(const SpectralField& f, double sigma) {
  if (!(sigma >= 0.0)) throw std::invalid_argument("poisson_mollify: sigma must be >= 0");
  SpectralField out = f;
  if (sigma == 0.0) return out;
  const auto mag = f.grid().magnitudes();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= std::exp(-sigma * mag[i]);
  return out;
}

SpectralField galerkin_project(const SpectralField& f, std::size_t K) {
  if (K < 1) throw std::invalid_argument("galerkin_project: K must be >= 1");
  SpectralField out = f;
  for (std::size_t i = K; i < out.size(); ++i) out[i] = 0.0;
  return out;
}

PhysicalField to_physical(const SpectralField& f) {
  PhysicalField g(f.grid_ptr());
  f.grid().synthesize(f.coeffs(), g.values());
  return g;
}

SpectralField to_spectral(const PhysicalField& g) {
  SpectralField f(g.grid_ptr());
  g.grid().analyze(g.values(), f.coeffs());
  return f;
}

SpectralField project_product(const PhysicalField& a, const PhysicalField& b) {
  if (a.grid_ptr() != b.grid_ptr()) throw std::invalid_argument("project_product: grid mismatch");
  PhysicalField prod(a.grid_ptr());
  auto pa = a.values();
  auto pb = b.values();
  auto out = prod.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = pa[i] * pb[i];
  return to_spectral(prod);
}

double lp_norm(const PhysicalField& g, double p) {
  if (!(p >= 1.0)) throw std::invalid_argument("lp_norm: p must be >= 1");
  const auto v = g.values();
  double acc = 0.0;
  if (p == 2.0) {
    for (double x : v) acc += x * x;
  } else {
    for (double x : v) acc += std::pow(std::abs(x), p);
  }
  const double cell = 4.0 * std::numbers::pi * std::numbers::pi / static_cast<double>(v.size());
  return std::pow(cell * acc, 1.0 / p);
}

}  // namespace sqg
