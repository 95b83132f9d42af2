#pragma once

// Fourier machinery on the torus [0, 2pi)^2 restricted to zero-mean fields.
//
// Fields are stored as real coefficients in the orthonormal basis
//   sin(k.x) / (sqrt(2) pi)   for k in Z2+ = {k2 > 0} u {k2 = 0, k1 > 0},
//   cos(k.x) / (sqrt(2) pi)   for k in Z2- = -Z2+,
// truncated to the disc 0 < |k| <= N.  The L2 inner product of two fields is
// the Euclidean inner product of their coefficient vectors.

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

namespace sqg {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Wavevector {
  int k1 = 0;
  int k2 = 0;
  friend bool operator==(const Wavevector&, const Wavevector&) = default;
};

// True when k lies in Z2+ (the sine half of the basis).
constexpr bool in_upper_half(Wavevector k) {
  return k.k2 > 0 || (k.k2 == 0 && k.k1 > 0);
}

class WaveGrid {
 public:
  static constexpr int kMaxResolution = 2048;

  // Use make_grid(); the constructor is public only for make_shared.
  explicit WaveGrid(int resolution);
  ~WaveGrid();
  WaveGrid(const WaveGrid&) = delete;
  WaveGrid& operator=(const WaveGrid&) = delete;

  int resolution() const { return resolution_; }
  std::size_t size() const { return modes_.size(); }
  // Number of Z2+ entries; they occupy indices [0, upper_count()).
  std::size_t upper_count() const { return modes_.size() / 2; }

  std::span<const Wavevector> wavevectors() const { return modes_; }
  const Wavevector& wavevector(std::size_t i) const { return modes_[i]; }
  // |k|^2, exact integers.
  std::span<const int> eigenvalues() const { return eigenvalues_; }
  // |k| as double.
  std::span<const double> magnitudes() const { return magnitudes_; }
  // Index of -k.
  std::size_t mirror(std::size_t i) const { return mirror_[i]; }
  std::optional<std::size_t> index_of(Wavevector k) const;

  // Points per axis of the physical grid.  At least 3N + 1 so that quadratic
  // products of band-limited fields project back onto |k| <= N without aliasing.
  int physical_size() const { return physical_size_; }
  std::size_t physical_points() const {
    return static_cast<std::size_t>(physical_size_) * physical_size_;
  }

  // Sample values at x = 2 pi (j1, j2) / M, row-major with j2 fastest.
  void synthesize(std::span<const double> coeffs, std::span<double> values) const;
  // Discrete projection onto the retained basis; the grid mean is dropped.
  void analyze(std::span<const double> values, std::span<double> coeffs) const;

 private:
  struct FftPlans;

  int resolution_;
  int physical_size_;
  std::vector<Wavevector> modes_;
  std::vector<int> eigenvalues_;
  std::vector<double> magnitudes_;
  std::vector<std::size_t> mirror_;
  // Position of each Z2+ entry in the half-complex FFT array.
  std::vector<std::size_t> fft_slot_;
  std::vector<std::size_t> fft_slot_conj_;  // for k2 == 0 rows, slot of -k
  std::unique_ptr<FftPlans> plans_;
};

using GridPtr = std::shared_ptr<const WaveGrid>;

// Throws ConfigError for N < 1 or N > WaveGrid::kMaxResolution.
GridPtr make_grid(int resolution);

class SpectralField {
 public:
  SpectralField() = default;
  explicit SpectralField(GridPtr grid);
  // Throws std::invalid_argument on size mismatch or non-finite entries.
  SpectralField(GridPtr grid, std::vector<double> coeffs);

  static SpectralField basis(GridPtr grid, Wavevector k, double amplitude = 1.0);

  const WaveGrid& grid() const { return *grid_; }
  const GridPtr& grid_ptr() const { return grid_; }
  bool empty() const { return !grid_; }
  std::size_t size() const { return coeffs_.size(); }

  std::span<const double> coeffs() const { return coeffs_; }
  std::span<double> coeffs() { return coeffs_; }
  double operator[](std::size_t i) const { return coeffs_[i]; }
  double& operator[](std::size_t i) { return coeffs_[i]; }
  double coefficient(Wavevector k) const;

  bool all_finite() const;

  SpectralField& operator+=(const SpectralField& other);
  SpectralField& operator-=(const SpectralField& other);
  SpectralField& operator*=(double s);
  // this += s * other
  SpectralField& axpy(double s, const SpectralField& other);

  friend bool operator==(const SpectralField& a, const SpectralField& b) {
    return a.grid_ == b.grid_ && a.coeffs_ == b.coeffs_;
  }

 private:
  GridPtr grid_;
  std::vector<double> coeffs_;
};

SpectralField operator+(SpectralField a, const SpectralField& b);
SpectralField operator-(SpectralField a, const SpectralField& b);
SpectralField operator*(double s, SpectralField a);

double dot(const SpectralField& a, const SpectralField& b);
double l2_norm(const SpectralField& f);

class PhysicalField {
 public:
  PhysicalField() = default;
  explicit PhysicalField(GridPtr grid);
  PhysicalField(GridPtr grid, std::vector<double> values);

  const WaveGrid& grid() const { return *grid_; }
  const GridPtr& grid_ptr() const { return grid_; }
  int points_per_axis() const { return grid_->physical_size(); }
  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }
  double& at(int j1, int j2) { return values_[static_cast<std::size_t>(j1) * points_per_axis() + j2]; }
  double at(int j1, int j2) const { return values_[static_cast<std::size_t>(j1) * points_per_axis() + j2]; }

 private:
  GridPtr grid_;
  std::vector<double> values_;
};

SpectralField apply_lambda_power(const SpectralField& f, double s);
double sobolev_norm(const SpectralField& f, double s);
double sobolev_inner(const SpectralField& a, const SpectralField& b, double s);

struct Velocity {
  SpectralField u1;
  SpectralField u2;
};

// u = R-perp theta from u = (-d2 psi, d1 psi), Lambda psi = -theta.
Velocity riesz_velocity(const SpectralField& theta);
// Component j (1 or 2) of the same map; linear and skew-adjoint.
SpectralField riesz_component(const SpectralField& theta, int j);
// d/dx_j for j in {1, 2}.
SpectralField partial(const SpectralField& f, int j);

// c_k -> exp(-sigma |k|) c_k.  Throws std::invalid_argument for sigma < 0.
SpectralField poisson_mollify(const SpectralField& f, double sigma);
// Keeps the first K coefficients in canonical order.  Throws for K < 1.
SpectralField galerkin_project(const SpectralField& f, std::size_t K);

PhysicalField to_physical(const SpectralField& f);
SpectralField to_spectral(const PhysicalField& g);
// Projection of the pointwise product of two physical fields.
SpectralField project_product(const PhysicalField& a, const PhysicalField& b);

// Uniform-grid quadrature of the L^p norm.  Throws for p < 1.
double lp_norm(const PhysicalField& g, double p);

}  // namespace sqg
