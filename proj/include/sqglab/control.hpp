#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace sqg {

// Piecewise-constant control v : [0, T] -> R^m on cells [s_c, s_{c+1}).
class Control {
 public:
  Control() = default;
  // grid: s_0 = 0 < ... < s_n; values: cell-major, n * m entries.
  Control(std::vector<double> grid, std::size_t dimension, std::vector<double> values);

  static Control zeros(std::size_t dimension, double horizon, std::size_t cells);
  static Control constant(std::size_t dimension, double horizon, std::size_t cells,
                          std::span<const double> value);

  std::size_t dimension() const { return dimension_; }
  std::size_t cells() const { return grid_.empty() ? 0 : grid_.size() - 1; }
  double horizon() const { return grid_.empty() ? 0.0 : grid_.back(); }
  double width(std::size_t c) const { return grid_[c + 1] - grid_[c]; }
  std::span<const double> grid() const { return grid_; }

  std::span<const double> cell(std::size_t c) const {
    return {values_.data() + c * dimension_, dimension_};
  }
  std::span<double> cell(std::size_t c) { return {values_.data() + c * dimension_, dimension_}; }
  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }

  // Cell containing t, clamped to [0, cells() - 1].
  std::size_t cell_at(double t) const;

  // Squared L2([0,T], R^m) norm.
  double squared_norm() const;

  Control& operator*=(double s);
  friend bool operator==(const Control&, const Control&) = default;

 private:
  std::vector<double> grid_;
  std::size_t dimension_ = 0;
  std::vector<double> values_;
};

}  // namespace sqg
