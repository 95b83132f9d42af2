#include "sqglab/control.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sqg {

Control::Control(std::vector<double> grid, std::size_t dimension, std::vector<double> values)
    : grid_(std::move(grid)), dimension_(dimension), values_(std::move(values)) {
  if (dimension_ == 0) throw std::invalid_argument("Control: dimension must be >= 1");
  if (grid_.size() < 2) throw std::invalid_argument("Control: grid needs at least one cell");
  if (grid_.front() != 0.0) throw std::invalid_argument("Control: grid must start at 0");
  for (std::size_t i = 1; i < grid_.size(); ++i) {
    if (!(grid_[i] > grid_[i - 1])) {
      throw std::invalid_argument("Control: grid must be strictly increasing");
    }
  }
  if (values_.size() != cells() * dimension_) {
    throw std::invalid_argument("Control: value count does not match cells x dimension");
  }
  for (double v : values_) {
    if (!std::isfinite(v)) throw std::invalid_argument("Control: non-finite value");
  }
}

Control Control::zeros(std::size_t dimension, double horizon, std::size_t cells) {
  if (cells == 0 || !(horizon > 0.0)) {
    throw std::invalid_argument("Control::zeros: need cells >= 1 and horizon > 0");
  }
  std::vector<double> grid(cells + 1);
  for (std::size_t c = 0; c <= cells; ++c) {
    grid[c] = horizon * static_cast<double>(c) / static_cast<double>(cells);
  }
  grid.back() = horizon;
  return Control(std::move(grid), dimension, std::vector<double>(cells * dimension, 0.0));
}

Control Control::constant(std::size_t dimension, double horizon, std::size_t cells,
                          std::span<const double> value) {
  if (value.size() != dimension) throw std::invalid_argument("Control::constant: bad dimension");
  Control v = zeros(dimension, horizon, cells);
  for (std::size_t c = 0; c < cells; ++c) std::copy(value.begin(), value.end(), v.cell(c).begin());
  return v;
}

std::size_t Control::cell_at(double t) const {
  auto it = std::upper_bound(grid_.begin(), grid_.end(), t);
  std::ptrdiff_t c = (it - grid_.begin()) - 1;
  c = std::clamp<std::ptrdiff_t>(c, 0, static_cast<std::ptrdiff_t>(cells()) - 1);
  return static_cast<std::size_t>(c);
}

double Control::squared_norm() const {
  double acc = 0.0;
  for (std::size_t c = 0; c < cells(); ++c) {
    double cell_sq = 0.0;
    for (double v : cell(c)) cell_sq += v * v;
    acc += cell_sq * width(c);
  }
  return acc;
}

Control& Control::operator*=(double s) {
  for (auto& v : values_) v *= s;
  return *this;
}

}  // namespace sqg
