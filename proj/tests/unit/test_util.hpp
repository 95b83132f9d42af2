#pragma once

#include <cmath>
#include <cstdint>

#include "sqglab/noise.hpp"
#include "sqglab/spectral.hpp"

namespace sqg::testing {

// Random field with coefficients ~ N(0,1) |k|^{-decay}.
inline SpectralField random_field(const GridPtr& grid, std::uint64_t seed, double decay = 1.0,
                                  double scale = 1.0) {
  GaussianStream rng(seed);
  SpectralField f(grid);
  auto mags = grid->magnitudes();
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = scale * rng() * std::pow(mags[i], -decay);
  return f;
}

inline double rel_diff(const SpectralField& a, const SpectralField& b) {
  double n = std::max(l2_norm(a), l2_norm(b));
  return n == 0.0 ? 0.0 : l2_norm(a - b) / n;
}

}  // namespace sqg::testing
