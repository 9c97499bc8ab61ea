#pragma once

#include <cstddef>
#include <vector>

#include "cqr/errors.hpp"

namespace cqr {

// Strictly increasing quantile indices in (0,1).
struct QuantileGrid {
  std::vector<double> taus;

  QuantileGrid() = default;
  explicit QuantileGrid(std::vector<double> t) : taus(std::move(t)) { validate(); }

  std::size_t size() const { return taus.size(); }
  double operator[](std::size_t g) const { return taus[g]; }

  void validate() const {
    if (taus.empty()) throw InputError("quantile grid is empty");
    double prev = 0.0;
    for (double t : taus) {
      if (!(t > 0.0 && t < 1.0)) throw InputError("quantile index outside (0,1)");
      if (!(t > prev)) throw InputError("quantile grid not strictly increasing");
      prev = t;
    }
  }

  // Index of an exact grid value, or throws.
  std::size_t index_of(double tau) const {
    for (std::size_t g = 0; g < taus.size(); ++g)
      if (taus[g] == tau) return g;
    throw InputError("tau not on the quantile grid");
  }

  bool operator==(const QuantileGrid& other) const { return taus == other.taus; }
};

// Grid {j/n : j=0..n} intersected with [t_lo, t_hi]; falls back to the
// midpoint when the intersection is empty.
inline QuantileGrid default_grid(double t_lo, double t_hi, std::size_t n) {
  if (!(0.0 < t_lo && t_lo < t_hi && t_hi < 1.0))
    throw InputError("default_grid: need 0 < t_lo < t_hi < 1");
  std::vector<double> taus;
  for (std::size_t j = 0; j <= n; ++j) {
    double t = static_cast<double>(j) / static_cast<double>(n);
    if (t >= t_lo && t <= t_hi) taus.push_back(t);
  }
  if (taus.empty()) taus.push_back(0.5 * (t_lo + t_hi));
  return QuantileGrid(std::move(taus));
}

}  // namespace cqr
