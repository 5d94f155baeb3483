#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "lgchaos/errors.hpp"
#include "lgchaos/numerics.hpp"

namespace lgchaos {

/// Uniform 1-D cell grid on [x_min, x_max]; values live at cell centers.
struct GridSpec {
  double x_min = -1.0;
  double x_max = 1.0;
  std::size_t cells = 1;

  void validate() const {
    if (!std::isfinite(x_min) || !std::isfinite(x_max) || !(x_max > x_min))
      throw DomainError("grid needs finite bounds with x_max > x_min");
    if (cells < 3) throw DomainError("grid needs at least 3 cells");
  }
  double dx() const { return (x_max - x_min) / static_cast<double>(cells); }
  double center(std::size_t i) const { return x_min + (static_cast<double>(i) + 0.5) * dx(); }
  bool operator==(const GridSpec&) const = default;
};

struct DensityGrid {
  GridSpec grid;
  double t = 0.0;
  std::vector<double> values;
  std::vector<std::string> warnings;

  double dx() const { return grid.dx(); }
  double x(std::size_t i) const { return grid.center(i); }
  std::size_t size() const { return values.size(); }

  double mass() const {
    std::vector<double> v(values);
    for (double& f : v) f *= dx();
    return pairwise_sum(v);
  }
  void normalize() {
    const double m = mass();
    if (!(m > 0.0) || !std::isfinite(m)) throw DomainError("density has no positive finite mass to normalize");
    for (double& f : values) f /= m;
  }
};

inline double l1_distance(const DensityGrid& f, const DensityGrid& g) {
  if (!(f.grid == g.grid)) throw DomainError("l1_distance: densities live on different grids");
  std::vector<double> d(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) d[i] = std::abs(f.values[i] - g.values[i]) * f.dx();
  return pairwise_sum(d);
}

}  // namespace lgchaos
