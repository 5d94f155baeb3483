#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "lgchaos/errors.hpp"

namespace lgchaos {

/// Pairwise (tree) summation with a fixed split order, so the result depends
/// only on the input sequence and never on how the caller scheduled the work.
inline double pairwise_sum(std::span<const double> xs) {
  constexpr std::size_t kBlock = 8;
  if (xs.size() <= kBlock) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s;
  }
  const std::size_t half = xs.size() / 2;
  return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

inline bool all_finite(std::span<const double> xs) {
  for (double x : xs)
    if (!std::isfinite(x)) return false;
  return true;
}

/// Binomial coefficient as a double; exact while the result stays below 2^53.
inline double binomial(std::uint64_t n, std::uint64_t k) {
  if (k > n) return 0.0;
  if (k > n - k) k = n - k;
  long double r = 1.0L;
  for (std::uint64_t j = 1; j <= k; ++j) r = r * static_cast<long double>(n - k + j) / static_cast<long double>(j);
  return static_cast<double>(std::round(r));
}

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double residual_rms = 0.0;
};

/// Ordinary least squares y ≈ intercept + slope·x.
inline LineFit fit_line(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw DomainError("fit_line: need at least two paired samples");
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
  }
  const double mx = sx / n, my = sy / n;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0.0) throw DomainError("fit_line: degenerate abscissae");
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double r2 = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - (f.intercept + f.slope * x[i]);
    r2 += r * r;
  }
  f.residual_rms = std::sqrt(r2 / n);
  return f;
}

/// Slope of log(y) against log(x).
inline LineFit fit_loglog(std::span<const double> x, std::span<const double> y) {
  std::vector<double> lx, ly;
  lx.reserve(x.size());
  ly.reserve(y.size());
  for (std::size_t i = 0; i < x.size() && i < y.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw DomainError("fit_loglog: nonpositive sample");
    lx.push_back(std::log(x[i]));
    ly.push_back(std::log(y[i]));
  }
  return fit_line(lx, ly);
}

/// Round-trip decimal formatting for CSV output (17 significant digits).
inline std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Step schedule shared by the deterministic solvers: full steps of dt from 0,
/// the last one shortened to land exactly on t_final.
inline std::size_t step_count(double t_final, double dt) {
  if (t_final <= 0.0) return 0;
  const double r = t_final / dt;
  const double rounded = std::round(r);
  if (std::abs(r - rounded) <= 1e-9 * std::max(1.0, r)) return static_cast<std::size_t>(rounded);
  return static_cast<std::size_t>(std::ceil(r));
}

inline double step_time(std::size_t j, std::size_t steps, double t_final, double dt) {
  return j >= steps ? t_final : std::min(static_cast<double>(j) * dt, t_final);
}

}  // namespace lgchaos
