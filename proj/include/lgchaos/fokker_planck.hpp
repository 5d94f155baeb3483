#pragma once

// 1-D density-space oracle. The Fokker-Planck operator
//   df/dt = -d(b f)/dx + (beta^2/2) d^2 f/dx^2
// is discretized in conservative flux form with exponentially fitted
// (Chang-Cooper / Scharfetter-Gummel) interface fluxes and zero-flux walls.
// The interface drift is the potential difference across the face, which
// makes the sampled exp(-2 Psi / beta^2) an exact discrete steady state.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <numbers>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lgchaos/density_grid.hpp"
#include "lgchaos/errors.hpp"
#include "lgchaos/numerics.hpp"
#include "lgchaos/observables.hpp"
#include "lgchaos/potentials.hpp"

namespace lgchaos {

inline constexpr double kDensityFloor = 1e-300;

/// Isotropic Gaussian density N(0, eps^2 I_n) as a function of the distance h.
inline double gaussian_pdf(double h, double epsilon, std::size_t n = 1) {
  const double s = std::abs(epsilon);
  return std::pow(std::sqrt(2.0 * std::numbers::pi) * s, -static_cast<double>(n)) * std::exp(-h * h / (2.0 * s * s));
}

inline DensityGrid gaussian_density(double epsilon, double u0, const GridSpec& grid) {
  if (epsilon == 0.0 || !std::isfinite(epsilon)) throw DomainError("gaussian_density: epsilon must be nonzero");
  grid.validate();
  DensityGrid g;
  g.grid = grid;
  g.values.resize(grid.cells);
  for (std::size_t i = 0; i < grid.cells; ++i) g.values[i] = gaussian_pdf(grid.center(i) - u0, epsilon);
  const double s = std::abs(epsilon);
  if (u0 - 3.0 * s < grid.x_min || u0 + 3.0 * s > grid.x_max)
    g.warnings.push_back("grid does not cover u0 +/- 3 epsilon; the Gaussian is truncated");
  g.normalize();
  return g;
}

/// f_st = Z exp(-2 Psi / beta^2) on the grid. Flags a non-normalizable
/// density when more than 1e-6 of the mass sits in the outer 5% of cells.
inline DensityGrid stationary_density(const PotentialSpec& potential, double beta, const GridSpec& grid) {
  if (potential.dimension() != 1) throw DomainError("stationary_density is 1-D only");
  if (beta == 0.0) throw DomainError("beta must be nonzero");
  grid.validate();
  std::vector<double> psi(grid.cells);
  for (std::size_t i = 0; i < grid.cells; ++i) {
    const double x = grid.center(i);
    psi[i] = potential.eval_potential(std::span<const double>(&x, 1));
  }
  const double psi_min = *std::min_element(psi.begin(), psi.end());
  DensityGrid f;
  f.grid = grid;
  f.values.resize(grid.cells);
  for (std::size_t i = 0; i < grid.cells; ++i) f.values[i] = std::exp(-2.0 * (psi[i] - psi_min) / (beta * beta));
  f.normalize();
  const std::size_t edge = std::max<std::size_t>(1, grid.cells / 20);
  double tail = 0.0;
  for (std::size_t i = 0; i < edge; ++i) tail += (f.values[i] + f.values[grid.cells - 1 - i]) * f.dx();
  if (tail > 1e-6)
    f.warnings.push_back("stationary density is not normalizable on this domain (tail mass " + format_real(tail) + ")");
  return f;
}

struct FPOptions {
  double dt = 1e-4;
  std::size_t output_stride = 100;     // steps between recorded snapshots
  double theta = 1.0;                  // 1 = backward Euler, 0.5 = Crank-Nicolson
  double boundary_flux_tol = 1e-8;     // admissible would-be outflow per unit time

  void validate() const {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw DomainError("fp: dt must be > 0");
    if (output_stride == 0) throw DomainError("fp: output_stride must be >= 1");
    if (!(theta >= 0.5 && theta <= 1.0)) throw DomainError("fp: theta must lie in [0.5, 1]");
  }
};

namespace detail {

/// B(z) = z / (e^z - 1)
inline double bernoulli_fn(double z) {
  if (std::abs(z) < 1e-10) return 1.0 - 0.5 * z;
  return z / std::expm1(z);
}

/// Tridiagonal generator A of df/dt = A f (columns sum to zero).
struct FPOperator {
  std::vector<double> lower, diag, upper;  // lower[i] multiplies f[i-1], upper[i] multiplies f[i+1]
  std::vector<double> outward_drift;       // {left wall, right wall}
  double diffusion = 0.0;
  double dx = 0.0;

  FPOperator(const PotentialSpec& potential, double beta, const GridSpec& grid) {
    const std::size_t m = grid.cells;
    dx = grid.dx();
    diffusion = 0.5 * beta * beta;
    std::vector<double> psi(m);
    for (std::size_t i = 0; i < m; ++i) {
      const double x = grid.center(i);
      psi[i] = potential.eval_potential(std::span<const double>(&x, 1));
    }
    const double c = diffusion / (dx * dx);
    lower.assign(m, 0.0);
    diag.assign(m, 0.0);
    upper.assign(m, 0.0);
    for (std::size_t i = 0; i + 1 < m; ++i) {
      // flux F = (D/dx) [B(-w) f_i - B(w) f_{i+1}],  w = -(psi_{i+1} - psi_i) / D
      const double w = -(psi[i + 1] - psi[i]) / diffusion;
      const double bp = bernoulli_fn(w), bm = bernoulli_fn(-w);
      diag[i] -= c * bm;
      upper[i] += c * bp;
      lower[i + 1] += c * bm;
      diag[i + 1] -= c * bp;
    }
    const double xl = grid.x_min + 0.5 * dx, xr = grid.x_max - 0.5 * dx;
    outward_drift = {std::max(0.0, -potential.drift_component(xl)), std::max(0.0, potential.drift_component(xr))};
  }

  void apply(std::span<const double> f, std::span<double> out) const {
    const std::size_t m = f.size();
    for (std::size_t i = 0; i < m; ++i) {
      double v = diag[i] * f[i];
      if (i > 0) v += lower[i] * f[i - 1];
      if (i + 1 < m) v += upper[i] * f[i + 1];
      out[i] = v;
    }
  }

  /// Outflow the walls would see if they were absorbing.
  double boundary_flux(std::span<const double> f) const {
    const double left = (2.0 * diffusion / dx + outward_drift[0]) * f.front();
    const double right = (2.0 * diffusion / dx + outward_drift[1]) * f.back();
    return left + right;
  }
};

/// Factored (I - h A) for repeated Thomas solves.
struct ImplicitSolver {
  std::vector<double> sub, diag_inv, sup;

  ImplicitSolver(const FPOperator& A, double h) {
    const std::size_t m = A.diag.size();
    sub.resize(m);
    diag_inv.resize(m);
    sup.resize(m);
    double prev_sup = 0.0, prev_inv = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const double l = -h * A.lower[i];
      const double d = 1.0 - h * A.diag[i];
      const double u = -h * A.upper[i];
      const double piv = d - (i > 0 ? l * prev_inv * prev_sup : 0.0);
      sub[i] = l;
      diag_inv[i] = 1.0 / piv;
      sup[i] = u;
      prev_sup = u;
      prev_inv = diag_inv[i];
    }
  }

  void solve(std::vector<double>& rhs) const {
    const std::size_t m = rhs.size();
    for (std::size_t i = 1; i < m; ++i) rhs[i] -= sub[i] * diag_inv[i - 1] * rhs[i - 1];
    rhs[m - 1] *= diag_inv[m - 1];
    for (std::size_t i = m - 1; i-- > 0;) rhs[i] = (rhs[i] - sup[i] * rhs[i + 1]) * diag_inv[i];
  }
};

}  // namespace detail

/// Evolves an initial density to t_final. Returns the initial snapshot, one
/// every output_stride steps, and the final one.
inline std::vector<DensityGrid> fp_evolve(const DensityGrid& initial, const PotentialSpec& potential, double beta,
                                          double t_final, const FPOptions& opt = {}) {
  opt.validate();
  if (potential.dimension() != 1) throw DomainError("fp solver is 1-D only");
  if (beta == 0.0) throw DomainError("beta must be nonzero");
  initial.grid.validate();
  if (initial.values.size() != initial.grid.cells) throw DomainError("fp: initial density does not match its grid");

  const detail::FPOperator A(potential, beta, initial.grid);
  const std::size_t m = initial.grid.cells;
  const std::size_t steps = step_count(t_final, opt.dt);

  std::vector<DensityGrid> out;
  DensityGrid cur = initial;
  cur.t = 0.0;
  out.push_back(cur);

  std::vector<double> f = initial.values, Af(m);
  std::unique_ptr<detail::ImplicitSolver> solver;
  double solver_h = -1.0;
  for (std::size_t j = 0; j < steps; ++j) {
    const double t0 = step_time(j, steps, t_final, opt.dt);
    const double t1 = step_time(j + 1, steps, t_final, opt.dt);
    const double h = t1 - t0;
    if (h != solver_h) {
      solver = std::make_unique<detail::ImplicitSolver>(A, opt.theta * h);
      solver_h = h;
    }
    if (opt.theta < 1.0) {
      A.apply(f, Af);
      for (std::size_t i = 0; i < m; ++i) f[i] += (1.0 - opt.theta) * h * Af[i];
    }
    solver->solve(f);
    for (std::size_t i = 0; i < m; ++i) {
      if (f[i] < 0.0 || !std::isfinite(f[i]))
        throw StabilityError(0.5 * h, "fp: negative or non-finite density in cell " + std::to_string(i) + " at t=" +
                                          format_real(t1) + "; retry with dt <= " + format_real(0.5 * h));
    }
    const double flux = A.boundary_flux(f);
    if (flux > opt.boundary_flux_tol)
      throw DomainTooSmallError("fp: boundary outflow " + format_real(flux) + " per unit time at t=" + format_real(t1) +
                                " exceeds tolerance; widen the domain");
    if ((j + 1) % opt.output_stride == 0 || j + 1 == steps) {
      cur.t = t1;
      cur.values = f;
      out.push_back(cur);
    }
  }
  return out;
}

/// Gaussian N(u0, epsilon^2) initial density evolved to the problem's t_final.
inline std::vector<DensityGrid> fp_solve(const ProblemSpec& problem, const GridSpec& grid, const FPOptions& opt = {}) {
  if (problem.dimension() != 1) throw DomainError("fp solver is 1-D only");
  DensityGrid init = gaussian_density(problem.epsilon(), problem.u0()[0], grid);
  const double spread = 6.0 * std::sqrt(problem.epsilon() * problem.epsilon() +
                                        problem.beta() * problem.beta() * problem.t_final());
  if (problem.u0()[0] - spread < grid.x_min || problem.u0()[0] + spread > grid.x_max)
    init.warnings.push_back("grid narrower than u0 +/- 6 sqrt(eps^2 + beta^2 t); relying on the boundary-flux monitor");
  auto snaps = fp_evolve(init, problem.potential(), problem.beta(), problem.t_final(), opt);
  for (auto& s : snaps) s.warnings = init.warnings;
  return snaps;
}

/// sum f log(f/g) dx with 0 log 0 = 0; cells with f below the density floor are skipped.
inline double kl_divergence(const DensityGrid& f, const DensityGrid& g) {
  if (!(f.grid == g.grid)) throw DomainError("kl_divergence: densities live on different grids");
  std::vector<double> terms(f.size(), 0.0);
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double fi = f.values[i], gi = g.values[i];
    if (fi <= kDensityFloor) continue;
    if (!(gi > 0.0)) throw DomainError("kl_divergence: g vanishes where f is positive (cell " + std::to_string(i) + ")");
    terms[i] = fi * std::log(fi / gi) * f.dx();
  }
  return pairwise_sum(terms);
}

/// sum (f')^2 / f dx with centered differences on interior cells above the floor.
inline double fisher_information(const DensityGrid& f) {
  const std::size_t m = f.size();
  std::vector<double> terms(m, 0.0);
  const double dx = f.dx();
  for (std::size_t i = 1; i + 1 < m; ++i) {
    if (f.values[i] <= kDensityFloor) continue;
    const double d = (f.values[i + 1] - f.values[i - 1]) / (2.0 * dx);
    terms[i] = d * d / f.values[i] * dx;
  }
  return pairwise_sum(terms);
}

/// Centered difference of log f; NaN at the two edge cells and wherever a
/// stencil value is below the floor.
inline std::vector<double> log_gradient(const DensityGrid& f) {
  const std::size_t m = f.size();
  std::vector<double> out(m, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t i = 1; i + 1 < m; ++i) {
    const double a = f.values[i - 1], b = f.values[i], c = f.values[i + 1];
    if (a <= kDensityFloor || b <= kDensityFloor || c <= kDensityFloor) continue;
    out[i] = (std::log(c) - std::log(a)) / (2.0 * f.dx());
  }
  return out;
}

struct GrowthAudit {
  double growth_constant = 0.0;  // max |dlog f/dx| / (1 + |x|) over audited cells
  LineFit fit;                   // |dlog f/dx| against |x|
  std::size_t cells = 0;
};

/// Linear-growth audit of the log-gradient over cells holding at least
/// rel_floor times the peak density.
inline GrowthAudit log_gradient_growth(const DensityGrid& f, double rel_floor = 1e-10) {
  const auto lg = log_gradient(f);
  const double peak = *std::max_element(f.values.begin(), f.values.end());
  GrowthAudit a;
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (!std::isfinite(lg[i]) || f.values[i] < rel_floor * peak) continue;
    const double ax = std::abs(f.x(i)), ag = std::abs(lg[i]);
    a.growth_constant = std::max(a.growth_constant, ag / (1.0 + ax));
    xs.push_back(ax);
    ys.push_back(ag);
  }
  a.cells = xs.size();
  if (xs.size() >= 2) a.fit = fit_line(xs, ys);
  return a;
}

struct K1Diagnostics {
  bool positive = false;         // every cell above the density floor
  double second_moment = 0.0;
  double fisher = 0.0;
  double growth_constant = 0.0;
};

inline double grid_moments(const DensityGrid& f, const ObservableSpec& g) {
  std::vector<double> terms(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double x = f.x(i);
    terms[i] = g(std::span<const double>(&x, 1)) * f.values[i] * f.dx();
  }
  return pairwise_sum(terms);
}

inline K1Diagnostics k1_diagnostics(const DensityGrid& f) {
  K1Diagnostics d;
  d.positive = std::all_of(f.values.begin(), f.values.end(), [](double v) { return v > kDensityFloor; });
  d.second_moment = grid_moments(f, ObservableSpec::monomial(2));
  d.fisher = fisher_information(f);
  d.growth_constant = log_gradient_growth(f).growth_constant;
  return d;
}

struct ChainConvolution {
  double variance = 0.0;
  double mass_lost = 0.0;
};

/// Convolves N(0, epsilon2) with m copies of N(0, dt) on a uniform grid and
/// returns the variance of the result (expected: epsilon2 + m dt). With
/// reversed = true the dt kernels are applied first and the epsilon kernel last.
inline ChainConvolution gaussian_chain_convolve(double epsilon2, double dt, std::size_t m, bool reversed = false) {
  if (!(epsilon2 > 0.0) || !(dt > 0.0)) throw DomainError("gaussian_chain_convolve: variances must be positive");
  const double total = epsilon2 + static_cast<double>(m) * dt;
  const double sigma_min = std::sqrt(m == 0 ? epsilon2 : std::min(epsilon2, dt));
  const double dx = sigma_min / 10.0;
  const std::size_t half = static_cast<std::size_t>(std::ceil(12.0 * std::sqrt(total) / dx));
  const std::size_t cells = 2 * half + 1;
  auto x_of = [&](std::size_t i) { return (static_cast<double>(i) - static_cast<double>(half)) * dx; };

  auto kernel = [&](double var) {
    const std::size_t w = static_cast<std::size_t>(std::ceil(10.0 * std::sqrt(var) / dx));
    std::vector<double> k(2 * w + 1);
    for (std::size_t j = 0; j < k.size(); ++j) {
      const double y = (static_cast<double>(j) - static_cast<double>(w)) * dx;
      k[j] = std::exp(-0.5 * y * y / var);
    }
    const double s = pairwise_sum(k);
    for (double& v : k) v /= s;
    return k;
  };
  std::vector<double> f(cells, 0.0), g(cells);
  f[half] = 1.0;
  double lost = 0.0;
  auto convolve = [&](const std::vector<double>& k) {
    const std::size_t w = k.size() / 2;
    const double before = pairwise_sum(f);
    for (std::size_t i = 0; i < cells; ++i) {
      double s = 0.0;
      const std::size_t jlo = i + w >= cells ? i + w - (cells - 1) : 0;
      const std::size_t jhi = std::min(k.size() - 1, i + w);
      for (std::size_t j = jlo; j <= jhi; ++j) s += k[j] * f[i + w - j];
      g[i] = s;
    }
    f.swap(g);
    lost += before - pairwise_sum(f);
  };
  const auto k_eps = kernel(epsilon2);
  const auto k_dt = m > 0 ? kernel(dt) : std::vector<double>{};
  if (!reversed) convolve(k_eps);
  for (std::size_t r = 0; r < m; ++r) convolve(k_dt);
  if (reversed) convolve(k_eps);
  if (lost > 1e-8) throw DomainError("gaussian_chain_convolve: grid truncation lost " + format_real(lost) + " mass");

  std::vector<double> mom(cells);
  for (std::size_t i = 0; i < cells; ++i) mom[i] = f[i] * x_of(i);
  const double mass = pairwise_sum(f);
  const double mean = pairwise_sum(mom) / mass;
  for (std::size_t i = 0; i < cells; ++i) mom[i] = f[i] * (x_of(i) - mean) * (x_of(i) - mean);
  return {pairwise_sum(mom) / mass, lost};
}

/// CSV snapshot: two comment lines (t, problem hash), a header, then x,f rows.
inline void write_density_csv(std::ostream& os, const DensityGrid& f, std::string_view problem_hash) {
  os << "# t=" << format_real(f.t) << "\n# problem_hash=" << problem_hash << "\nx,f\n";
  for (std::size_t i = 0; i < f.size(); ++i) os << format_real(f.x(i)) << ',' << format_real(f.values[i]) << '\n';
}

}  // namespace lgchaos
