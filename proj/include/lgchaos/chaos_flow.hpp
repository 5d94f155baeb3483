#pragma once

// Deterministic propagation of the random map X(t) = M(xi, t), xi ~ N(0, I_n),
// expanded in tensor Hermite polynomials. The diffusion of the Ito process is
// replaced by the transport velocity -(beta^2/2) grad log f_X, and the change
// of variables |grad M| f_X(M) = f_Xi turns that velocity into an inverse
// Jacobian of the map, so the coefficient ODE never needs the density:
//
//   dm_{i,a}/dt = < b_i(M), H_a > + (beta^2/2) < (J^{-1})_{l i}, dH_a/dxi_l >,
//   J_{il} = dM_i/dxi_l,
//
// with both inner products taken by Gauss-Hermite quadrature.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "lgchaos/density_grid.hpp"
#include "lgchaos/errors.hpp"
#include "lgchaos/hermite.hpp"
#include "lgchaos/numerics.hpp"
#include "lgchaos/observables.hpp"
#include "lgchaos/potentials.hpp"

namespace lgchaos {

struct ChaosConfig {
  unsigned p = 4;                   // total chaos order
  std::size_t q = 0;                // nodes per dimension; 0 selects 2p+4
  double dt = 1e-3;                 // RK4 step
  double jac_floor = 1e-10;         // smallest admissible Jacobian determinant
  std::size_t output_stride = 1;    // steps between recorded states

  std::size_t nodes() const { return q == 0 ? 2 * static_cast<std::size_t>(p) + 4 : q; }

  void validate() const {
    if (nodes() < static_cast<std::size_t>(p) + 1) throw DomainError("chaos config requires q >= p + 1");
    if (!(dt > 0.0) || !std::isfinite(dt)) throw DomainError("chaos config requires dt > 0");
    if (!(jac_floor >= 0.0)) throw DomainError("chaos config requires jac_floor >= 0");
    if (output_stride == 0) throw DomainError("chaos config requires output_stride >= 1");
  }
};

/// Index set, quadrature rule and the basis tables at the quadrature nodes.
/// Immutable after construction; shared by every state of a run.
class ChaosBasis {
 public:
  ChaosBasis(std::size_t n, unsigned p, std::size_t q)
      : indices_(n, p), rule_(gauss_hermite_rule(n, q)) {
    const std::size_t N = rule_.size(), P = indices_.size();
    values_.resize(N * P);
    grads_.resize(N * n * P);
    std::vector<std::vector<double>> h(n, std::vector<double>(p + 1));
    for (std::size_t k = 0; k < N; ++k) {
      const auto node = rule_.node(k);
      for (std::size_t i = 0; i < n; ++i) hermite_table(p, node[i], h[i]);
      for (std::size_t a = 0; a < P; ++a) {
        const MultiIndex& alpha = indices_[a];
        double v = 1.0;
        for (std::size_t i = 0; i < n; ++i) v *= h[i][alpha[i]];
        values_[k * P + a] = v;
        for (std::size_t l = 0; l < n; ++l) {
          double g = alpha[l] == 0 ? 0.0 : std::sqrt(static_cast<double>(alpha[l])) * h[l][alpha[l] - 1];
          for (std::size_t i = 0; i < n && g != 0.0; ++i)
            if (i != l) g *= h[i][alpha[i]];
          grads_[(k * n + l) * P + a] = g;
        }
      }
    }
  }

  std::size_t dimension() const { return indices_.dimension(); }
  std::size_t size() const { return indices_.size(); }
  const MultiIndexSet& indices() const { return indices_; }
  const QuadratureRule& rule() const { return rule_; }
  double value(std::size_t node, std::size_t a) const { return values_[node * size() + a]; }
  double grad(std::size_t node, std::size_t l, std::size_t a) const {
    return grads_[(node * dimension() + l) * size() + a];
  }

 private:
  MultiIndexSet indices_;
  QuadratureRule rule_;
  std::vector<double> values_;
  std::vector<double> grads_;
};

/// Coefficients m_{i,a} of the map at time t, stored component-major.
class ChaosState {
 public:
  ChaosState(double t, std::shared_ptr<const ChaosBasis> basis, std::vector<double> coeffs)
      : t_(t), basis_(std::move(basis)), coeffs_(std::move(coeffs)) {
    if (!basis_) throw DomainError("chaos state needs a basis");
    if (coeffs_.size() != dimension() * basis_size()) throw DomainError("chaos state coefficient count mismatch");
  }

  double t() const { return t_; }
  std::size_t dimension() const { return basis_->dimension(); }
  std::size_t basis_size() const { return basis_->size(); }
  const ChaosBasis& basis() const { return *basis_; }
  const std::shared_ptr<const ChaosBasis>& basis_ptr() const { return basis_; }
  const std::vector<double>& coeffs() const { return coeffs_; }
  double coeff(std::size_t i, std::size_t a) const { return coeffs_[i * basis_size() + a]; }

  /// Mean of component i (the zero-order coefficient).
  double mean(std::size_t i) const { return coeff(i, 0); }
  /// Variance of component i by orthonormality: sum of squared non-constant coefficients.
  double variance(std::size_t i) const {
    double s = 0.0;
    for (std::size_t a = 1; a < basis_size(); ++a) s += coeff(i, a) * coeff(i, a);
    return s;
  }

 private:
  double t_;
  std::shared_ptr<const ChaosBasis> basis_;
  std::vector<double> coeffs_;
};

inline std::shared_ptr<const ChaosBasis> make_chaos_basis(std::size_t n, const ChaosConfig& config) {
  config.validate();
  return std::make_shared<const ChaosBasis>(n, config.p, config.nodes());
}

/// M(xi, 0) = u0 + |epsilon| xi: the Gaussian initial law N(u0, epsilon^2 I).
inline ChaosState init_gaussian_map(std::span<const double> u0, double epsilon,
                                    std::shared_ptr<const ChaosBasis> basis) {
  const std::size_t n = basis->dimension();
  if (u0.size() != n) throw DomainError("init_gaussian_map: u0 dimension mismatch");
  if (epsilon == 0.0 || !std::isfinite(epsilon))
    throw MapDegeneracyError(0.0, std::vector<double>(n, 0.0), 0.0,
                             "epsilon = 0 gives a Dirac initial condition; a nonzero regularization is required");
  if (basis->indices().order() == 0)
    throw MapDegeneracyError(0.0, std::vector<double>(n, 0.0), 0.0, "chaos order p = 0 cannot represent a random map");
  const std::size_t P = basis->size();
  std::vector<double> c(n * P, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    c[i * P] = u0[i];
    c[i * P + 1 + i] = std::abs(epsilon);  // e_i sits at position 1+i in the ordering
  }
  return ChaosState(0.0, std::move(basis), std::move(c));
}

/// Map values at arbitrary points (flat, n coordinates per point).
inline std::vector<double> eval_map(const ChaosState& state, std::span<const double> points) {
  const std::size_t n = state.dimension(), P = state.basis_size();
  if (points.size() % n != 0) throw DomainError("eval_map: point buffer is not a multiple of the dimension");
  const std::size_t count = points.size() / n;
  std::vector<double> out(count * n, 0.0);
  for (std::size_t k = 0; k < count; ++k) {
    const auto xi = points.subspan(k * n, n);
    for (std::size_t a = 0; a < P; ++a) {
      const double h = tensor_hermite_eval(state.basis().indices()[a], xi).value;
      for (std::size_t i = 0; i < n; ++i) out[k * n + i] += state.coeff(i, a) * h;
    }
  }
  return out;
}

/// Jacobians dM_i/dxi_l at arbitrary points, row-major n x n per point.
inline std::vector<double> eval_map_jacobian(const ChaosState& state, std::span<const double> points) {
  const std::size_t n = state.dimension(), P = state.basis_size();
  if (points.size() % n != 0) throw DomainError("eval_map_jacobian: point buffer is not a multiple of the dimension");
  const std::size_t count = points.size() / n;
  std::vector<double> out(count * n * n, 0.0);
  for (std::size_t k = 0; k < count; ++k) {
    const auto xi = points.subspan(k * n, n);
    for (std::size_t a = 0; a < P; ++a) {
      const auto th = tensor_hermite_eval(state.basis().indices()[a], xi);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t l = 0; l < n; ++l) out[(k * n + i) * n + l] += state.coeff(i, a) * th.gradient[l];
    }
  }
  return out;
}

namespace detail {

struct NodeMap {
  std::vector<double> m;    // n
  Eigen::MatrixXd jac;      // n x n, jac(i, l) = dM_i/dxi_l
};

inline void map_at_node(const ChaosState& s, std::size_t node, NodeMap& out) {
  const std::size_t n = s.dimension(), P = s.basis_size();
  const ChaosBasis& B = s.basis();
  out.m.assign(n, 0.0);
  out.jac.setZero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const double* c = s.coeffs().data() + i * P;
    double v = 0.0;
    for (std::size_t a = 0; a < P; ++a) v += c[a] * B.value(node, a);
    out.m[i] = v;
    for (std::size_t l = 0; l < n; ++l) {
      double g = 0.0;
      for (std::size_t a = 0; a < P; ++a) g += c[a] * B.grad(node, l, a);
      out.jac(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(l)) = g;
    }
  }
}

[[noreturn]] inline void throw_degenerate(const ChaosState& s, std::size_t node, double det) {
  const auto xi = s.basis().rule().node(node);
  std::string where = "(";
  for (std::size_t l = 0; l < xi.size(); ++l) where += (l ? ", " : "") + format_real(xi[l]);
  where += ")";
  throw MapDegeneracyError(s.t(), std::vector<double>(xi.begin(), xi.end()), det,
                           "map Jacobian determinant " + format_real(det) + " at node xi=" + where + ", t=" +
                               format_real(s.t()) + " is at or below the floor");
}

}  // namespace detail

/// Smallest Jacobian determinant over the quadrature nodes; throws
/// MapDegeneracyError if any node is at or below jac_floor.
inline double check_map(const ChaosState& state, double jac_floor) {
  detail::NodeMap nm;
  double min_det = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < state.basis().rule().size(); ++k) {
    detail::map_at_node(state, k, nm);
    const double det = nm.jac.rows() == 1 ? nm.jac(0, 0) : nm.jac.partialPivLu().determinant();
    if (!(det > jac_floor)) detail::throw_degenerate(state, k, det);
    min_det = std::min(min_det, det);
  }
  return min_det;
}

/// Time derivative of every coefficient, same layout as ChaosState::coeffs().
inline std::vector<double> chaos_rhs(const ChaosState& state, const PotentialSpec& potential, double beta,
                                     double jac_floor = 1e-10) {
  const std::size_t n = state.dimension(), P = state.basis_size();
  if (potential.dimension() != n) throw DomainError("chaos_rhs: potential dimension mismatch");
  const ChaosBasis& B = state.basis();
  const QuadratureRule& rule = B.rule();
  const std::size_t N = rule.size();
  const double half_beta2 = 0.5 * beta * beta;

  // contributions[(i*P + a) * N + node]; reduced per row in node order.
  std::vector<double> contrib(n * P * N);
  detail::NodeMap nm;
  Eigen::MatrixXd inv(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  std::vector<double> drift(n);
  for (std::size_t k = 0; k < N; ++k) {
    detail::map_at_node(state, k, nm);
    double det;
    if (n == 1) {
      det = nm.jac(0, 0);
      if (det > jac_floor) inv(0, 0) = 1.0 / det;
    } else {
      const Eigen::PartialPivLU<Eigen::MatrixXd> lu(nm.jac);
      det = lu.determinant();
      if (det > jac_floor) inv = lu.inverse();
    }
    if (!(det > jac_floor)) detail::throw_degenerate(state, k, det);
    for (std::size_t i = 0; i < n; ++i) {
      if (!std::isfinite(nm.m[i])) throw DivergedError(0, "chaos map is non-finite at t=" + format_real(state.t()));
      drift[i] = potential.drift_component(nm.m[i]);
    }
    const double w = rule.weight(k);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t a = 0; a < P; ++a) {
        double transport = 0.0;
        for (std::size_t l = 0; l < n; ++l)
          transport += inv(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(i)) * B.grad(k, l, a);
        contrib[(i * P + a) * N + k] = w * (drift[i] * B.value(k, a) + half_beta2 * transport);
      }
    }
  }
  std::vector<double> out(n * P);
  for (std::size_t r = 0; r < n * P; ++r) out[r] = pairwise_sum(std::span<const double>(contrib).subspan(r * N, N));
  return out;
}

/// Classical fourth-order Runge-Kutta step of chaos_rhs. The returned state
/// is checked against jac_floor at every node.
inline ChaosState step_rk4(const ChaosState& state, const PotentialSpec& potential, double beta, double dt,
                           double jac_floor = 1e-10) {
  if (dt == 0.0) return state;
  const std::size_t len = state.coeffs().size();
  const auto& c0 = state.coeffs();
  auto stage = [&](const std::vector<double>& k, double h, double t) {
    std::vector<double> c(len);
    for (std::size_t r = 0; r < len; ++r) c[r] = c0[r] + h * k[r];
    return ChaosState(t, state.basis_ptr(), std::move(c));
  };
  const double t0 = state.t();
  const auto k1 = chaos_rhs(state, potential, beta, jac_floor);
  const auto k2 = chaos_rhs(stage(k1, 0.5 * dt, t0 + 0.5 * dt), potential, beta, jac_floor);
  const auto k3 = chaos_rhs(stage(k2, 0.5 * dt, t0 + 0.5 * dt), potential, beta, jac_floor);
  const auto k4 = chaos_rhs(stage(k3, dt, t0 + dt), potential, beta, jac_floor);
  std::vector<double> c(len);
  for (std::size_t r = 0; r < len; ++r) c[r] = c0[r] + dt / 6.0 * (k1[r] + 2.0 * k2[r] + 2.0 * k3[r] + k4[r]);
  ChaosState next(t0 + dt, state.basis_ptr(), std::move(c));
  if (!all_finite(next.coeffs())) throw DivergedError(0, "chaos coefficients became non-finite at t=" + format_real(t0));
  check_map(next, jac_floor);
  return next;
}

struct PropagationFailure {
  ErrorKind kind;
  std::string message;
  double t = 0.0;
  std::vector<double> node;
  double determinant = 0.0;
};

struct PropagationResult {
  std::vector<ChaosState> states;
  std::optional<PropagationFailure> failure;

  bool ok() const { return !failure.has_value(); }
  const ChaosState& final_state() const { return states.back(); }
};

/// Initial Gaussian map followed by RK4 steps to t_final. A degenerate map
/// stops the run; the states accepted so far are kept and the failure is
/// recorded.
inline PropagationResult propagate(const ProblemSpec& problem, const ChaosConfig& config) {
  config.validate();
  const auto basis = make_chaos_basis(problem.dimension(), config);
  PropagationResult result;
  std::optional<ChaosState> cur;
  try {
    cur.emplace(init_gaussian_map(problem.u0(), problem.epsilon(), basis));
    check_map(*cur, config.jac_floor);
  } catch (const MapDegeneracyError& e) {
    result.failure = PropagationFailure{e.kind(), e.what(), e.time(), e.node(), e.determinant()};
    return result;
  }
  result.states.push_back(*cur);
  const std::size_t steps = step_count(problem.t_final(), config.dt);
  for (std::size_t j = 0; j < steps; ++j) {
    const double t0 = step_time(j, steps, problem.t_final(), config.dt);
    const double t1 = step_time(j + 1, steps, problem.t_final(), config.dt);
    try {
      ChaosState next = step_rk4(*cur, problem.potential(), problem.beta(), t1 - t0, config.jac_floor);
      cur.emplace(t1, next.basis_ptr(), next.coeffs());
    } catch (const MapDegeneracyError& e) {
      result.failure = PropagationFailure{e.kind(), e.what(), e.time(), e.node(), e.determinant()};
    } catch (const DivergedError& e) {
      result.failure = PropagationFailure{e.kind(), e.what(), t0, {}, 0.0};
    }
    if (result.failure) {
      if (result.states.back().t() != cur->t()) result.states.push_back(*cur);
      return result;
    }
    if ((j + 1) % config.output_stride == 0 || j + 1 == steps) result.states.push_back(*cur);
  }
  return result;
}

/// E[g(X)] by quadrature over the map values.
inline double moments_from_state(const ChaosState& state, const ObservableSpec& g) {
  const std::size_t n = state.dimension();
  const QuadratureRule& rule = state.basis().rule();
  std::vector<double> terms(rule.size());
  detail::NodeMap nm;
  for (std::size_t k = 0; k < rule.size(); ++k) {
    detail::map_at_node(state, k, nm);
    terms[k] = rule.weight(k) * g(std::span<const double>(nm.m.data(), n));
  }
  return pairwise_sum(terms);
}

struct MapDensityOptions {
  double xi_max = 7.0;            // half-width of the xi lattice (at least the quadrature hull)
  std::size_t lattice = 4001;     // lattice points used to bracket preimages
};

/// 1-D density of X = M(xi) through f_X(M(xi)) = phi(xi) / M'(xi), evaluated
/// at the grid's cell centers; zero outside the map's range on the lattice.
inline DensityGrid density_from_map(const ChaosState& state, const GridSpec& grid,
                                    const MapDensityOptions& opt = {}) {
  if (state.dimension() != 1) throw DomainError("density_from_map is only defined for n = 1");
  grid.validate();
  if (opt.lattice < 3 || !(opt.xi_max > 0.0)) throw DomainError("density_from_map: bad lattice options");
  const std::size_t P = state.basis_size();
  const unsigned p = state.basis().indices().order();
  std::vector<double> h(p + 1);
  auto eval = [&](double xi) {
    hermite_table(p, xi, h);
    double m = 0.0, dm = 0.0;
    for (std::size_t a = 0; a < P; ++a) {
      m += state.coeff(0, a) * h[a];
      if (a > 0) dm += state.coeff(0, a) * std::sqrt(static_cast<double>(a)) * h[a - 1];
    }
    return std::pair{m, dm};
  };

  // The map must increase on the quadrature hull; beyond it the lattice is
  // cut at the first turning point.
  const QuadratureRule& rule = state.basis().rule();
  double hull = 0.0;
  for (std::size_t k = 0; k < rule.size(); ++k) hull = std::max(hull, std::abs(rule.node(k)[0]));
  const double xi_max = std::max(opt.xi_max, hull);
  std::vector<double> lx(opt.lattice), lm(opt.lattice), ld(opt.lattice);
  const double step = 2.0 * xi_max / static_cast<double>(opt.lattice - 1);
  for (std::size_t j = 0; j < opt.lattice; ++j) {
    lx[j] = -xi_max + static_cast<double>(j) * step;
    std::tie(lm[j], ld[j]) = eval(lx[j]);
  }
  const std::size_t mid = opt.lattice / 2;
  std::size_t first = mid, last = mid;
  while (first > 0 && ld[first - 1] > 0.0) --first;
  while (last + 1 < opt.lattice && ld[last + 1] > 0.0) ++last;
  for (std::size_t j = 0; j < opt.lattice; ++j) {
    if (std::abs(lx[j]) <= hull && !(ld[j] > 0.0))
      throw MapDegeneracyError(state.t(), {lx[j]}, ld[j],
                               "map is not increasing at xi=" + format_real(lx[j]) + " (M'=" + format_real(ld[j]) + ")");
  }
  lx = std::vector<double>(lx.begin() + static_cast<std::ptrdiff_t>(first), lx.begin() + static_cast<std::ptrdiff_t>(last) + 1);
  lm = std::vector<double>(lm.begin() + static_cast<std::ptrdiff_t>(first), lm.begin() + static_cast<std::ptrdiff_t>(last) + 1);
  const std::size_t used = lx.size();
  if (used < 2) throw MapDegeneracyError(state.t(), {0.0}, ld[mid], "map is not increasing near xi=0");

  DensityGrid out;
  out.grid = grid;
  out.t = state.t();
  out.values.assign(grid.cells, 0.0);
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  for (std::size_t c = 0; c < grid.cells; ++c) {
    const double x = grid.center(c);
    if (x < lm.front() || x > lm.back()) continue;
    const std::size_t hi = static_cast<std::size_t>(std::upper_bound(lm.begin(), lm.end(), x) - lm.begin());
    const std::size_t j = hi == 0 ? 0 : std::min(hi - 1, used - 2);
    double lo = lx[j], up = lx[j + 1];
    double xi = lo + (up - lo) * (x - lm[j]) / (lm[j + 1] - lm[j]);
    // safeguarded Newton on M(xi) = x inside the monotone bracket
    for (int it = 0; it < 30; ++it) {
      const auto [m, dm] = eval(xi);
      const double r = m - x;
      if (r > 0) up = xi; else lo = xi;
      double next = xi - r / dm;
      if (!(next > lo && next < up)) next = 0.5 * (lo + up);
      if (std::abs(next - xi) <= 1e-15 * (1.0 + std::abs(xi))) {
        xi = next;
        break;
      }
      xi = next;
    }
    const double dm = eval(xi).second;
    out.values[c] = inv_sqrt_2pi * std::exp(-0.5 * xi * xi) / dm;
  }
  return out;
}

}  // namespace lgchaos
