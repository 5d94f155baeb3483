#pragma once

// Normalized probabilists' Hermite polynomials, total-degree multi-index sets,
// and tensor Gauss-Hermite quadrature normalized to the standard Gaussian
// probability measure.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Eigenvalues>

#include "lgchaos/errors.hpp"
#include "lgchaos/numerics.hpp"

namespace lgchaos {

using MultiIndex = std::vector<unsigned>;

inline unsigned total_degree(const MultiIndex& alpha) {
  unsigned s = 0;
  for (unsigned a : alpha) s += a;
  return s;
}

inline constexpr std::size_t kDefaultSizeCap = 1'000'000;

/// All multi-indices in n variables with total degree <= p. Ordered by
/// degree; within one degree, lexicographically larger tuples come first,
/// so the first-order block is e_1, e_2, ..., e_n.
class MultiIndexSet {
 public:
  MultiIndexSet(std::size_t n, unsigned p, std::size_t cap = kDefaultSizeCap) : n_(n), p_(p) {
    if (n == 0) throw DomainError("multi-index dimension must be >= 1");
    const double card = binomial(n + p, n);
    if (card > static_cast<double>(cap))
      throw SizeError("multi-index set size " + format_real(card) + " exceeds cap " + std::to_string(cap));
    indices_.reserve(static_cast<std::size_t>(card));
    MultiIndex cur(n, 0);
    for (unsigned d = 0; d <= p; ++d) emit_degree(cur, 0, d);
  }

  std::size_t dimension() const { return n_; }
  unsigned order() const { return p_; }
  std::size_t size() const { return indices_.size(); }
  const MultiIndex& operator[](std::size_t k) const { return indices_[k]; }
  auto begin() const { return indices_.begin(); }
  auto end() const { return indices_.end(); }

  /// Position of alpha in the ordering, or size() if absent.
  std::size_t find(const MultiIndex& alpha) const {
    auto it = std::find(indices_.begin(), indices_.end(), alpha);
    return static_cast<std::size_t>(it - indices_.begin());
  }

 private:
  void emit_degree(MultiIndex& cur, std::size_t pos, unsigned remaining) {
    if (pos + 1 == n_) {
      cur[pos] = remaining;
      indices_.push_back(cur);
      return;
    }
    for (unsigned a = remaining + 1; a-- > 0;) {
      cur[pos] = a;
      emit_degree(cur, pos + 1, remaining - a);
    }
    cur[pos] = 0;
  }

  std::size_t n_;
  unsigned p_;
  std::vector<MultiIndex> indices_;
};

struct HermiteValue {
  double value;
  double derivative;
};

/// Normalized Hermite polynomial H_k(xi) = He_k(xi)/sqrt(k!) and its
/// derivative sqrt(k) H_{k-1}(xi), via the three-term recurrence
/// H_{j+1} = (xi H_j - sqrt(j) H_{j-1}) / sqrt(j+1).
inline HermiteValue hermite_eval(unsigned k, double xi) {
  double prev = 0.0, cur = 1.0;
  for (unsigned j = 0; j < k; ++j) {
    const double next = (xi * cur - std::sqrt(static_cast<double>(j)) * prev) / std::sqrt(static_cast<double>(j + 1));
    prev = cur;
    cur = next;
  }
  return {cur, k == 0 ? 0.0 : std::sqrt(static_cast<double>(k)) * prev};
}

/// Values H_0..H_kmax at xi.
inline void hermite_table(unsigned kmax, double xi, std::span<double> out) {
  out[0] = 1.0;
  if (kmax == 0) return;
  out[1] = xi;
  for (unsigned j = 1; j < kmax; ++j)
    out[j + 1] = (xi * out[j] - std::sqrt(static_cast<double>(j)) * out[j - 1]) / std::sqrt(static_cast<double>(j + 1));
}

struct TensorHermiteValue {
  double value;
  std::vector<double> gradient;
};

inline TensorHermiteValue tensor_hermite_eval(const MultiIndex& alpha, std::span<const double> xi) {
  if (alpha.size() != xi.size()) throw DomainError("tensor_hermite_eval: multi-index and point dimensions differ");
  const std::size_t n = xi.size();
  std::vector<HermiteValue> f(n);
  for (std::size_t i = 0; i < n; ++i) f[i] = hermite_eval(alpha[i], xi[i]);
  TensorHermiteValue out{1.0, std::vector<double>(n, 1.0)};
  for (std::size_t i = 0; i < n; ++i) {
    out.value *= f[i].value;
    for (std::size_t l = 0; l < n; ++l) out.gradient[l] *= (l == i) ? f[i].derivative : f[i].value;
  }
  return out;
}

/// Tensor Gauss-Hermite rule for the standard Gaussian measure. Nodes are
/// stored row-major (node k occupies coordinates [k*n, k*n+n)); the first
/// coordinate varies slowest.
class QuadratureRule {
 public:
  QuadratureRule(std::size_t n, std::size_t q, std::vector<double> nodes, std::vector<double> weights)
      : n_(n), q_(q), nodes_(std::move(nodes)), weights_(std::move(weights)) {}

  std::size_t dimension() const { return n_; }
  std::size_t nodes_per_dimension() const { return q_; }
  std::size_t size() const { return weights_.size(); }
  std::span<const double> node(std::size_t k) const { return {nodes_.data() + k * n_, n_}; }
  double weight(std::size_t k) const { return weights_[k]; }
  const std::vector<double>& weights() const { return weights_; }
  const std::vector<double>& flat_nodes() const { return nodes_; }

 private:
  std::size_t n_, q_;
  std::vector<double> nodes_;
  std::vector<double> weights_;
};

/// One-dimensional q-point rule: Golub-Welsch eigenvalues of the Jacobi
/// matrix, Newton-polished on H_q, with Christoffel weights 1/sum_k H_k^2.
inline std::pair<std::vector<double>, std::vector<double>> gauss_hermite_1d(std::size_t q) {
  if (q == 0) throw DomainError("gauss_hermite_rule: q must be >= 1");
  std::vector<double> x(q), w(q);
  if (q == 1) return {{0.0}, {1.0}};

  Eigen::VectorXd diag = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(q));
  Eigen::VectorXd sub(static_cast<Eigen::Index>(q - 1));
  for (std::size_t k = 1; k < q; ++k) sub[static_cast<Eigen::Index>(k - 1)] = std::sqrt(static_cast<double>(k));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
  es.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);
  for (std::size_t j = 0; j < q; ++j) x[j] = es.eigenvalues()[static_cast<Eigen::Index>(j)];

  std::vector<double> h(q + 1);
  for (std::size_t j = 0; j < q; ++j) {
    for (int it = 0; it < 3; ++it) {
      const HermiteValue hv = hermite_eval(static_cast<unsigned>(q), x[j]);
      if (hv.derivative == 0.0) break;
      x[j] -= hv.value / hv.derivative;
    }
  }
  // Exact symmetry about the origin keeps odd moments at zero.
  for (std::size_t j = 0; j < q / 2; ++j) {
    const double s = 0.5 * (x[q - 1 - j] - x[j]);
    x[j] = -s;
    x[q - 1 - j] = s;
  }
  if (q % 2 == 1) x[q / 2] = 0.0;

  for (std::size_t j = 0; j < q; ++j) {
    hermite_table(static_cast<unsigned>(q - 1), x[j], h);
    double s = 0.0;
    for (std::size_t k = 0; k < q; ++k) s += h[k] * h[k];
    w[j] = 1.0 / s;
  }
  for (std::size_t j = 0; j < q / 2; ++j) w[q - 1 - j] = w[j];
  const double total = pairwise_sum(w);
  for (double& wj : w) wj /= total;
  return {x, w};
}

inline QuadratureRule gauss_hermite_rule(std::size_t n, std::size_t q, std::size_t cap = kDefaultSizeCap) {
  if (n == 0) throw DomainError("gauss_hermite_rule: dimension must be >= 1");
  if (q == 0) throw DomainError("gauss_hermite_rule: q must be >= 1");
  double count = 1.0;
  for (std::size_t i = 0; i < n; ++i) count *= static_cast<double>(q);
  if (count > static_cast<double>(cap))
    throw SizeError("tensor quadrature size " + format_real(count) + " exceeds cap " + std::to_string(cap));
  const auto [x1, w1] = gauss_hermite_1d(q);
  const std::size_t total = static_cast<std::size_t>(count);
  std::vector<double> nodes(total * n), weights(total);
  std::vector<std::size_t> digit(n, 0);
  for (std::size_t k = 0; k < total; ++k) {
    double w = 1.0;
    for (std::size_t i = 0; i < n; ++i) {
      nodes[k * n + i] = x1[digit[i]];
      w *= w1[digit[i]];
    }
    weights[k] = w;
    for (std::size_t i = n; i-- > 0;) {
      if (++digit[i] < q) break;
      digit[i] = 0;
    }
  }
  return QuadratureRule(n, q, std::move(nodes), std::move(weights));
}

/// Gaussian inner product <f, H_alpha> by quadrature; f is given at the rule nodes.
inline double project(std::span<const double> values_at_nodes, const MultiIndex& alpha, const QuadratureRule& rule) {
  if (values_at_nodes.size() != rule.size()) throw DomainError("project: values do not align with quadrature nodes");
  if (alpha.size() != rule.dimension()) throw DomainError("project: multi-index dimension differs from rule dimension");
  std::vector<double> terms(rule.size());
  for (std::size_t k = 0; k < rule.size(); ++k)
    terms[k] = rule.weight(k) * values_at_nodes[k] * tensor_hermite_eval(alpha, rule.node(k)).value;
  return pairwise_sum(terms);
}

}  // namespace lgchaos
