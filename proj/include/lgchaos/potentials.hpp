#pragma once

// Problem instances for dU = b(U) dt + beta dW with gradient drift b = -grad Psi.
// Every family is separable, Psi(x) = sum_i psi(x_i), so the drift is
// componentwise and the divergence is a plain sum of second derivatives.

#include <cmath>
#include <cstddef>
#include <fstream>
#include <memory>
#include <numbers>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "lgchaos/errors.hpp"

namespace lgchaos {

enum class PotentialKind { zero, quadratic, cosine, tanh_well, tabulated };

inline const char* to_string(PotentialKind k) {
  switch (k) {
    case PotentialKind::zero: return "zero";
    case PotentialKind::quadratic: return "quadratic";
    case PotentialKind::cosine: return "cosine";
    case PotentialKind::tanh_well: return "tanhwell";
    case PotentialKind::tabulated: return "tabulated";
  }
  return "unknown";
}

/// Clamped cubic spline through tabulated (x, y) samples. End slopes are the
/// one-sided second-order differences of the table. Outside the table the
/// spline continues linearly with the end slope.
class CubicSpline {
 public:
  CubicSpline(std::vector<double> xs, std::vector<double> ys) : x_(std::move(xs)), y_(std::move(ys)) {
    const std::size_t n = x_.size();
    if (n < 3 || y_.size() != n) throw DomainError("tabulated potential needs at least 3 (x, psi) rows");
    for (std::size_t i = 0; i < n; ++i) {
      if (!std::isfinite(x_[i]) || !std::isfinite(y_[i])) throw DomainError("tabulated potential has non-finite entries");
      if (i > 0 && !(x_[i] > x_[i - 1])) throw DomainError("tabulated potential abscissae must be strictly increasing");
    }
    slope_lo_ = one_sided_slope(x_[0], x_[1], x_[2], y_[0], y_[1], y_[2]);
    slope_hi_ = -one_sided_slope(-x_[n - 1], -x_[n - 2], -x_[n - 3], y_[n - 1], y_[n - 2], y_[n - 3]);

    // Tridiagonal system for the second derivatives, clamped ends (Thomas algorithm).
    std::vector<double> a(n), b(n), c(n), d(n);
    const double h0 = x_[1] - x_[0];
    b[0] = h0 / 3.0;
    c[0] = h0 / 6.0;
    d[0] = (y_[1] - y_[0]) / h0 - slope_lo_;
    for (std::size_t i = 1; i + 1 < n; ++i) {
      const double hl = x_[i] - x_[i - 1], hr = x_[i + 1] - x_[i];
      a[i] = hl / 6.0;
      b[i] = (hl + hr) / 3.0;
      c[i] = hr / 6.0;
      d[i] = (y_[i + 1] - y_[i]) / hr - (y_[i] - y_[i - 1]) / hl;
    }
    const double hn = x_[n - 1] - x_[n - 2];
    a[n - 1] = hn / 6.0;
    b[n - 1] = hn / 3.0;
    d[n - 1] = slope_hi_ - (y_[n - 1] - y_[n - 2]) / hn;
    for (std::size_t i = 1; i < n; ++i) {
      const double w = a[i] / b[i - 1];
      b[i] -= w * c[i - 1];
      d[i] -= w * d[i - 1];
    }
    m_.assign(n, 0.0);
    m_[n - 1] = d[n - 1] / b[n - 1];
    for (std::size_t i = n - 1; i-- > 0;) m_[i] = (d[i] - c[i] * m_[i + 1]) / b[i];
  }

  struct Eval {
    double value, d1, d2;
  };

  Eval eval(double x) const {
    const std::size_t n = x_.size();
    if (x <= x_.front()) return {y_.front() + slope_lo_ * (x - x_.front()), slope_lo_, 0.0};
    if (x >= x_.back()) return {y_.back() + slope_hi_ * (x - x_.back()), slope_hi_, 0.0};
    std::size_t lo = 0, hi = n - 1;
    while (hi - lo > 1) {
      const std::size_t mid = (lo + hi) / 2;
      (x_[mid] > x ? hi : lo) = mid;
    }
    const double h = x_[hi] - x_[lo];
    const double A = (x_[hi] - x) / h, B = (x - x_[lo]) / h;
    const double value = A * y_[lo] + B * y_[hi] + ((A * A * A - A) * m_[lo] + (B * B * B - B) * m_[hi]) * h * h / 6.0;
    const double d1 = (y_[hi] - y_[lo]) / h - (3 * A * A - 1) / 6.0 * h * m_[lo] + (3 * B * B - 1) / 6.0 * h * m_[hi];
    const double d2 = A * m_[lo] + B * m_[hi];
    return {value, d1, d2};
  }

  double x_min() const { return x_.front(); }
  double x_max() const { return x_.back(); }

 private:
  static double one_sided_slope(double x0, double x1, double x2, double y0, double y1, double y2) {
    // derivative at x0 of the parabola through the three points
    const double h1 = x1 - x0, h2 = x2 - x0;
    return (y1 * h2 * h2 - y2 * h1 * h1 - y0 * (h2 * h2 - h1 * h1)) / (h1 * h2 * (h2 - h1));
  }

  std::vector<double> x_, y_, m_;
  double slope_lo_ = 0.0, slope_hi_ = 0.0;
};

class PotentialSpec {
 public:
  static PotentialSpec zero(std::size_t n = 1) { return PotentialSpec(PotentialKind::zero, {}, n); }
  /// Psi = k |x|^2 / 2 (Ornstein-Uhlenbeck drift; unbounded, kept for its closed forms).
  static PotentialSpec quadratic(double k, std::size_t n = 1) { return PotentialSpec(PotentialKind::quadratic, {k}, n); }
  /// Psi = a sum cos(omega x_i)
  static PotentialSpec cosine(double a, double omega, std::size_t n = 1) {
    return PotentialSpec(PotentialKind::cosine, {a, omega}, n);
  }
  /// Psi = a sum log cosh(x_i / s)
  static PotentialSpec tanh_well(double a, double s, std::size_t n = 1) {
    if (s == 0.0) throw DomainError("tanhwell width s must be nonzero");
    return PotentialSpec(PotentialKind::tanh_well, {a, s}, n);
  }
  static PotentialSpec tabulated(std::vector<double> xs, std::vector<double> psi, std::size_t n = 1,
                                 std::string source = {}) {
    PotentialSpec p(PotentialKind::tabulated, {}, n);
    p.spline_ = std::make_shared<const CubicSpline>(std::move(xs), std::move(psi));
    p.source_ = std::move(source);
    return p;
  }

  /// Reads a two-column table "x,psi" (comma or whitespace separated; lines
  /// starting with '#' and a non-numeric header line are skipped).
  static PotentialSpec load_tabulated(const std::string& path, std::size_t n = 1) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open tabulated potential '" + path + "'");
    std::vector<double> xs, ys;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty() || line[0] == '#') continue;
      for (char& ch : line)
        if (ch == ',' || ch == ';' || ch == '\t') ch = ' ';
      std::istringstream ss(line);
      double x = 0, y = 0;
      if (!(ss >> x >> y)) {
        if (xs.empty()) continue;  // header
        throw DomainError("tabulated potential '" + path + "': bad row at line " + std::to_string(lineno));
      }
      xs.push_back(x);
      ys.push_back(y);
    }
    return tabulated(std::move(xs), std::move(ys), n, path);
  }

  PotentialKind kind() const { return kind_; }
  const std::vector<double>& params() const { return params_; }
  std::size_t dimension() const { return n_; }
  const std::string& source() const { return source_; }

  double eval_potential(std::span<const double> x) const {
    check_point(x);
    double s = 0.0;
    for (double xi : x) s += psi(xi);
    return s;
  }

  std::vector<double> eval_drift(std::span<const double> x) const {
    check_point(x);
    std::vector<double> b(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) b[i] = -dpsi(x[i]);
    return b;
  }

  /// Drift of a single coordinate; the hot path of the chaos and MC loops.
  double drift_component(double xi) const { return -dpsi(xi); }

  double eval_drift_divergence(std::span<const double> x) const {
    check_point(x);
    double s = 0.0;
    for (double xi : x) s -= d2psi(xi);
    return s;
  }

 private:
  PotentialSpec(PotentialKind kind, std::vector<double> params, std::size_t n)
      : kind_(kind), params_(std::move(params)), n_(n) {
    if (n_ == 0) throw DomainError("potential dimension must be >= 1");
    for (double p : params_)
      if (!std::isfinite(p)) throw DomainError("potential parameters must be finite");
  }

  void check_point(std::span<const double> x) const {
    if (x.size() != n_) throw DomainError("point dimension does not match potential dimension");
    for (double xi : x)
      if (!std::isfinite(xi)) throw DomainError("potential evaluated at a non-finite point");
  }

  static double log_cosh(double y) {
    const double ay = std::abs(y);
    return ay + std::log1p(std::exp(-2.0 * ay)) - std::numbers::ln2;
  }

  double psi(double x) const {
    switch (kind_) {
      case PotentialKind::zero: return 0.0;
      case PotentialKind::quadratic: return 0.5 * params_[0] * x * x;
      case PotentialKind::cosine: return params_[0] * std::cos(params_[1] * x);
      case PotentialKind::tanh_well: return params_[0] * log_cosh(x / params_[1]);
      case PotentialKind::tabulated: return spline_->eval(x).value;
    }
    return 0.0;
  }

  double dpsi(double x) const {
    switch (kind_) {
      case PotentialKind::zero: return 0.0;
      case PotentialKind::quadratic: return params_[0] * x;
      case PotentialKind::cosine: return -params_[0] * params_[1] * std::sin(params_[1] * x);
      case PotentialKind::tanh_well: return params_[0] / params_[1] * std::tanh(x / params_[1]);
      case PotentialKind::tabulated: return spline_->eval(x).d1;
    }
    return 0.0;
  }

  double d2psi(double x) const {
    switch (kind_) {
      case PotentialKind::zero: return 0.0;
      case PotentialKind::quadratic: return params_[0];
      case PotentialKind::cosine: return -params_[0] * params_[1] * params_[1] * std::cos(params_[1] * x);
      case PotentialKind::tanh_well: {
        const double c = std::cosh(x / params_[1]);
        return params_[0] / (params_[1] * params_[1] * c * c);
      }
      case PotentialKind::tabulated: return spline_->eval(x).d2;
    }
    return 0.0;
  }

  PotentialKind kind_;
  std::vector<double> params_;
  std::size_t n_;
  std::shared_ptr<const CubicSpline> spline_;
  std::string source_;
};

/// One SDE instance together with its regularized Gaussian initial condition
/// U0 + epsilon Z.
class ProblemSpec {
 public:
  ProblemSpec(PotentialSpec potential, double beta, std::vector<double> u0, double epsilon, double t_final)
      : potential_(std::move(potential)), beta_(beta), u0_(std::move(u0)), epsilon_(epsilon), t_final_(t_final) {
    if (!std::isfinite(beta_) || beta_ == 0.0) throw DomainError("beta must be nonzero");
    if (!std::isfinite(epsilon_) || epsilon_ == 0.0) throw DomainError("epsilon must be nonzero");
    if (!std::isfinite(t_final_) || t_final_ < 0.0) throw DomainError("t_final must be a nonnegative real");
    if (u0_.size() != potential_.dimension()) throw DomainError("u0 dimension does not match potential dimension");
    for (double u : u0_)
      if (!std::isfinite(u)) throw DomainError("u0 must be finite");
  }

  const PotentialSpec& potential() const { return potential_; }
  double beta() const { return beta_; }
  const std::vector<double>& u0() const { return u0_; }
  double epsilon() const { return epsilon_; }
  double t_final() const { return t_final_; }
  std::size_t dimension() const { return potential_.dimension(); }

  ProblemSpec with_epsilon(double eps) const { return ProblemSpec(potential_, beta_, u0_, eps, t_final_); }
  ProblemSpec with_t_final(double t) const { return ProblemSpec(potential_, beta_, u0_, epsilon_, t); }

 private:
  PotentialSpec potential_;
  double beta_;
  std::vector<double> u0_;
  double epsilon_;
  double t_final_;
};

}  // namespace lgchaos
