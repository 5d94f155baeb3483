#pragma once

#include <cmath>
#include <cstdio>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "lgchaos/errors.hpp"

namespace lgchaos {

enum class ObservableKind { monomial, polynomial, tanh };

/// A scalar test function g applied to one component of the state.
struct ObservableSpec {
  ObservableKind kind = ObservableKind::monomial;
  unsigned power = 1;                 // monomial x^power, power <= 8
  std::vector<double> coefficients;   // polynomial sum c_j x^j
  double scale = 1.0;                 // tanh(x / scale)
  std::size_t component = 0;

  static ObservableSpec monomial(unsigned k, std::size_t component = 0) {
    if (k > 8) throw DomainError("monomial observables are limited to x^8");
    ObservableSpec o;
    o.kind = ObservableKind::monomial;
    o.power = k;
    o.component = component;
    return o;
  }
  static ObservableSpec polynomial(std::vector<double> c, std::size_t component = 0) {
    if (c.empty() || c.size() > 9) throw DomainError("polynomial observable needs 1..9 coefficients");
    ObservableSpec o;
    o.kind = ObservableKind::polynomial;
    o.coefficients = std::move(c);
    o.component = component;
    return o;
  }
  static ObservableSpec tanh_of(double s, std::size_t component = 0) {
    if (!(s != 0.0) || !std::isfinite(s)) throw DomainError("tanh observable scale must be nonzero");
    ObservableSpec o;
    o.kind = ObservableKind::tanh;
    o.scale = s;
    o.component = component;
    return o;
  }

  double operator()(std::span<const double> x) const {
    if (component >= x.size()) throw DomainError("observable component out of range");
    return apply(x[component]);
  }

  double apply(double v) const {
    switch (kind) {
      case ObservableKind::monomial: {
        double r = 1.0;
        for (unsigned j = 0; j < power; ++j) r *= v;
        return r;
      }
      case ObservableKind::polynomial: {
        double r = 0.0;
        for (std::size_t j = coefficients.size(); j-- > 0;) r = r * v + coefficients[j];
        return r;
      }
      case ObservableKind::tanh: return std::tanh(v / scale);
    }
    return 0.0;
  }

  /// Short label used in CSV columns, e.g. "x0^2", "tanh(x0/1)".
  std::string label() const {
    const std::string var = "x" + std::to_string(component);
    switch (kind) {
      case ObservableKind::monomial: return power == 1 ? var : var + "^" + std::to_string(power);
      case ObservableKind::polynomial: {
        std::string s = "poly" + std::to_string(coefficients.size() - 1) + "(" + var + ")";
        return s;
      }
      case ObservableKind::tanh: {
        char buf[64];
        std::snprintf(buf, sizeof buf, "tanh(%s/%g)", var.c_str(), scale);
        return buf;
      }
    }
    return var;
  }
};

}  // namespace lgchaos
