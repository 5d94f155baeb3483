#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace lgchaos {

enum class ErrorKind {
  domain,
  size,
  map_degeneracy,
  diverged,
  stability,
  domain_too_small,
  config,
  io,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::domain: return "domain";
    case ErrorKind::size: return "size";
    case ErrorKind::map_degeneracy: return "map_degeneracy";
    case ErrorKind::diverged: return "diverged";
    case ErrorKind::stability: return "stability";
    case ErrorKind::domain_too_small: return "domain_too_small";
    case ErrorKind::config: return "config";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class DomainError : public Error {
 public:
  explicit DomainError(const std::string& what) : Error(ErrorKind::domain, what) {}
};

class SizeError : public Error {
 public:
  explicit SizeError(const std::string& what) : Error(ErrorKind::size, what) {}
};

/// The chaos map lost invertibility: the Jacobian determinant dropped to or
/// below the configured floor at some quadrature node.
class MapDegeneracyError : public Error {
 public:
  MapDegeneracyError(double t, std::vector<double> node, double determinant, const std::string& what)
      : Error(ErrorKind::map_degeneracy, what), t_(t), node_(std::move(node)), det_(determinant) {}
  double time() const noexcept { return t_; }
  const std::vector<double>& node() const noexcept { return node_; }
  double determinant() const noexcept { return det_; }

 private:
  double t_;
  std::vector<double> node_;
  double det_;
};

class DivergedError : public Error {
 public:
  DivergedError(std::size_t step, const std::string& what) : Error(ErrorKind::diverged, what), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

class StabilityError : public Error {
 public:
  StabilityError(double suggested_dt, const std::string& what)
      : Error(ErrorKind::stability, what), suggested_dt_(suggested_dt) {}
  double suggested_dt() const noexcept { return suggested_dt_; }

 private:
  double suggested_dt_;
};

class DomainTooSmallError : public Error {
 public:
  explicit DomainTooSmallError(const std::string& what) : Error(ErrorKind::domain_too_small, what) {}
};

class ConfigError : public Error {
 public:
  ConfigError(std::string key, const std::string& what, int line = 0)
      : Error(ErrorKind::config, what), key_(std::move(key)), line_(line) {}
  const std::string& key() const noexcept { return key_; }
  int line() const noexcept { return line_; }

 private:
  std::string key_;
  int line_;
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorKind::io, what) {}
};

}  // namespace lgchaos
