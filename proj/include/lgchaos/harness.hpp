#pragma once

// Run configuration, orchestration of the chaos / Monte-Carlo / Fokker-Planck
// solvers, comparison reports, and CSV + JSON manifest output.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lgchaos/chaos_flow.hpp"
#include "lgchaos/errors.hpp"
#include "lgchaos/fokker_planck.hpp"
#include "lgchaos/mc_reference.hpp"
#include "lgchaos/numerics.hpp"
#include "lgchaos/observables.hpp"
#include "lgchaos/potentials.hpp"

namespace lgchaos {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr int kManifestVersion = 1;

enum ExitCode : int { exit_ok = 0, exit_config = 2, exit_numerical = 3, exit_io = 4 };

inline int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config:
    case ErrorKind::domain:
    case ErrorKind::size: return exit_config;
    case ErrorKind::map_degeneracy:
    case ErrorKind::diverged:
    case ErrorKind::stability:
    case ErrorKind::domain_too_small: return exit_numerical;
    case ErrorKind::io: return exit_io;
  }
  return exit_numerical;
}

inline const std::vector<std::string>& known_methods() {
  static const std::vector<std::string> m{"chaos", "mc", "fp", "compare", "wiener-dim", "epsilon-study"};
  return m;
}

struct CompareSettings {
  std::vector<std::string> methods{"chaos", "fp", "mc"};
  double tol_det = 1e-3;
  double se_multiplier = 3.0;
};

struct WienerSettings {
  std::vector<double> t_list{0.5, 1.0, 2.0, 4.0, 8.0};
  double tol = 0.01;
  unsigned p = 3;
  std::vector<std::size_t> m_levels{4, 8, 16, 32};
  std::size_t n_samples = 2000;
  std::size_t fine_steps = 2048;
  double t_fit = 1.0;
};

struct RunConfig {
  std::string method = "chaos";

  std::string potential = "zero";
  double k = 1.0, a = 1.0, omega = 1.0, s = 1.0;
  std::size_t dimension = 1;
  double beta = 1.0;
  std::vector<double> u0{0.0};
  double epsilon = 0.1;
  double t_final = 1.0;
  std::uint64_t seed = 1;

  ChaosConfig chaos{4, 0, 1e-3, 1e-10, 100};
  bool quadrature_check = true;

  SimulationOptions mc{};

  std::optional<GridSpec> fp_grid;
  std::size_t fp_cells = 2048;
  FPOptions fp{1e-4, 1000, 1.0, 1e-8};

  std::vector<ObservableSpec> observables{ObservableSpec::monomial(1), ObservableSpec::monomial(2)};
  CompareSettings compare{};
  WienerSettings wiener{};
  std::vector<double> epsilons{0.4, 0.2, 0.1, 0.05};

  PotentialSpec potential_spec() const {
    if (potential == "zero") return PotentialSpec::zero(dimension);
    if (potential == "quadratic") return PotentialSpec::quadratic(k, dimension);
    if (potential == "cosine") return PotentialSpec::cosine(a, omega, dimension);
    if (potential == "tanhwell") return PotentialSpec::tanh_well(a, s, dimension);
    if (potential.rfind("tabulated:", 0) == 0) return PotentialSpec::load_tabulated(potential.substr(10), dimension);
    throw ConfigError("potential", "unknown potential '" + potential + "'");
  }

  ProblemSpec problem() const { return ProblemSpec(potential_spec(), beta, u0, epsilon, t_final); }

  SimulationOptions mc_options() const {
    SimulationOptions o = mc;
    o.seed = seed;
    return o;
  }

  /// Explicit grid, or one centred between u0 and the origin wide enough for
  /// 8 standard deviations of the free spread.
  GridSpec fp_grid_spec() const {
    if (fp_grid) return *fp_grid;
    const double u = u0.empty() ? 0.0 : u0[0];
    const double half = 8.0 * std::sqrt(epsilon * epsilon + beta * beta * t_final) + 1.0;
    return GridSpec{std::min(u, 0.0) - half, std::max(u, 0.0) + half, fp_cells};
  }
};

namespace detail {

inline std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    prev.swap(cur);
  }
  return prev[b.size()];
}

using json = nlohmann::json;

/// Key-checked view of one JSON object.
class Section {
 public:
  Section(const json& j, std::string path, std::vector<std::string> allowed)
      : j_(j), path_(std::move(path)), allowed_(std::move(allowed)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "'" + name() + "' must be a JSON object");
    for (const auto& [key, _] : j_.items()) {
      if (std::find(allowed_.begin(), allowed_.end(), key) != allowed_.end()) continue;
      std::string best;
      std::size_t best_d = 3;
      for (const auto& cand : allowed_) {
        const std::size_t d = edit_distance(key, cand);
        if (d < best_d) {
          best_d = d;
          best = cand;
        }
      }
      std::string msg = "unknown key '" + qualified(key) + "'";
      if (!best.empty()) msg += " (did you mean '" + best + "'?)";
      throw ConfigError(qualified(key), msg);
    }
  }

  bool has(const std::string& key) const { return j_.contains(key); }
  const json& at(const std::string& key) const { return j_.at(key); }
  std::string qualified(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  double real(const std::string& key, double fallback) const {
    if (!has(key)) return fallback;
    const auto& v = j_.at(key);
    if (!v.is_number()) throw ConfigError(qualified(key), "'" + qualified(key) + "' must be a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw ConfigError(qualified(key), "'" + qualified(key) + "' must be finite");
    return d;
  }
  std::uint64_t count(const std::string& key, std::uint64_t fallback) const {
    if (!has(key)) return fallback;
    const auto& v = j_.at(key);
    if (!v.is_number_integer() || v.get<std::int64_t>() < 0)
      throw ConfigError(qualified(key), "'" + qualified(key) + "' must be a nonnegative integer");
    return v.get<std::uint64_t>();
  }
  bool flag(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const auto& v = j_.at(key);
    if (!v.is_boolean()) throw ConfigError(qualified(key), "'" + qualified(key) + "' must be true or false");
    return v.get<bool>();
  }
  std::string text(const std::string& key, const std::string& fallback) const {
    if (!has(key)) return fallback;
    const auto& v = j_.at(key);
    if (!v.is_string()) throw ConfigError(qualified(key), "'" + qualified(key) + "' must be a string");
    return v.get<std::string>();
  }
  std::vector<double> reals(const std::string& key, std::vector<double> fallback) const {
    if (!has(key)) return fallback;
    const auto& v = j_.at(key);
    if (v.is_number()) return {v.get<double>()};
    if (!v.is_array()) throw ConfigError(qualified(key), "'" + qualified(key) + "' must be a number or list of numbers");
    std::vector<double> out;
    for (const auto& e : v) {
      if (!e.is_number()) throw ConfigError(qualified(key), "'" + qualified(key) + "' must contain only numbers");
      out.push_back(e.get<double>());
    }
    return out;
  }
  std::vector<std::size_t> counts(const std::string& key, std::vector<std::size_t> fallback) const {
    if (!has(key)) return fallback;
    const auto& v = j_.at(key);
    if (!v.is_array()) throw ConfigError(qualified(key), "'" + qualified(key) + "' must be a list of integers");
    std::vector<std::size_t> out;
    for (const auto& e : v) {
      if (!e.is_number_integer() || e.get<std::int64_t>() < 0)
        throw ConfigError(qualified(key), "'" + qualified(key) + "' must contain nonnegative integers");
      out.push_back(e.get<std::size_t>());
    }
    return out;
  }

 private:
  std::string name() const { return path_.empty() ? "config" : path_; }
  const json& j_;
  std::string path_;
  std::vector<std::string> allowed_;
};

inline ObservableSpec parse_observable(const json& v, const std::string& where) {
  if (v.is_string()) {
    const std::string s = v.get<std::string>();
    if (s == "x") return ObservableSpec::monomial(1);
    if (s.rfind("x^", 0) == 0) {
      try {
        std::size_t used = 0;
        const int k = std::stoi(s.substr(2), &used);
        if (used == s.size() - 2 && k >= 0 && k <= 8) return ObservableSpec::monomial(static_cast<unsigned>(k));
      } catch (const std::exception&) {
      }
    }
    if (s == "tanh") return ObservableSpec::tanh_of(1.0);
    throw ConfigError(where, "unrecognized observable '" + s + "' (use \"x\", \"x^k\" with k <= 8, or \"tanh\")");
  }
  const Section o(v, where, {"kind", "power", "coefficients", "scale", "component"});
  const std::string kind = o.text("kind", "monomial");
  const std::size_t comp = o.count("component", 0);
  try {
    if (kind == "monomial") return ObservableSpec::monomial(static_cast<unsigned>(o.count("power", 1)), comp);
    if (kind == "polynomial") return ObservableSpec::polynomial(o.reals("coefficients", {}), comp);
    if (kind == "tanh") return ObservableSpec::tanh_of(o.real("scale", 1.0), comp);
  } catch (const DomainError& e) {
    throw ConfigError(where, e.what());
  }
  throw ConfigError(where + ".kind", "observable kind must be monomial, polynomial or tanh");
}

inline json observable_to_json(const ObservableSpec& o) {
  switch (o.kind) {
    case ObservableKind::monomial: return {{"kind", "monomial"}, {"power", o.power}, {"component", o.component}};
    case ObservableKind::polynomial:
      return {{"kind", "polynomial"}, {"coefficients", o.coefficients}, {"component", o.component}};
    case ObservableKind::tanh: return {{"kind", "tanh"}, {"scale", o.scale}, {"component", o.component}};
  }
  return {};
}

}  // namespace detail

/// Parses and validates a configuration object. `method` (the CLI subcommand)
/// wins over an absent "method" key; a conflicting one is an error.
inline RunConfig parse_config(const nlohmann::json& root, const std::string& method = {}) {
  using detail::Section;
  const nlohmann::json& j = root.contains("manifest_version") && root.contains("config") ? root.at("config") : root;
  const Section top(j, "",
                    {"method", "potential", "potential_params", "dimension", "beta", "u0", "epsilon", "t_final", "seed",
                     "chaos", "mc", "fp", "observables", "compare", "wiener", "epsilon_study"});
  RunConfig c;
  c.method = top.text("method", method.empty() ? std::string("chaos") : method);
  if (!method.empty() && c.method != method)
    throw ConfigError("method", "config method '" + c.method + "' conflicts with subcommand '" + method + "'");
  if (std::find(known_methods().begin(), known_methods().end(), c.method) == known_methods().end())
    throw ConfigError("method", "unknown method '" + c.method + "'");

  c.potential = top.text("potential", "zero");
  if (top.has("potential_params")) {
    const Section pp(top.at("potential_params"), "potential_params", {"k", "a", "omega", "s"});
    c.k = pp.real("k", c.k);
    c.a = pp.real("a", c.a);
    c.omega = pp.real("omega", c.omega);
    c.s = pp.real("s", c.s);
  }
  c.dimension = top.count("dimension", 1);
  if (c.dimension == 0) throw ConfigError("dimension", "dimension must be >= 1");
  c.beta = top.real("beta", c.beta);
  if (c.beta == 0.0) throw ConfigError("beta", "beta must be nonzero");
  c.u0 = top.reals("u0", std::vector<double>(c.dimension, 0.0));
  if (c.u0.size() == 1 && c.dimension > 1) c.u0.assign(c.dimension, c.u0[0]);
  if (c.u0.size() != c.dimension) throw ConfigError("u0", "u0 must have 'dimension' entries");
  c.epsilon = top.real("epsilon", c.epsilon);
  if (c.epsilon == 0.0) throw ConfigError("epsilon", "epsilon must be nonzero (a Dirac initial condition is not admissible)");
  c.t_final = top.real("t_final", c.t_final);
  if (c.t_final < 0.0) throw ConfigError("t_final", "t_final must be >= 0");
  c.seed = top.count("seed", c.seed);

  if (top.has("chaos")) {
    const Section s(top.at("chaos"), "chaos", {"p", "q", "dt", "jac_floor", "output_stride", "quadrature_check"});
    c.chaos.p = static_cast<unsigned>(s.count("p", c.chaos.p));
    c.chaos.q = s.count("q", c.chaos.q);
    c.chaos.dt = s.real("dt", c.chaos.dt);
    c.chaos.jac_floor = s.real("jac_floor", c.chaos.jac_floor);
    c.chaos.output_stride = s.count("output_stride", c.chaos.output_stride);
    c.quadrature_check = s.flag("quadrature_check", c.quadrature_check);
  }
  if (top.has("mc")) {
    const Section s(top.at("mc"), "mc", {"n_particles", "dt", "regularized", "threads", "brownian_substeps"});
    c.mc.n_particles = s.count("n_particles", c.mc.n_particles);
    c.mc.dt = s.real("dt", c.mc.dt);
    c.mc.regularized = s.flag("regularized", c.mc.regularized);
    c.mc.threads = static_cast<unsigned>(s.count("threads", c.mc.threads));
    c.mc.brownian_substeps = s.count("brownian_substeps", c.mc.brownian_substeps);
  }
  if (top.has("fp")) {
    const Section s(top.at("fp"), "fp", {"x_min", "x_max", "cells", "dt", "output_stride", "theta", "boundary_flux_tol"});
    c.fp_cells = s.count("cells", c.fp_cells);
    if (s.has("x_min") || s.has("x_max")) {
      if (!(s.has("x_min") && s.has("x_max"))) throw ConfigError("fp.x_min", "fp.x_min and fp.x_max must be given together");
      c.fp_grid = GridSpec{s.real("x_min", 0), s.real("x_max", 0), c.fp_cells};
    }
    c.fp.dt = s.real("dt", c.fp.dt);
    c.fp.output_stride = s.count("output_stride", c.fp.output_stride);
    c.fp.theta = s.real("theta", c.fp.theta);
    c.fp.boundary_flux_tol = s.real("boundary_flux_tol", c.fp.boundary_flux_tol);
  }
  if (top.has("observables")) {
    const auto& arr = top.at("observables");
    if (!arr.is_array() || arr.empty()) throw ConfigError("observables", "observables must be a nonempty list");
    c.observables.clear();
    for (std::size_t i = 0; i < arr.size(); ++i)
      c.observables.push_back(detail::parse_observable(arr[i], "observables[" + std::to_string(i) + "]"));
  }
  for (const auto& o : c.observables)
    if (o.component >= c.dimension) throw ConfigError("observables", "observable component exceeds dimension");
  if (top.has("compare")) {
    const Section s(top.at("compare"), "compare", {"methods", "tol_det", "se_multiplier"});
    if (s.has("methods")) {
      c.compare.methods.clear();
      for (const auto& m : s.at("methods")) {
        if (!m.is_string()) throw ConfigError("compare.methods", "compare.methods must list method names");
        const std::string name = m.get<std::string>();
        if (name != "chaos" && name != "mc" && name != "fp")
          throw ConfigError("compare.methods", "compare.methods entries must be chaos, mc or fp (got '" + name + "')");
        c.compare.methods.push_back(name);
      }
    }
    c.compare.tol_det = s.real("tol_det", c.compare.tol_det);
    c.compare.se_multiplier = s.real("se_multiplier", c.compare.se_multiplier);
  }
  if (top.has("wiener")) {
    const Section s(top.at("wiener"), "wiener", {"t_list", "tol", "p", "m_levels", "n_samples", "fine_steps", "t_fit"});
    c.wiener.t_list = s.reals("t_list", c.wiener.t_list);
    c.wiener.tol = s.real("tol", c.wiener.tol);
    c.wiener.p = static_cast<unsigned>(s.count("p", c.wiener.p));
    c.wiener.m_levels = s.counts("m_levels", c.wiener.m_levels);
    c.wiener.n_samples = s.count("n_samples", c.wiener.n_samples);
    c.wiener.fine_steps = s.count("fine_steps", c.wiener.fine_steps);
    c.wiener.t_fit = s.real("t_fit", c.wiener.t_fit);
  }
  if (top.has("epsilon_study")) {
    const Section s(top.at("epsilon_study"), "epsilon_study", {"epsilons"});
    c.epsilons = s.reals("epsilons", c.epsilons);
  }

  // Semantic validation of everything a run could touch, before any computation.
  auto semantic = [](const std::string& key, auto&& fn) {
    try {
      fn();
    } catch (const DomainError& e) {
      throw ConfigError(key, std::string(e.what()));
    } catch (const SizeError& e) {
      throw ConfigError(key, std::string(e.what()));
    }
  };
  semantic("potential", [&] { (void)c.problem(); });
  semantic("chaos", [&] { c.chaos.validate(); });
  semantic("mc", [&] { c.mc_options().validate(); });
  semantic("fp", [&] {
    c.fp.validate();
    c.fp_grid_spec().validate();
  });
  if (c.compare.methods.size() < 2) throw ConfigError("compare.methods", "compare needs at least two methods");
  if (!(c.compare.tol_det > 0.0) || !(c.compare.se_multiplier > 0.0))
    throw ConfigError("compare", "compare tolerances must be positive");
  if (!(c.wiener.tol > 0.0)) throw ConfigError("wiener.tol", "wiener.tol must be > 0");
  if (c.wiener.m_levels.size() < 2) throw ConfigError("wiener.m_levels", "wiener.m_levels needs at least two levels");
  for (auto m : c.wiener.m_levels)
    if (m == 0) throw ConfigError("wiener.m_levels", "wiener.m_levels entries must be >= 1");
  if (c.wiener.n_samples == 0 || c.wiener.fine_steps < 2) throw ConfigError("wiener", "wiener sample sizes too small");
  if (!(c.wiener.t_fit > 0.0)) throw ConfigError("wiener.t_fit", "wiener.t_fit must be > 0");
  for (double t : c.wiener.t_list)
    if (!(t > 0.0)) throw ConfigError("wiener.t_list", "wiener.t_list entries must be > 0");
  if (c.epsilons.empty()) throw ConfigError("epsilon_study.epsilons", "epsilon_study.epsilons must be nonempty");
  return c;
}

/// Reads and validates a JSON config (or a run manifest, whose embedded
/// config is used). Parse errors carry the line number.
inline RunConfig load_config(const std::filesystem::path& path, const std::string& method = {}) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    const std::size_t upto = std::min<std::size_t>(e.byte, text.size());
    const int line = 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n'));
    throw ConfigError("<parse>", "config parse error at line " + std::to_string(line) + ": " + e.what(), line);
  }
  return parse_config(j, method);
}

/// Fully expanded configuration, defaults included. parse_config of this
/// object yields the same RunConfig.
inline nlohmann::json config_to_json(const RunConfig& c) {
  nlohmann::json j;
  j["method"] = c.method;
  j["potential"] = c.potential;
  j["potential_params"] = {{"k", c.k}, {"a", c.a}, {"omega", c.omega}, {"s", c.s}};
  j["dimension"] = c.dimension;
  j["beta"] = c.beta;
  j["u0"] = c.u0;
  j["epsilon"] = c.epsilon;
  j["t_final"] = c.t_final;
  j["seed"] = c.seed;
  j["chaos"] = {{"p", c.chaos.p},
                {"q", c.chaos.nodes()},
                {"dt", c.chaos.dt},
                {"jac_floor", c.chaos.jac_floor},
                {"output_stride", c.chaos.output_stride},
                {"quadrature_check", c.quadrature_check}};
  j["mc"] = {{"n_particles", c.mc.n_particles},
             {"dt", c.mc.dt},
             {"regularized", c.mc.regularized},
             {"threads", c.mc.threads},
             {"brownian_substeps", c.mc.brownian_substeps}};
  j["fp"] = {{"cells", c.fp_cells},
             {"dt", c.fp.dt},
             {"output_stride", c.fp.output_stride},
             {"theta", c.fp.theta},
             {"boundary_flux_tol", c.fp.boundary_flux_tol}};
  // an automatic grid stays automatic so that epsilon-dependent sizing survives a rerun
  if (c.fp_grid) {
    j["fp"]["x_min"] = c.fp_grid->x_min;
    j["fp"]["x_max"] = c.fp_grid->x_max;
  }
  j["observables"] = nlohmann::json::array();
  for (const auto& o : c.observables) j["observables"].push_back(detail::observable_to_json(o));
  j["compare"] = {{"methods", c.compare.methods}, {"tol_det", c.compare.tol_det}, {"se_multiplier", c.compare.se_multiplier}};
  j["wiener"] = {{"t_list", c.wiener.t_list},     {"tol", c.wiener.tol},
                 {"p", c.wiener.p},               {"m_levels", c.wiener.m_levels},
                 {"n_samples", c.wiener.n_samples}, {"fine_steps", c.wiener.fine_steps},
                 {"t_fit", c.wiener.t_fit}};
  j["epsilon_study"] = {{"epsilons", c.epsilons}};
  return j;
}

/// FNV-1a over the canonical problem description, as 16 hex digits.
inline std::string problem_hash(const RunConfig& c) {
  nlohmann::json p = {{"potential", c.potential},
                      {"potential_params", {{"k", c.k}, {"a", c.a}, {"omega", c.omega}, {"s", c.s}}},
                      {"dimension", c.dimension},
                      {"beta", c.beta},
                      {"u0", c.u0},
                      {"epsilon", c.epsilon},
                      {"t_final", c.t_final}};
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : p.dump()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// Typed experiment results

struct QuadratureCheck {
  std::size_t q = 0, q_ref = 0;
  double max_coeff_diff = 0.0;
};

struct ChaosRun {
  PropagationResult propagation;
  std::vector<std::pair<std::string, double>> final_moments;
  std::optional<QuadratureCheck> quadrature;
};

inline ChaosRun run_chaos(const RunConfig& c) {
  ChaosRun r;
  r.propagation = propagate(c.problem(), c.chaos);
  if (r.propagation.ok()) {
    for (const auto& o : c.observables)
      r.final_moments.emplace_back(o.label(), moments_from_state(r.propagation.final_state(), o));
    if (c.quadrature_check) {
      ChaosConfig ref = c.chaos;
      ref.q = c.chaos.nodes() + 10;
      ref.output_stride = std::numeric_limits<std::size_t>::max();
      const auto alt = propagate(c.problem(), ref);
      QuadratureCheck qc{c.chaos.nodes(), ref.q, std::numeric_limits<double>::infinity()};
      if (alt.ok()) {
        qc.max_coeff_diff = 0.0;
        const auto& a = r.propagation.final_state().coeffs();
        const auto& b = alt.final_state().coeffs();
        for (std::size_t i = 0; i < a.size(); ++i) qc.max_coeff_diff = std::max(qc.max_coeff_diff, std::abs(a[i] - b[i]));
      }
      r.quadrature = qc;
    }
  }
  return r;
}

struct MCRun {
  MCEnsemble ensemble;
  std::vector<std::pair<std::string, MomentEstimate>> moments;
};

inline MCRun run_mc(const RunConfig& c) {
  MCRun r;
  r.ensemble = simulate(c.problem(), c.mc_options());
  for (const auto& o : c.observables) r.moments.emplace_back(o.label(), estimate_moments(r.ensemble, o));
  return r;
}

struct FPRun {
  std::vector<DensityGrid> snapshots;
  std::optional<DensityGrid> stationary;  // present when normalizable on the grid
  std::vector<std::pair<std::string, double>> final_moments;
};

inline FPRun run_fp(const RunConfig& c) {
  FPRun r;
  const ProblemSpec problem = c.problem();
  const GridSpec grid = c.fp_grid_spec();
  r.snapshots = fp_solve(problem, grid, c.fp);
  DensityGrid st = stationary_density(problem.potential(), problem.beta(), grid);
  if (st.warnings.empty()) r.stationary = std::move(st);
  for (const auto& o : c.observables) r.final_moments.emplace_back(o.label(), grid_moments(r.snapshots.back(), o));
  return r;
}

struct ComparisonRow {
  std::string observable;
  std::string method;
  double value = std::numeric_limits<double>::quiet_NaN();
  double uncertainty = 0.0;
  bool ok = false;
};

struct Discrepancy {
  std::string observable;
  std::string pair;      // e.g. "chaos-fp"
  double abs_diff = std::numeric_limits<double>::quiet_NaN();
  double tolerance = 0.0;
  bool pass = false;
};

struct ComparisonReport {
  std::vector<ComparisonRow> rows;
  std::vector<Discrepancy> discrepancies;
  std::vector<std::pair<std::string, std::string>> failures;  // method, message
  double tol_det = 1e-3;
  double se_multiplier = 3.0;
  std::optional<ChaosRun> chaos;
  std::optional<MCRun> mc;
  std::optional<FPRun> fp;

  bool all_pass() const {
    return !discrepancies.empty() &&
           std::all_of(discrepancies.begin(), discrepancies.end(), [](const auto& d) { return d.pass; });
  }
  const ComparisonRow* find(const std::string& obs, const std::string& method) const {
    for (const auto& r : rows)
      if (r.observable == obs && r.method == method) return &r;
    return nullptr;
  }
};

/// Runs each requested method on the same problem and tabulates E[g].
/// Deterministic pairs (chaos, fp) must agree within tol_det; any pair that
/// involves MC within se_multiplier standard errors. A failed sub-run is
/// recorded and never counts as agreement.
inline ComparisonReport compare_methods(const RunConfig& c) {
  if (c.compare.methods.size() < 2) throw ConfigError("compare.methods", "compare needs at least two methods");
  if (c.observables.empty()) throw ConfigError("observables", "compare needs at least one observable");
  ComparisonReport rep;
  rep.tol_det = c.compare.tol_det;
  rep.se_multiplier = c.compare.se_multiplier;
  auto wants = [&](const std::string& m) {
    return std::find(c.compare.methods.begin(), c.compare.methods.end(), m) != c.compare.methods.end();
  };
  auto guard = [&](const std::string& method, auto&& fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      rep.failures.emplace_back(method, e.what());
    }
  };
  if (wants("chaos")) guard("chaos", [&] {
      ChaosConfig cc = c.chaos;
      cc.output_stride = std::numeric_limits<std::size_t>::max();
      RunConfig local = c;
      local.chaos = cc;
      local.quadrature_check = false;
      auto run = run_chaos(local);
      if (!run.propagation.ok()) throw MapDegeneracyError(run.propagation.failure->t, run.propagation.failure->node,
                                                          run.propagation.failure->determinant,
                                                          run.propagation.failure->message);
      rep.chaos = std::move(run);
    });
  if (wants("mc")) guard("mc", [&] { rep.mc = run_mc(c); });
  if (wants("fp")) guard("fp", [&] {
      RunConfig local = c;
      local.fp.output_stride = std::numeric_limits<std::size_t>::max();
      rep.fp = run_fp(local);
    });

  for (std::size_t oi = 0; oi < c.observables.size(); ++oi) {
    const std::string label = c.observables[oi].label();
    ComparisonRow ch{label, "chaos"}, mc{label, "mc"}, fp{label, "fp"};
    if (rep.chaos) {
      ch.value = rep.chaos->final_moments[oi].second;
      ch.ok = true;
    }
    if (rep.mc) {
      mc.value = rep.mc->moments[oi].second.mean;
      mc.uncertainty = rep.mc->moments[oi].second.standard_error;
      mc.ok = true;
    }
    if (rep.fp) {
      fp.value = rep.fp->final_moments[oi].second;
      fp.ok = true;
    }
    for (auto* row : {&ch, &fp, &mc})
      if (wants(row->method)) rep.rows.push_back(*row);

    auto pair = [&](const ComparisonRow& x, const ComparisonRow& y) {
      if (!wants(x.method) || !wants(y.method)) return;
      Discrepancy d{label, x.method + "-" + y.method};
      const double se = std::max(x.uncertainty, y.uncertainty);
      d.tolerance = (x.method == "mc" || y.method == "mc") ? c.compare.se_multiplier * se : c.compare.tol_det;
      if (x.ok && y.ok) {
        d.abs_diff = std::abs(x.value - y.value);
        d.pass = d.abs_diff <= d.tolerance;
      }
      rep.discrepancies.push_back(d);
    };
    pair(ch, fp);
    pair(ch, mc);
    pair(fp, mc);
  }
  return rep;
}

/// Basis size of the order-p Hermite chaos in d germs: binomial(d + p, p).
inline double chaos_basis_count(std::size_t germs, unsigned p) { return binomial(germs + p, p); }

struct WienerDimensionRow {
  double t = 0.0;
  std::size_t m_l = 0;
  double wiener_basis = 0.0;
  double transformed_basis = 0.0;
};

struct WienerDimensionReport {
  WienerTruncation truncation;
  double constant = 0.0;  // fitted C in error ~ C t / m
  std::vector<WienerDimensionRow> rows;
};

/// Rows for given t with m_l = ceil(C t / tol).
inline std::vector<WienerDimensionRow> wiener_dimension_rows(std::span<const double> t_list, double tol, unsigned p,
                                                             std::size_t n, double constant) {
  if (!(tol > 0.0)) throw DomainError("wiener_dimension_report: tol must be > 0");
  std::vector<WienerDimensionRow> rows;
  for (double t : t_list) {
    WienerDimensionRow r;
    r.t = t;
    r.m_l = static_cast<std::size_t>(std::max(1.0, std::ceil(constant * t / tol)));
    r.wiener_basis = chaos_basis_count(r.m_l, p);
    r.transformed_basis = chaos_basis_count(n, p);
    rows.push_back(r);
  }
  return rows;
}

/// Measures C from the path-wise truncation experiment at t_fit, then
/// tabulates the Wiener-chaos basis size needed to hold the error at tol
/// against the fixed size of the transformed chaos.
inline WienerDimensionReport wiener_dimension_report(const WienerSettings& w, std::size_t n, std::uint64_t seed,
                                                     unsigned threads = 0) {
  WienerDimensionReport rep;
  rep.truncation = wiener_truncation_error(w.t_fit, w.m_levels, w.n_samples, seed, w.fine_steps, threads);
  double s = 0.0;
  for (const auto& r : rep.truncation.rows) s += r.error * static_cast<double>(r.m) / w.t_fit;
  rep.constant = s / static_cast<double>(rep.truncation.rows.size());
  rep.rows = wiener_dimension_rows(w.t_list, w.tol, w.p, n, rep.constant);
  return rep;
}

struct EpsilonStudyRow {
  double epsilon = 0.0;
  double mc_gap = 0.0;
  double mc_gap_se = 0.0;
  double chaos_m2 = std::numeric_limits<double>::quiet_NaN();
  double fp_m2 = std::numeric_limits<double>::quiet_NaN();
  double chaos_fp_gap = std::numeric_limits<double>::quiet_NaN();
  double chaos_m2_step = std::numeric_limits<double>::quiet_NaN();  // chaos_m2(this) - chaos_m2(next row)
  std::string chaos_status = "ok";
};

struct EpsilonStudyReport {
  std::vector<EpsilonStudyRow> rows;
  double mc_slope = std::numeric_limits<double>::quiet_NaN();
  double chaos_step_slope = std::numeric_limits<double>::quiet_NaN();
  double z_second_moment = 0.0;
};

/// Coupled MC mean-square gap per epsilon, plus E[x0^2] from chaos and FP at
/// each epsilon. epsilon = 0 rows keep the MC gap and record the rejected chaos run.
inline EpsilonStudyReport epsilon_study(const RunConfig& c) {
  const ProblemSpec base = c.problem();
  EpsilonStudyReport rep;
  const auto mc = coupled_epsilon_study(base, c.epsilons, c.mc.n_particles, c.mc.dt, c.seed, c.mc.threads);
  rep.mc_slope = mc.slope;
  rep.z_second_moment = mc.z_second_moment;
  const ObservableSpec x2 = ObservableSpec::monomial(2);
  for (std::size_t e = 0; e < c.epsilons.size(); ++e) {
    EpsilonStudyRow row;
    row.epsilon = c.epsilons[e];
    row.mc_gap = mc.rows[e].gap;
    row.mc_gap_se = mc.rows[e].gap_standard_error;
    if (row.epsilon == 0.0) {
      row.chaos_status = "rejected: epsilon = 0 gives a degenerate (Dirac) map";
    } else {
      const ProblemSpec p = base.with_epsilon(row.epsilon);
      ChaosConfig cc = c.chaos;
      cc.output_stride = std::numeric_limits<std::size_t>::max();
      const auto prop = propagate(p, cc);
      if (prop.ok()) {
        row.chaos_m2 = moments_from_state(prop.final_state(), x2);
      } else {
        row.chaos_status = "failed: " + prop.failure->message;
      }
      if (base.dimension() == 1) {
        RunConfig local = c;
        local.epsilon = row.epsilon;
        FPOptions fo = c.fp;
        fo.output_stride = std::numeric_limits<std::size_t>::max();
        const auto snaps = fp_solve(p, local.fp_grid_spec(), fo);
        row.fp_m2 = grid_moments(snaps.back(), x2);
        row.chaos_fp_gap = std::abs(row.chaos_m2 - row.fp_m2);
      }
    }
    rep.rows.push_back(row);
  }
  std::vector<double> xs, ys;
  for (std::size_t e = 0; e + 1 < rep.rows.size(); ++e) {
    rep.rows[e].chaos_m2_step = rep.rows[e].chaos_m2 - rep.rows[e + 1].chaos_m2;
    if (std::isfinite(rep.rows[e].chaos_m2_step) && std::abs(rep.rows[e].chaos_m2_step) > 0.0 &&
        rep.rows[e].epsilon != 0.0) {
      xs.push_back(std::abs(rep.rows[e].epsilon));
      ys.push_back(std::abs(rep.rows[e].chaos_m2_step));
    }
  }
  if (xs.size() >= 2) rep.chaos_step_slope = fit_loglog(xs, ys).slope;
  return rep;
}

// ---------------------------------------------------------------------------
// Artifacts

struct RunOutcome {
  int exit_code = exit_ok;
  nlohmann::json manifest;
  std::vector<std::string> artifacts;
  std::optional<ChaosRun> chaos;
  std::optional<MCRun> mc;
  std::optional<FPRun> fp;
  std::optional<ComparisonReport> comparison;
  std::optional<WienerDimensionReport> wiener;
  std::optional<EpsilonStudyReport> epsilon;
};

namespace detail {

inline std::string alpha_label(const MultiIndex& alpha) {
  std::string s;
  for (std::size_t i = 0; i < alpha.size(); ++i) s += (i ? ";" : "") + std::to_string(alpha[i]);
  return s;
}

class ArtifactWriter {
 public:
  ArtifactWriter(std::filesystem::path dir, std::vector<std::string>& names) : dir_(std::move(dir)), names_(names) {}

  template <class Fn>
  void write(const std::string& name, Fn&& fill) {
    const auto path = dir_ / name;
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write '" + path.string() + "'");
    fill(os);
    os.flush();
    if (!os) throw IoError("failed writing '" + path.string() + "'");
    names_.push_back(name);
  }

 private:
  std::filesystem::path dir_;
  std::vector<std::string>& names_;
};

inline std::string real_or_nan(double v) { return std::isfinite(v) ? format_real(v) : std::string("nan"); }

inline nlohmann::json json_real(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

}  // namespace detail

/// Executes the configured method, writes its CSV artifacts and
/// manifest.json into out_dir, and reports the exit status. Errors are
/// recorded in the manifest instead of being thrown, except when the output
/// directory itself is unusable.
inline RunOutcome run(const RunConfig& c, const std::filesystem::path& out_dir) {
  RunOutcome out;
  const auto t_start = std::chrono::steady_clock::now();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec || !std::filesystem::is_directory(out_dir)) throw IoError("cannot create output directory '" + out_dir.string() + "'");
  detail::ArtifactWriter w(out_dir, out.artifacts);
  const std::string hash = problem_hash(c);
  nlohmann::json results = nlohmann::json::object();
  nlohmann::json error = nullptr;

  auto record_error = [&](ErrorKind kind, const std::string& msg, nlohmann::json extra = nlohmann::json::object()) {
    out.exit_code = exit_code_for(kind);
    error = {{"kind", to_string(kind)}, {"message", msg}, {"exit_code", out.exit_code}};
    for (auto& [k, v] : extra.items()) error[k] = v;
  };

  try {
    if (c.method == "chaos") {
      out.chaos = run_chaos(c);
      const auto& prop = out.chaos->propagation;
      w.write("coefficients.csv", [&](std::ostream& os) {
        os << "t,i,alpha,m\n";
        for (const auto& st : prop.states)
          for (std::size_t i = 0; i < st.dimension(); ++i)
            for (std::size_t a = 0; a < st.basis_size(); ++a)
              os << format_real(st.t()) << ',' << i << ',' << detail::alpha_label(st.basis().indices()[a]) << ','
                 << format_real(st.coeff(i, a)) << '\n';
      });
      w.write("moments.csv", [&](std::ostream& os) {
        os << "t,observable,value\n";
        for (const auto& st : prop.states)
          for (const auto& o : c.observables) os << format_real(st.t()) << ',' << o.label() << ',' << format_real(moments_from_state(st, o)) << '\n';
      });
      results["states"] = prop.states.size();
      if (out.chaos->quadrature)
        results["quadrature_consistency"] = {{"q", out.chaos->quadrature->q},
                                             {"q_ref", out.chaos->quadrature->q_ref},
                                             {"max_coeff_diff", detail::json_real(out.chaos->quadrature->max_coeff_diff)}};
      if (!prop.ok()) {
        const auto& f = *prop.failure;
        record_error(f.kind, f.message, {{"t", f.t}, {"node", f.node}, {"determinant", f.determinant}});
      }
    } else if (c.method == "mc") {
      out.mc = run_mc(c);
      w.write("moments.csv", [&](std::ostream& os) {
        os << "observable,mean,standard_error\n";
        for (const auto& [label, m] : out.mc->moments)
          os << label << ',' << format_real(m.mean) << ',' << format_real(m.standard_error) << '\n';
      });
      results["n_particles"] = out.mc->ensemble.n_particles();
    } else if (c.method == "fp") {
      out.fp = run_fp(c);
      for (std::size_t k = 0; k < out.fp->snapshots.size(); ++k) {
        char name[48];
        std::snprintf(name, sizeof name, "density_%04zu.csv", k);
        w.write(name, [&](std::ostream& os) { write_density_csv(os, out.fp->snapshots[k], hash); });
      }
      w.write("diagnostics.csv", [&](std::ostream& os) {
        os << "t,mass,kl_to_stationary,fisher_information\n";
        for (const auto& s : out.fp->snapshots) {
          const double kl = out.fp->stationary ? kl_divergence(s, *out.fp->stationary)
                                               : std::numeric_limits<double>::quiet_NaN();
          os << format_real(s.t) << ',' << format_real(s.mass()) << ',' << detail::real_or_nan(kl) << ','
             << format_real(fisher_information(s)) << '\n';
        }
      });
      w.write("moments.csv", [&](std::ostream& os) {
        os << "observable,value\n";
        for (const auto& [label, v] : out.fp->final_moments) os << label << ',' << format_real(v) << '\n';
      });
      const GridSpec g = c.fp_grid_spec();
      results["grid"] = {{"x_min", g.x_min}, {"x_max", g.x_max}, {"cells", g.cells}};
      results["warnings"] = out.fp->snapshots.front().warnings;
      if (!out.fp->stationary) results["warnings"].push_back("stationary density not normalizable on this grid");
    } else if (c.method == "compare") {
      out.comparison = compare_methods(c);
      const auto& rep = *out.comparison;
      w.write("comparison.csv", [&](std::ostream& os) {
        os << "observable,method,value,uncertainty,status\n";
        for (const auto& r : rep.rows)
          os << r.observable << ',' << r.method << ',' << detail::real_or_nan(r.value) << ','
             << format_real(r.uncertainty) << ',' << (r.ok ? "ok" : "failed") << '\n';
      });
      w.write("discrepancies.csv", [&](std::ostream& os) {
        os << "observable,pair,abs_diff,tolerance,pass\n";
        for (const auto& d : rep.discrepancies)
          os << d.observable << ',' << d.pair << ',' << detail::real_or_nan(d.abs_diff) << ',' << format_real(d.tolerance)
             << ',' << (d.pass ? "true" : "false") << '\n';
      });
      results["all_pass"] = rep.all_pass();
      results["tol_det"] = rep.tol_det;
      results["se_multiplier"] = rep.se_multiplier;
      results["failures"] = nlohmann::json::array();
      for (const auto& [m, msg] : rep.failures) results["failures"].push_back({{"method", m}, {"message", msg}});
    } else if (c.method == "wiener-dim") {
      out.wiener = wiener_dimension_report(c.wiener, c.dimension, c.seed, c.mc.threads);
      const auto& rep = *out.wiener;
      w.write("wiener_truncation.csv", [&](std::ostream& os) {
        os << "m,error,standard_error\n";
        for (const auto& r : rep.truncation.rows)
          os << r.m << ',' << format_real(r.error) << ',' << format_real(r.standard_error) << '\n';
      });
      w.write("wiener_dimension.csv", [&](std::ostream& os) {
        os << "t,m_l,wiener_basis,transformed_basis\n";
        for (const auto& r : rep.rows)
          os << format_real(r.t) << ',' << r.m_l << ',' << format_real(r.wiener_basis) << ','
             << format_real(r.transformed_basis) << '\n';
      });
      results["truncation_slope"] = detail::json_real(rep.truncation.slope);
      results["fitted_constant"] = rep.constant;
    } else if (c.method == "epsilon-study") {
      out.epsilon = epsilon_study(c);
      const auto& rep = *out.epsilon;
      w.write("epsilon_study.csv", [&](std::ostream& os) {
        os << "epsilon,mc_gap,mc_gap_se,chaos_m2,fp_m2,chaos_fp_gap,chaos_m2_step,chaos_status\n";
        for (const auto& r : rep.rows)
          os << format_real(r.epsilon) << ',' << format_real(r.mc_gap) << ',' << format_real(r.mc_gap_se) << ','
             << detail::real_or_nan(r.chaos_m2) << ',' << detail::real_or_nan(r.fp_m2) << ','
             << detail::real_or_nan(r.chaos_fp_gap) << ',' << detail::real_or_nan(r.chaos_m2_step) << ",\""
             << r.chaos_status << "\"\n";
      });
      results["mc_slope"] = detail::json_real(rep.mc_slope);
      results["chaos_step_slope"] = detail::json_real(rep.chaos_step_slope);
      results["z_second_moment"] = rep.z_second_moment;
    } else {
      throw ConfigError("method", "unknown method '" + c.method + "'");
    }
  } catch (const MapDegeneracyError& e) {
    record_error(e.kind(), e.what(), {{"t", e.time()}, {"node", e.node()}, {"determinant", e.determinant()}});
  } catch (const DivergedError& e) {
    record_error(e.kind(), e.what(), {{"step", e.step()}});
  } catch (const StabilityError& e) {
    record_error(e.kind(), e.what(), {{"suggested_dt", e.suggested_dt()}});
  } catch (const IoError&) {
    throw;
  } catch (const Error& e) {
    record_error(e.kind(), e.what());
  }

  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  out.manifest = {{"manifest_version", kManifestVersion},
                  {"tool", "lgchaos"},
                  {"version", kVersion},
                  {"method", c.method},
                  {"seed", c.seed},
                  {"problem_hash", hash},
                  {"config", config_to_json(c)},
                  {"status", out.exit_code == exit_ok ? "ok" : "error"},
                  {"exit_code", out.exit_code},
                  {"error", error},
                  {"artifacts", out.artifacts},
                  {"results", results},
                  {"wall_time_seconds", wall}};
  {
    std::ofstream os(out_dir / "manifest.json", std::ios::trunc);
    if (!os) throw IoError("cannot write manifest in '" + out_dir.string() + "'");
    os << out.manifest.dump(2) << '\n';
  }
  return out;
}

}  // namespace lgchaos
