#pragma once

// Euler-Maruyama Monte-Carlo for dU = b(U) dt + beta dW, plus the two
// scaling experiments: the mean-square cost of regularizing the initial
// condition, and the truncation error of the cosine expansion of Brownian paths.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <limits>
#include <mutex>
#include <numbers>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "lgchaos/errors.hpp"
#include "lgchaos/numerics.hpp"
#include "lgchaos/observables.hpp"
#include "lgchaos/potentials.hpp"
#include "lgchaos/rng.hpp"

namespace lgchaos {

struct MCEnsemble {
  double t = 0.0;
  std::size_t n = 1;
  std::uint64_t seed = 0;
  std::vector<double> particles;  // n coordinates per particle

  std::size_t n_particles() const { return particles.size() / n; }
  std::span<const double> particle(std::size_t k) const { return {particles.data() + k * n, n}; }
};

struct SimulationOptions {
  std::size_t n_particles = 100'000;
  double dt = 1e-3;
  std::uint64_t seed = 1;
  bool regularized = true;            // start from U0 + epsilon Z instead of U0
  std::size_t brownian_substeps = 1;  // each step sums this many increments of dt/substeps
  unsigned threads = 0;               // 0: hardware concurrency

  void validate() const {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw DomainError("simulate: dt must be > 0");
    if (n_particles == 0) throw DomainError("simulate: need at least one particle");
    if (brownian_substeps == 0) throw DomainError("simulate: brownian_substeps must be >= 1");
  }
};

namespace detail {

inline unsigned worker_count(unsigned requested, std::size_t work) {
  unsigned t = requested == 0 ? std::max(1u, std::thread::hardware_concurrency()) : requested;
  return static_cast<unsigned>(std::min<std::size_t>(t, std::max<std::size_t>(1, work)));
}

/// Runs body(begin, end) over contiguous particle blocks. Exceptions are
/// collected and the one from the lowest block is rethrown.
template <class Body>
void for_blocks(std::size_t count, unsigned threads, Body body) {
  const unsigned workers = worker_count(threads, count);
  if (workers == 1) {
    body(std::size_t{0}, count);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  const std::size_t chunk = (count + workers - 1) / workers;
  for (unsigned w = 0; w < workers; ++w) {
    const std::size_t b = std::min(count, w * chunk), e = std::min(count, b + chunk);
    pool.emplace_back([&, w, b, e] {
      try {
        body(b, e);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& err : errors)
    if (err) std::rethrow_exception(err);
}

}  // namespace detail

/// Euler-Maruyama ensemble at t_final. Particle k draws its Brownian
/// increments from NormalStream(seed, brownian, k) and its initial offset Z
/// from NormalStream(seed, initial, k); fine increment f of component i is
/// variate f*n + i, so runs with equal dt/brownian_substeps share paths.
inline MCEnsemble simulate(const ProblemSpec& problem, const SimulationOptions& opt) {
  opt.validate();
  const std::size_t n = problem.dimension();
  const auto& pot = problem.potential();
  const double beta = problem.beta(), eps = problem.epsilon(), T = problem.t_final();
  const std::size_t steps = step_count(T, opt.dt);
  const std::size_t sub = opt.brownian_substeps;

  MCEnsemble ens;
  ens.t = T;
  ens.n = n;
  ens.seed = opt.seed;
  ens.particles.assign(opt.n_particles * n, 0.0);

  std::mutex fail_mu;
  std::size_t fail_step = std::numeric_limits<std::size_t>::max();

  detail::for_blocks(opt.n_particles, opt.threads, [&](std::size_t begin, std::size_t end) {
    std::vector<double> u(n);
    for (std::size_t k = begin; k < end; ++k) {
      const NormalStream z(opt.seed, StreamPurpose::initial, k);
      for (std::size_t i = 0; i < n; ++i) u[i] = problem.u0()[i] + (opt.regularized ? eps * z.normal(i) : 0.0);
      NormalStream w(opt.seed, StreamPurpose::brownian, k);
      for (std::size_t s = 0; s < steps; ++s) {
        const double t0 = static_cast<double>(s) * opt.dt;
        const double h = std::min(opt.dt, T - t0);
        const double sqrt_fine = std::sqrt(h / static_cast<double>(sub));
        for (std::size_t i = 0; i < n; ++i) {
          double dw = 0.0;
          for (std::size_t r = 0; r < sub; ++r) dw += w.normal((s * sub + r) * n + i);
          u[i] += pot.drift_component(u[i]) * h + beta * sqrt_fine * dw;
        }
        bool finite = true;
        for (double v : u) finite = finite && std::isfinite(v);
        if (!finite) {
          std::lock_guard lock(fail_mu);
          fail_step = std::min(fail_step, s);
          break;
        }
      }
      std::copy(u.begin(), u.end(), ens.particles.begin() + static_cast<std::ptrdiff_t>(k * n));
    }
  });
  if (fail_step != std::numeric_limits<std::size_t>::max())
    throw DivergedError(fail_step, "Euler-Maruyama particle became non-finite at step " + std::to_string(fail_step));
  return ens;
}

struct MomentEstimate {
  double mean = 0.0;
  double standard_error = 0.0;
};

inline MomentEstimate estimate_moments(const MCEnsemble& ens, const ObservableSpec& g) {
  const std::size_t N = ens.n_particles();
  if (N == 0) throw DomainError("estimate_moments: empty ensemble");
  std::vector<double> v(N);
  for (std::size_t k = 0; k < N; ++k) v[k] = g(ens.particle(k));
  const double mean = pairwise_sum(v) / static_cast<double>(N);
  if (N == 1) return {mean, 0.0};
  for (double& x : v) x = (x - mean) * (x - mean);
  const double var = pairwise_sum(v) / static_cast<double>(N - 1);
  return {mean, std::sqrt(var / static_cast<double>(N))};
}

struct EpsilonGapRow {
  double epsilon = 0.0;
  double gap = 0.0;               // E|U - U^eps|^2
  double gap_standard_error = 0.0;
};

struct EpsilonStudy {
  std::vector<EpsilonGapRow> rows;
  double z_second_moment = 0.0;   // sample E|Z|^2 shared by every row
  double slope = std::numeric_limits<double>::quiet_NaN();  // log gap vs log eps, eps > 0 rows
};

/// Coupled chains U (from U0) and U^eps (from U0 + eps Z) driven by the same
/// Brownian increments and the same Z for every eps.
inline EpsilonStudy coupled_epsilon_study(const ProblemSpec& problem, std::span<const double> epsilons,
                                          std::size_t n_particles, double dt, std::uint64_t seed,
                                          unsigned threads = 0) {
  if (!(dt > 0.0)) throw DomainError("coupled_epsilon_study: dt must be > 0");
  if (n_particles == 0) throw DomainError("coupled_epsilon_study: need particles");
  const std::size_t n = problem.dimension(), E = epsilons.size();
  const auto& pot = problem.potential();
  const double beta = problem.beta(), T = problem.t_final();
  const std::size_t steps = step_count(T, dt);

  std::vector<double> gaps(E * n_particles), z2(n_particles);
  detail::for_blocks(n_particles, threads, [&](std::size_t begin, std::size_t end) {
    std::vector<double> u(n), ue(E * n), z(n);
    for (std::size_t k = begin; k < end; ++k) {
      const NormalStream zs(seed, StreamPurpose::initial, k);
      double zz = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        z[i] = zs.normal(i);
        zz += z[i] * z[i];
        u[i] = problem.u0()[i];
        for (std::size_t e = 0; e < E; ++e) ue[e * n + i] = problem.u0()[i] + epsilons[e] * z[i];
      }
      z2[k] = zz;
      NormalStream w(seed, StreamPurpose::brownian, k);
      for (std::size_t s = 0; s < steps; ++s) {
        const double h = std::min(dt, T - static_cast<double>(s) * dt);
        const double sh = std::sqrt(h);
        for (std::size_t i = 0; i < n; ++i) {
          const double noise = beta * sh * w.normal(s * n + i);
          u[i] += pot.drift_component(u[i]) * h + noise;
          for (std::size_t e = 0; e < E; ++e) {
            double& v = ue[e * n + i];
            v += pot.drift_component(v) * h + noise;
          }
        }
      }
      for (std::size_t e = 0; e < E; ++e) {
        double d2 = 0.0;
        for (std::size_t i = 0; i < n; ++i) d2 += (u[i] - ue[e * n + i]) * (u[i] - ue[e * n + i]);
        gaps[e * n_particles + k] = d2;
      }
    }
  });

  EpsilonStudy out;
  out.z_second_moment = pairwise_sum(z2) / static_cast<double>(n_particles);
  std::vector<double> xs, ys;
  for (std::size_t e = 0; e < E; ++e) {
    std::span<const double> g(gaps.data() + e * n_particles, n_particles);
    const double mean = pairwise_sum(g) / static_cast<double>(n_particles);
    std::vector<double> dev(g.begin(), g.end());
    for (double& d : dev) d = (d - mean) * (d - mean);
    const double se = n_particles > 1 ? std::sqrt(pairwise_sum(dev) / static_cast<double>(n_particles - 1) /
                                                  static_cast<double>(n_particles))
                                      : 0.0;
    out.rows.push_back({epsilons[e], mean, se});
    if (epsilons[e] != 0.0 && mean > 0.0) {
      xs.push_back(std::abs(epsilons[e]));
      ys.push_back(mean);
    }
  }
  if (xs.size() >= 2) out.slope = fit_loglog(xs, ys).slope;
  return out;
}

struct WienerTruncationRow {
  std::size_t m = 0;
  double error = 0.0;
  double standard_error = 0.0;
};

struct WienerTruncation {
  double t = 0.0;
  std::vector<WienerTruncationRow> rows;
  double slope = std::numeric_limits<double>::quiet_NaN();  // log error vs log m
};

/// Path-wise mean-square error E[int_0^t (W - W_m)^2 ds] / t of the m-term
/// expansion W_m(s) = sum_j xi_j int_0^s phi_j, with the orthonormal cosine
/// basis phi_1 = 1/sqrt(t), phi_j = sqrt(2/t) cos((j-1) pi s / t). The
/// reference path is piecewise linear on fine_steps Brownian increments and
/// xi_j = int phi_j dW is taken against that same path.
inline WienerTruncation wiener_truncation_error(double t, std::span<const std::size_t> m_levels,
                                                std::size_t n_samples, std::uint64_t seed,
                                                std::size_t fine_steps = 2048, unsigned threads = 0) {
  if (!(t > 0.0)) throw DomainError("wiener_truncation_error: t must be > 0");
  if (m_levels.empty() || n_samples == 0 || fine_steps < 2) throw DomainError("wiener_truncation_error: bad sizes");
  const std::size_t m_max = *std::max_element(m_levels.begin(), m_levels.end());
  if (m_max == 0) throw DomainError("wiener_truncation_error: m must be >= 1");
  const std::size_t F = fine_steps;
  const double h = t / static_cast<double>(F);

  // Phi_j(s_k) = int_0^{s_k} phi_j, j = 1..m_max, k = 0..F
  std::vector<double> Phi(m_max * (F + 1));
  for (std::size_t j = 0; j < m_max; ++j)
    for (std::size_t k = 0; k <= F; ++k) {
      const double s = static_cast<double>(k) * h;
      Phi[j * (F + 1) + k] =
          j == 0 ? s / std::sqrt(t)
                 : std::sqrt(2.0 / t) * t / (static_cast<double>(j) * std::numbers::pi) *
                       std::sin(static_cast<double>(j) * std::numbers::pi * s / t);
    }

  const std::size_t L = m_levels.size();
  std::vector<double> err(L * n_samples);
  detail::for_blocks(n_samples, threads, [&](std::size_t begin, std::size_t end) {
    std::vector<double> W(F + 1), dW(F), xi(m_max), What(F + 1), d2(F + 1);
    for (std::size_t smp = begin; smp < end; ++smp) {
      NormalStream ns(seed, StreamPurpose::wiener, smp);
      W[0] = 0.0;
      const double sh = std::sqrt(h);
      for (std::size_t k = 0; k < F; ++k) {
        dW[k] = sh * ns.next();
        W[k + 1] = W[k] + dW[k];
      }
      // xi_j = sum_k dW_k (Phi_j(s_{k+1}) - Phi_j(s_k)) / h
      for (std::size_t j = 0; j < m_max; ++j) {
        const double* P = Phi.data() + j * (F + 1);
        double s = 0.0;
        for (std::size_t k = 0; k < F; ++k) s += dW[k] * (P[k + 1] - P[k]);
        xi[j] = s / h;
      }
      std::fill(What.begin(), What.end(), 0.0);
      std::size_t done = 0;
      std::vector<std::size_t> order(L);
      for (std::size_t l = 0; l < L; ++l) order[l] = l;
      std::sort(order.begin(), order.end(), [&](auto a, auto b) { return m_levels[a] < m_levels[b]; });
      for (std::size_t l : order) {
        for (; done < m_levels[l]; ++done) {
          const double* P = Phi.data() + done * (F + 1);
          for (std::size_t k = 0; k <= F; ++k) What[k] += xi[done] * P[k];
        }
        for (std::size_t k = 0; k <= F; ++k) d2[k] = (W[k] - What[k]) * (W[k] - What[k]);
        // trapezoid in time
        d2[0] *= 0.5;
        d2[F] *= 0.5;
        err[l * n_samples + smp] = pairwise_sum(d2) * h / t;
      }
    }
  });

  WienerTruncation out;
  out.t = t;
  std::vector<double> xs, ys;
  for (std::size_t l = 0; l < L; ++l) {
    std::span<const double> e(err.data() + l * n_samples, n_samples);
    const double mean = pairwise_sum(e) / static_cast<double>(n_samples);
    std::vector<double> dev(e.begin(), e.end());
    for (double& d : dev) d = (d - mean) * (d - mean);
    const double se = n_samples > 1 ? std::sqrt(pairwise_sum(dev) / static_cast<double>(n_samples - 1) /
                                                static_cast<double>(n_samples))
                                    : 0.0;
    out.rows.push_back({m_levels[l], mean, se});
    if (mean > 0.0) {
      xs.push_back(static_cast<double>(m_levels[l]));
      ys.push_back(mean);
    }
  }
  if (xs.size() >= 2) out.slope = fit_loglog(xs, ys).slope;
  return out;
}

}  // namespace lgchaos
