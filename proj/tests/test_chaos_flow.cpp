#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "lgchaos/chaos_flow.hpp"
#include "lgchaos/fokker_planck.hpp"

using namespace lgchaos;

namespace {

double ou_variance(double k, double beta, double eps, double t) {
  const double e = std::exp(-2.0 * k * t);
  return beta * beta / (2.0 * k) * (1.0 - e) + eps * eps * e;
}

ChaosConfig config(unsigned p, std::size_t q = 0, double dt = 1e-3, std::size_t stride = 1) {
  return ChaosConfig{p, q, dt, 1e-10, stride};
}

}  // namespace

TEST(ChaosConfig, Validation) {
  EXPECT_THROW(config(3, 3).validate(), DomainError);  // q < p + 1
  EXPECT_THROW(config(3, 10, 0.0).validate(), DomainError);
  EXPECT_EQ(config(4).nodes(), 12u);
  EXPECT_NO_THROW(config(3, 4).validate());
}

TEST(InitMap, Examples) {
  const auto b1 = make_chaos_basis(1, config(3));
  const std::vector<double> u0{0.0};
  const auto s = init_gaussian_map(u0, 0.1, b1);
  EXPECT_EQ(s.coeffs(), std::vector<double>({0.0, 0.1, 0.0, 0.0}));

  const auto b2 = make_chaos_basis(2, config(1));
  const std::vector<double> u2{1.0, 2.0};
  const auto s2 = init_gaussian_map(u2, 0.5, b2);
  EXPECT_EQ(s2.coeffs(), std::vector<double>({1.0, 0.5, 0.0, 2.0, 0.0, 0.5}));
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_DOUBLE_EQ(moments_from_state(s2, ObservableSpec::monomial(1, i)), u2[i]);
    EXPECT_NEAR(moments_from_state(s2, ObservableSpec::monomial(2, i)) - u2[i] * u2[i], 0.25, 1e-14);
    EXPECT_DOUBLE_EQ(s2.variance(i), 0.25);
  }
}

TEST(InitMap, DiracRejected) {
  const auto b = make_chaos_basis(1, config(3));
  const std::vector<double> u0{0.0};
  EXPECT_THROW(init_gaussian_map(u0, 0.0, b), MapDegeneracyError);
  const ProblemSpec ok(PotentialSpec::zero(), 1.0, {0.0}, 0.1, 1.0);
  EXPECT_THROW(ok.with_epsilon(0.0), DomainError);
}

TEST(EvalMap, Examples) {
  const auto b = make_chaos_basis(1, config(3));
  const std::vector<double> u0{0.0}, pts{-2.0, 0.0, 1.5};
  const auto s = init_gaussian_map(u0, 0.1, b);
  const auto m = eval_map(s, pts);
  const auto j = eval_map_jacobian(s, pts);
  for (std::size_t k = 0; k < pts.size(); ++k) {
    EXPECT_NEAR(m[k], 0.1 * pts[k], 1e-15);
    EXPECT_NEAR(j[k], 0.1, 1e-15);
  }

  const ChaosState zero(0.0, b, std::vector<double>(4, 0.0));
  for (double v : eval_map(zero, pts)) EXPECT_EQ(v, 0.0);

  const ChaosState quad(0.0, b, {1.0, 0.0, std::sqrt(2.0), 0.0});
  const std::vector<double> one{1.0};
  EXPECT_NEAR(eval_map(quad, one)[0], 1.0, 1e-15);
}

TEST(EvalMap, JacobianMatchesFiniteDifference2D) {
  const auto b = make_chaos_basis(2, config(3));
  std::vector<double> c(2 * b->size());
  for (std::size_t r = 0; r < c.size(); ++r) c[r] = std::sin(1.0 + 0.7 * static_cast<double>(r));
  const ChaosState s(0.0, b, c);
  const std::vector<double> x{0.3, -0.8};
  const auto J = eval_map_jacobian(s, x);
  const double h = 1e-6;
  for (std::size_t l = 0; l < 2; ++l) {
    auto xp = x, xm = x;
    xp[l] += h;
    xm[l] -= h;
    const auto mp = eval_map(s, xp), mm = eval_map(s, xm);
    for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(J[i * 2 + l], (mp[i] - mm[i]) / (2 * h), 1e-7);
  }
}

TEST(ChaosRhs, HeatGaussianMap) {
  const auto b = make_chaos_basis(1, config(4));
  const double s = 0.3, beta = 1.7;
  const ChaosState st(0.0, b, {0.2, s, 0.0, 0.0, 0.0});
  const auto d = chaos_rhs(st, PotentialSpec::zero(), beta);
  EXPECT_NEAR(d[0], 0.0, 1e-14);
  EXPECT_NEAR(d[1], beta * beta / (2.0 * s), 1e-12);
  for (std::size_t a = 2; a < d.size(); ++a) EXPECT_NEAR(d[a], 0.0, 1e-12);
}

TEST(ChaosRhs, OrnsteinUhlenbeckGaussianMap) {
  const auto b = make_chaos_basis(1, config(3));
  const double m0 = 0.8, m1 = 0.4, beta = 1.0;
  const ChaosState st(0.0, b, {m0, m1, 0.0, 0.0});
  const auto d = chaos_rhs(st, PotentialSpec::quadratic(1.0), beta);
  EXPECT_NEAR(d[0], -m0, 1e-13);
  EXPECT_NEAR(d[1], -m1 + beta * beta / (2.0 * m1), 1e-12);
  EXPECT_NEAR(d[2], 0.0, 1e-12);
  EXPECT_NEAR(d[3], 0.0, 1e-12);
}

TEST(ChaosRhs, ConstantDriftProjectsOnlyOnMean) {
  const auto rule = gauss_hermite_rule(2, 6);
  const auto pot = PotentialSpec::cosine(1.0, 1.0, 2);
  const std::vector<double> c{0.7, -0.2};
  const double bi = pot.eval_drift(c)[0];
  std::vector<double> vals(rule.size(), bi);
  const MultiIndexSet set(2, 4);
  for (std::size_t a = 1; a < set.size(); ++a) EXPECT_NEAR(project(vals, set[a], rule), 0.0, 1e-14);
  EXPECT_NEAR(project(vals, set[0], rule), bi, 1e-14);
}

TEST(ChaosRhs, InverseJacobianIndexing2D) {
  // Non-symmetric linear map M = u + L xi under pure diffusion: the law stays
  // Gaussian with covariance L L^T + beta^2 t I, which requires the transpose
  // of the inverse Jacobian in the transport term.
  const auto b = make_chaos_basis(2, config(2));
  const std::size_t P = b->size();
  const double L[2][2] = {{0.5, 0.3}, {-0.1, 0.4}};
  std::vector<double> c(2 * P, 0.0);
  c[0] = 1.0;
  c[P] = -0.5;
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t k = 0; k < 2; ++k) c[i * P + 1 + k] = L[i][k];
  ChaosState s(0.0, b, c);
  const double beta = 0.8, dt = 1e-3;
  for (int j = 0; j < 500; ++j) s = step_rk4(s, PotentialSpec::zero(2), beta, dt);
  const double t = s.t();
  ASSERT_NEAR(t, 0.5, 1e-12);
  double cov[2][2] = {};
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t l = 0; l < 2; ++l)
      for (std::size_t a = 1; a < P; ++a) cov[i][l] += s.coeff(i, a) * s.coeff(l, a);
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t l = 0; l < 2; ++l) {
      const double expect = L[i][0] * L[l][0] + L[i][1] * L[l][1] + (i == l ? beta * beta * t : 0.0);
      EXPECT_NEAR(cov[i][l], expect, 1e-9) << i << "," << l;
    }
  }
  EXPECT_NEAR(s.mean(0), 1.0, 1e-14);
  EXPECT_NEAR(s.mean(1), -0.5, 1e-14);
}

TEST(StepRk4, ZeroStepAndSingleHeatStep) {
  const auto b = make_chaos_basis(1, config(3));
  const std::vector<double> u0{0.0};
  const auto s = init_gaussian_map(u0, 0.1, b);
  const auto same = step_rk4(s, PotentialSpec::quadratic(1.0), 1.0, 0.0);
  EXPECT_EQ(same.coeffs(), s.coeffs());
  EXPECT_EQ(same.t(), s.t());
  const auto next = step_rk4(s, PotentialSpec::zero(), 1.0, 1e-3);
  EXPECT_NEAR(next.coeff(0, 1), std::sqrt(0.011), 1e-9);
  EXPECT_DOUBLE_EQ(next.t(), 1e-3);
}

TEST(StepRk4, FourthOrderRichardson) {
  const auto b = make_chaos_basis(1, config(1));
  const std::vector<double> u0{1.0};
  const auto pot = PotentialSpec::quadratic(1.0);
  const double exact = std::sqrt(ou_variance(1.0, 1.0, 0.1, 1.0));
  auto error = [&](double dt) {
    auto s = init_gaussian_map(u0, 0.1, b);
    const std::size_t steps = step_count(1.0, dt);
    for (std::size_t j = 0; j < steps; ++j) s = step_rk4(s, pot, 1.0, dt);
    return std::abs(s.coeff(0, 1) - exact);
  };
  const double e1 = error(0.00625), e2 = error(0.003125);
  const double ratio = e1 / e2;
  EXPECT_GE(ratio, 12.0);
  EXPECT_LE(ratio, 20.0);
}

TEST(Propagate, ZeroFinalTime) {
  const ProblemSpec pr(PotentialSpec::quadratic(1.0), 1.0, {1.0}, 0.1, 0.0);
  const auto r = propagate(pr, config(3));
  ASSERT_TRUE(r.ok());
  ASSERT_EQ(r.states.size(), 1u);
  EXPECT_EQ(r.states[0].t(), 0.0);
}

TEST(Propagate, HeatKernelExactness) {
  const ProblemSpec pr(PotentialSpec::zero(), 1.0, {0.0}, 0.1, 0.5);
  const auto r = propagate(pr, config(3, 10, 1e-3, 1));
  ASSERT_TRUE(r.ok());
  EXPECT_EQ(r.states.size(), 501u);
  for (const auto& s : r.states) {
    EXPECT_NEAR(s.coeff(0, 1) * s.coeff(0, 1), 0.01 + s.t(), 1e-8);
    for (std::size_t a = 2; a < s.basis_size(); ++a) EXPECT_LE(std::abs(s.coeff(0, a)), 1e-10);
  }
  EXPECT_NEAR(r.final_state().coeff(0, 1), std::sqrt(0.51), 1e-6);
  const auto x2 = moments_from_state(r.final_state(), ObservableSpec::monomial(2));
  EXPECT_NEAR(x2, 0.51, 1e-8);
  EXPECT_NEAR(moments_from_state(r.final_state(), ObservableSpec::polynomial({1.0})), 1.0, 1e-14);
}

TEST(Propagate, OrnsteinUhlenbeckClosedForm) {
  const ProblemSpec pr(PotentialSpec::quadratic(1.0), 1.0, {1.0}, 0.1, 1.0);
  const auto r1 = propagate(pr, config(1, 0, 1e-3, 1000));
  const auto r6 = propagate(pr, config(6, 0, 1e-3, 1000));
  ASSERT_TRUE(r1.ok());
  ASSERT_TRUE(r6.ok());
  const auto& s1 = r1.final_state();
  const auto& s6 = r6.final_state();
  EXPECT_NEAR(s6.mean(0), std::exp(-1.0), 1e-5);
  EXPECT_NEAR(s6.coeff(0, 1), std::sqrt(ou_variance(1.0, 1.0, 0.1, 1.0)), 1e-5);
  EXPECT_NEAR(s1.coeff(0, 0), s6.coeff(0, 0), 1e-9);
  EXPECT_NEAR(s1.coeff(0, 1), s6.coeff(0, 1), 1e-9);
  for (std::size_t a = 2; a < s6.basis_size(); ++a) EXPECT_LE(std::abs(s6.coeff(0, a)), 1e-9);
}

TEST(Propagate, Deterministic) {
  const ProblemSpec pr(PotentialSpec::cosine(0.5, 1.0), 1.0, {0.5}, 0.3, 0.3);
  const auto a = propagate(pr, config(5, 0, 1e-3, 50));
  const auto b = propagate(pr, config(5, 0, 1e-3, 50));
  ASSERT_EQ(a.states.size(), b.states.size());
  for (std::size_t k = 0; k < a.states.size(); ++k) EXPECT_EQ(a.states[k].coeffs(), b.states[k].coeffs());
}

TEST(Propagate, DegeneracyKeepsPartialTrajectory) {
  // Strong confinement shrinks M' below the floor mid-run.
  const ProblemSpec pr(PotentialSpec::quadratic(5.0), 0.1, {0.0}, 1.0, 1.0);
  ChaosConfig cfg = config(3, 0, 1e-3, 10);
  cfg.jac_floor = 0.5;
  const auto r = propagate(pr, cfg);
  ASSERT_FALSE(r.ok());
  EXPECT_EQ(r.failure->kind, ErrorKind::map_degeneracy);
  EXPECT_GT(r.failure->t, 0.0);
  EXPECT_LT(r.failure->t, 1.0);
  EXPECT_LE(r.failure->determinant, 0.5);
  ASSERT_EQ(r.failure->node.size(), 1u);
  ASSERT_GE(r.states.size(), 2u);
  for (const auto& s : r.states) EXPECT_GT(check_map(s, 0.5), 0.5);
  // analytic: M' = sqrt(var) with var(t) = beta^2/(2k) + (eps^2 - beta^2/(2k)) e^{-2kt}
  const double t_cross = -std::log((0.25 - 0.001) / (1.0 - 0.001)) / 10.0;
  EXPECT_NEAR(r.failure->t, t_cross, 2e-3);
}

TEST(Propagate, NonlinearDriftAgreesWithFokkerPlanck) {
  const ProblemSpec pr(PotentialSpec::cosine(0.1, 1.0), 1.0, {0.5}, 0.5, 1.0);
  const auto r = propagate(pr, config(4, 12, 1e-3, 1000));
  ASSERT_TRUE(r.ok());
  FPOptions fo;
  fo.dt = 2e-4;
  fo.theta = 0.5;
  fo.output_stride = 1000000;
  const auto fp = fp_solve(pr, GridSpec{-10.0, 11.0, 4096}, fo);
  for (unsigned k = 1; k <= 3; ++k) {
    const auto g = ObservableSpec::monomial(k);
    EXPECT_NEAR(moments_from_state(r.final_state(), g), grid_moments(fp.back(), g), 2e-4) << "k=" << k;
  }
}

TEST(DensityFromMap, GaussianMaps) {
  const auto b = make_chaos_basis(1, config(3));
  const std::vector<double> u0{0.4};
  const auto s = init_gaussian_map(u0, 0.1, b);
  const GridSpec grid{-0.6, 1.4, 2048};
  const auto f = density_from_map(s, grid);
  for (std::size_t c = 0; c < grid.cells; c += 97) EXPECT_NEAR(f.values[c], gaussian_pdf(grid.center(c) - 0.4, 0.1), 1e-9);

  const ProblemSpec heat(PotentialSpec::zero(), 1.0, {0.0}, 0.1, 0.5);
  const auto r = propagate(heat, config(3, 10, 1e-3, 1000));
  const GridSpec wide{-6.0, 6.0, 2048};
  const auto fh = density_from_map(r.final_state(), wide);
  DensityGrid exact{wide, 0.5, std::vector<double>(wide.cells), {}};
  for (std::size_t c = 0; c < wide.cells; ++c) exact.values[c] = gaussian_pdf(wide.center(c), std::sqrt(0.51));
  EXPECT_LE(l1_distance(fh, exact), 1e-4);
  EXPECT_NEAR(fh.mass(), 1.0, 1e-6);
}

TEST(DensityFromMap, MomentsMatchQuadrature) {
  const ProblemSpec pr(PotentialSpec::cosine(0.1, 1.0), 1.0, {0.5}, 0.5, 1.0);
  const auto r = propagate(pr, config(4, 12, 1e-3, 1000));
  ASSERT_TRUE(r.ok());
  const auto f = density_from_map(r.final_state(), GridSpec{-6.0, 7.0, 8192});
  EXPECT_NEAR(f.mass(), 1.0, 1e-6);
  for (unsigned k = 1; k <= 2; ++k) {
    const auto g = ObservableSpec::monomial(k);
    EXPECT_NEAR(grid_moments(f, g), moments_from_state(r.final_state(), g), 1e-6);
  }
}

TEST(DensityFromMap, Rejections) {
  const auto b = make_chaos_basis(1, config(3));
  const ChaosState folded(0.0, b, {0.0, 0.1, 0.0, -0.2});
  EXPECT_THROW(density_from_map(folded, GridSpec{-2.0, 2.0, 100}), MapDegeneracyError);
  const auto b2 = make_chaos_basis(2, config(1));
  const std::vector<double> u2{0.0, 0.0};
  EXPECT_THROW(density_from_map(init_gaussian_map(u2, 0.1, b2), GridSpec{-2.0, 2.0, 100}), DomainError);
}
