#include <gtest/gtest.h>

#include <Eigen/LU>
#include <cmath>
#include <numbers>
#include <random>

#include "filmctl/integrate.hpp"

namespace filmctl {
namespace {

constexpr double kPi = std::numbers::pi;

FilmState seeded(const Grid& g, double a1 = 0.05, double a2 = 0.01) {
  FilmState s = nusselt_state(g);
  for (int j = 0; j < g.n(); ++j) {
    const double x = g.node(j), xf = g.face(j);
    s.h(j) = 1.0 + a1 * std::cos(2 * kPi * x / g.L()) + a2 * std::sin(4 * kPi * x / g.L());
    s.q(j) = 2.0 / 3.0 + 0.5 * a1 * std::cos(2 * kPi * xf / g.L());
  }
  return s;
}

CyclicPentaMatrix random_penta(int n, std::mt19937& rng) {
  std::uniform_real_distribution<double> U(-1, 1);
  CyclicPentaMatrix M(n);
  for (int off = -2; off <= 2; ++off)
    for (int j = 0; j < n; ++j) M.at(j, off) = U(rng) + (off == 0 ? 6.0 : 0.0);
  return M;
}

TEST(CyclicPenta, SolveMatchesDense) {
  std::mt19937 rng(7);
  for (int n : {5, 6, 8, 13, 32}) {
    const CyclicPentaMatrix M = random_penta(n, rng);
    VectorXd b(n);
    for (int j = 0; j < n; ++j) b(j) = std::sin(1.0 + j);
    const VectorXd x = solve_cyclic_penta(M, b);
    const VectorXd ref = M.to_dense().partialPivLu().solve(b);
    EXPECT_LT((x - ref).cwiseAbs().maxCoeff(), 1e-9 * ref.cwiseAbs().maxCoeff()) << n;
  }
}

TEST(CyclicPenta, CornersWrap) {
  CyclicPentaMatrix M(8);
  M.at(0, -2) = 3.0;
  M.at(7, 1) = 4.0;
  const MatrixXd D = M.to_dense();
  EXPECT_EQ(D(0, 6), 3.0);
  EXPECT_EQ(D(7, 0), 4.0);
}

TEST(CyclicBand, ProductMatchesDense) {
  CyclicBand a(10, -1, 0), b(10, -1, 2);
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> U(-1, 1);
  for (int off = -1; off <= 0; ++off) a.diagonal(off) = VectorXd::NullaryExpr(10, [&] { return U(rng); });
  for (int off = -1; off <= 2; ++off) b.diagonal(off) = VectorXd::NullaryExpr(10, [&] { return U(rng); });
  EXPECT_LT(((a * b).to_dense() - a.to_dense() * b.to_dense()).norm(), 1e-14);
  const VectorXd x = VectorXd::LinSpaced(10, 0, 1);
  EXPECT_LT((b.apply(x) - b.to_dense() * x).norm(), 1e-14);
}

// CN residual for the unknowns (z, w) given the old state.
VectorXd cn_residual(const WrModel& model, const FilmState& old, const VectorXd& z,
                     const VectorXd& w, const WrForcing& f, double dt) {
  const WrRates r0 = model.rhs(old.h, old.q, f), r1 = model.rhs(z, w, f);
  const int n = static_cast<int>(z.size());
  VectorXd r(2 * n);
  r.head(n) = z - old.h - 0.5 * dt * (r0.dh + r1.dh);
  r.tail(n) = w - old.q - 0.5 * dt * (r0.dq + r1.dq);
  return r;
}

class JacobianForm : public ::testing::TestWithParam<WrForm> {};

TEST_P(JacobianForm, MatchesFiniteDifferences) {
  const Grid g(16, 30.0);
  const WrModel model(PhysicalParams{}, g, GetParam());
  FilmState s = seeded(g, 0.2, 0.05);
  if (GetParam() == WrForm::Linearized) {
    s.h.array() -= 1.0;
    s.q.array() -= 2.0 / 3.0;
  }
  WrForcing f;
  f.f = 0.01 * VectorXd::LinSpaced(16, -1, 1);
  const double dt = 0.05;
  const BlockJacobian J(model, s.h, s.q, f, dt);
  const MatrixXd D = J.to_dense();
  const double eps = 1e-6;
  for (int k = 0; k < 32; ++k) {
    VectorXd zp = s.h, wp = s.q, zm = s.h, wm = s.q;
    (k < 16 ? zp(k) : wp(k - 16)) += eps;
    (k < 16 ? zm(k) : wm(k - 16)) -= eps;
    const VectorXd col =
        (cn_residual(model, s, zp, wp, f, dt) - cn_residual(model, s, zm, wm, f, dt)) / (2 * eps);
    EXPECT_LT((col - D.col(k)).cwiseAbs().maxCoeff(), 1e-7) << "column " << k;
  }
}

INSTANTIATE_TEST_SUITE_P(Forms, JacobianForm,
                         ::testing::Values(WrForm::Nonlinear, WrForm::Linearized),
                         [](const auto& info) {
                           return info.param == WrForm::Nonlinear ? "Nonlinear" : "Linearized";
                         });

TEST(BlockJacobian, SchurUpdateMatchesDenseSolve) {
  for (int n : {8, 16, 32}) {
    const Grid g(n, 30.0);
    const WrModel model(PhysicalParams{}, g);
    const FilmState s = seeded(g, 0.3, 0.1);
    const BlockJacobian J(model, s.h, s.q, WrForcing{}, 0.1);
    VectorXd r(2 * n);
    for (int j = 0; j < 2 * n; ++j) r(j) = std::cos(0.7 * j);
    const auto [dz, dw] = J.newton_update(r.head(n), r.tail(n));
    const VectorXd ref = J.to_dense().partialPivLu().solve(-r);
    EXPECT_LT((dz - ref.head(n)).cwiseAbs().maxCoeff(), 1e-9 * ref.cwiseAbs().maxCoeff());
    EXPECT_LT((dw - ref.tail(n)).cwiseAbs().maxCoeff(), 1e-9 * ref.cwiseAbs().maxCoeff());
  }
}

TEST(CnNewton, NusseltIsFixed) {
  const Grid g(64, 30.0);
  const WrModel model(PhysicalParams{}, g);
  const FilmState s = nusselt_state(g);
  const FilmState next = step_cn_newton(model, s, WrForcing{}, 0.01);
  EXPECT_LT((next.h - s.h).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_LT((next.q - s.q).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_DOUBLE_EQ(next.t, 0.01);
}

TEST(CnNewton, ConservesMassWithoutForcing) {
  const Grid g(128, 30.0);
  const WrModel model(PhysicalParams{}, g);
  FilmState s = seeded(g);
  const double m0 = s.mass(g);
  for (int k = 0; k < 200; ++k) s = step_cn_newton(model, s, WrForcing{}, 0.01);
  EXPECT_NEAR(s.mass(g), m0, 1e-11);
}

TEST(CnNewton, ForcingInjectsItsIntegral) {
  const Grid g(64, 30.0);
  const WrModel model(PhysicalParams{}, g);
  const ActuatorSet act(g, 3, 0.2);
  WrForcing f;
  f.f = act.field(VectorXd::Constant(3, 0.01));
  FilmState s = seeded(g);
  const double m0 = s.mass(g);
  for (int k = 0; k < 50; ++k) s = step_cn_newton(model, s, f, 0.02);
  EXPECT_NEAR(s.mass(g) - m0, 50 * 0.02 * f.f.sum() * g.dx(), 1e-11);
}

TEST(CnNewton, ReportsIterations) {
  const Grid g(64, 30.0);
  const WrModel model(PhysicalParams{}, g);
  const FilmState s = seeded(g);
  CnStepInfo info;
  step_cn_newton(model, s, WrForcing{}, 0.01, CnOptions{}, &info);
  EXPECT_GE(info.iterations, 1);
  EXPECT_LE(info.residual, CnOptions{}.tolerance);
}

TEST(CnNewton, IterationCapRaisesNewtonFailure) {
  const Grid g(64, 30.0);
  const WrModel model(PhysicalParams{}, g);
  CnOptions tight;
  tight.max_iterations = 1;
  tight.tolerance = 1e-300;
  EXPECT_THROW(step_cn_newton(model, seeded(g, 0.3), WrForcing{}, 0.05, tight), NewtonFailure);
}

FilmState run_cn(const WrModel& model, FilmState s, double dt, double t_end) {
  const int steps = static_cast<int>(std::lround(t_end / dt));
  for (int k = 0; k < steps; ++k) s = step_cn_newton(model, s, WrForcing{}, dt);
  return s;
}

TEST(CnNewton, SecondOrderRichardson) {
  const Grid g(64, 30.0);
  const WrModel model(PhysicalParams{}, g);
  const FilmState s0 = seeded(g);
  const double dt = 0.02, T = 2.0;
  const FilmState a = run_cn(model, s0, dt, T), b = run_cn(model, s0, dt / 2, T),
                  c = run_cn(model, s0, dt / 4, T);
  const double ratio = l2_norm(a.h - b.h, g.dx()) / l2_norm(b.h - c.h, g.dx());
  EXPECT_GE(ratio, 3.5);
  EXPECT_LE(ratio, 4.5);
}

TEST(Rk4, AgreesWithCnAtSmallSteps) {
  const Grid g(64, 30.0);
  const WrModel model(PhysicalParams{}, g);
  FilmState r = seeded(g);
  const double T = 1.0;
  for (int k = 0; k < 2000; ++k) r = step_explicit_reference(model, r, WrForcing{}, T / 2000);
  const FilmState c = run_cn(model, seeded(g), 0.0025, T);
  EXPECT_LT(l2_norm(r.h - c.h, g.dx()), 1e-5);
  EXPECT_LT(l2_norm(r.q - c.q, g.dx()), 1e-5);
}

TEST(Rk4, FourthOrderOnLinearOde) {
  const Rhs F = [](const VectorXd& x) { return VectorXd(-x); };
  const VectorXd x0 = VectorXd::Ones(1);
  auto solve = [&](int steps) {
    VectorXd x = x0;
    for (int k = 0; k < steps; ++k) x = rk4_step(F, x, 1.0 / steps);
    return std::abs(x(0) - std::exp(-1.0));
  };
  const double ratio = solve(10) / solve(20);
  EXPECT_NEAR(ratio, 16.0, 1.0);
}

TEST(BlowUp, Detector) {
  VectorXd h = VectorXd::Ones(8);
  EXPECT_NO_THROW(check_blowup(h, 0.0));
  h(2) = 5.5;
  EXPECT_THROW(check_blowup(h, 1.0), BlowUpError);
  h(2) = 0.0;
  EXPECT_THROW(check_blowup(h, 1.0), BlowUpError);
  h(2) = NAN;
  try {
    check_blowup(h, 2.5);
    FAIL();
  } catch (const BlowUpError& e) {
    EXPECT_DOUBLE_EQ(e.time(), 2.5);
  }
  // Perturbation variables are checked after restoring the offset.
  VectorXd p = VectorXd::Zero(8);
  EXPECT_NO_THROW(check_blowup(p, 0.0, 1.0));
}

TEST(Benney, StableStepShrinksWithHeight) {
  const Grid g(128, 30.0);
  const PhysicalParams p;
  EXPECT_GT(benney_stable_step(p, g, VectorXd::Ones(128)),
            benney_stable_step(p, g, VectorXd::Constant(128, 2.0)));
  EXPECT_NEAR(benney_stable_step(p, g, VectorXd::Ones(128), 0.5),
              0.5 * benney_stable_step(p, g, VectorXd::Ones(128)), 1e-15);
}

TEST(Benney, IntegrationKeepsNusseltAndConservesMass) {
  const Grid g(64, 30.0);
  const PhysicalParams p;
  const FilmState flat = integrate_benney(p, g, nusselt_state(g), VectorXd::Zero(64), 0.5);
  EXPECT_LT((flat.h.array() - 1.0).abs().maxCoeff(), 1e-14);
  EXPECT_NEAR(flat.t, 0.5, 1e-12);
  const FilmState s0 = seeded(g, 0.01, 0.001);
  const FilmState s = integrate_benney(p, g, s0, VectorXd::Zero(64), 0.5);
  EXPECT_NEAR(s.mass(g), s0.mass(g), 1e-11);
}

}  // namespace
}  // namespace filmctl
