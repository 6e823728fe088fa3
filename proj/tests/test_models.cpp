#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include "filmctl/control.hpp"
#include "filmctl/models.hpp"

namespace filmctl {
namespace {

using cd = std::complex<double>;
using Eigen::VectorXcd;

constexpr double kPi = std::numbers::pi;

PhysicalParams re10() {
  PhysicalParams p;
  p.Re = 10.0;
  return p;
}

VectorXcd fourier_mode(const Grid& g, int k) {
  VectorXcd v(g.n());
  for (int j = 0; j < g.n(); ++j) v(j) = std::polar(1.0, 2.0 * kPi * k * g.node(j) / g.L());
  return v;
}

// Smooth positive test state.
std::pair<VectorXd, VectorXd> wavy_state(const Grid& g) {
  VectorXd h(g.n()), q(g.n());
  for (int j = 0; j < g.n(); ++j) {
    const double x = g.node(j), xf = g.face(j);
    h(j) = 1.0 + 0.2 * std::cos(2 * kPi * x / g.L()) + 0.05 * std::sin(6 * kPi * x / g.L());
    q(j) = 0.7 + 0.3 * std::sin(2 * kPi * xf / g.L() + 0.4);
  }
  return {h, q};
}

VectorXd roll(const VectorXd& v, int s) {
  const Eigen::Index n = v.size();
  VectorXd out(n);
  for (Eigen::Index j = 0; j < n; ++j) out((j + s) % n) = v(j);
  return out;
}

TEST(Benney, NusseltIsFixedPoint) {
  Grid g(128, 30.0);
  const VectorXd r = rhs_benney(VectorXd::Ones(128), VectorXd::Zero(128), PhysicalParams{}, g);
  EXPECT_LT(r.lpNorm<Eigen::Infinity>(), 1e-14);
}

TEST(Benney, RejectsNonPositiveHeight) {
  Grid g(16, 30.0);
  VectorXd h = VectorXd::Ones(16);
  h(4) = -0.1;
  EXPECT_THROW(rhs_benney(h, VectorXd::Zero(16), PhysicalParams{}, g), StateError);
}

TEST(Benney, SmallModeGrowsAtEigenvalueRate) {
  const PhysicalParams p = re10();
  Grid g(128, 30.0);
  ActuatorSet act(g, 5, 0.1);
  ObserverSet obs(g, 10, 0.0);
  const LinearSystem sys = assemble_linear(ModelKind::Benney, p, g, act, obs);
  const VectorXcd v = fourier_mode(g, 1);
  const cd lambda = v.dot(sys.A * v) / v.squaredNorm();  // v^H A v / v^H v
  EXPECT_LT((sys.A * v - lambda * v).norm(), 1e-9 * v.norm() * std::abs(lambda) + 1e-12);

  const double eps = 1e-6;
  const VectorXd c = v.real();
  const VectorXd dh = rhs_benney(VectorXd::Ones(128) + eps * c, VectorXd::Zero(128), p, g);
  const double rate = dh.dot(c) / (eps * c.squaredNorm());
  EXPECT_NEAR(rate, lambda.real(), 1e-3 * std::abs(lambda.real()));
}

TEST(Benney, ActuationMatchesInputOperator) {
  const PhysicalParams p = re10();
  Grid g(128, 30.0);
  ActuatorSet act(g, 5, 0.1);
  ObserverSet obs(g, 10, 0.0);
  const LinearSystem sys = assemble_linear(ModelKind::Benney, p, g, act, obs);
  for (int i = 0; i < 5; ++i) {
    const VectorXd r = rhs_benney(VectorXd::Ones(128), act.shape_matrix.col(i), p, g);
    EXPECT_LT((r - sys.B.col(i)).lpNorm<Eigen::Infinity>(), 1e-10);
  }
}

TEST(Benney, ConservesMassUpToForcing) {
  Grid g(64, 30.0);
  auto [h, q] = wavy_state(g);
  ActuatorSet act(g, 3, 0.2);
  const VectorXd f = act.field(Eigen::Vector3d(0.3, -0.1, 0.2));
  const VectorXd r = rhs_benney(h, f, re10(), g);
  EXPECT_NEAR(r.sum() * g.dx(), 0.4, 1e-11);
}

TEST(Benney, DispersionRelationOfDiscreteOperator) {
  const PhysicalParams p = re10();
  Grid g(128, 30.0);
  ActuatorSet act(g, 5, 0.1);
  ObserverSet obs(g, 10, 0.0);
  const LinearSystem sys = assemble_linear(ModelKind::Benney, p, g, act, obs);
  const double top = spectral_abscissa(sys.A);
  double best = -1e300;
  for (int j = 0; j < g.n(); ++j) {
    // Second differences see the wavenumber through sigma = 2 sin(k dx / 2) / dx.
    const double k = 2 * kPi * j / g.L();
    const double s = 2 * std::sin(0.5 * k * g.dx()) / g.dx();
    const double s2 = s * s;
    best = std::max(best, -s2 * (2 * p.cot_theta() / 3 - 8 * p.Re / 15) - s2 * s2 / (3 * p.Ca));
  }
  EXPECT_NEAR(top, best, 1e-6 * std::abs(best));
}

TEST(WeightedResidual, NusseltIsFixedPoint) {
  Grid g(128, 30.0);
  const FilmState s = nusselt_state(g);
  const WrRates r = rhs_wr(s.h, s.q, VectorXd::Zero(128), PhysicalParams{}, g);
  EXPECT_LT(r.dh.lpNorm<Eigen::Infinity>(), 1e-14);
  EXPECT_LT(r.dq.lpNorm<Eigen::Infinity>(), 1e-14);
}

TEST(WeightedResidual, RejectsNonPositiveHeight) {
  Grid g(16, 30.0);
  FilmState s = nusselt_state(g);
  s.h(2) = 0.0;
  EXPECT_THROW(rhs_wr(s.h, s.q, {}, PhysicalParams{}, g), StateError);
}

TEST(WeightedResidual, EigenmodeGrowsAtEigenvalueRate) {
  const PhysicalParams p = re10();
  Grid g(128, 30.0);
  const int n = g.n();
  ActuatorSet act(g, 5, 0.1);
  ObserverSet obs(g, 10, 0.0);
  const LinearSystem sys = assemble_linear(ModelKind::WeightedResidual, p, g, act, obs);

  // Restrict A to wavenumber 1: the span of (v, 0) and (0, v) is invariant.
  const VectorXcd v = fourier_mode(g, 1);
  Eigen::Matrix2cd M;
  for (int c = 0; c < 2; ++c) {
    VectorXcd e = VectorXcd::Zero(2 * n);
    e.segment(c * n, n) = v;
    const VectorXcd Ae = sys.A.cast<cd>() * e;
    for (int r = 0; r < 2; ++r) M(r, c) = v.dot(Ae.segment(r * n, n)) / v.squaredNorm();
  }
  Eigen::ComplexEigenSolver<Eigen::Matrix2cd> es(M);
  const int top = es.eigenvalues()(0).real() > es.eigenvalues()(1).real() ? 0 : 1;
  const cd lambda = es.eigenvalues()(top);
  Eigen::Vector2cd coef = es.eigenvectors().col(top);
  coef *= std::conj(coef(0)) / std::abs(coef(0));
  VectorXcd mode(2 * n);
  mode << coef(0) * v, coef(1) * v;
  EXPECT_LT((sys.A.cast<cd>() * mode - lambda * mode).norm(), 1e-8 * mode.norm() * std::abs(lambda));

  // Nonlinear right-hand side along the real part of the eigenmode.
  const double eps = 1e-6;
  const VectorXd xr = mode.real() / mode.real().norm();
  const VectorXd xi = mode.imag() / mode.real().norm();
  const WrRates r = rhs_wr(VectorXd::Ones(n) + eps * xr.head(n),
                           VectorXd::Constant(n, 2.0 / 3.0) + eps * xr.tail(n),
                           VectorXd::Zero(n), p, g);
  VectorXd rate(2 * n);
  rate << r.dh, r.dq;
  rate /= eps;
  const VectorXd expected = lambda.real() * xr - lambda.imag() * xi;
  EXPECT_LT((rate - expected).norm(), 1e-3 * expected.norm());
  EXPECT_GT(lambda.real(), 0.0);
}

TEST(WeightedResidual, ConservesMassUpToForcing) {
  Grid g(64, 30.0);
  auto [h, q] = wavy_state(g);
  ActuatorSet act(g, 3, 0.2);
  WrModel model(PhysicalParams{}, g);
  const VectorXd f = act.field(Eigen::Vector3d(0.3, -0.1, 0.2));
  const WrRates r = model.rhs(h, q, WrForcing{f, {}, {}});
  EXPECT_NEAR(r.dh.sum() * g.dx(), 0.4, 1e-11);
}

TEST(WeightedResidual, TranslationEquivariant) {
  Grid g(64, 30.0);
  auto [h, q] = wavy_state(g);
  WrModel model(re10(), g);
  const WrRates r = model.rhs(h, q, {});
  const WrRates rs = model.rhs(roll(h, 7), roll(q, 7), {});
  EXPECT_LT((rs.dh - roll(r.dh, 7)).lpNorm<Eigen::Infinity>(), 1e-11);
  EXPECT_LT((rs.dq - roll(r.dq, 7)).lpNorm<Eigen::Infinity>(), 1e-11);
}

TEST(WeightedResidual, EstimatorForcingIsAdditive) {
  Grid g(32, 30.0);
  auto [h, q] = wavy_state(g);
  WrModel model(PhysicalParams{}, g);
  const VectorXd gh = VectorXd::LinSpaced(32, -1, 1), gq = VectorXd::LinSpaced(32, 2, 0);
  const WrRates base = model.rhs(h, q, {});
  const WrRates forced = model.rhs(h, q, WrForcing{{}, gh, gq});
  EXPECT_LT((forced.dh - base.dh - gh).lpNorm<Eigen::Infinity>(), 1e-13);
  EXPECT_LT((forced.dq - base.dq - gq).lpNorm<Eigen::Infinity>(), 1e-13);
}

class FluxJacobian : public ::testing::TestWithParam<WrForm> {};

TEST_P(FluxJacobian, MatchesCentralDifferences) {
  Grid g(32, 30.0);
  auto [h, q] = wavy_state(g);
  const WrModel model(re10(), g, GetParam());
  if (GetParam() == WrForm::Linearized) {
    h.array() -= 1.0;
    q.array() -= 2.0 / 3.0;
  }
  ActuatorSet act(g, 2, 0.3);
  const WrForcing forcing{act.field(Eigen::Vector2d(0.2, -0.4)), {}, {}};
  const FluxJacobianRows J = model.flux_jacobian(h, q, forcing);
  const double step = 1e-6;
  const int n = g.n();
  for (int col = 0; col < n; col += 5) {
    for (int var = 0; var < 2; ++var) {
      VectorXd hp = h, hm = h, qp = q, qm = q;
      (var == 0 ? hp : qp)(col) += step;
      (var == 0 ? hm : qm)(col) -= step;
      const VectorXd fd = (model.rhs(hp, qp, forcing).dq - model.rhs(hm, qm, forcing).dq) / (2 * step);
      for (int row = 0; row < n; ++row) {
        const int off = ((col - row) % n + n) % n;
        const int d = off > n / 2 ? off - n : off;
        double analytic = 0.0;
        if (var == 0 && d >= -1 && d <= 2) analytic = J.dh[d + 1](row);
        if (var == 1 && d >= -1 && d <= 1) analytic = J.dq[d + 1](row);
        EXPECT_NEAR(fd(row), analytic, 1e-5 * (1.0 + std::abs(analytic)))
            << "row " << row << " col " << col << " var " << var;
      }
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Forms, FluxJacobian,
                         ::testing::Values(WrForm::Nonlinear, WrForm::Linearized),
                         [](const auto& info) {
                           return info.param == WrForm::Nonlinear ? "Nonlinear" : "Linearized";
                         });

TEST(WeightedResidual, LinearizedFormIsTheAssembledSystem) {
  const PhysicalParams p = re10();
  Grid g(64, 30.0);
  ActuatorSet act(g, 4, 0.1);
  ObserverSet obs(g, 8, 0.0);
  const LinearSystem sys = assemble_linear(ModelKind::WeightedResidual, p, g, act, obs);
  const WrModel lin(p, g, WrForm::Linearized);
  std::mt19937 rng(7);
  std::normal_distribution<double> N;
  VectorXd x(128), a(4);
  for (auto& v : x) v = N(rng);
  for (auto& v : a) v = N(rng);
  const WrRates r = lin.rhs(x.head(64), x.tail(64), WrForcing{act.field(a), {}, {}});
  VectorXd got(128);
  got << r.dh, r.dq;
  EXPECT_LT((got - (sys.A * x + sys.B * a)).lpNorm<Eigen::Infinity>(),
            1e-10 * (sys.A * x).lpNorm<Eigen::Infinity>());
}

TEST(WeightedResidual, NonlinearJacobianAtNusseltIsA) {
  const PhysicalParams p = re10();
  Grid g(32, 30.0);
  ActuatorSet act(g, 2, 0.1);
  ObserverSet obs(g, 4, 0.0);
  const LinearSystem sys = assemble_linear(ModelKind::WeightedResidual, p, g, act, obs);
  const FilmState s = nusselt_state(g);
  const FluxJacobianRows J = WrModel(p, g).flux_jacobian(s.h, s.q, {});
  const FluxJacobianRows Jl = WrModel(p, g, WrForm::Linearized).flux_jacobian(s.h, s.q, {});
  for (int k = 0; k < 4; ++k) EXPECT_LT((J.dh[k] - Jl.dh[k]).lpNorm<Eigen::Infinity>(), 1e-10);
  for (int k = 0; k < 3; ++k) EXPECT_LT((J.dq[k] - Jl.dq[k]).lpNorm<Eigen::Infinity>(), 1e-10);
  // Row 0 of the flux block of A against the stencil rows.
  EXPECT_NEAR(sys.A(32, 31), J.dh[0](0), 1e-10);
  EXPECT_NEAR(sys.A(32, 0), J.dh[1](0), 1e-10);
  EXPECT_NEAR(sys.A(32, 2), J.dh[3](0), 1e-10);
  EXPECT_NEAR(sys.A(32, 32), J.dq[1](0), 1e-10);
}

TEST(AssembleLinear, ShapesAndWeights) {
  Grid g(64, 30.0);
  ActuatorSet act(g, 5, 0.1);
  ObserverSet obs(g, 7, 0.0);
  const LinearSystem wr = assemble_linear(ModelKind::WeightedResidual, PhysicalParams{}, g, act, obs, 2.0);
  EXPECT_EQ(wr.state_dim(), 128);
  EXPECT_EQ(wr.inputs(), 5);
  EXPECT_EQ(wr.outputs(), 7);
  EXPECT_TRUE(wr.C.rightCols(64).isZero());
  EXPECT_TRUE(wr.Qcost.isApprox(2.0 * 30.0 / 64 * MatrixXd::Identity(128, 128)));
  EXPECT_TRUE(wr.Rcost.isIdentity());
  const LinearSystem b = assemble_linear(ModelKind::Benney, PhysicalParams{}, g, act, obs);
  EXPECT_EQ(b.state_dim(), 64);
  EXPECT_THROW(assemble_linear(ModelKind::Benney, PhysicalParams{}, g, act, obs, 0.0), ParameterError);
}

TEST(PeriodicStencil, WrapsColumns) {
  const MatrixXd M = periodic_stencil(8, {-1, 1}, {-1.0, 2.0});
  EXPECT_EQ(M(0, 7), -1.0);
  EXPECT_EQ(M(7, 0), 2.0);
  EXPECT_EQ(M.sum(), 8.0);
}

TEST(UnstableModes, PublishedCount) {
  PhysicalParams p;
  p.Re = 50;
  p.Ca = 0.01;
  EXPECT_EQ(count_unstable_modes(p), 9);
}

TEST(UnstableModes, BelowCriticalOnlyNeutral) {
  PhysicalParams p;
  p.Re = 0.7;  // below 5 cot(theta) / 4
  for (double ca : {0.001, 0.05, 10.0}) {
    p.Ca = ca;
    EXPECT_EQ(count_unstable_modes(p), 1);
  }
}

TEST(UnstableModes, MatchesEigenvalueCount) {
  const PhysicalParams p = re10();
  Grid g(128, p.L);
  ActuatorSet act(g, 5, 0.1);
  ObserverSet obs(g, 10, 0.0);
  const LinearSystem sys = assemble_linear(ModelKind::Benney, p, g, act, obs);
  Eigen::EigenSolver<MatrixXd> es(sys.A, false);
  const int count = static_cast<int>((es.eigenvalues().real().array() > -1e-8).count());
  EXPECT_EQ(count_unstable_modes(p), count);
}

}  // namespace
}  // namespace filmctl
