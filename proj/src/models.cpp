#include "filmctl/models.hpp"

#include <cmath>
#include <vector>

namespace filmctl {

namespace {

void require_size(const VectorXd& v, int n, const char* what) {
  if (v.size() != n) throw ParameterError(std::string(what) + ": size does not match grid");
}

// Zero when empty, otherwise the vector itself (sizes checked).
double at_or_zero(const VectorXd& v, int j) { return v.size() == 0 ? 0.0 : v(j); }

// Second difference on nodes.
VectorXd second_difference(const VectorXd& h, const Grid& grid) {
  const int n = grid.n();
  const double inv_dx2 = 1.0 / (grid.dx() * grid.dx());
  VectorXd d2(n);
  for (int j = 0; j < n; ++j)
    d2(j) = (h(grid.wrap(j + 1)) - 2.0 * h(j) + h(grid.wrap(j - 1))) * inv_dx2;
  return d2;
}

}  // namespace

VectorXd rhs_benney(const VectorXd& h, const VectorXd& f, const PhysicalParams& params,
                    const Grid& grid) {
  const int n = grid.n();
  require_size(h, n, "rhs_benney(h)");
  require_size(f, n, "rhs_benney(f)");
  check_film(h, VectorXd(), "rhs_benney");

  const double dx = grid.dx();
  const double cot = params.cot_theta();
  const VectorXd d2 = second_difference(h, grid);

  // Face fluxes; face j sits between nodes j and j+1.
  VectorXd flux(n);
  for (int j = 0; j < n; ++j) {
    const int jp = grid.wrap(j + 1);
    const double H = 0.5 * (h(j) + h(jp));
    const double hx = (h(jp) - h(j)) / dx;
    const double hxxx = (d2(jp) - d2(j)) / dx;
    const double ff = 0.5 * (f(j) + f(jp));
    const double H2 = H * H;
    const double H3 = H2 * H;
    const double H4 = H2 * H2;
    flux(j) = H3 / 3.0 * (2.0 - 2.0 * hx * cot + hxxx / params.Ca) +
              params.Re * (8.0 * H4 * H2 * hx / 15.0 - 2.0 * H4 * ff / 3.0);
  }

  VectorXd dh(n);
  for (int j = 0; j < n; ++j) dh(j) = -(flux(j) - flux(grid.wrap(j - 1))) / dx + f(j);
  return dh;
}

WrModel::WrModel(PhysicalParams params, Grid grid, WrForm form)
    : params_(params), grid_(grid), form_(form) {
  params_.validate();
}

WrRates WrModel::rhs(const VectorXd& h, const VectorXd& q, const WrForcing& forcing) const {
  const int n = grid_.n();
  require_size(h, n, "WrModel::rhs(h)");
  require_size(q, n, "WrModel::rhs(q)");
  if (forcing.f.size() != 0) require_size(forcing.f, n, "WrModel::rhs(f)");
  if (forcing.g_h.size() != 0) require_size(forcing.g_h, n, "WrModel::rhs(g_h)");
  if (forcing.g_q.size() != 0) require_size(forcing.g_q, n, "WrModel::rhs(g_q)");
  if (form_ == WrForm::Nonlinear) check_film(h, q, "rhs_wr");

  const double dx = grid_.dx();
  const double Re = params_.Re;
  const double Ca = params_.Ca;
  const double cot = params_.cot_theta();
  const VectorXd d2 = second_difference(h, grid_);

  WrRates out{VectorXd(n), VectorXd(n)};
  for (int j = 0; j < n; ++j) {
    out.dh(j) = at_or_zero(forcing.f, j) + at_or_zero(forcing.g_h, j) -
                (q(j) - q(grid_.wrap(j - 1))) / dx;
  }

  for (int j = 0; j < n; ++j) {
    const int jp = grid_.wrap(j + 1);
    const int jm = grid_.wrap(j - 1);
    const double H = 0.5 * (h(j) + h(jp));
    const double hx = (h(jp) - h(j)) / dx;
    const double hxxx = (d2(jp) - d2(j)) / dx;
    const double qj = q(j);
    const double qx = (q(jp) - q(jm)) / (2.0 * dx);
    const double ff = 0.5 * (at_or_zero(forcing.f, j) + at_or_zero(forcing.f, jp));
    double rate;
    if (form_ == WrForm::Nonlinear) {
      const double H2 = H * H;
      rate = -5.0 * qj / (2.0 * Re * H2) +
             5.0 * H / (6.0 * Re) * (2.0 - 2.0 * cot * hx + hxxx / Ca) +
             9.0 * qj * qj * hx / (7.0 * H2) - 17.0 * qj * qx / (7.0 * H) +
             qj * ff / (2.0 * H);
    } else {
      rate = 5.0 / Re * H + (4.0 / 7.0 - 5.0 * cot / (3.0 * Re)) * hx +
             5.0 / (6.0 * Re * Ca) * hxxx - 5.0 / (2.0 * Re) * qj - 34.0 / 21.0 * qx +
             ff / 3.0;
    }
    out.dq(j) = rate + at_or_zero(forcing.g_q, j);
  }
  return out;
}

FluxJacobianRows WrModel::flux_jacobian(const VectorXd& h, const VectorXd& q,
                                        const WrForcing& forcing) const {
  const int n = grid_.n();
  const double dx = grid_.dx();
  const double dx3 = dx * dx * dx;
  const double Re = params_.Re;
  const double Ca = params_.Ca;
  const double cot = params_.cot_theta();

  FluxJacobianRows J;
  for (auto& v : J.dh) v.resize(n);
  for (auto& v : J.dq) v.resize(n);

  if (form_ == WrForm::Linearized) {
    const double c1 = 4.0 / 7.0 - 5.0 * cot / (3.0 * Re);
    const double c3 = 5.0 / (6.0 * Re * Ca);
    J.dh[0].setConstant(-c3 / dx3);
    J.dh[1].setConstant(2.5 / Re - c1 / dx + 3.0 * c3 / dx3);
    J.dh[2].setConstant(2.5 / Re + c1 / dx - 3.0 * c3 / dx3);
    J.dh[3].setConstant(c3 / dx3);
    J.dq[0].setConstant(34.0 / 21.0 / (2.0 * dx));
    J.dq[1].setConstant(-5.0 / (2.0 * Re));
    J.dq[2].setConstant(-34.0 / 21.0 / (2.0 * dx));
    return J;
  }

  check_film(h, q, "WrModel::flux_jacobian");
  const VectorXd d2 = second_difference(h, grid_);
  for (int j = 0; j < n; ++j) {
    const int jp = grid_.wrap(j + 1);
    const int jm = grid_.wrap(j - 1);
    const double H = 0.5 * (h(j) + h(jp));
    const double H2 = H * H;
    const double H3 = H2 * H;
    const double hx = (h(jp) - h(j)) / dx;
    const double hxxx = (d2(jp) - d2(j)) / dx;
    const double qj = q(j);
    const double qx = (q(jp) - q(jm)) / (2.0 * dx);
    const double ff = 0.5 * (at_or_zero(forcing.f, j) + at_or_zero(forcing.f, jp));
    const double E = 2.0 - 2.0 * cot * hx + hxxx / Ca;

    const double dH = 5.0 * qj / (Re * H3) + 5.0 / (6.0 * Re) * E -
                      18.0 * qj * qj * hx / (7.0 * H3) + 17.0 * qj * qx / (7.0 * H2) -
                      qj * ff / (2.0 * H2);
    const double dhx = -5.0 * H * cot / (3.0 * Re) + 9.0 * qj * qj / (7.0 * H2);
    const double dhxxx = 5.0 * H / (6.0 * Re * Ca);

    J.dh[0](j) = -dhxxx / dx3;
    J.dh[1](j) = 0.5 * dH - dhx / dx + 3.0 * dhxxx / dx3;
    J.dh[2](j) = 0.5 * dH + dhx / dx - 3.0 * dhxxx / dx3;
    J.dh[3](j) = dhxxx / dx3;

    const double dqx = -17.0 * qj / (7.0 * H);
    J.dq[0](j) = -dqx / (2.0 * dx);
    J.dq[1](j) = -5.0 / (2.0 * Re * H2) + 18.0 * qj * hx / (7.0 * H2) -
                 17.0 * qx / (7.0 * H) + ff / (2.0 * H);
    J.dq[2](j) = dqx / (2.0 * dx);
  }
  return J;
}

WrRates rhs_wr(const VectorXd& h, const VectorXd& q, const VectorXd& f,
               const PhysicalParams& params, const Grid& grid) {
  return WrModel(params, grid).rhs(h, q, WrForcing{f, {}, {}});
}

MatrixXd periodic_stencil(int n, std::initializer_list<int> offsets,
                          std::initializer_list<double> coeffs) {
  if (offsets.size() != coeffs.size())
    throw ParameterError("periodic_stencil: offsets and coefficients differ in length");
  MatrixXd M = MatrixXd::Zero(n, n);
  for (int j = 0; j < n; ++j) {
    auto c = coeffs.begin();
    for (int off : offsets) {
      const int col = ((j + off) % n + n) % n;
      M(j, col) += *c++;
    }
  }
  return M;
}

LinearSystem assemble_linear(ModelKind kind, const PhysicalParams& params, const Grid& grid,
                             const ActuatorSet& actuators, const ObserverSet& observers,
                             double beta) {
  params.validate();
  if (!(beta > 0.0)) throw ParameterError("assemble_linear: beta must be positive");
  if (actuators.shape_matrix.rows() != grid.n() || observers.C.cols() != grid.n())
    throw ParameterError("assemble_linear: actuator/observer sets built for another grid");

  const int n = grid.n();
  const double dx = grid.dx();
  const double Re = params.Re;
  const double Ca = params.Ca;
  const double cot = params.cot_theta();

  // Node-centred operators.
  const MatrixXd D1 = periodic_stencil(n, {-1, 1}, {-0.5 / dx, 0.5 / dx});
  const MatrixXd D2 = periodic_stencil(n, {-1, 0, 1}, {1 / (dx * dx), -2 / (dx * dx), 1 / (dx * dx)});
  const MatrixXd D4 = D2 * D2;

  LinearSystem sys;
  sys.kind = kind;
  sys.n = n;
  sys.beta = beta;

  if (kind == ModelKind::Benney) {
    sys.A = -2.0 * D1 + (2.0 * cot / 3.0 - 8.0 * Re / 15.0) * D2 - D4 / (3.0 * Ca);
    sys.B = (MatrixXd::Identity(n, n) + (2.0 * Re / 3.0) * D1) * actuators.shape_matrix;
    sys.C = observers.C;
  } else {
    // Staggered operators: node -> face average, node -> face difference,
    // node -> face third difference, face -> node difference, face-centred
    // central difference.
    const MatrixXd avg = periodic_stencil(n, {0, 1}, {0.5, 0.5});
    const MatrixXd dn2f = periodic_stencil(n, {0, 1}, {-1 / dx, 1 / dx});
    const MatrixXd df2n = periodic_stencil(n, {-1, 0}, {-1 / dx, 1 / dx});
    const MatrixXd d3f = dn2f * D2;
    const MatrixXd dcf = D1;

    sys.A = MatrixXd::Zero(2 * n, 2 * n);
    sys.A.block(0, n, n, n) = -df2n;
    sys.A.block(n, 0, n, n) = 5.0 / Re * avg + (4.0 / 7.0 - 5.0 * cot / (3.0 * Re)) * dn2f +
                              5.0 / (6.0 * Re * Ca) * d3f;
    sys.A.block(n, n, n, n) =
        -5.0 / (2.0 * Re) * MatrixXd::Identity(n, n) - 34.0 / 21.0 * dcf;

    sys.B.resize(2 * n, actuators.m);
    sys.B.topRows(n) = actuators.shape_matrix;
    sys.B.bottomRows(n) = avg * actuators.shape_matrix / 3.0;

    sys.C = MatrixXd::Zero(observers.p, 2 * n);
    sys.C.leftCols(n) = observers.C;
  }

  const int dim = static_cast<int>(sys.A.rows());
  sys.Qcost = (beta * params.L / n) * MatrixXd::Identity(dim, dim);
  sys.Rcost = MatrixXd::Identity(actuators.m, actuators.m);
  return sys;
}

int count_unstable_modes(const PhysicalParams& params) {
  params.validate();
  const double radicand = params.Ca * (1.6 * params.Re - 2.0 * params.cot_theta());
  if (!(radicand > 0.0)) return 1;
  const double bands = params.L / (2.0 * std::numbers::pi) * std::sqrt(radicand);
  return 1 + 2 * static_cast<int>(std::floor(bands));
}

}  // namespace filmctl
