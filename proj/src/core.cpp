#include "filmctl/core.hpp"

#include <cmath>
#include <sstream>

namespace filmctl {

void PhysicalParams::validate() const {
  std::ostringstream msg;
  if (!(Re > 0.0)) msg << "Re must be positive (got " << Re << "); ";
  if (!(Ca > 0.0)) msg << "Ca must be positive (got " << Ca << "); ";
  if (!(theta > 0.0 && theta < std::numbers::pi / 2.0))
    msg << "theta must lie in (0, pi/2) (got " << theta << "); ";
  if (!(L > 0.0)) msg << "L must be positive (got " << L << "); ";
  if (!msg.str().empty()) throw ParameterError("PhysicalParams: " + msg.str());
}

Grid::Grid(int n, double L) : n_(n), L_(L), dx_(L / n) {
  if (n < 8 || n % 2 != 0)
    throw ParameterError("Grid: n must be an even integer >= 8");
  if (!(L > 0.0)) throw ParameterError("Grid: L must be positive");
}

VectorXd Grid::nodes() const {
  VectorXd x(n_);
  for (int j = 0; j < n_; ++j) x(j) = node(j);
  return x;
}

VectorXd Grid::faces() const {
  VectorXd x(n_);
  for (int j = 0; j < n_; ++j) x(j) = face(j);
  return x;
}

int Grid::nearest_node(double x) const {
  double u = std::fmod(x, L_);
  if (u < 0.0) u += L_;
  return wrap(static_cast<int>(std::lround(u / dx_)));
}

VectorXd actuator_profile(double omega, double L, int n, double center) {
  if (!(omega > 0.0)) throw ParameterError("actuator shape: omega must be positive");
  if (n < 8) throw ParameterError("actuator shape: n must be >= 8");
  const double dx = L / n;
  const double inv_w2 = 1.0 / (omega * omega);
  VectorXd d(n);
  for (int j = 0; j < n; ++j) {
    const double arg = 2.0 * std::numbers::pi * (j * dx - center) / L;
    d(j) = std::exp((std::cos(arg) - 1.0) * inv_w2);
  }
  // Discrete normalization on the active grid: sum_j d_j dx = 1.
  d /= d.sum() * dx;
  return d;
}

VectorXd build_actuator_shape(double omega, double L, int n) {
  return actuator_profile(omega, L, n, 0.0);
}

ActuatorSet::ActuatorSet(const Grid& grid, int m_, double omega_)
    : m(m_), omega(omega_) {
  if (m < 1) throw ParameterError("ActuatorSet: need at least one actuator");
  if (!(omega > 0.0)) throw ParameterError("ActuatorSet: omega must be positive");
  const int n = grid.n();
  positions.resize(m);
  shape_matrix.resize(n, m);
  alpha.resize(m);
  for (int i = 0; i < m; ++i) {
    positions(i) = (i + 0.5) * grid.L() / m;
    shape_matrix.col(i) = actuator_profile(omega, grid.L(), n, positions(i));
    const double arg0 = 2.0 * std::numbers::pi * (0.0 - positions(i)) / grid.L();
    alpha(i) = shape_matrix(0, i) / std::exp((std::cos(arg0) - 1.0) / (omega * omega));
  }
}

VectorXd ActuatorSet::field(const VectorXd& amplitudes) const {
  return shape_matrix * amplitudes;
}

ObserverSet::ObserverSet(const Grid& grid, int p_, double shift_) : p(p_), shift(shift_) {
  if (p < 1) throw ParameterError("ObserverSet: need at least one observer");
  const int n = grid.n();
  positions.resize(p);
  node_index.resize(p);
  C = MatrixXd::Zero(p, n);
  for (int k = 0; k < p; ++k) {
    double x = std::fmod((k + 0.5) * grid.L() / p - shift, grid.L());
    if (x < 0.0) x += grid.L();
    positions(k) = x;
    node_index(k) = grid.nearest_node(x);
    C(k, node_index(k)) = 1.0;
  }
}

VectorXd ObserverSet::sample(const VectorXd& h) const {
  VectorXd y(p);
  for (int k = 0; k < p; ++k) y(k) = h(node_index(k));
  return y;
}

ControlSignal::ControlSignal(const ActuatorSet& actuators, VectorXd a)
    : amplitudes(std::move(a)), as_field(actuators.field(amplitudes)) {}

FilmState nusselt_state(const Grid& grid) {
  FilmState s;
  s.t = 0.0;
  s.h = VectorXd::Constant(grid.n(), kNusseltHeight);
  s.q = VectorXd::Constant(grid.n(), kNusseltFlux);
  return s;
}

void check_film(const VectorXd& h, const VectorXd& q, const std::string& who) {
  for (Eigen::Index j = 0; j < h.size(); ++j) {
    if (!std::isfinite(h(j))) throw StateError(who + ": non-finite height");
    if (h(j) <= 0.0) {
      std::ostringstream msg;
      msg << who << ": film rupture, h[" << j << "] = " << h(j);
      throw StateError(msg.str());
    }
  }
  if (!q.allFinite()) throw StateError(who + ": non-finite flux");
}

}  // namespace filmctl
