#pragma once

// Shared building blocks: physical parameters, the periodic grid, actuator and
// observer geometry, and the state containers used by every other module.

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace filmctl {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid parameter (non-positive width, bad grid size, ...).
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Non-physical state handed to a model, e.g. h <= 0 (film rupture).
class StateError : public Error {
 public:
  using Error::Error;
};

/// Linear system or matrix equation without a unique solution.
class SingularEquationError : public Error {
 public:
  using Error::Error;
};

/// Nusselt (flat film) reference values in nondimensional units.
inline constexpr double kNusseltHeight = 1.0;
inline constexpr double kNusseltFlux = 2.0 / 3.0;

/// Nondimensional flow constants. `theta` is the inclination in radians.
struct PhysicalParams {
  double Re = 8.0;
  double Ca = 0.05;
  double theta = std::numbers::pi / 3.0;
  double L = 30.0;

  double cot_theta() const { return 1.0 / std::tan(theta); }
  /// Long-wave parameter 1/L.
  double epsilon() const { return 1.0 / L; }

  /// Throws ParameterError unless every field is in range.
  void validate() const;
};

/// Uniform periodic grid. Heights live on nodes x_j = j*dx, fluxes on the
/// staggered faces x_j + dx/2 (face j sits between node j and node j+1).
class Grid {
 public:
  Grid(int n, double L);

  int n() const { return n_; }
  double L() const { return L_; }
  double dx() const { return dx_; }
  double node(int j) const { return j * dx_; }
  double face(int j) const { return (j + 0.5) * dx_; }

  /// Periodic index wrap into [0, n).
  int wrap(int j) const {
    const int r = j % n_;
    return r < 0 ? r + n_ : r;
  }

  VectorXd nodes() const;
  VectorXd faces() const;

  /// Index of the node nearest to position x (x taken modulo L).
  int nearest_node(double x) const;

 private:
  int n_;
  double L_;
  double dx_;
};

/// Smoothed periodic delta d(x - center) sampled on the grid nodes and
/// normalized so that sum_j d_j * dx == 1.
VectorXd actuator_profile(double omega, double L, int n, double center);

/// build_actuator_shape: the profile centred at x = 0.
VectorXd build_actuator_shape(double omega, double L, int n);

/// Evenly spaced actuators at (i + 1/2) L / m with a common width omega.
struct ActuatorSet {
  ActuatorSet(const Grid& grid, int m, double omega);

  int m;
  double omega;
  VectorXd positions;
  /// n x m; column i is the actuator profile centred at positions(i).
  MatrixXd shape_matrix;
  /// Normalization constant of each column (they differ only by grid offset).
  VectorXd alpha;

  /// f = shape_matrix * amplitudes.
  VectorXd field(const VectorXd& amplitudes) const;
};

/// Point observers of the film height at (k + 1/2) L / p - shift, each
/// sampling the nearest grid node.
struct ObserverSet {
  ObserverSet(const Grid& grid, int p, double shift);

  int p;
  double shift;
  VectorXd positions;
  Eigen::VectorXi node_index;
  /// p x n height-sampling matrix (one unit entry per row).
  MatrixXd C;

  /// C * h, computed by indexing.
  VectorXd sample(const VectorXd& h) const;
};

/// Plant fields: h on nodes, q on faces.
struct FilmState {
  double t = 0.0;
  VectorXd h;
  VectorXd q;

  double mass(const Grid& grid) const { return h.sum() * grid.dx(); }
};

/// Estimator fields: z estimates h (nodes), w estimates q (faces).
struct EstimatorState {
  double t = 0.0;
  VectorXd z;
  VectorXd w;
};

/// Actuator amplitudes together with the distributed forcing they produce.
struct ControlSignal {
  ControlSignal(const ActuatorSet& actuators, VectorXd amplitudes);

  VectorXd amplitudes;
  VectorXd as_field;
};

/// Discrete L2 norm sqrt(dx * sum v_j^2).
inline double l2_norm(const VectorXd& v, double dx) { return std::sqrt(dx * v.squaredNorm()); }

/// Flat film: h = 1, q = 2/3, t = 0.
FilmState nusselt_state(const Grid& grid);

/// Throws StateError if any entry is non-finite or h is not strictly positive.
void check_film(const VectorXd& h, const VectorXd& q, const std::string& who);

}  // namespace filmctl
