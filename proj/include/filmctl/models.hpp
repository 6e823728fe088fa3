#pragma once

// Thin-film models on the periodic staggered grid.
//
// Heights sit on nodes, fluxes on faces (face j between nodes j and j+1).
// Spatial derivatives are second-order central differences built by
// composing staggered first differences, so the flux divergence in the
// height equation is an exact discrete divergence and mass is conserved to
// rounding.

#include <array>

#include "filmctl/core.hpp"

namespace filmctl {

enum class ModelKind { Benney, WeightedResidual };

/// Discretized linearization about the Nusselt state together with the
/// quadratic cost weights of the control problem.
///
/// For the weighted-residual model the state is (h_hat, q_hat) of size 2n;
/// the flux block of C is zero.
struct LinearSystem {
  ModelKind kind = ModelKind::WeightedResidual;
  int n = 0;
  MatrixXd A;
  MatrixXd B;
  MatrixXd C;
  MatrixXd Qcost;
  MatrixXd Rcost;
  double beta = 1.0;

  int state_dim() const { return static_cast<int>(A.rows()); }
  int inputs() const { return static_cast<int>(B.cols()); }
  int outputs() const { return static_cast<int>(C.rows()); }
};

/// Benney right-hand side dh/dt for the forcing field f (nodes).
VectorXd rhs_benney(const VectorXd& h, const VectorXd& f, const PhysicalParams& params,
                    const Grid& grid);

struct WrRates {
  VectorXd dh;
  VectorXd dq;
};

/// Frozen forcing for one weighted-residual evaluation. `f` is the actuation
/// field on nodes; `g_h` (nodes) and `g_q` (faces) are additive estimator
/// corrections. Empty vectors mean zero.
struct WrForcing {
  VectorXd f;
  VectorXd g_h;
  VectorXd g_q;
};

/// Weighted-residual right-hand side (dh/dt, dq/dt) for the forcing field f.
WrRates rhs_wr(const VectorXd& h, const VectorXd& q, const VectorXd& f,
               const PhysicalParams& params, const Grid& grid);

/// Whether a weighted-residual evaluation uses the full nonlinear equations
/// in absolute variables (h, q), or their linearization about the Nusselt
/// state in perturbation variables (h - 1, q - 2/3).
enum class WrForm { Nonlinear, Linearized };

/// Local Jacobian of the flux equation. Row j (face j) depends on heights at
/// nodes j-1 .. j+2 and fluxes at faces j-1 .. j+1.
struct FluxJacobianRows {
  std::array<VectorXd, 4> dh;  // offsets -1, 0, +1, +2
  std::array<VectorXd, 3> dq;  // offsets -1, 0, +1
};

/// Weighted-residual dynamics in either form, with the analytic Jacobian the
/// implicit stepper needs. The height equation dh/dt = f + g_h - (q_j - q_{j-1})/dx
/// is shared by both forms and does not depend on h.
class WrModel {
 public:
  WrModel(PhysicalParams params, Grid grid, WrForm form = WrForm::Nonlinear);

  const PhysicalParams& params() const { return params_; }
  const Grid& grid() const { return grid_; }
  WrForm form() const { return form_; }

  WrRates rhs(const VectorXd& h, const VectorXd& q, const WrForcing& forcing) const;
  FluxJacobianRows flux_jacobian(const VectorXd& h, const VectorXd& q,
                                 const WrForcing& forcing) const;

 private:
  PhysicalParams params_;
  Grid grid_;
  WrForm form_;
};

/// Dense n x n matrix of a periodic stencil: row j gets coeffs[k] at column
/// j + offsets[k] (mod n).
MatrixXd periodic_stencil(int n, std::initializer_list<int> offsets,
                          std::initializer_list<double> coeffs);

LinearSystem assemble_linear(ModelKind kind, const PhysicalParams& params, const Grid& grid,
                             const ActuatorSet& actuators, const ObserverSet& observers,
                             double beta = 1.0);

/// Number of linearly unstable Fourier modes of the flat film, counting the
/// neutral mass mode.
int count_unstable_modes(const PhysicalParams& params);

}  // namespace filmctl
