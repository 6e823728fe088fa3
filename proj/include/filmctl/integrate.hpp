#pragma once

// Time integration of the film models: Crank-Nicolson with full Newton
// iteration, where each Newton system is reduced by a Schur complement to a
// cyclic pentadiagonal solve, plus a classical RK4 reference stepper.

#include <functional>
#include <string>
#include <vector>

#include "filmctl/core.hpp"
#include "filmctl/models.hpp"

namespace filmctl {

/// Blow-up detector: any non-finite value, max(h) above this, or rupture.
inline constexpr double kBlowUpHeight = 5.0;

/// The solution left the physical regime (blow-up or rupture) at time().
class BlowUpError : public StateError {
 public:
  BlowUpError(double t, const std::string& what);
  double time() const { return time_; }

 private:
  double time_;
};

/// Newton iteration of an implicit step did not converge.
class NewtonFailure : public Error {
 public:
  NewtonFailure(double t, double residual, int iterations);
  double time() const { return time_; }
  double residual() const { return residual_; }

 private:
  double time_;
  double residual_;
};

/// Square periodic banded matrix: entry (j, j + off) for off in [lo, hi],
/// column index taken modulo n.
class CyclicBand {
 public:
  CyclicBand(int n, int lo, int hi);

  int n() const { return n_; }
  int lo() const { return lo_; }
  int hi() const { return hi_; }

  double& at(int row, int offset) { return diag_[offset - lo_](row); }
  double at(int row, int offset) const { return diag_[offset - lo_](row); }
  VectorXd& diagonal(int offset) { return diag_[offset - lo_]; }
  const VectorXd& diagonal(int offset) const { return diag_[offset - lo_]; }

  MatrixXd to_dense() const;
  VectorXd apply(const VectorXd& x) const;
  /// Infinity norm (max absolute row sum).
  double norm_inf() const;

  /// this * other, with the band widened to cover the product.
  CyclicBand operator*(const CyclicBand& other) const;
  CyclicBand operator-(const CyclicBand& other) const;

 private:
  int n_, lo_, hi_;
  std::vector<VectorXd> diag_;
};

/// Pentadiagonal with periodic corners: the matrices of stencils of half
/// width two on a periodic grid.
class CyclicPentaMatrix : public CyclicBand {
 public:
  explicit CyclicPentaMatrix(int n);
  /// Widens a band with lo >= -2 and hi <= 2.
  explicit CyclicPentaMatrix(const CyclicBand& band);
};

/// O(n) solve: banded LU of the non-periodic part plus a rank-4
/// Sherman-Morrison-Woodbury correction for the corner entries.
VectorXd solve_cyclic_penta(const CyclicPentaMatrix& M, const VectorXd& b);

/// Newton Jacobian of the Crank-Nicolson residual of a weighted-residual
/// model, ordered (z, w). The z-block is exactly the identity because the
/// height equation does not depend on the heights.
struct BlockJacobian {
  CyclicBand zw;  // offsets -1..0
  CyclicBand wz;  // offsets -1..+2
  CyclicBand ww;  // offsets -1..+1

  BlockJacobian(const WrModel& model, const VectorXd& h, const VectorXd& q,
                const WrForcing& forcing, double dt);

  MatrixXd to_dense() const;
  /// S = J_ww - J_wz J_zw.
  CyclicPentaMatrix schur_complement() const;
  /// Solves J (dz, dw) = -(r_z, r_w) via the Schur complement.
  std::pair<VectorXd, VectorXd> newton_update(const VectorXd& r_z, const VectorXd& r_w) const;
};

struct CnOptions {
  double tolerance = 1e-10;
  int max_iterations = 20;
};

struct CnStepInfo {
  int iterations = 0;
  double residual = 0.0;
};

/// One Crank-Nicolson step of the weighted-residual model with frozen
/// forcing. Returns the new (h, q); throws NewtonFailure or BlowUpError.
std::pair<VectorXd, VectorXd> step_cn_newton(const WrModel& model, const VectorXd& h,
                                             const VectorXd& q, const WrForcing& forcing,
                                             double dt, double t = 0.0,
                                             const CnOptions& options = {},
                                             CnStepInfo* info = nullptr);

FilmState step_cn_newton(const WrModel& model, const FilmState& state, const WrForcing& forcing,
                         double dt, const CnOptions& options = {}, CnStepInfo* info = nullptr);

EstimatorState step_cn_newton(const WrModel& model, const EstimatorState& state,
                              const WrForcing& forcing, double dt,
                              const CnOptions& options = {}, CnStepInfo* info = nullptr);

using Rhs = std::function<VectorXd(const VectorXd&)>;

/// Classical four-stage Runge-Kutta step of x' = F(x).
VectorXd rk4_step(const Rhs& F, const VectorXd& x, double dt);

/// RK4 step of the weighted-residual model (reference integrator).
FilmState step_explicit_reference(const WrModel& model, const FilmState& state,
                                  const WrForcing& forcing, double dt);

/// RK4 step of the Benney model; the result carries heights only (q unused).
FilmState step_explicit_reference_benney(const PhysicalParams& params, const Grid& grid,
                                         const FilmState& state, const VectorXd& f, double dt);

/// Largest RK4 step that keeps the Benney surface-tension term stable at the
/// current heights, scaled by `safety`.
double benney_stable_step(const PhysicalParams& params, const Grid& grid, const VectorXd& h,
                          double safety = 1.0);

/// RK4 integration of the Benney model to t_end with steps limited by
/// benney_stable_step(). Throws BlowUpError on blow-up.
FilmState integrate_benney(const PhysicalParams& params, const Grid& grid, FilmState state,
                           const VectorXd& f, double t_end, double dt_max = 1e-4,
                           double safety = 1.0);

/// Throws BlowUpError(t) if h is non-finite, above kBlowUpHeight or not positive.
void check_blowup(const VectorXd& h, double t, double height_offset = 0.0);

}  // namespace filmctl
