#pragma once

// Gain synthesis for the linearized film: Lyapunov and Riccati solvers, LQR
// and dual-LQR estimator gains, static output feedback, and the
// Moore-Penrose reconstruction baseline.

#include <string>

#include "filmctl/core.hpp"

namespace filmctl {

/// A gain synthesis did not produce a verified answer.
class SynthesisError : public Error {
 public:
  SynthesisError(std::string solver, double residual, const std::string& detail);

  const std::string& solver() const { return solver_; }
  double residual() const { return residual_; }

 private:
  std::string solver_;
  double residual_;
};

/// Control gain K (u = K x), estimator gain L, control Riccati solution P and
/// estimator Riccati (covariance) solution S.
struct GainSet {
  MatrixXd K;
  MatrixXd L;
  MatrixXd P;
  MatrixXd S;
};

/// Solves A S + S A^T + W = 0 for symmetric W by real Schur reduction and
/// block back-substitution.
MatrixXd solve_lyapunov(const MatrixXd& A, const MatrixXd& W);

/// ||A S + S A^T + W||_F / (||A S||_F + ||S A^T||_F + ||W||_F).
double lyapunov_residual(const MatrixXd& A, const MatrixXd& S, const MatrixXd& W);

/// Relative CARE residual of A^T P + P A + Q - P B R^-1 B^T P, normalized by
/// the sum of the Frobenius norms of the four terms.
double care_residual(const MatrixXd& A, const MatrixXd& B, const MatrixXd& Q,
                     const MatrixXd& R, const MatrixXd& P);

struct CareOptions {
  double tolerance = 1e-8;
  int max_iterations = 60;
};

struct CareResult {
  MatrixXd P;
  MatrixXd K;
  double residual = 0.0;
  int iterations = 0;
};

/// A gain K0 with A + B K0 Hurwitz. Only the (nearly) unstable left
/// invariant subspace of A is fed back; the rest of the spectrum is kept.
MatrixXd stabilizing_gain(const MatrixXd& A, const MatrixXd& B);

/// Stabilizing solution of A^T P + P A + Q - P B R^-1 B^T P = 0 by
/// Newton-Kleinman iteration from stabilizing_gain().
CareResult solve_care(const MatrixXd& A, const MatrixXd& B, const MatrixXd& Q,
                      const MatrixXd& R, const CareOptions& options = {});

/// K = -R^-1 B^T P, so that u = K x.
MatrixXd lqr_gain(const MatrixXd& A, const MatrixXd& B, const MatrixXd& Q, const MatrixXd& R);

/// Estimator gain L with A - L C Hurwitz, from the LQR problem for
/// (A^T, C^T). If `covariance` is given it receives the dual Riccati solution.
MatrixXd observer_gain(const MatrixXd& A, const MatrixXd& C, const MatrixXd& Qobs,
                       const MatrixXd& Robs, MatrixXd* covariance = nullptr);

struct SofOptions {
  double damping = 0.5;
  int max_iterations = 500;
  double tolerance = 1e-6;
};

struct SofResult {
  bool success = false;
  MatrixXd K;
  MatrixXd P;
  MatrixXd S;
  int iterations = 0;
  double residual = 0.0;
  double abscissa = 0.0;
  std::string message;
};

/// Full-information LQR gain compressed through the pseudo-inverse of C.
MatrixXd default_sof_initial_gain(const MatrixXd& A, const MatrixXd& B, const MatrixXd& C,
                                  const MatrixXd& Q, const MatrixXd& R);

/// Static output feedback u = K C x via the coupled Lyapunov conditions
///   (A+BKC)^T P + P (A+BKC) + Q + C^T K^T R K C = 0,
///   (A+BKC) S + S (A+BKC)^T + I = 0,
///   R K C S C^T + B^T P S C^T = 0,
/// with a damped gain update. Never reports success for an unstable gain.
SofResult solve_static_output_feedback(const MatrixXd& A, const MatrixXd& B, const MatrixXd& C,
                                       const MatrixXd& Q, const MatrixXd& R, const MatrixXd& K0,
                                       const SofOptions& options = {});

/// Minimum-norm solution z = C^T (C C^T)^-1 y of C z = y.
VectorXd moore_penrose_reconstruct(const MatrixXd& C, const VectorXd& y);

/// Largest real part over the eigenvalues of M.
double spectral_abscissa(const MatrixXd& M);

}  // namespace filmctl
