#include "filmctl/control.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <sstream>
#include <vector>

namespace filmctl {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

struct Block {
  int start;
  int size;
};

// Diagonal blocks of a real quasi-triangular Schur factor.
std::vector<Block> schur_blocks(const MatrixXd& T) {
  const int n = static_cast<int>(T.rows());
  std::vector<Block> blocks;
  for (int k = 0; k < n;) {
    if (k + 1 < n && T(k + 1, k) != 0.0) {
      blocks.push_back({k, 2});
      k += 2;
    } else {
      blocks.push_back({k, 1});
      k += 1;
    }
  }
  return blocks;
}

std::complex<double> block_eigenvalue(const MatrixXd& T, const Block& b) {
  if (b.size == 1) return {T(b.start, b.start), 0.0};
  const double a = T(b.start, b.start), bb = T(b.start, b.start + 1);
  const double c = T(b.start + 1, b.start), d = T(b.start + 1, b.start + 1);
  const double disc = 0.25 * (a - d) * (a - d) + bb * c;
  return {0.5 * (a + d), std::sqrt(std::max(0.0, -disc))};
}

MatrixXd symmetrized(const MatrixXd& X) { return 0.5 * (X + X.transpose()); }

std::string describe(double value) {
  std::ostringstream os;
  os.precision(3);
  os << value;
  return os.str();
}

}  // namespace

SynthesisError::SynthesisError(std::string solver, double residual, const std::string& detail)
    : Error(solver + ": " + detail + " (residual " + describe(residual) + ")"),
      solver_(std::move(solver)),
      residual_(residual) {}

MatrixXd solve_lyapunov(const MatrixXd& A, const MatrixXd& W) {
  const int n = static_cast<int>(A.rows());
  if (A.cols() != n || W.rows() != n || W.cols() != n)
    throw ParameterError("solve_lyapunov: A and W must be square and of equal size");
  const double wnorm = W.norm();
  if ((W - W.transpose()).norm() > 1e-10 * std::max(wnorm, 1.0))
    throw ParameterError("solve_lyapunov: W must be symmetric");

  Eigen::RealSchur<MatrixXd> schur(A);
  if (schur.info() != Eigen::Success)
    throw SingularEquationError("solve_lyapunov: Schur factorization failed");
  const MatrixXd& U = schur.matrixU();
  const MatrixXd& T = schur.matrixT();
  const auto blocks = schur_blocks(T);

  // Unique solvability: no two eigenvalues may sum to zero.
  const double tol = 64.0 * kEps * std::max(T.norm(), 1.0);
  std::vector<std::complex<double>> lambda;
  for (const auto& b : blocks) lambda.push_back(block_eigenvalue(T, b));
  for (std::size_t i = 0; i < lambda.size(); ++i)
    for (std::size_t j = i; j < lambda.size(); ++j)
      if (std::abs(lambda[i].real() + lambda[j].real()) <= tol &&
          std::abs(std::abs(lambda[i].imag()) - std::abs(lambda[j].imag())) <= tol)
        throw SingularEquationError(
            "solve_lyapunov: eigenvalues of A sum to zero, solution is not unique");

  // T X + X T^T = -Wt, solved block row by block row from the bottom right.
  const MatrixXd Wt = U.transpose() * W * U;
  MatrixXd X = MatrixXd::Zero(n, n);
  const int nb = static_cast<int>(blocks.size());
  for (int bi = nb - 1; bi >= 0; --bi) {
    const auto [i0, p] = blocks[bi];
    const int i_end = i0 + p;
    for (int bj = nb - 1; bj >= bi; --bj) {
      const auto [j0, q] = blocks[bj];
      const int j_end = j0 + q;
      MatrixXd rhs = -Wt.block(i0, j0, p, q);
      if (i_end < n)
        rhs.noalias() -= T.block(i0, i_end, p, n - i_end) * X.block(i_end, j0, n - i_end, q);
      if (j_end < n)
        rhs.noalias() -=
            X.block(i0, j_end, p, n - j_end) * T.block(j0, j_end, q, n - j_end).transpose();

      // (I_q (x) T_ii + T_jj (x) I_p) vec(X_ij) = vec(rhs)
      const int s = p * q;
      MatrixXd K = MatrixXd::Zero(s, s);
      for (int c = 0; c < q; ++c)
        K.block(c * p, c * p, p, p) += T.block(i0, i0, p, p);
      for (int r = 0; r < q; ++r)
        for (int c = 0; c < q; ++c)
          K.block(r * p, c * p, p, p) += T(j0 + r, j0 + c) * MatrixXd::Identity(p, p);
      Eigen::FullPivLU<MatrixXd> lu(K);
      if (!lu.isInvertible())
        throw SingularEquationError("solve_lyapunov: singular block equation");
      const VectorXd v = lu.solve(Eigen::Map<const VectorXd>(rhs.data(), s));
      const MatrixXd Xij = Eigen::Map<const MatrixXd>(v.data(), p, q);
      X.block(i0, j0, p, q) = Xij;
      X.block(j0, i0, q, p) = Xij.transpose();
    }
  }
  return symmetrized(U * X * U.transpose());
}

double lyapunov_residual(const MatrixXd& A, const MatrixXd& S, const MatrixXd& W) {
  const MatrixXd AS = A * S;
  const MatrixXd SA = S * A.transpose();
  const double denom = AS.norm() + SA.norm() + W.norm();
  const double num = (AS + SA + W).norm();
  return denom > 0.0 ? num / denom : num;
}

double care_residual(const MatrixXd& A, const MatrixXd& B, const MatrixXd& Q,
                     const MatrixXd& R, const MatrixXd& P) {
  const MatrixXd AP = A.transpose() * P;
  const MatrixXd PA = P * A;
  const MatrixXd PB = P * B;
  const MatrixXd quad = PB * R.ldlt().solve(PB.transpose());
  const double denom = AP.norm() + PA.norm() + Q.norm() + quad.norm();
  const double num = (AP + PA + Q - quad).norm();
  return denom > 0.0 ? num / denom : num;
}

double spectral_abscissa(const MatrixXd& M) {
  if (M.rows() != M.cols()) throw ParameterError("spectral_abscissa: matrix must be square");
  if (M.rows() == 0) return -std::numeric_limits<double>::infinity();
  Eigen::EigenSolver<MatrixXd> es(M, false);
  if (es.info() != Eigen::Success) throw Error("spectral_abscissa: eigenvalue solver failed");
  return es.eigenvalues().real().maxCoeff();
}

MatrixXd stabilizing_gain(const MatrixXd& A, const MatrixXd& B) {
  const int n = static_cast<int>(A.rows());
  const int m = static_cast<int>(B.cols());

  // Left eigenvectors of A with eigenvalues at or right of -tau.
  Eigen::EigenSolver<MatrixXd> es(A.transpose(), true);
  if (es.info() != Eigen::Success)
    throw SynthesisError("stabilizing_gain", 0.0, "eigen decomposition failed");
  const auto lambda = es.eigenvalues();
  const auto V = es.eigenvectors();
  const double tau = std::max(1e-3, 1e-10 * A.norm());

  std::vector<VectorXd> columns;
  int selected = 0;
  for (int k = 0; k < n; ++k) {
    if (lambda(k).real() < -tau) continue;
    ++selected;
    if (lambda(k).imag() < 0.0) continue;  // conjugate partner supplies both parts
    columns.push_back(V.col(k).real());
    if (lambda(k).imag() > 0.0) columns.push_back(V.col(k).imag());
  }
  if (selected == 0) return MatrixXd::Zero(m, n);

  MatrixXd basis(n, static_cast<int>(columns.size()));
  for (int c = 0; c < basis.cols(); ++c) basis.col(c) = columns[c];
  Eigen::ColPivHouseholderQR<MatrixXd> qr(basis);
  qr.setThreshold(1e-8);

  MatrixXd W;
  if (qr.rank() == selected) {
    W = (qr.householderQ() * MatrixXd::Identity(n, selected)).eval();
    // Invariance can be lost for defective eigenvalues; fall back to the full space.
    const MatrixXd N = W.transpose() * A.transpose() * W;
    if ((A.transpose() * W - W * N).norm() > 1e-6 * std::max(A.norm(), 1.0))
      W = MatrixXd::Identity(n, n);
  } else {
    W = MatrixXd::Identity(n, n);
  }

  // Bass: with (A_s + beta I) Z + Z (A_s + beta I)^T = 2 B_s B_s^T and Z > 0,
  // A_s - B_s B_s^T Z^-1 has all eigenvalues left of -beta.
  const MatrixXd As = W.transpose() * A * W;
  const MatrixXd Bs = W.transpose() * B;
  Eigen::EigenSolver<MatrixXd> small(As, false);
  const double min_real = small.eigenvalues().real().minCoeff();
  const double beta = std::max(0.0, -min_real) + 0.5;
  const MatrixXd shifted = As + beta * MatrixXd::Identity(As.rows(), As.cols());
  const MatrixXd Z = solve_lyapunov(-shifted, 2.0 * Bs * Bs.transpose());
  Eigen::LLT<MatrixXd> llt(Z);
  if (llt.info() != Eigen::Success)
    throw SynthesisError("stabilizing_gain", 0.0,
                         "unstable subspace is not controllable from the inputs");
  const MatrixXd Ks = -llt.solve(Bs).transpose();
  MatrixXd K0 = Ks * W.transpose();

  const double abscissa = spectral_abscissa(A + B * K0);
  if (!(abscissa < 0.0))
    throw SynthesisError("stabilizing_gain", abscissa,
                         "could not construct a stabilizing initial gain");
  return K0;
}

CareResult solve_care(const MatrixXd& A, const MatrixXd& B, const MatrixXd& Q,
                      const MatrixXd& R, const CareOptions& options) {
  const int n = static_cast<int>(A.rows());
  if (A.cols() != n || B.rows() != n || Q.rows() != n || Q.cols() != n ||
      R.rows() != B.cols() || R.cols() != B.cols())
    throw ParameterError("solve_care: inconsistent matrix dimensions");
  Eigen::LDLT<MatrixXd> Rf(R);
  if (Rf.info() != Eigen::Success || !Rf.isPositive())
    throw ParameterError("solve_care: R must be symmetric positive definite");

  CareResult out;
  MatrixXd K = stabilizing_gain(A, B);
  double last = std::numeric_limits<double>::infinity();
  int stalled = 0;
  for (int it = 1; it <= options.max_iterations; ++it) {
    const MatrixXd Ac = A + B * K;
    const MatrixXd rhs = symmetrized(Q + K.transpose() * R * K);
    MatrixXd P;
    try {
      P = solve_lyapunov(Ac.transpose(), rhs);
    } catch (const SingularEquationError&) {
      throw SynthesisError("solve_care", last, "Newton-Kleinman lost closed-loop stability");
    }
    K = -Rf.solve(B.transpose() * P);
    const double res = care_residual(A, B, Q, R, P);
    out.P = P;
    out.K = K;
    out.residual = res;
    out.iterations = it;
    if (!std::isfinite(res)) break;
    // Quadratic convergence drives the residual to rounding level; stop there.
    if (res <= 1e-3 * options.tolerance) break;
    stalled = (res > 0.5 * last) ? stalled + 1 : 0;
    if (res <= options.tolerance && stalled >= 2) break;
    last = std::min(last, res);
  }
  if (!(out.residual <= options.tolerance))
    throw SynthesisError("solve_care", out.residual, "Newton-Kleinman did not converge");
  return out;
}

MatrixXd lqr_gain(const MatrixXd& A, const MatrixXd& B, const MatrixXd& Q, const MatrixXd& R) {
  return solve_care(A, B, Q, R).K;
}

MatrixXd observer_gain(const MatrixXd& A, const MatrixXd& C, const MatrixXd& Qobs,
                       const MatrixXd& Robs, MatrixXd* covariance) {
  // (A - L C)^T = A^T + C^T (-L^T): the control problem for (A^T, C^T).
  const CareResult dual = solve_care(A.transpose(), C.transpose(), Qobs, Robs);
  if (covariance != nullptr) *covariance = dual.P;
  return -dual.K.transpose();
}

MatrixXd default_sof_initial_gain(const MatrixXd& A, const MatrixXd& B, const MatrixXd& C,
                                  const MatrixXd& Q, const MatrixXd& R) {
  const MatrixXd K_full = lqr_gain(A, B, Q, R);
  const MatrixXd C_pinv = C.transpose() * (C * C.transpose()).ldlt().solve(
                                              MatrixXd::Identity(C.rows(), C.rows()));
  return K_full * C_pinv;
}

SofResult solve_static_output_feedback(const MatrixXd& A, const MatrixXd& B, const MatrixXd& C,
                                       const MatrixXd& Q, const MatrixXd& R, const MatrixXd& K0,
                                       const SofOptions& options) {
  const int n = static_cast<int>(A.rows());
  if (K0.rows() != B.cols() || K0.cols() != C.rows() || C.cols() != n)
    throw ParameterError("solve_static_output_feedback: inconsistent dimensions");
  Eigen::LDLT<MatrixXd> Rf(R);

  SofResult out;
  MatrixXd K = K0;
  const MatrixXd I = MatrixXd::Identity(n, n);
  for (int it = 0; it <= options.max_iterations; ++it) {
    out.iterations = it;
    const MatrixXd Ac = A + B * K * C;
    out.abscissa = spectral_abscissa(Ac);
    if (!(out.abscissa < 0.0)) {
      out.K = K;
      out.message = it == 0 ? "initial gain is not stabilizing"
                            : "gain lost stability at iteration " + std::to_string(it);
      return out;
    }
    const MatrixXd KC = K * C;
    MatrixXd P, S;
    try {
      P = solve_lyapunov(Ac.transpose(), symmetrized(Q + KC.transpose() * R * KC));
      S = solve_lyapunov(Ac, I);
    } catch (const SingularEquationError& e) {
      out.K = K;
      out.message = e.what();
      return out;
    }
    const MatrixXd SCt = S * C.transpose();
    const MatrixXd CSCt = C * SCt;
    const MatrixXd BtPSCt = B.transpose() * P * SCt;
    const MatrixXd RKCSCt = R * K * CSCt;
    const double denom = RKCSCt.norm() + BtPSCt.norm();
    out.residual = denom > 0.0 ? (RKCSCt + BtPSCt).norm() / denom : 0.0;
    out.K = K;
    out.P = P;
    out.S = S;
    if (out.residual <= options.tolerance) {
      out.success = true;
      out.message = "converged";
      return out;
    }
    if (!std::isfinite(out.residual)) break;
    const MatrixXd K_update =
        -Rf.solve(BtPSCt) * CSCt.ldlt().solve(MatrixXd::Identity(CSCt.rows(), CSCt.cols()));
    K += options.damping * (K_update - K);
  }
  out.message = "no convergence within " + std::to_string(options.max_iterations) + " iterations";
  return out;
}

VectorXd moore_penrose_reconstruct(const MatrixXd& C, const VectorXd& y) {
  if (y.size() != C.rows()) throw ParameterError("moore_penrose_reconstruct: size mismatch");
  Eigen::ColPivHouseholderQR<MatrixXd> qr(C.transpose());
  if (qr.rank() < C.rows())
    throw ParameterError("moore_penrose_reconstruct: C is not of full row rank");
  const MatrixXd CCt = C * C.transpose();
  return C.transpose() * CCt.ldlt().solve(y);
}

}  // namespace filmctl
