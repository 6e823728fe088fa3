#include "filmctl/integrate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace filmctl {

namespace {

std::string at_time(const std::string& what, double t) {
  std::ostringstream os;
  os << what << " at t = " << t;
  return os.str();
}

// LU factors of a non-periodic pentadiagonal band, no pivoting. Row j holds
// entries for columns j-2 .. j+2 in slots 0 .. 4.
class PentaLU {
 public:
  PentaLU(const CyclicPentaMatrix& M) : n_(M.n()), band_(M.n(), 5) {
    double scale = 0.0;
    for (int j = 0; j < n_; ++j) {
      for (int off = -2; off <= 2; ++off) {
        const int c = j + off;
        band_(j, off + 2) = (c >= 0 && c < n_) ? M.at(j, off) : 0.0;
      }
      scale = std::max(scale, band_.row(j).cwiseAbs().sum());
    }
    const double tiny = std::numeric_limits<double>::epsilon() * std::max(scale, 1e-300);
    for (int k = 0; k < n_; ++k) {
      const double pivot = band_(k, 2);
      if (!(std::abs(pivot) > tiny))
        throw SingularEquationError("solve_cyclic_penta: zero pivot in banded factorization");
      for (int i = k + 1; i <= std::min(k + 2, n_ - 1); ++i) {
        const double l = band_(i, k - i + 2) / pivot;
        band_(i, k - i + 2) = l;
        for (int c = k + 1; c <= std::min(k + 2, n_ - 1); ++c)
          band_(i, c - i + 2) -= l * band_(k, c - k + 2);
      }
    }
  }

  void solve_in_place(Eigen::Ref<VectorXd> x) const {
    for (int i = 0; i < n_; ++i)
      for (int k = std::max(0, i - 2); k < i; ++k) x(i) -= band_(i, k - i + 2) * x(k);
    for (int i = n_ - 1; i >= 0; --i) {
      for (int c = i + 1; c <= std::min(i + 2, n_ - 1); ++c) x(i) -= band_(i, c - i + 2) * x(c);
      x(i) /= band_(i, 2);
    }
  }

 private:
  int n_;
  Eigen::Matrix<double, Eigen::Dynamic, 5, Eigen::RowMajor> band_;
};

VectorXd stack(const VectorXd& a, const VectorXd& b) {
  VectorXd x(a.size() + b.size());
  x << a, b;
  return x;
}

}  // namespace

BlowUpError::BlowUpError(double t, const std::string& what)
    : StateError(at_time(what, t)), time_(t) {}

NewtonFailure::NewtonFailure(double t, double residual, int iterations)
    : Error([&] {
        std::ostringstream os;
        os << "Newton iteration did not converge in " << iterations << " iterations at t = " << t
           << " (residual " << residual << ")";
        return os.str();
      }()),
      time_(t),
      residual_(residual) {}

CyclicBand::CyclicBand(int n, int lo, int hi) : n_(n), lo_(lo), hi_(hi) {
  if (lo > hi) throw ParameterError("CyclicBand: lo must not exceed hi");
  if (hi - lo + 1 > n) throw ParameterError("CyclicBand: band wider than the matrix");
  diag_.assign(hi - lo + 1, VectorXd::Zero(n));
}

MatrixXd CyclicBand::to_dense() const {
  MatrixXd D = MatrixXd::Zero(n_, n_);
  for (int j = 0; j < n_; ++j)
    for (int off = lo_; off <= hi_; ++off) D(j, ((j + off) % n_ + n_) % n_) += at(j, off);
  return D;
}

VectorXd CyclicBand::apply(const VectorXd& x) const {
  VectorXd y = VectorXd::Zero(n_);
  for (int j = 0; j < n_; ++j)
    for (int off = lo_; off <= hi_; ++off) y(j) += at(j, off) * x(((j + off) % n_ + n_) % n_);
  return y;
}

double CyclicBand::norm_inf() const {
  double best = 0.0;
  for (int j = 0; j < n_; ++j) {
    double row = 0.0;
    for (int off = lo_; off <= hi_; ++off) row += std::abs(at(j, off));
    best = std::max(best, row);
  }
  return best;
}

CyclicBand CyclicBand::operator*(const CyclicBand& other) const {
  if (other.n_ != n_) throw ParameterError("CyclicBand: size mismatch");
  CyclicBand out(n_, lo_ + other.lo_, hi_ + other.hi_);
  for (int j = 0; j < n_; ++j)
    for (int a = lo_; a <= hi_; ++a) {
      const int mid = ((j + a) % n_ + n_) % n_;
      for (int b = other.lo_; b <= other.hi_; ++b) out.at(j, a + b) += at(j, a) * other.at(mid, b);
    }
  return out;
}

CyclicBand CyclicBand::operator-(const CyclicBand& other) const {
  if (other.n_ != n_) throw ParameterError("CyclicBand: size mismatch");
  CyclicBand out(n_, std::min(lo_, other.lo_), std::max(hi_, other.hi_));
  for (int off = lo_; off <= hi_; ++off) out.diagonal(off) += diagonal(off);
  for (int off = other.lo_; off <= other.hi_; ++off) out.diagonal(off) -= other.diagonal(off);
  return out;
}

CyclicPentaMatrix::CyclicPentaMatrix(int n) : CyclicBand(n, -2, 2) {
  if (n < 5) throw ParameterError("CyclicPentaMatrix: n must be at least 5");
}

CyclicPentaMatrix::CyclicPentaMatrix(const CyclicBand& band) : CyclicPentaMatrix(band.n()) {
  if (band.lo() < -2 || band.hi() > 2)
    throw ParameterError("CyclicPentaMatrix: band is wider than pentadiagonal");
  for (int off = band.lo(); off <= band.hi(); ++off) diagonal(off) = band.diagonal(off);
}

VectorXd solve_cyclic_penta(const CyclicPentaMatrix& M, const VectorXd& b) {
  const int n = M.n();
  if (b.size() != n) throw ParameterError("solve_cyclic_penta: size mismatch");
  const PentaLU lu(M);

  // Corner entries as U V^T with U = [e_0, e_1, e_{n-2}, e_{n-1}].
  const std::array<int, 4> rows = {0, 1, n - 2, n - 1};
  Eigen::Matrix<double, 4, Eigen::Dynamic> Vt = Eigen::Matrix<double, 4, Eigen::Dynamic>::Zero(4, n);
  Vt(0, n - 2) = M.at(0, -2);
  Vt(0, n - 1) = M.at(0, -1);
  Vt(1, n - 1) = M.at(1, -2);
  Vt(2, 0) = M.at(n - 2, 2);
  Vt(3, 0) = M.at(n - 1, 1);
  Vt(3, 1) = M.at(n - 1, 2);

  MatrixXd Y = MatrixXd::Zero(n, 5);
  Y.col(0) = b;
  for (int r = 0; r < 4; ++r) Y(rows[r], r + 1) = 1.0;
  for (int c = 0; c < 5; ++c) lu.solve_in_place(Y.col(c));

  // Vt is nonzero only in columns 0, 1, n-2, n-1.
  auto vt_times = [&](int col) {
    Eigen::Vector4d v;
    for (int r = 0; r < 4; ++r)
      v(r) = Vt(r, 0) * Y(0, col) + Vt(r, 1) * Y(1, col) + Vt(r, n - 2) * Y(n - 2, col) +
             Vt(r, n - 1) * Y(n - 1, col);
    return v;
  };
  Eigen::Matrix4d cap = Eigen::Matrix4d::Identity();
  for (int c = 0; c < 4; ++c) cap.col(c) += vt_times(c + 1);
  Eigen::FullPivLU<Eigen::Matrix4d> cap_lu(cap);
  if (!cap_lu.isInvertible())
    throw SingularEquationError("solve_cyclic_penta: singular periodic correction");
  const Eigen::Vector4d coef = cap_lu.solve(vt_times(0));
  return Y.col(0) - Y.rightCols(4) * coef;
}

BlockJacobian::BlockJacobian(const WrModel& model, const VectorXd& h, const VectorXd& q,
                             const WrForcing& forcing, double dt)
    : zw(model.grid().n(), -1, 0), wz(model.grid().n(), -1, 2), ww(model.grid().n(), -1, 1) {
  const double dx = model.grid().dx();
  const double half = 0.5 * dt;
  zw.diagonal(0).setConstant(half / dx);
  zw.diagonal(-1).setConstant(-half / dx);

  const FluxJacobianRows J = model.flux_jacobian(h, q, forcing);
  for (int off = -1; off <= 2; ++off) wz.diagonal(off) = -half * J.dh[off + 1];
  for (int off = -1; off <= 1; ++off) ww.diagonal(off) = -half * J.dq[off + 1];
  ww.diagonal(0).array() += 1.0;
}

MatrixXd BlockJacobian::to_dense() const {
  const int n = zw.n();
  MatrixXd J(2 * n, 2 * n);
  J.topLeftCorner(n, n).setIdentity();
  J.topRightCorner(n, n) = zw.to_dense();
  J.bottomLeftCorner(n, n) = wz.to_dense();
  J.bottomRightCorner(n, n) = ww.to_dense();
  return J;
}

CyclicPentaMatrix BlockJacobian::schur_complement() const {
  return CyclicPentaMatrix(ww - wz * zw);
}

std::pair<VectorXd, VectorXd> BlockJacobian::newton_update(const VectorXd& r_z,
                                                           const VectorXd& r_w) const {
  // [I Jzw; Jwz Jww] (dz, dw) = -(r_z, r_w)  =>  S dw = -r_w + Jwz r_z,  dz = -r_z - Jzw dw.
  const VectorXd dw = solve_cyclic_penta(schur_complement(), wz.apply(r_z) - r_w);
  const VectorXd dz = -r_z - zw.apply(dw);
  return {dz, dw};
}

std::pair<VectorXd, VectorXd> step_cn_newton(const WrModel& model, const VectorXd& h,
                                             const VectorXd& q, const WrForcing& forcing,
                                             double dt, double t, const CnOptions& options,
                                             CnStepInfo* info) {
  if (!(dt > 0.0)) throw ParameterError("step_cn_newton: dt must be positive");
  const double offset = model.form() == WrForm::Linearized ? kNusseltHeight : 0.0;
  const double t_new = t + dt;

  try {
    const WrRates old_rates = model.rhs(h, q, forcing);
    VectorXd hn = h;
    VectorXd qn = q;
    for (int it = 0;; ++it) {
      const WrRates rates = it == 0 ? old_rates : model.rhs(hn, qn, forcing);
      const VectorXd r_z = hn - h - 0.5 * dt * (rates.dh + old_rates.dh);
      const VectorXd r_w = qn - q - 0.5 * dt * (rates.dq + old_rates.dq);
      const double res = std::max(r_z.lpNorm<Eigen::Infinity>(), r_w.lpNorm<Eigen::Infinity>());
      if (!std::isfinite(res)) throw BlowUpError(t_new, "non-finite Newton residual");
      if (info != nullptr) {
        info->iterations = it;
        info->residual = res;
      }
      if (it >= 1 && res <= options.tolerance) break;
      if (it >= options.max_iterations) throw NewtonFailure(t_new, res, it);

      const BlockJacobian J(model, hn, qn, forcing, dt);
      const auto [dz, dw] = J.newton_update(r_z, r_w);
      hn += dz;
      qn += dw;
    }
    check_blowup(hn, t_new, offset);
    if (!qn.allFinite()) throw BlowUpError(t_new, "non-finite flux");
    return {hn, qn};
  } catch (const BlowUpError&) {
    throw;
  } catch (const StateError& e) {
    throw BlowUpError(t_new, e.what());
  } catch (const SingularEquationError& e) {
    throw BlowUpError(t_new, e.what());
  }
}

FilmState step_cn_newton(const WrModel& model, const FilmState& state, const WrForcing& forcing,
                         double dt, const CnOptions& options, CnStepInfo* info) {
  auto [h, q] = step_cn_newton(model, state.h, state.q, forcing, dt, state.t, options, info);
  return FilmState{state.t + dt, std::move(h), std::move(q)};
}

EstimatorState step_cn_newton(const WrModel& model, const EstimatorState& state,
                              const WrForcing& forcing, double dt, const CnOptions& options,
                              CnStepInfo* info) {
  auto [z, w] = step_cn_newton(model, state.z, state.w, forcing, dt, state.t, options, info);
  return EstimatorState{state.t + dt, std::move(z), std::move(w)};
}

VectorXd rk4_step(const Rhs& F, const VectorXd& x, double dt) {
  const VectorXd k1 = F(x);
  const VectorXd k2 = F(x + 0.5 * dt * k1);
  const VectorXd k3 = F(x + 0.5 * dt * k2);
  const VectorXd k4 = F(x + dt * k3);
  return x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

FilmState step_explicit_reference(const WrModel& model, const FilmState& state,
                                  const WrForcing& forcing, double dt) {
  const int n = model.grid().n();
  const double offset = model.form() == WrForm::Linearized ? kNusseltHeight : 0.0;
  const double t_new = state.t + dt;
  const Rhs F = [&](const VectorXd& x) {
    const WrRates r = model.rhs(x.head(n), x.tail(n), forcing);
    return stack(r.dh, r.dq);
  };
  VectorXd x;
  try {
    x = rk4_step(F, stack(state.h, state.q), dt);
  } catch (const BlowUpError&) {
    throw;
  } catch (const StateError& e) {
    throw BlowUpError(t_new, e.what());
  }
  FilmState out{t_new, x.head(n), x.tail(n)};
  check_blowup(out.h, t_new, offset);
  if (!out.q.allFinite()) throw BlowUpError(t_new, "non-finite flux");
  return out;
}

FilmState step_explicit_reference_benney(const PhysicalParams& params, const Grid& grid,
                                         const FilmState& state, const VectorXd& f, double dt) {
  const double t_new = state.t + dt;
  const Rhs F = [&](const VectorXd& h) { return rhs_benney(h, f, params, grid); };
  VectorXd h;
  try {
    h = rk4_step(F, state.h, dt);
  } catch (const StateError& e) {
    throw BlowUpError(t_new, e.what());
  }
  check_blowup(h, t_new);
  return FilmState{t_new, std::move(h), state.q};
}

double benney_stable_step(const PhysicalParams& params, const Grid& grid, const VectorXd& h,
                          double safety) {
  // RK4 on the fourth-derivative term needs dt * lambda_max below ~2.78;
  // lambda_max = 16 h^3 / (3 Ca dx^4) grows with the wave height.
  const double hmax = std::max(h.maxCoeff(), 1e-12);
  const double dx2 = grid.dx() * grid.dx();
  const double lam = 16.0 * hmax * hmax * hmax / (3.0 * params.Ca * dx2 * dx2);
  return safety / lam;
}

FilmState integrate_benney(const PhysicalParams& params, const Grid& grid, FilmState state,
                           const VectorXd& f, double t_end, double dt_max, double safety) {
  if (!(dt_max > 0.0) || !(safety > 0.0)) throw ParameterError("integrate_benney: bad step size");
  while (state.t < t_end) {
    double dt = std::min(dt_max, benney_stable_step(params, grid, state.h, safety));
    dt = std::min(dt, t_end - state.t);
    state = step_explicit_reference_benney(params, grid, state, f, dt);
  }
  return state;
}

void check_blowup(const VectorXd& h, double t, double height_offset) {
  for (Eigen::Index j = 0; j < h.size(); ++j) {
    const double v = h(j) + height_offset;
    if (!std::isfinite(v)) throw BlowUpError(t, "non-finite height");
    if (v > kBlowUpHeight) throw BlowUpError(t, "height exceeded blow-up threshold");
    if (v <= 0.0) throw BlowUpError(t, "film rupture");
  }
}

}  // namespace filmctl
