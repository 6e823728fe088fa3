#include "filmctl/closedloop.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <numbers>
#include <sstream>
#include <thread>

namespace filmctl {

namespace {

template <typename E>
struct Named {
  E value;
  const char* name;
};

constexpr Named<EstimatorKind> kEstimatorNames[] = {
    {EstimatorKind::NonlinearWR, "NonlinearWR"},
    {EstimatorKind::LinearWR, "LinearWR"},
    {EstimatorKind::MoorePenrose, "MoorePenrose"}};
constexpr Named<ControllerKind> kControllerNames[] = {
    {ControllerKind::FullStateLQR, "FullStateLQR"},
    {ControllerKind::FullInterfaceLQR, "FullInterfaceLQR"},
    {ControllerKind::EstimatorLQR, "EstimatorLQR"},
    {ControllerKind::StaticOutputFeedback, "StaticOutputFeedback"}};
constexpr Named<PlantKind> kPlantNames[] = {{PlantKind::NonlinearWR, "NonlinearWR"},
                                            {PlantKind::LinearWR, "LinearWR"}};

template <typename E, std::size_t N>
std::string name_of(const Named<E> (&table)[N], E v) {
  for (const auto& e : table)
    if (e.value == v) return e.name;
  return "?";
}

template <typename E, std::size_t N>
E parse_name(const Named<E> (&table)[N], const std::string& s, const char* what) {
  for (const auto& e : table)
    if (s == e.name) return e.value;
  std::string options;
  for (const auto& e : table) options += std::string(options.empty() ? "" : ", ") + e.name;
  throw ParameterError(std::string("unknown ") + what + " '" + s + "' (expected one of " +
                       options + ")");
}

// Number of whole steps in t, or throws if dt does not divide t.
long steps_in(double t, double dt, const char* what) {
  const double r = t / dt;
  const double k = std::round(r);
  if (std::abs(r - k) > 1e-9 * std::max(1.0, r))
    throw ParameterError(std::string("ExperimentConfig: dt does not divide ") + what);
  return static_cast<long>(k);
}

// Face-centred average of node values.
VectorXd to_faces(const VectorXd& h) {
  const Eigen::Index n = h.size();
  VectorXd out(n);
  for (Eigen::Index j = 0; j < n; ++j) out(j) = 0.5 * (h(j) + h((j + 1) % n));
  return out;
}

// Seeded plant in model variables (absolute for the nonlinear plant,
// perturbation for the linearized one); q starts at the local Nusselt flux.
std::pair<VectorXd, VectorXd> seed_plant(const ExperimentConfig& config, const Grid& grid) {
  const int n = grid.n();
  const bool linear = config.plant_kind == PlantKind::LinearWR;
  const double k1 = 2.0 * std::numbers::pi * config.mode / config.params.L;
  auto seed = [&](double x) {
    return config.amplitude * std::cos(k1 * x) + config.amplitude2 * std::cos(2.0 * k1 * x);
  };
  VectorXd xh(n), xq(n);
  for (int j = 0; j < n; ++j) {
    const double dh_node = seed(grid.node(j));
    const double dh_face = seed(grid.face(j));
    if (linear) {
      xh(j) = dh_node;
      xq(j) = 2.0 * dh_face;
    } else {
      xh(j) = 1.0 + dh_node;
      const double H = 1.0 + dh_face;
      xq(j) = kNusseltFlux * H * H * H;
    }
  }
  return {xh, xq};
}

bool needs_estimator_gain(const ExperimentConfig& c) {
  return c.estimator_kind != EstimatorKind::MoorePenrose;
}

}  // namespace

std::string to_string(EstimatorKind kind) { return name_of(kEstimatorNames, kind); }
std::string to_string(ControllerKind kind) { return name_of(kControllerNames, kind); }
std::string to_string(PlantKind kind) { return name_of(kPlantNames, kind); }
EstimatorKind parse_estimator_kind(const std::string& s) {
  return parse_name(kEstimatorNames, s, "estimator_kind");
}
ControllerKind parse_controller_kind(const std::string& s) {
  return parse_name(kControllerNames, s, "controller_kind");
}
PlantKind parse_plant_kind(const std::string& s) {
  return parse_name(kPlantNames, s, "plant_kind");
}

std::string to_string(RunStatus status) {
  switch (status) {
    case RunStatus::Stabilized: return "stabilized";
    case RunStatus::NotStabilized: return "not_stabilized";
    case RunStatus::Uncontrolled: return "uncontrolled";
    case RunStatus::BlowUp: return "blowup";
    case RunStatus::NewtonFailure: return "newton_failure";
    case RunStatus::SynthesisFailed: return "synthesis_failed";
  }
  return "?";
}

void ExperimentConfig::validate() const {
  params.validate();
  Grid g(n, params.L);  // checks n
  if (m < 1) throw ParameterError("ExperimentConfig: m must be at least 1");
  if (p < 1) throw ParameterError("ExperimentConfig: p must be at least 1");
  if (p > n || m > n) throw ParameterError("ExperimentConfig: more sites than grid nodes");
  if (!(omega > 0.0)) throw ParameterError("ExperimentConfig: omega must be positive");
  if (!(beta > 0.0)) throw ParameterError("ExperimentConfig: beta must be positive");
  if (!std::isfinite(shift)) throw ParameterError("ExperimentConfig: shift must be finite");
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ParameterError("ExperimentConfig: dt must be positive");
  if (!(t_wave >= 0.0 && t_wave <= t_control && t_control <= t_end) || !std::isfinite(t_end))
    throw ParameterError("ExperimentConfig: need 0 <= t_wave <= t_control <= t_end");
  steps_in(t_wave, dt, "t_wave");
  steps_in(t_control, dt, "t_control");
  steps_in(t_end, dt, "t_end");
  if (!std::isfinite(amplitude) || !std::isfinite(amplitude2) ||
      std::abs(amplitude) + std::abs(amplitude2) >= 1.0)
    throw ParameterError("ExperimentConfig: seed amplitudes must be finite and sum below 1");
  if (mode < 1) throw ParameterError("ExperimentConfig: mode must be at least 1");
  if (!(stabilized_ratio > 0.0 && stabilized_ratio < 1.0))
    throw ParameterError("ExperimentConfig: stabilized_ratio must lie in (0, 1)");
  if (!(cn.tolerance > 0.0) || cn.max_iterations < 1)
    throw ParameterError("ExperimentConfig: invalid Newton options");
  if (!(care.tolerance > 0.0) || care.max_iterations < 1)
    throw ParameterError("ExperimentConfig: invalid Riccati options");
  if (!(sof.damping > 0.0 && sof.damping <= 1.0) || sof.max_iterations < 1 || !(sof.tolerance > 0.0))
    throw ParameterError("ExperimentConfig: invalid output-feedback options");
}

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
  return a.params.Re == b.params.Re && a.params.Ca == b.params.Ca &&
         a.params.theta == b.params.theta && a.params.L == b.params.L && a.n == b.n &&
         a.m == b.m && a.p == b.p && a.omega == b.omega && a.beta == b.beta &&
         a.shift == b.shift && a.dt == b.dt && a.t_wave == b.t_wave &&
         a.t_control == b.t_control && a.t_end == b.t_end &&
         a.estimator_kind == b.estimator_kind && a.controller_kind == b.controller_kind &&
         a.plant_kind == b.plant_kind && a.amplitude == b.amplitude &&
         a.amplitude2 == b.amplitude2 && a.mode == b.mode &&
         a.stabilized_ratio == b.stabilized_ratio && a.cn.tolerance == b.cn.tolerance &&
         a.cn.max_iterations == b.cn.max_iterations && a.care.tolerance == b.care.tolerance &&
         a.care.max_iterations == b.care.max_iterations && a.sof.damping == b.sof.damping &&
         a.sof.max_iterations == b.sof.max_iterations && a.sof.tolerance == b.sof.tolerance;
}

Synthesis synthesize(const ExperimentConfig& config) {
  config.validate();
  const Grid grid = config.grid();
  const ActuatorSet act(grid, config.m, config.omega);
  const ObserverSet obs(grid, config.p, config.shift);

  Synthesis out;
  out.system = assemble_linear(ModelKind::WeightedResidual, config.params, grid, act, obs,
                               config.beta);
  const LinearSystem& sys = out.system;
  out.open_loop_abscissa = spectral_abscissa(sys.A);

  const CareResult care = solve_care(sys.A, sys.B, sys.Qcost, sys.Rcost, config.care);
  out.gains.K = care.K;
  out.gains.P = care.P;
  out.control_abscissa = spectral_abscissa(sys.A + sys.B * care.K);

  if (config.controller_kind == ControllerKind::StaticOutputFeedback) {
    const MatrixXd K0 = default_sof_initial_gain(sys.A, sys.B, sys.C, sys.Qcost, sys.Rcost);
    const SofResult sof = solve_static_output_feedback(sys.A, sys.B, sys.C, sys.Qcost,
                                                       sys.Rcost, K0, config.sof);
    if (!sof.success) throw SynthesisError("static_output_feedback", sof.residual, sof.message);
    out.K_output = sof.K;
    out.control_abscissa = sof.abscissa;
  }

  out.estimator_abscissa = std::numeric_limits<double>::quiet_NaN();
  if (needs_estimator_gain(config)) {
    const int dim = sys.state_dim();
    const MatrixXd Qobs = (config.params.L / config.n) * MatrixXd::Identity(dim, dim);
    const MatrixXd Robs = MatrixXd::Identity(config.p, config.p);
    out.gains.L = observer_gain(sys.A, sys.C, Qobs, Robs, &out.gains.S);
    out.estimator_abscissa = spectral_abscissa(sys.A - out.gains.L * sys.C);
  }
  return out;
}

double RunTrace::mass_ledger_error() const {
  double worst = 0.0;
  for (std::size_t k = 0; k < mass.size(); ++k)
    worst = std::max(worst, std::abs((mass[k] - mass0) - injected[k]));
  return worst;
}

RunTrace run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  config.validate();
  RunTrace tr;
  tr.m = config.m;
  tr.t_wave = config.t_wave;
  tr.t_control = config.t_control;
  tr.t_end = config.t_end;

  Synthesis local;
  const Synthesis* syn = options.synthesis;
  if (syn == nullptr) {
    try {
      local = synthesize(config);
    } catch (const SynthesisError& e) {
      tr.status = RunStatus::SynthesisFailed;
      tr.message = e.what();
      return tr;
    }
    syn = &local;
  }

  const Grid grid = config.grid();
  const int n = grid.n();
  const double dx = grid.dx();
  const ActuatorSet act(grid, config.m, config.omega);
  const ObserverSet obs(grid, config.p, config.shift);

  const bool linear_plant = config.plant_kind == PlantKind::LinearWR;
  const WrModel plant(config.params, grid, linear_plant ? WrForm::Linearized : WrForm::Nonlinear);
  const double plant_h0 = linear_plant ? kNusseltHeight : 0.0;
  const double plant_q0 = linear_plant ? kNusseltFlux : 0.0;

  const bool dynamic_estimator = config.estimator_kind != EstimatorKind::MoorePenrose;
  const bool linear_est = config.estimator_kind == EstimatorKind::LinearWR;
  const WrModel estimator(config.params, grid,
                          linear_est ? WrForm::Linearized : WrForm::Nonlinear);
  const double est_h0 = linear_est ? kNusseltHeight : 0.0;
  const double est_q0 = linear_est ? kNusseltFlux : 0.0;

  MatrixXd L_h, L_q;
  if (dynamic_estimator) {
    L_h = syn->gains.L.topRows(n);
    L_q = syn->gains.L.bottomRows(n);
  }
  const MatrixXd& K = syn->gains.K;
  const MatrixXd C_pinv =
      config.estimator_kind == EstimatorKind::MoorePenrose
          ? MatrixXd(obs.C.transpose() * (obs.C * obs.C.transpose()).inverse())
          : MatrixXd();

  // Plant and estimator in their model variables (absolute for nonlinear,
  // perturbation for linearized).
  auto [xh, xq] = seed_plant(config, grid);
  VectorXd ez = VectorXd::Constant(n, kNusseltHeight - est_h0);
  VectorXd ew = VectorXd::Constant(n, kNusseltFlux - est_q0);

  const long k_wave = steps_in(config.t_wave, config.dt, "t_wave");
  const long k_control = steps_in(config.t_control, config.dt, "t_control");
  const long k_end = steps_in(config.t_end, config.dt, "t_end");

  const std::size_t rows = static_cast<std::size_t>(k_end + 1);
  tr.t.reserve(rows);
  tr.hnorm.reserve(rows);
  tr.enorm.reserve(rows);
  tr.qw_err.reserve(rows);
  tr.q23_err.reserve(rows);
  tr.qnorm.reserve(rows);
  tr.integrand.reserve(rows);
  tr.cost.reserve(rows);
  tr.amplitudes.reserve(rows);
  tr.mass.reserve(rows);
  tr.injected.reserve(rows);

  VectorXd h(n), q(n), z(n), w(n);
  VectorXd amps = VectorXd::Zero(config.m);
  VectorXd f = VectorXd::Zero(n), g_h = VectorXd::Zero(n), g_q = VectorXd::Zero(n);
  VectorXd xpert(2 * n);
  double injected = 0.0;
  const double beta = config.beta;

  auto refresh_absolute = [&]() {
    h = xh.array() + plant_h0;
    q = xq.array() + plant_q0;
    z = ez.array() + est_h0;
    w = ew.array() + est_q0;
  };

  // Forcing and control law evaluated on the state at step k.
  auto evaluate_inputs = [&](long k) {
    const bool estimating = k >= k_wave;
    const bool controlling = k >= k_control;
    g_h.setZero();
    g_q.setZero();
    if (estimating) {
      const VectorXd y = obs.sample(h);
      if (dynamic_estimator) {
        const VectorXd innovation = y - obs.sample(z);
        g_h.noalias() = L_h * innovation;
        g_q.noalias() = L_q * innovation;
      } else {
        z = VectorXd::Constant(n, kNusseltHeight) +
            C_pinv * (y - VectorXd::Constant(config.p, kNusseltHeight));
        w = kNusseltFlux * to_faces(z);
        ez = z;
        ew = w;
      }
    }
    amps.setZero();
    if (controlling) {
      switch (config.controller_kind) {
        case ControllerKind::EstimatorLQR:
          xpert << z.array() - kNusseltHeight, w.array() - kNusseltFlux;
          amps.noalias() = K * xpert;
          break;
        case ControllerKind::FullStateLQR:
          xpert << h.array() - kNusseltHeight, q.array() - kNusseltFlux;
          amps.noalias() = K * xpert;
          break;
        case ControllerKind::FullInterfaceLQR:
          xpert << h.array() - kNusseltHeight,
              (kNusseltFlux * to_faces(h)).array() - kNusseltFlux;
          amps.noalias() = K * xpert;
          break;
        case ControllerKind::StaticOutputFeedback:
          amps.noalias() =
              syn->K_output * (obs.sample(h) - VectorXd::Constant(config.p, kNusseltHeight));
          break;
      }
    }
    f.noalias() = act.shape_matrix * amps;
  };

  auto record = [&](long k) {
    const double t = k * config.dt;
    const VectorXd hp = h.array() - kNusseltHeight;
    const VectorXd qp = q.array() - kNusseltFlux;
    tr.t.push_back(t);
    tr.hnorm.push_back(l2_norm(hp, dx));
    tr.enorm.push_back(l2_norm(h - z, dx));
    tr.qw_err.push_back(l2_norm(q - w, dx));
    tr.q23_err.push_back(l2_norm(q - kNusseltFlux * to_faces(h), dx));
    tr.qnorm.push_back(l2_norm(qp, dx));
    const double integrand =
        beta * dx * (hp.squaredNorm() + qp.squaredNorm()) + amps.squaredNorm();
    double cost = 0.0;
    if (!tr.t.empty() && tr.t.size() > 1 && k > k_control)
      cost = tr.cost.back() + 0.5 * config.dt * (tr.integrand.back() + integrand);
    tr.integrand.push_back(integrand);
    tr.cost.push_back(cost);
    tr.amplitudes.emplace_back(amps.data(), amps.data() + amps.size());
    tr.mass.push_back(h.sum() * dx);
    tr.injected.push_back(injected);
  };

  long k = 0;
  if (options.plant_at_wave != nullptr) {
    const FilmState& warm = *options.plant_at_wave;
    if (warm.h.size() != n || warm.q.size() != n || std::abs(warm.t - config.t_wave) > 1e-9)
      throw ParameterError("run_experiment: warm start does not match t_wave and grid");
    xh = warm.h.array() - plant_h0;
    xq = warm.q.array() - plant_q0;
    k = k_wave;
  }
  refresh_absolute();
  tr.mass0 = h.sum() * dx;
  double hnorm_at_control = std::numeric_limits<double>::quiet_NaN();

  for (;; ++k) {
    try {
      evaluate_inputs(k);
    } catch (const Error& e) {
      tr.status = RunStatus::BlowUp;
      tr.message = e.what();
      record(k);
      return tr;
    }
    if (k == k_control) {
      tr.peak_overestimation = z.maxCoeff() - h.maxCoeff();
      hnorm_at_control = l2_norm(h.array() - kNusseltHeight, dx);
    }
    if (options.snapshot_every > 0 && k % options.snapshot_every == 0)
      tr.snapshots.push_back(Snapshot{k * config.dt, h, q, z, w});
    record(k);
    if (k == k_end) break;

    const double t = k * config.dt;
    try {
      auto next = step_cn_newton(plant, xh, xq, WrForcing{f, {}, {}}, config.dt, t, config.cn);
      if (dynamic_estimator && k >= k_wave) {
        try {
          auto next_est = step_cn_newton(estimator, ez, ew, WrForcing{f, g_h, g_q}, config.dt,
                                         t, config.cn);
          ez = std::move(next_est.first);
          ew = std::move(next_est.second);
        } catch (const BlowUpError& e) {
          throw BlowUpError(e.time(), std::string("estimator: ") + e.what());
        } catch (const NewtonFailure& e) {
          throw NewtonFailure(e.time(), e.residual(), config.cn.max_iterations);
        }
      }
      xh = std::move(next.first);
      xq = std::move(next.second);
    } catch (const BlowUpError& e) {
      tr.status = RunStatus::BlowUp;
      tr.message = e.what();
      return tr;
    } catch (const NewtonFailure& e) {
      tr.status = RunStatus::NewtonFailure;
      tr.message = e.what();
      return tr;
    }
    injected += config.dt * amps.sum();
    refresh_absolute();
    if (options.on_step)
      options.on_step(StepView{(k + 1) * config.dt, h, q, z, w, f, g_h, g_q});
  }

  if (k_end > k_control) {
    const double final_norm = tr.hnorm.back();
    tr.status = final_norm <= config.stabilized_ratio * hnorm_at_control
                    ? RunStatus::Stabilized
                    : RunStatus::NotStabilized;
  } else {
    tr.status = RunStatus::Uncontrolled;
  }
  return tr;
}

FilmState develop_wave(const ExperimentConfig& config) {
  config.validate();
  const Grid grid = config.grid();
  const bool linear_plant = config.plant_kind == PlantKind::LinearWR;
  const WrModel plant(config.params, grid, linear_plant ? WrForm::Linearized : WrForm::Nonlinear);
  auto [xh, xq] = seed_plant(config, grid);
  const long k_wave = steps_in(config.t_wave, config.dt, "t_wave");
  const WrForcing none{VectorXd::Zero(grid.n()), {}, {}};
  for (long k = 0; k < k_wave; ++k) {
    auto next = step_cn_newton(plant, xh, xq, none, config.dt, k * config.dt, config.cn);
    xh = std::move(next.first);
    xq = std::move(next.second);
  }
  const double h0 = linear_plant ? kNusseltHeight : 0.0;
  const double q0 = linear_plant ? kNusseltFlux : 0.0;
  return FilmState{config.t_wave, xh.array() + h0, xq.array() + q0};
}

LogFit log_linear_fit(const std::vector<double>& times, const std::vector<double>& values,
                      double t0, double t1) {
  double s = 0, sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < times.size() && i < values.size(); ++i) {
    if (times[i] < t0 || times[i] > t1) continue;
    if (!(values[i] > 0.0)) continue;
    const double x = times[i];
    const double y = std::log(values[i]);
    s += 1;
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    syy += y * y;
  }
  LogFit fit;
  if (s < 2) return fit;
  const double vx = sxx - sx * sx / s;
  const double vy = syy - sy * sy / s;
  const double cxy = sxy - sx * sy / s;
  if (!(vx > 0.0)) return fit;
  fit.slope = cxy / vx;
  fit.intercept = (sy - fit.slope * sx) / s;
  fit.r2 = vy > 0.0 ? cxy * cxy / (vx * vy) : 1.0;
  return fit;
}

EstimatorMetrics estimator_convergence_metrics(const RunTrace& trace, double window) {
  if (!(window > 0.0)) throw ParameterError("estimator_convergence_metrics: window must be positive");
  EstimatorMetrics out;
  const double t0 = trace.t_wave;
  const double t1 = std::min(trace.t_control, trace.t.empty() ? t0 : trace.t.back());
  if (!(t1 > t0)) throw ParameterError("estimator_convergence_metrics: no estimator phase in trace");

  // Means of ||e|| over consecutive windows [t0 + i w, t0 + (i+1) w).
  std::vector<double> means;
  const int windows = static_cast<int>(std::floor((t1 - t0) / window + 1e-9));
  for (int i = 0; i < windows; ++i) {
    const double a = t0 + i * window;
    const double b = a + window;
    double sum = 0.0;
    int cnt = 0;
    for (std::size_t k = 0; k < trace.size(); ++k) {
      if (trace.t[k] >= a && trace.t[k] < b) {
        sum += trace.enorm[k];
        ++cnt;
      }
    }
    means.push_back(cnt ? sum / cnt : 0.0);
  }
  // Two successive small changes, so a single crossing of a turning point
  // is not mistaken for a plateau.
  auto small_change = [&](std::size_t i) {
    const double prev = means[i - 1];
    const double scale = std::max(std::abs(prev), std::numeric_limits<double>::min());
    return std::abs(means[i] - prev) < 0.01 * scale;
  };
  for (std::size_t i = 2; i < means.size(); ++i) {
    if (small_change(i - 1) && small_change(i)) {
      out.plateau_time = t0 + static_cast<double>(i - 2) * window;
      break;
    }
  }
  if (!means.empty()) out.final_error = means.back();
  const double fit_end = out.plateau_time ? *out.plateau_time : t1;
  if (out.plateau_time) {
    double sum = 0.0;
    int cnt = 0;
    for (std::size_t k = 0; k < trace.size(); ++k) {
      if (trace.t[k] >= *out.plateau_time && trace.t[k] < t1) {
        sum += trace.enorm[k];
        ++cnt;
      }
    }
    out.plateau_error = cnt ? sum / cnt : 0.0;
  }
  out.decay_rate = log_linear_fit(trace.t, trace.enorm, t0, fit_end).slope;
  return out;
}

FluxFidelity flux_fidelity(const RunTrace& trace, double t0, double t1) {
  FluxFidelity out;
  int cnt = 0;
  for (std::size_t k = 0; k < trace.size(); ++k) {
    if (trace.t[k] < t0 || trace.t[k] > t1) continue;
    out.qw_mean += trace.qw_err[k];
    out.q23_mean += trace.q23_err[k];
    ++cnt;
  }
  if (cnt == 0) throw ParameterError("flux_fidelity: empty time window");
  out.qw_mean /= cnt;
  out.q23_mean /= cnt;
  out.ratio = out.q23_mean > 0.0 ? out.qw_mean / out.q23_mean : 0.0;
  return out;
}

FluxFidelity flux_fidelity(const RunTrace& trace) {
  const double mid = 0.5 * (trace.t_wave + trace.t_control);
  const double dt = trace.size() > 1 ? trace.t[1] - trace.t[0] : 0.0;
  return flux_fidelity(trace, mid, trace.t_control - 0.5 * dt);
}

std::vector<double> evaluate_cost(const RunTrace& trace, double t_start) {
  std::vector<double> out(trace.size(), 0.0);
  for (std::size_t k = 1; k < trace.size(); ++k) {
    if (trace.t[k - 1] < t_start - 1e-12) continue;
    out[k] = out[k - 1] + 0.5 * (trace.t[k] - trace.t[k - 1]) *
                              (trace.integrand[k - 1] + trace.integrand[k]);
  }
  return out;
}

std::vector<SweepRow> sweep(const ExperimentConfig& base, SweepKind kind,
                            const std::vector<double>& grid, unsigned workers) {
  if (grid.empty()) throw ParameterError("sweep: empty grid");
  std::vector<SweepRow> rows(grid.size());
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = std::min<unsigned>(workers, static_cast<unsigned>(grid.size()));

  // The free-development phase does not depend on the observer shift.
  std::optional<FilmState> shared_wave;
  std::string wave_error;
  if (kind == SweepKind::Shift) {
    try {
      shared_wave = develop_wave(base);
    } catch (const std::exception& e) {
      wave_error = e.what();
    }
  }

  std::atomic<std::size_t> next{0};
  auto work = [&]() {
    for (std::size_t i = next++; i < grid.size(); i = next++) {
      ExperimentConfig cfg = base;
      if (kind == SweepKind::Re)
        cfg.params.Re = grid[i];
      else
        cfg.shift = grid[i];
      SweepRow row;
      row.value = grid[i];
      try {
        if (kind == SweepKind::Shift && !shared_wave) throw BlowUpError(base.t_wave, wave_error);
        RunOptions opts;
        if (shared_wave) opts.plant_at_wave = &*shared_wave;
        const RunTrace tr = run_experiment(cfg, opts);
        row.status = tr.status;
        row.message = tr.message;
        if (!tr.cost.empty()) {
          row.kappa = tr.cost.back();
          row.final_hnorm = tr.hnorm.back();
          row.final_enorm = tr.enorm.back();
        }
        row.peak_overestimation = tr.peak_overestimation;
        if (tr.ok() && cfg.t_end > cfg.t_control)
          row.decay_rate = log_linear_fit(tr.t, tr.hnorm, cfg.t_control, cfg.t_end).slope;
      } catch (const BlowUpError& e) {
        row.status = RunStatus::BlowUp;
        row.message = e.what();
      } catch (const std::exception& e) {
        row.status = RunStatus::SynthesisFailed;
        row.message = e.what();
      }
      rows[i] = std::move(row);
    }
  };
  std::vector<std::thread> pool;
  for (unsigned i = 1; i < workers; ++i) pool.emplace_back(work);
  work();
  for (auto& th : pool) th.join();
  return rows;
}

std::vector<SweepRow> sweep_shift(const ExperimentConfig& base, const std::vector<double>& shifts,
                                  unsigned workers) {
  return sweep(base, SweepKind::Shift, shifts, workers);
}

}  // namespace filmctl
