#pragma once

// Closed-loop experiments: a weighted-residual plant, a Luenberger-type
// estimator driven by point height measurements, and an LQR controller
// acting through localized actuators. A run has three phases: free wave
// development, estimator convergence, then control.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "filmctl/control.hpp"
#include "filmctl/core.hpp"
#include "filmctl/integrate.hpp"
#include "filmctl/models.hpp"

namespace filmctl {

enum class EstimatorKind { NonlinearWR, LinearWR, MoorePenrose };
enum class ControllerKind { FullStateLQR, FullInterfaceLQR, EstimatorLQR, StaticOutputFeedback };
enum class PlantKind { NonlinearWR, LinearWR };

std::string to_string(EstimatorKind kind);
std::string to_string(ControllerKind kind);
std::string to_string(PlantKind kind);
EstimatorKind parse_estimator_kind(const std::string& s);
ControllerKind parse_controller_kind(const std::string& s);
PlantKind parse_plant_kind(const std::string& s);

struct ExperimentConfig {
  PhysicalParams params;
  int n = 128;
  int m = 5;
  int p = 10;
  double omega = 0.1;
  double beta = 1.0;
  double shift = 0.0;
  double dt = 0.01;
  double t_wave = 200.0;
  double t_control = 275.0;
  double t_end = 475.0;
  EstimatorKind estimator_kind = EstimatorKind::NonlinearWR;
  ControllerKind controller_kind = ControllerKind::EstimatorLQR;
  PlantKind plant_kind = PlantKind::NonlinearWR;
  // Seed: 1 + amplitude cos(2 pi mode x / L) + amplitude2 cos(4 pi mode x / L).
  double amplitude = 0.01;
  double amplitude2 = 0.001;
  int mode = 1;
  // Run is "stabilized" when the final perturbation norm is below this
  // fraction of its value at activation.
  double stabilized_ratio = 0.1;
  CnOptions cn;
  CareOptions care;
  SofOptions sof;

  /// Throws ParameterError on inconsistent settings.
  void validate() const;
  Grid grid() const { return Grid(n, params.L); }
};

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b);

/// The linear design problem of a configuration plus its synthesized gains.
struct Synthesis {
  LinearSystem system;
  GainSet gains;            // K (m x 2n) and, unless Moore-Penrose, L (2n x p)
  MatrixXd K_output;        // static output feedback gain (m x p), if requested
  double open_loop_abscissa = 0.0;
  double control_abscissa = 0.0;    // A + B K (or A + B K C for output feedback)
  double estimator_abscissa = 0.0;  // A - L C; NaN when no estimator gain
};

/// Builds the linear system and all gains the configuration needs. Throws
/// SynthesisError when a solver fails.
Synthesis synthesize(const ExperimentConfig& config);

struct Snapshot {
  double t = 0.0;
  VectorXd h, q, z, w;
};

enum class RunStatus {
  Stabilized,
  NotStabilized,
  Uncontrolled,
  BlowUp,
  NewtonFailure,
  SynthesisFailed
};
std::string to_string(RunStatus status);

struct RunTrace {
  int m = 0;
  std::vector<double> t;
  std::vector<double> hnorm;    // ||h - 1||
  std::vector<double> enorm;    // ||h - z||
  std::vector<double> qw_err;   // ||q - w||
  std::vector<double> q23_err;  // ||q - (2/3) h||
  std::vector<double> qnorm;    // ||q - 2/3||
  std::vector<double> integrand;  // <x, Q x> + <u, R u>
  std::vector<double> cost;       // accumulated from t_control
  std::vector<std::vector<double>> amplitudes;

  double mass0 = 0.0;
  std::vector<double> mass;      // sum h dx
  std::vector<double> injected;  // integral of sum a_i dt
  double peak_overestimation = 0.0;  // max z - max h at activation

  double t_wave = 0.0, t_control = 0.0, t_end = 0.0;
  RunStatus status = RunStatus::Uncontrolled;
  std::string message;
  std::vector<Snapshot> snapshots;

  std::size_t size() const { return t.size(); }
  bool ok() const {
    return status == RunStatus::Stabilized || status == RunStatus::NotStabilized ||
           status == RunStatus::Uncontrolled;
  }
  /// max_k |(mass_k - mass0) - injected_k|.
  double mass_ledger_error() const;
};

/// Per-step view handed to an observer callback after each accepted step.
struct StepView {
  double t;
  const VectorXd& h;
  const VectorXd& q;
  const VectorXd& z;
  const VectorXd& w;
  const VectorXd& f;    // actuation applied during the step just taken
  const VectorXd& g_h;  // estimator forcing applied during the step
  const VectorXd& g_q;
};

struct RunOptions {
  int snapshot_every = 0;  // steps between snapshots, 0 for none
  std::function<void(const StepView&)> on_step;
  const Synthesis* synthesis = nullptr;  // reuse precomputed gains
  /// Plant state (absolute h, q) at t_wave from develop_wave(); the run then
  /// starts at t_wave and the trace omits the free-development phase.
  const FilmState* plant_at_wave = nullptr;
};

/// Integrates the uncontrolled plant of `config` from its seed to t_wave.
/// Throws BlowUpError or NewtonFailure.
FilmState develop_wave(const ExperimentConfig& config);

/// Runs the three-phase protocol. Failures end the run early and are
/// reported through the trace status; nothing is thrown for them.
RunTrace run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

struct EstimatorMetrics {
  std::optional<double> plateau_time;
  std::optional<double> plateau_error;
  double decay_rate = 0.0;  // slope of log ||e|| before the plateau (negative = decaying)
  double final_error = 0.0;  // mean ||e|| over the last full window
};

/// Windowed analysis of ||e|| over the estimator phase [t_wave, t_control).
/// The plateau starts where the windowed mean changes by under 1% across two
/// successive windows.
EstimatorMetrics estimator_convergence_metrics(const RunTrace& trace, double window = 5.0);

struct FluxFidelity {
  double qw_mean = 0.0;
  double q23_mean = 0.0;
  double ratio = 0.0;
};

/// Time averages of ||q - w|| and ||q - (2/3) h|| over [t0, t1].
FluxFidelity flux_fidelity(const RunTrace& trace, double t0, double t1);
/// Default window: second half of the estimator phase.
FluxFidelity flux_fidelity(const RunTrace& trace);

/// Trapezoidal accumulation of the stored cost integrand from t_start;
/// zero before t_start.
std::vector<double> evaluate_cost(const RunTrace& trace, double t_start);

struct LogFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

/// Least-squares fit of log(values) against times on [t0, t1].
LogFit log_linear_fit(const std::vector<double>& times, const std::vector<double>& values,
                      double t0, double t1);

enum class SweepKind { Re, Shift };

struct SweepRow {
  double value = 0.0;
  double kappa = 0.0;
  double final_hnorm = 0.0;
  double final_enorm = 0.0;
  double peak_overestimation = 0.0;
  double decay_rate = 0.0;  // log-linear slope of ||h - 1|| over the control phase
  RunStatus status = RunStatus::Uncontrolled;
  std::string message;
};

/// Runs one experiment per grid value on a pool of `workers` threads
/// (0 = hardware concurrency). Rows come back in grid order; individual
/// failures are recorded, not thrown.
std::vector<SweepRow> sweep(const ExperimentConfig& base, SweepKind kind,
                            const std::vector<double>& grid, unsigned workers = 0);

std::vector<SweepRow> sweep_shift(const ExperimentConfig& base, const std::vector<double>& shifts,
                                  unsigned workers = 0);

}  // namespace filmctl
