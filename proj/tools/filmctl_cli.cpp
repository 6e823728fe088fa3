// Command-line front end: gain synthesis, single closed-loop runs and
// parameter sweeps, all writing CSV artifacts.
//
// Exit codes: 0 success, 2 configuration or usage error, 3 synthesis
// failure, 4 integration failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "filmctl/closedloop.hpp"
#include "filmctl/io.hpp"

namespace fs = std::filesystem;
using namespace filmctl;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitSynthesis = 3;
constexpr int kExitIntegration = 4;

struct Common {
  std::string config_path;
  std::string out_dir;
};

ConfigFile resolve(const Common& c) {
  ConfigFile cfg = c.config_path.empty() ? ConfigFile{} : load_config(c.config_path);
  if (!c.out_dir.empty()) cfg.out_dir = c.out_dir;
  return cfg;
}

fs::path prepare_out(const ConfigFile& cfg) {
  const fs::path dir(cfg.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory '" + cfg.out_dir + "'");
  return dir;
}

template <typename Writer>
void write_file(const fs::path& path, Writer&& writer) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  writer(out);
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

int cmd_gains(const Common& common) {
  const ConfigFile cfg = resolve(common);
  Synthesis syn;
  try {
    syn = synthesize(cfg.experiment);
  } catch (const SynthesisError& e) {
    std::cerr << "synthesis failed in " << e.solver() << " (residual "
              << format_double(e.residual()) << "): " << e.what() << "\n";
    return kExitSynthesis;
  }
  const fs::path dir = prepare_out(cfg);
  write_matrix_csv((dir / "K.csv").string(), syn.gains.K);
  if (syn.gains.L.size() != 0) write_matrix_csv((dir / "L.csv").string(), syn.gains.L);
  if (syn.K_output.size() != 0) write_matrix_csv((dir / "K_output.csv").string(), syn.K_output);
  write_file(dir / "spectra.csv", [&](std::ostream& os) {
    os << "system,abscissa\n";
    os << "open_loop," << format_double(syn.open_loop_abscissa) << '\n';
    os << "control," << format_double(syn.control_abscissa) << '\n';
    os << "estimator," << format_double(syn.estimator_abscissa) << '\n';
  });
  std::cout << "open_loop=" << format_double(syn.open_loop_abscissa)
            << " control=" << format_double(syn.control_abscissa)
            << " estimator=" << format_double(syn.estimator_abscissa) << "\n";
  return kExitOk;
}

int cmd_simulate(const Common& common, std::optional<int> snapshots) {
  ConfigFile cfg = resolve(common);
  if (snapshots) {
    if (*snapshots < 0) throw ConfigError("--snapshots must be >= 0");
    cfg.snapshot_every = *snapshots;
  }
  RunOptions opts;
  opts.snapshot_every = cfg.snapshot_every;
  const RunTrace trace = run_experiment(cfg.experiment, opts);
  if (trace.status == RunStatus::SynthesisFailed) {
    std::cerr << "synthesis failed: " << trace.message << "\n";
    return kExitSynthesis;
  }
  const fs::path dir = prepare_out(cfg);
  write_file(dir / "trace.csv", [&](std::ostream& os) { write_trace_csv(os, trace); });
  if (cfg.snapshot_every > 0)
    write_file(dir / "snapshots.csv", [&](std::ostream& os) {
      write_snapshots_csv(os, trace, cfg.experiment.grid().dx());
    });

  std::cout << "status=" << to_string(trace.status);
  if (!trace.t.empty()) {
    std::cout << " t=" << format_double(trace.t.back())
              << " hnorm=" << format_double(trace.hnorm.back())
              << " enorm=" << format_double(trace.enorm.back())
              << " kappa=" << format_double(trace.cost.back())
              << " mass_error=" << format_double(trace.mass_ledger_error());
  }
  std::cout << "\n";
  if (!trace.ok()) {
    std::cerr << trace.message << "\n";
    return kExitIntegration;
  }
  return kExitOk;
}

std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    if (cell.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      std::size_t used = 0;
      out.push_back(std::stod(cell, &used));
      if (cell.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(cell);
    } catch (const std::exception&) {
      throw ConfigError("--grid: not a number: '" + cell + "'");
    }
  }
  if (out.empty()) throw ConfigError("--grid: empty sweep grid");
  return out;
}

int cmd_sweep(const Common& common, const std::string& kind, const std::string& grid_text,
              unsigned workers) {
  const ConfigFile cfg = resolve(common);
  const std::vector<double> grid = parse_grid(grid_text);
  const SweepKind sk = kind == "re" ? SweepKind::Re : SweepKind::Shift;
  const std::vector<SweepRow> rows = sweep(cfg.experiment, sk, grid, workers);
  const fs::path dir = prepare_out(cfg);
  write_file(dir / "sweep.csv",
             [&](std::ostream& os) { write_sweep_csv(os, sk == SweepKind::Re ? "Re" : "shift", rows); });
  int failed = 0;
  for (const auto& r : rows) failed += (r.status == RunStatus::Stabilized ||
                                        r.status == RunStatus::NotStabilized ||
                                        r.status == RunStatus::Uncontrolled)
                                           ? 0
                                           : 1;
  std::cout << "rows=" << rows.size() << " failed=" << failed << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Feedback control of falling liquid films"};
  app.require_subcommand(1);

  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "JSON configuration file");
    sub->add_option("--out", common.out_dir, "Output directory (overrides out_dir)");
  };

  auto* gains = app.add_subcommand("gains", "Synthesize K and L; write K.csv, L.csv, spectra.csv");
  add_common(gains);

  auto* simulate = app.add_subcommand("simulate", "Run one closed-loop experiment");
  add_common(simulate);
  std::optional<int> snapshots;
  simulate->add_option("--snapshots", snapshots, "Steps between snapshots (0 disables)");

  auto* sweep_cmd = app.add_subcommand("sweep", "Run a parameter sweep; write sweep.csv");
  add_common(sweep_cmd);
  std::string sweep_kind;
  std::string grid_text;
  unsigned workers = 0;
  sweep_cmd->add_option("--sweep", sweep_kind, "Swept parameter")
      ->required()
      ->check(CLI::IsMember({"re", "shift"}));
  sweep_cmd->add_option("--grid", grid_text, "Comma-separated parameter values")->required();
  sweep_cmd->add_option("--workers", workers, "Worker threads (0 = all cores)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*gains) return cmd_gains(common);
    if (*simulate) return cmd_simulate(common, snapshots);
    if (*sweep_cmd) return cmd_sweep(common, sweep_kind, grid_text, workers);
  } catch (const ParameterError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const SynthesisError& e) {
    std::cerr << "synthesis failed in " << e.solver() << ": " << e.what() << "\n";
    return kExitSynthesis;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIntegration;
  }
  return kExitConfig;
}
