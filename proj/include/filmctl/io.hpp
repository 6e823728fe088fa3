#pragma once

// Configuration files (JSON) and CSV artifacts.

#include <iosfwd>
#include <string>
#include <vector>

#include "filmctl/closedloop.hpp"

namespace filmctl {

/// Malformed or inconsistent configuration document.
class ConfigError : public ParameterError {
 public:
  using ParameterError::ParameterError;
};

/// Everything a configuration file can set. Every key is optional.
struct ConfigFile {
  ExperimentConfig experiment;
  std::string out_dir = "out";
  int snapshot_every = 0;  // steps between snapshots, 0 disables

  bool operator==(const ConfigFile& other) const {
    return experiment == other.experiment && out_dir == other.out_dir &&
           snapshot_every == other.snapshot_every;
  }
};

/// Parses a JSON object. Unknown keys and type mismatches throw ConfigError
/// naming the key; the resulting experiment is validated.
ConfigFile parse_config(const std::string& text);
ConfigFile load_config(const std::string& path);
/// Emits every key, so parse_config(emit_config(c)) == c.
std::string emit_config(const ConfigFile& config);

/// Shortest decimal form that reads back to the same double.
std::string format_double(double v);

void write_trace_csv(std::ostream& os, const RunTrace& trace);
/// Rows x_j, h_j, q_j, z_j, w_j of each snapshot, tagged with its time.
/// q and w sit at x_j + dx/2.
void write_snapshots_csv(std::ostream& os, const RunTrace& trace, double dx);
void write_sweep_csv(std::ostream& os, const std::string& parameter,
                     const std::vector<SweepRow>& rows);

void write_matrix_csv(std::ostream& os, const MatrixXd& M);
void write_matrix_csv(const std::string& path, const MatrixXd& M);
MatrixXd read_matrix_csv(std::istream& is);
MatrixXd read_matrix_csv(const std::string& path);

/// Plain numeric table: header line then rows of numbers.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};
CsvTable read_csv_table(std::istream& is);

}  // namespace filmctl
