#include "filmctl/io.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "json.hpp"

namespace filmctl {

namespace {

using nlohmann::json;

// One configuration key: how to read it from JSON and write it back.
struct Field {
  std::function<void(ConfigFile&, const json&)> read;
  std::function<json(const ConfigFile&)> write;
};

template <typename T>
T get_as(const json& v, const std::string& key) {
  if constexpr (std::is_same_v<T, int>) {
    if (!v.is_number_integer())
      throw ConfigError("config key '" + key + "' must be an integer");
    const auto wide = v.get<long long>();
    if (wide < std::numeric_limits<int>::min() || wide > std::numeric_limits<int>::max())
      throw ConfigError("config key '" + key + "' is out of range");
    return static_cast<int>(wide);
  } else if constexpr (std::is_same_v<T, double>) {
    if (!v.is_number()) throw ConfigError("config key '" + key + "' must be a number");
    return v.get<double>();
  } else {
    if (!v.is_string()) throw ConfigError("config key '" + key + "' must be a string");
    return v.get<std::string>();
  }
}

template <typename T, typename Member>
Field member(std::string key, Member access) {
  return Field{[key, access](ConfigFile& c, const json& v) { access(c) = get_as<T>(v, key); },
               [access](const ConfigFile& c) {
                 return json(access(const_cast<ConfigFile&>(c)));
               }};
}

template <typename Enum>
Field enum_member(std::string key, Enum& (*access)(ConfigFile&),
                  Enum (*parse)(const std::string&)) {
  return Field{[key, access, parse](ConfigFile& c, const json& v) {
                 try {
                   access(c) = parse(get_as<std::string>(v, key));
                 } catch (const ConfigError&) {
                   throw;
                 } catch (const ParameterError& e) {
                   throw ConfigError(std::string("config key '") + key + "': " + e.what());
                 }
               },
               [access](const ConfigFile& c) {
                 return json(to_string(access(const_cast<ConfigFile&>(c))));
               }};
}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = [] {
    std::map<std::string, Field> t;
#define FILMCTL_FIELD(T, key, expr) \
  t.emplace(key, member<T>(key, [](ConfigFile& c) -> auto& { return expr; }))
    FILMCTL_FIELD(double, "Re", c.experiment.params.Re);
    FILMCTL_FIELD(double, "Ca", c.experiment.params.Ca);
    FILMCTL_FIELD(double, "theta", c.experiment.params.theta);
    FILMCTL_FIELD(double, "L", c.experiment.params.L);
    FILMCTL_FIELD(int, "n", c.experiment.n);
    FILMCTL_FIELD(int, "m", c.experiment.m);
    FILMCTL_FIELD(int, "p", c.experiment.p);
    FILMCTL_FIELD(double, "omega", c.experiment.omega);
    FILMCTL_FIELD(double, "beta", c.experiment.beta);
    FILMCTL_FIELD(double, "shift", c.experiment.shift);
    FILMCTL_FIELD(double, "dt", c.experiment.dt);
    FILMCTL_FIELD(double, "t_wave", c.experiment.t_wave);
    FILMCTL_FIELD(double, "t_control", c.experiment.t_control);
    FILMCTL_FIELD(double, "t_end", c.experiment.t_end);
    FILMCTL_FIELD(double, "amplitude", c.experiment.amplitude);
    FILMCTL_FIELD(double, "amplitude2", c.experiment.amplitude2);
    FILMCTL_FIELD(int, "mode", c.experiment.mode);
    FILMCTL_FIELD(double, "stabilized_ratio", c.experiment.stabilized_ratio);
    FILMCTL_FIELD(double, "newton_tolerance", c.experiment.cn.tolerance);
    FILMCTL_FIELD(int, "newton_max_iterations", c.experiment.cn.max_iterations);
    FILMCTL_FIELD(double, "care_tolerance", c.experiment.care.tolerance);
    FILMCTL_FIELD(int, "care_max_iterations", c.experiment.care.max_iterations);
    FILMCTL_FIELD(double, "sof_damping", c.experiment.sof.damping);
    FILMCTL_FIELD(int, "sof_max_iterations", c.experiment.sof.max_iterations);
    FILMCTL_FIELD(double, "sof_tolerance", c.experiment.sof.tolerance);
    FILMCTL_FIELD(std::string, "out_dir", c.out_dir);
    FILMCTL_FIELD(int, "snapshot_every", c.snapshot_every);
#undef FILMCTL_FIELD
    t.emplace("estimator_kind",
              enum_member<EstimatorKind>(
                  "estimator_kind",
                  [](ConfigFile& c) -> EstimatorKind& { return c.experiment.estimator_kind; },
                  &parse_estimator_kind));
    t.emplace("controller_kind",
              enum_member<ControllerKind>(
                  "controller_kind",
                  [](ConfigFile& c) -> ControllerKind& { return c.experiment.controller_kind; },
                  &parse_controller_kind));
    t.emplace("plant_kind",
              enum_member<PlantKind>(
                  "plant_kind", [](ConfigFile& c) -> PlantKind& { return c.experiment.plant_kind; },
                  &parse_plant_kind));
    return t;
  }();
  return table;
}

void write_row(std::ostream& os, const std::vector<double>& values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) os << ',';
    os << format_double(values[i]);
  }
  os << '\n';
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, sep)) out.push_back(cell);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

double parse_number(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  std::size_t e = s.find_last_not_of(" \t\r");
  if (b == std::string::npos) throw ParameterError("csv: empty numeric cell");
  const std::string t = s.substr(b, e - b + 1);
  if (t == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (t == "inf") return std::numeric_limits<double>::infinity();
  if (t == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (res.ec != std::errc() || res.ptr != t.data() + t.size())
    throw ParameterError("csv: not a number: '" + t + "'");
  return v;
}

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

ConfigFile parse_config(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  ConfigFile out;
  const auto& table = fields();
  for (const auto& [key, value] : doc.items()) {
    const auto it = table.find(key);
    if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second.read(out, value);
  }
  if (out.snapshot_every < 0) throw ConfigError("config key 'snapshot_every' must be >= 0");
  try {
    out.experiment.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const ParameterError& e) {
    throw ConfigError(e.what());
  }
  return out;
}

ConfigFile load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string emit_config(const ConfigFile& config) {
  json doc = json::object();
  for (const auto& [key, field] : fields()) doc[key] = field.write(config);
  return doc.dump(2) + "\n";
}

void write_trace_csv(std::ostream& os, const RunTrace& trace) {
  os << "t,hnorm,enorm,qw_err,q23_err,cost";
  for (int i = 0; i < trace.m; ++i) os << ",a_" << i;
  os << '\n';
  std::vector<double> row;
  for (std::size_t k = 0; k < trace.size(); ++k) {
    row.assign({trace.t[k], trace.hnorm[k], trace.enorm[k], trace.qw_err[k], trace.q23_err[k],
                trace.cost[k]});
    row.insert(row.end(), trace.amplitudes[k].begin(), trace.amplitudes[k].end());
    write_row(os, row);
  }
}

void write_snapshots_csv(std::ostream& os, const RunTrace& trace, double dx) {
  os << "t,x,h,q,z,w\n";
  for (const Snapshot& s : trace.snapshots) {
    for (Eigen::Index j = 0; j < s.h.size(); ++j)
      write_row(os, {s.t, static_cast<double>(j) * dx, s.h(j), s.q(j), s.z(j), s.w(j)});
  }
}

void write_sweep_csv(std::ostream& os, const std::string& parameter,
                     const std::vector<SweepRow>& rows) {
  os << parameter << ",kappa,final_hnorm,final_enorm,peak_overestimation,decay_rate,status\n";
  for (const SweepRow& r : rows) {
    os << format_double(r.value) << ',' << format_double(r.kappa) << ','
       << format_double(r.final_hnorm) << ',' << format_double(r.final_enorm) << ','
       << format_double(r.peak_overestimation) << ',' << format_double(r.decay_rate) << ','
       << to_string(r.status) << '\n';
  }
}

void write_matrix_csv(std::ostream& os, const MatrixXd& M) {
  std::vector<double> row(static_cast<std::size_t>(M.cols()));
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    for (Eigen::Index j = 0; j < M.cols(); ++j) row[static_cast<std::size_t>(j)] = M(i, j);
    write_row(os, row);
  }
}

void write_matrix_csv(const std::string& path, const MatrixXd& M) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  write_matrix_csv(out, M);
  if (!out) throw Error("write failed for '" + path + "'");
}

MatrixXd read_matrix_csv(std::istream& is) {
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line == "\r") continue;
    std::vector<double> r;
    for (const auto& cell : split(line, ',')) r.push_back(parse_number(cell));
    if (!rows.empty() && r.size() != rows.front().size())
      throw ParameterError("csv: ragged matrix rows");
    rows.push_back(std::move(r));
  }
  MatrixXd M(static_cast<Eigen::Index>(rows.size()),
             rows.empty() ? 0 : static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      M(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return M;
}

MatrixXd read_matrix_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  return read_matrix_csv(in);
}

CsvTable read_csv_table(std::istream& is) {
  CsvTable table;
  std::string line;
  if (!std::getline(is, line)) return table;
  table.header = split(line, ',');
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<double> r;
    for (const auto& cell : split(line, ',')) r.push_back(parse_number(cell));
    table.rows.push_back(std::move(r));
  }
  return table;
}

}  // namespace filmctl
