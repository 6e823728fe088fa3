#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "filmctl/io.hpp"

namespace filmctl {
namespace {

TEST(Config, EmptyObjectGivesDefaults) {
  const ConfigFile c = parse_config("{}");
  EXPECT_TRUE(c == ConfigFile{});
}

TEST(Config, RoundTripsEveryField) {
  ConfigFile c;
  c.experiment.params.Re = 12.5;
  c.experiment.params.Ca = 0.03;
  c.experiment.params.theta = 0.9;
  c.experiment.params.L = 24.0;
  c.experiment.n = 96;
  c.experiment.m = 4;
  c.experiment.p = 8;
  c.experiment.omega = 0.15;
  c.experiment.beta = 0.1;
  c.experiment.shift = 1.25;
  c.experiment.dt = 0.02;
  c.experiment.t_wave = 10;
  c.experiment.t_control = 20;
  c.experiment.t_end = 30;
  c.experiment.amplitude = 0.1 / 3.0;
  c.experiment.estimator_kind = EstimatorKind::LinearWR;
  c.experiment.controller_kind = ControllerKind::FullStateLQR;
  c.experiment.plant_kind = PlantKind::LinearWR;
  c.experiment.cn.tolerance = 1e-11;
  c.experiment.sof.damping = 0.3;
  c.out_dir = "results/a";
  c.snapshot_every = 7;
  const ConfigFile back = parse_config(emit_config(c));
  EXPECT_TRUE(back == c);
  EXPECT_EQ(emit_config(back), emit_config(c));
}

TEST(Config, UnknownKeyIsNamed) {
  try {
    parse_config(R"({"Re": 8, "reynolds": 9})");
    FAIL() << "no throw";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("reynolds"), std::string::npos) << e.what();
  }
}

TEST(Config, TypeMismatchIsNamed) {
  try {
    parse_config(R"({"n": "many"})");
    FAIL() << "no throw";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("n"), std::string::npos);
  }
}

TEST(Config, RejectsMalformedAndInvalid) {
  EXPECT_THROW(parse_config("{"), ConfigError);
  EXPECT_THROW(parse_config("[1, 2]"), ConfigError);
  EXPECT_THROW(parse_config(R"({"estimator_kind": "Kalman"})"), ParameterError);
  EXPECT_THROW(parse_config(R"({"Re": -1})"), ParameterError);
  EXPECT_THROW(parse_config(R"({"dt": 0.03})"), ParameterError);
  EXPECT_THROW(load_config("/nonexistent/config.json"), ConfigError);
}

TEST(FormatDouble, ShortestRoundTrip) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> U(-1e3, 1e3);
  for (int i = 0; i < 1000; ++i) {
    const double v = U(rng) * std::pow(10.0, (i % 40) - 20);
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(format_double(std::numeric_limits<double>::quiet_NaN()), "nan");
  EXPECT_EQ(format_double(-std::numeric_limits<double>::infinity()), "-inf");
}

TEST(MatrixCsv, RoundTripExact) {
  std::mt19937 rng(9);
  std::normal_distribution<double> N;
  MatrixXd M(7, 4);
  for (int i = 0; i < 7; ++i)
    for (int j = 0; j < 4; ++j) M(i, j) = N(rng) * 1e-7;
  std::stringstream ss;
  write_matrix_csv(ss, M);
  const MatrixXd back = read_matrix_csv(ss);
  ASSERT_EQ(back.rows(), 7);
  ASSERT_EQ(back.cols(), 4);
  EXPECT_EQ((back - M).cwiseAbs().maxCoeff(), 0.0);
}

TEST(MatrixCsv, RaggedRowsRejected) {
  std::stringstream ss("1,2\n3\n");
  EXPECT_THROW(read_matrix_csv(ss), Error);
}

RunTrace tiny_trace() {
  RunTrace tr;
  tr.m = 2;
  for (int k = 0; k < 4; ++k) {
    tr.t.push_back(0.1 * k);
    tr.hnorm.push_back(1.0 / 3.0 + k);
    tr.enorm.push_back(std::exp(-k));
    tr.qw_err.push_back(1e-17 * k);
    tr.q23_err.push_back(2.0 / 7.0);
    tr.cost.push_back(k * 0.7);
    tr.amplitudes.push_back({0.1 * k, -std::sqrt(2.0) * k});
  }
  return tr;
}

TEST(TraceCsv, HeaderAndValuesRoundTrip) {
  const RunTrace tr = tiny_trace();
  std::stringstream ss;
  write_trace_csv(ss, tr);
  const CsvTable t = read_csv_table(ss);
  const std::vector<std::string> header{"t", "hnorm", "enorm", "qw_err", "q23_err", "cost", "a_0", "a_1"};
  EXPECT_EQ(t.header, header);
  ASSERT_EQ(t.rows.size(), 4u);
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_EQ(t.rows[k][1], tr.hnorm[k]);
    EXPECT_EQ(t.rows[k][2], tr.enorm[k]);
    EXPECT_EQ(t.rows[k][3], tr.qw_err[k]);
    EXPECT_EQ(t.rows[k][7], tr.amplitudes[k][1]);
    EXPECT_LE(std::abs(t.rows[k][0] - tr.t[k]), 1e-15);
  }
}

TEST(SnapshotCsv, Layout) {
  RunTrace tr;
  tr.snapshots.push_back(Snapshot{0.5, VectorXd::Ones(4), VectorXd::Zero(4), VectorXd::Ones(4),
                                  VectorXd::Constant(4, 2.0 / 3.0)});
  std::stringstream ss;
  write_snapshots_csv(ss, tr, 0.25);
  const CsvTable t = read_csv_table(ss);
  const std::vector<std::string> header{"t", "x", "h", "q", "z", "w"};
  EXPECT_EQ(t.header, header);
  ASSERT_EQ(t.rows.size(), 4u);
  EXPECT_EQ(t.rows[2][1], 0.5);
  EXPECT_EQ(t.rows[3][5], 2.0 / 3.0);
}

TEST(SweepCsv, StatusColumnIsText) {
  SweepRow r;
  r.value = 8;
  r.kappa = 1.5;
  r.status = RunStatus::BlowUp;
  std::stringstream ss;
  write_sweep_csv(ss, "Re", {r});
  std::string header, row;
  std::getline(ss, header);
  std::getline(ss, row);
  EXPECT_EQ(header, "Re,kappa,final_hnorm,final_enorm,peak_overestimation,decay_rate,status");
  EXPECT_EQ(row.substr(0, 7), "8,1.5,0");
  EXPECT_EQ(row.substr(row.rfind(',') + 1), "blowup");
}

}  // namespace
}  // namespace filmctl
