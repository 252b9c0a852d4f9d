#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <fstream>
#include <sstream>

#include "critq/error.hpp"
#include "critq/harness.hpp"

using namespace critq;
using namespace critq::harness;

namespace {

const char* kSmall = R"({"name": "small",
  "model": {"type": "rabi", "omega": 1.0, "g": [0.9, 1.0]},
  "protocol": {"type": "quench"},
  "estimands": ["omega", "lambda"],
  "eta": [100, "inf"],
  "T_grid": {"min": 0.5, "max": 20.0, "points": 7}})";

std::string csv_of(const RunConfig& c) {
  std::ostringstream os;
  write_csv(os, run_rows(c), config_hash(c), false);
  return os.str();
}

std::string message_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ValidationError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Config, ParsesAndGrids) {
  const auto c = parse_config(kSmall);
  EXPECT_EQ(c.couplings.size(), 2u);
  EXPECT_TRUE(std::isinf(c.etas[1]));
  const auto ts = c.times();
  ASSERT_EQ(ts.size(), 7u);
  EXPECT_EQ(ts.front(), 0.5);
  EXPECT_EQ(ts.back(), 20.0);
  EXPECT_NEAR(ts[1] / ts[0], ts[2] / ts[1], 1e-12);
}

TEST(Config, Diagnostics) {
  EXPECT_NE(message_of("{\n\"name\": 1,\n  oops}").find("line 3"), std::string::npos);
  std::string bad = kSmall;
  bad.replace(bad.find("\"points\": 7"), 11, "\"points\": 0");
  EXPECT_NE(message_of(bad).find("T_grid.points"), std::string::npos);
  bad = kSmall;
  bad.replace(bad.find("\"min\": 0.5"), 10, "\"min\": -1");
  EXPECT_NE(message_of(bad).find("T_grid.min"), std::string::npos);
  bad = kSmall;
  bad.replace(bad.find("\"lambda\""), 8, "\"Lambda\"");
  EXPECT_NE(message_of(bad).find("estimands[1]"), std::string::npos);
  bad = kSmall;
  bad.replace(bad.find("\"name\""), 6, "\"nmae\"");
  EXPECT_NE(message_of(bad).find("unknown field"), std::string::npos);
  bad = kSmall;
  bad.replace(bad.find("[0.9, 1.0]"), 10, "[1.2]");
  EXPECT_NE(message_of(bad).find("model.g"), std::string::npos);
  EXPECT_NE(message_of(R"({"model": {"g": 1}, "protocol": {"type": "ramp", "r": 2}, "estimands": ["omega"],
      "eta": "inf", "T_grid": {"min": 1, "max": 1, "points": 2}})").find("T_grid.points"), std::string::npos);
}

TEST(Config, HashIsCanonical) {
  const auto a = parse_config(kSmall);
  std::string spaced = kSmall;
  spaced.insert(1, "\n   ");
  EXPECT_EQ(config_hash(a), config_hash(parse_config(spaced)));
  auto b = a;
  b.tol = 1e-9;
  EXPECT_NE(config_hash(a), config_hash(b));
  EXPECT_EQ(config_hash(a).size(), 16u);
}

TEST(Run, RowsAndInvariants) {
  const auto c = parse_config(kSmall);
  const auto rows = run_rows(c);
  ASSERT_EQ(rows.size(), 2u * 2u * 2u * 7u);
  for (const auto& r : rows) {
    ASSERT_TRUE(r.error.empty()) << r.error;
    ASSERT_TRUE(r.qfi && r.q);
    EXPECT_NEAR(*r.q, r.x * r.x * *r.qfi, 1e-12 * *r.q);
    if (r.bound) EXPECT_GE(*r.bound * (1 + 1e-6), *r.qfi);
    if (std::isinf(r.eta)) EXPECT_TRUE(r.bound.has_value());
    else EXPECT_GT(r.nmax, 0u);
    EXPECT_FALSE(r.regime.empty());
  }
}

TEST(Run, ByteIdenticalAcrossWorkers) {
  auto c = parse_config(kSmall);
  const std::string one = csv_of(c);
  EXPECT_EQ(one, csv_of(c));
  c.workers = 4;
  const std::string four = csv_of(c);
  // Worker count is part of the config hash; compare everything after it.
  std::istringstream a(one), b(four);
  std::string la, lb;
  while (std::getline(a, la) && std::getline(b, lb)) EXPECT_EQ(la.substr(la.find(',')), lb.substr(lb.find(',')));
}

TEST(Run, FailingPointIsIsolated) {
  // Nmax 16 is too small for the long critical quench at eta = 1e4.
  const auto c = parse_config(R"({"model": {"type": "rabi", "g": 1.0}, "protocol": {"type": "quench"},
      "estimands": ["omega"], "eta": [10000, "inf"], "T_grid": {"min": 0.1, "max": 30, "points": 5},
      "fock": {"nmax": 16}})");
  const auto rows = run_rows(c);
  ASSERT_EQ(rows.size(), 10u);
  std::size_t failed = 0;
  for (const auto& r : rows) {
    if (!r.error.empty()) {
      ++failed;
      EXPECT_EQ(r.error.rfind("truncation", 0), 0u) << r.error;
      EXPECT_FALSE(r.qfi.has_value());
    }
  }
  EXPECT_GT(failed, 0u);
  EXPECT_LT(failed, 5u);
  for (std::size_t i = 5; i < 10; ++i) EXPECT_TRUE(rows[i].error.empty());
}

TEST(Run, WritesCsvAndManifest) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "critq_harness_test";
  fs::remove_all(dir);
  auto c = parse_config(kSmall);
  c.spectrum_etas = {100.0};
  const auto s = run(c, dir.string());
  EXPECT_EQ(s.rows, 56u);
  std::ifstream in(s.csv_path);
  const Table t = read_csv(in);
  EXPECT_EQ(t.rows.size(), 56u);
  EXPECT_EQ(t.header.front(), "config_hash");
  EXPECT_EQ(t.rows.front().front(), s.hash);
  std::ifstream m(s.manifest_path);
  std::stringstream ms;
  ms << m.rdbuf();
  EXPECT_NE(ms.str().find(s.hash), std::string::npos);
  EXPECT_NE(ms.str().find("\"rows\": 56"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir / "spectrum.csv"));
  fs::remove_all(dir);
}

TEST(Fit, SyntheticQuartic) {
  std::ostringstream os;
  os << "protocol,protocol_param,g,estimand,eta,T,Q,regime\n";
  for (int k = 0; k < 30; ++k) {
    const double T = std::pow(10.0, 1 + 2.0 * k / 29);
    os << "adiabatic,0.01,1,omega,inf," << format_number(T) << "," << format_number(T * T * T * T) << ",II\n";
  }
  std::istringstream is(os.str());
  const auto t = read_csv(is);
  auto rows = fit_table(t, parse_window("10,1000"));
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_TRUE(rows[0].error.empty());
  EXPECT_NEAR(rows[0].fit.beta, 4.0, 1e-12);
  rows = fit_table(t, parse_window("auto"));
  EXPECT_NEAR(rows[0].fit.beta, 4.0, 1e-12);
  rows = fit_table(t, parse_window("2000,9000"));
  EXPECT_FALSE(rows[0].error.empty());
  EXPECT_THROW(parse_window("5"), ValidationError);
  EXPECT_THROW(parse_window("9,3"), ValidationError);
}

TEST(Fit, QuenchSeries) {
  const auto c = parse_config(R"({"model": {"type": "rabi", "g": 1.0}, "protocol": {"type": "quench"},
      "estimands": ["omega", "lambda"], "eta": "inf", "T_grid": {"min": 1, "max": 1000, "points": 61}})");
  std::ostringstream os;
  write_csv(os, run_rows(c), config_hash(c), false);
  std::istringstream is(os.str());
  const auto rows = fit_table(read_csv(is), parse_window("10,100"));
  ASSERT_EQ(rows.size(), 2u);
  for (const auto& r : rows) EXPECT_NEAR(r.fit.beta, 6.0, 0.1);
}

TEST(Fit, EtaPlateau) {
  std::ostringstream os;
  os << "protocol,protocol_param,g,estimand,eta,T,Q\n";
  for (double eta : {100.0, 1000.0})
    for (int k = 0; k < 10; ++k) os << "adiabatic,0.05,1,omega," << eta << "," << 100 * (k + 1) << "," << format_number(std::pow(eta, 4.0 / 3.0)) << "\n";
  std::istringstream is(os.str());
  const auto rows = eta_scaling_table(read_csv(is), 0.5);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_NEAR(rows[0].fit.beta, 4.0 / 3.0, 1e-12);
}

TEST(Verify, CleanAndCorrupted) {
  const auto c = parse_config(kSmall);
  std::ostringstream os;
  write_csv(os, run_rows(c), config_hash(c), false);
  std::istringstream is(os.str());
  Table t = read_csv(is);
  auto check = verify_bounds(t);
  EXPECT_GT(check.checked, 0u);
  EXPECT_TRUE(check.violations.empty());
  // Halve one bound.
  const int cb = t.column("bound"), cr = t.column("ratio");
  for (auto& r : t.rows)
    if (!r[cb].empty() && std::stod(r[cr]) < 1.5) {
      r[cb] = format_number(0.5 * std::stod(r[cb]));
      break;
    }
  check = verify_bounds(t);
  EXPECT_EQ(check.violations.size(), 1u);
  Table missing;
  missing.header = {"T", "qfi"};
  EXPECT_THROW(verify_bounds(missing), ValidationError);
}

TEST(Verify, QuenchLambdaSaturates) {
  const auto c = parse_config(R"({"model": {"type": "rabi", "g": 1.0}, "protocol": {"type": "quench"},
      "estimands": ["lambda"], "eta": "inf", "T_grid": {"min": 35, "max": 50, "points": 5}})");
  for (const auto& r : run_rows(c)) EXPECT_NEAR(*r.ratio(), 1.0, 0.01);
}

TEST(Presets, AllParse) {
  EXPECT_GE(presets().size(), 7u);
  for (const auto& [name, text] : presets()) {
    EXPECT_NO_THROW(parse_config(text)) << name;
    EXPECT_FALSE(preset_description(name).empty());
  }
  EXPECT_TRUE(presets().count("fig3-quench"));
  EXPECT_TRUE(presets().count("fig7-kz"));
}

TEST(Csv, NumberFormat) {
  EXPECT_EQ(format_number(1.0), "1.0000000000000000e+00");
  EXPECT_EQ(format_number(std::numeric_limits<double>::infinity()), "inf");
}
