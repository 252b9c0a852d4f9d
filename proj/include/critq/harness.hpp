#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "critq/model.hpp"
#include "critq/scaling.hpp"

namespace critq::harness {

enum class ModelKind { Rabi, Lmg, Direct };
enum class ProtocolKind { Quench, Adiabatic, Ramp };

struct TGrid {
  double min = 0.0;
  double max = 0.0;
  std::size_t points = 0;
};

struct RunConfig {
  std::string name;
  ModelKind model = ModelKind::Rabi;
  double omega = 1.0;             // omega (Rabi, direct) or h (LMG)
  std::vector<double> couplings;  // target g values
  QuarticKind quartic = QuarticKind::Rabi;  // direct model only
  ProtocolKind protocol = ProtocolKind::Quench;
  std::vector<double> protocol_params;  // phi (adiabatic) or r (ramp); unused for quench
  std::vector<std::string> estimands;
  std::vector<double> etas;  // +inf for the thermodynamic limit
  TGrid t_grid;
  double tol = 1e-10;
  std::size_t samples = 512;
  std::size_t nmax = 0;  // 0: automatic
  double delta_rel = 1e-5;
  std::size_t workers = 1;
  std::uint64_t seed = 0;
  bool trajectories = false;
  bool record_timing = false;
  std::vector<double> spectrum_etas;  // optional spectrum table at the first coupling
  std::string csv_name = "results.csv";
  std::string manifest_name = "manifest.json";

  std::vector<double> times() const;
};

// Throws ValidationError with "line N" or "field <path>" diagnostics.
RunConfig parse_config(const std::string& text);
std::string canonical_json(const RunConfig& c);
std::string config_hash(const RunConfig& c);  // 16 hex digits, FNV-1a over the canonical form

struct ResultRow {
  std::string protocol;
  double protocol_param = 0.0;
  double g = 0.0;
  std::string estimand;
  double x = 0.0;
  double eta = 0.0;
  double T = 0.0;
  std::optional<double> q;
  std::optional<double> qfi;
  std::optional<double> bound;  // on the QFI
  std::optional<double> n_final;
  std::optional<double> x2_final;
  std::string regime;
  std::size_t nmax = 0;  // 0 on the Gaussian path
  std::string error;
  double wall_time = 0.0;

  std::optional<double> bound_q() const;
  std::optional<double> ratio() const;
};

// Model for one sweep point; thermodynamic-limit points keep a finite source but an infinite eta.
EffectiveParams effective_for(const RunConfig& c, double g, double eta);
CouplingSchedule schedule_for(const RunConfig& c, double param, double g, double T);

struct RunSummary {
  std::size_t rows = 0;
  std::size_t failed = 0;
  std::string hash;
  std::string csv_path;
  std::string manifest_path;
};

std::vector<ResultRow> run_rows(const RunConfig& c);
RunSummary run(const RunConfig& c, const std::string& out_dir);

void write_csv(std::ostream& os, const std::vector<ResultRow>& rows, const std::string& hash,
               bool timing);
std::string format_number(double v);

// Generic reader for the results CSV.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  int column(const std::string& name) const;  // -1 if absent
};
Table read_csv(std::istream& is);

struct WindowSpec {
  bool automatic = false;  // regime-II rows with a guard factor of 3 on each side
  double lo = 0.0;
  double hi = 0.0;
  double min_span = 3.0;
};
WindowSpec parse_window(const std::string& spec);

struct FitRow {
  std::string protocol;
  std::string protocol_param;
  std::string g;
  std::string estimand;
  std::string eta;
  ScalingFit fit;
  std::string error;
};
std::vector<FitRow> fit_table(const Table& t, const WindowSpec& w);
// Plateau (mean Q for T >= plateau_frac * T_max) against eta per protocol/estimand.
std::vector<FitRow> eta_scaling_table(const Table& t, double plateau_frac);
void write_fit_csv(std::ostream& os, const std::vector<FitRow>& rows);

struct Violation {
  std::size_t row;
  double qfi;
  double bound;
  double margin;  // qfi / bound - 1
};
struct BoundCheck {
  std::size_t checked = 0;
  std::vector<Violation> violations;
  double min_ratio = 0.0;
  double max_ratio = 0.0;
};
// Throws ValidationError if the qfi or bound column is missing.
BoundCheck verify_bounds(const Table& t, double rel_tol = 1e-6);

const std::map<std::string, std::string>& presets();
std::string preset_description(const std::string& name);

}  // namespace critq::harness
