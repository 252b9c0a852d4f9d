#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "critq/model.hpp"

namespace critq {

struct CriticalExponents {
  static constexpr double z_nu = 0.5;
  static constexpr double nu = 1.5;
  static constexpr double gamma = 2.0;
  // Width of the critical region, Gamma = eta^(-1/nu).
  static double critical_region(double eta);
  // Exponent of the QFI in the gap-limited regime, gamma / (z nu).
  static constexpr double qfi_gap_exponent() { return gamma / z_nu; }
};

// Gap * eta^(1/3) / omega at g = 1: the gap of p^2/2 + y^4/4 (exact for the effective model).
double critical_gap_constant();
// c in Q_sat = c eta^(4/3): ground-state Q_omega at g = 1, eta = 1e3, divided by eta^(4/3).
double saturation_constant();

struct SeriesPoint {
  double t;
  double q;
};

struct FitWindow {
  double lo;
  double hi;
};

struct FitOptions {
  std::size_t min_points = 8;
  double min_span = 3.0;  // hi / lo
};

struct ScalingFit {
  double beta = 0.0;
  double std_error = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  double rms = 0.0;         // residual RMS of log Q
  double log_prefactor = 0.0;  // intercept: log Q = log_prefactor + beta log T
  std::size_t points = 0;
};

ScalingFit fit_exponent(std::span<const SeriesPoint> series, FitWindow window,
                        const FitOptions& opt = {});

double kz_exponent(double r);

struct FreezeOut {
  double t_over_T;
  double gap;  // 1 - g_f
  bool quench_like;
};
FreezeOut freeze_out(double r, double wT);

struct RegimeEntry {
  std::string label;
  double t_lo;
  double t_hi;
  std::optional<double> exponent;  // empty: non-universal
};

struct RegimeReport {
  double t_i_ii;
  double t_ii_iii;  // +inf when regime III is absent
  std::optional<double> t_iia_iib;
  bool regime_ii_collapsed = false;  // gap-limited time below the short-time boundary
  std::vector<RegimeEntry> regimes;

  std::string label_at(double T) const;
  std::string to_json() const;
};

RegimeReport regime_boundaries(const EffectiveParams& e, const CouplingSchedule& s);

double saturation_qfi(const EffectiveParams& e);

}  // namespace critq
