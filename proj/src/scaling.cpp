#include "critq/scaling.hpp"

#include <cmath>
#include <limits>

#include "critq/error.hpp"
#include "json.hpp"

namespace critq {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Calibrated with the banded eigensolver and finite-difference ground-state QFI.
constexpr double kGapConstant = 1.087096266685;
constexpr double kSaturationConstant = 0.053045860578;

}  // namespace

double critical_gap_constant() { return kGapConstant; }
double saturation_constant() { return kSaturationConstant; }

double CriticalExponents::critical_region(double eta) { return std::pow(eta, -1.0 / nu); }

ScalingFit fit_exponent(std::span<const SeriesPoint> series, FitWindow window,
                        const FitOptions& opt) {
  if (!(window.lo > 0) || !(window.hi > window.lo)) throw ValidationError("invalid fit window");
  if (window.hi / window.lo < opt.min_span * (1.0 - 1e-12))
    throw ValidationError("fit window spans less than the required ratio");
  const double lo = window.lo * (1.0 - 1e-12), hi = window.hi * (1.0 + 1e-12);
  double sx = 0, sy = 0;
  std::size_t n = 0;
  std::vector<std::pair<double, double>> pts;
  for (const auto& p : series) {
    if (p.t < lo || p.t > hi) continue;
    if (!(p.t > 0) || !(p.q > 0)) throw ValidationError("fit requires positive T and Q");
    const double x = std::log(p.t), y = std::log(p.q);
    pts.emplace_back(x, y);
    sx += x;
    sy += y;
    ++n;
  }
  if (n < opt.min_points || n < 3) throw ValidationError("too few points in fit window");
  const double mx = sx / n, my = sy / n;
  double sxx = 0, sxy = 0;
  for (auto [x, y] : pts) {
    sxx += (x - mx) * (x - mx);
    sxy += (x - mx) * (y - my);
  }
  ScalingFit f;
  f.beta = sxy / sxx;
  f.log_prefactor = my - f.beta * mx;
  double ssr = 0;
  for (auto [x, y] : pts) {
    const double r = y - (f.log_prefactor + f.beta * x);
    ssr += r * r;
  }
  f.rms = std::sqrt(ssr / n);
  f.std_error = std::sqrt(ssr / static_cast<double>(n - 2) / sxx);
  f.lo = window.lo;
  f.hi = window.hi;
  f.points = n;
  return f;
}

double kz_exponent(double r) {
  if (std::isinf(r) && r > 0) return 4.0;
  if (!(r > 0)) throw ValidationError("ramp exponent must be positive");
  return 4.0 * r / (2.0 + r);
}

FreezeOut freeze_out(double r, double wT) {
  if (!(r > 0) || !(wT > 0)) throw ValidationError("freeze-out needs r > 0 and omega T > 0");
  const double u = wT / r;
  const double gap = std::pow(u, -2.0 * r / (2.0 + r));
  const double t = 1.0 - std::pow(u, -2.0 / (r + 2.0));
  return {t, gap, gap >= 1.0};
}

std::string RegimeReport::label_at(double T) const {
  for (const auto& r : regimes)
    if (T < r.t_hi) return r.label;
  return regimes.empty() ? std::string() : regimes.back().label;
}

std::string RegimeReport::to_json() const {
  nlohmann::json j;
  auto num = [](double v) -> nlohmann::json {
    if (std::isinf(v)) return "inf";
    return v;
  };
  j["t_i_ii"] = num(t_i_ii);
  j["t_ii_iii"] = num(t_ii_iii);
  if (t_iia_iib) j["t_iia_iib"] = num(*t_iia_iib);
  j["regime_ii_collapsed"] = regime_ii_collapsed;
  for (const auto& r : regimes) {
    nlohmann::json e;
    e["label"] = r.label;
    e["t_lo"] = num(r.t_lo);
    e["t_hi"] = num(r.t_hi);
    e["exponent"] = r.exponent ? nlohmann::json(*r.exponent) : nlohmann::json("non-universal");
    j["regimes"].push_back(e);
  }
  return j.dump(2);
}

RegimeReport regime_boundaries(const EffectiveParams& e, const CouplingSchedule& s) {
  const double w = e.omega;
  const double g = s.target();
  double gap = w * std::sqrt((1.0 - g) * (1.0 + g));
  if (!e.eta.is_infinite())
    gap = std::max(gap, kGapConstant * w * std::pow(e.eta.value(), -1.0 / 3.0));
  RegimeReport rep;
  rep.t_ii_iii = gap > 0 ? 1.0 / gap : kInf;
  const double short_time = 10.0 / w;
  rep.regime_ii_collapsed = rep.t_ii_iii <= short_time;
  rep.t_i_ii = std::min(short_time, rep.t_ii_iii);

  rep.regimes.push_back({"I", 0.0, rep.t_i_ii, std::nullopt});
  const auto& p = s.protocol();
  double late = 0.0;
  if (std::holds_alternative<SuddenQuench>(p)) {
    rep.regimes.push_back({"II", rep.t_i_ii, rep.t_ii_iii, 6.0});
    late = 2.0;
  } else if (std::holds_alternative<AdiabaticRamp>(p)) {
    rep.regimes.push_back({"II", rep.t_i_ii, rep.t_ii_iii, 4.0});
    late = 0.0;
  } else {
    const double r = std::get<FiniteRamp>(p).exponent;
    const double split = std::clamp(r / w, rep.t_i_ii, rep.t_ii_iii);
    rep.t_iia_iib = split;
    rep.regimes.push_back({"IIa", rep.t_i_ii, split, 6.0});
    rep.regimes.push_back({"IIb", split, rep.t_ii_iii, kz_exponent(r)});
    late = 0.0;
  }
  if (std::isfinite(rep.t_ii_iii)) rep.regimes.push_back({"III", rep.t_ii_iii, kInf, late});
  return rep;
}

double saturation_qfi(const EffectiveParams& e) {
  if (e.eta.is_infinite()) throw ValidationError("saturation requires finite eta");
  return kSaturationConstant * std::pow(e.eta.value(), 4.0 / 3.0);
}

}  // namespace critq
