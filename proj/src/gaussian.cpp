#include "critq/gaussian.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>

#include "critq/error.hpp"
#include "critq/ode.hpp"

namespace critq {

namespace {

using Pair = std::array<cplx, 2>;

void check_normalizable(double t, cplx b) {
  if (squeeze_norm(b) < kBlowupThreshold)
    throw IntegrationError("squeezing diverges (1 - 4|b|^2 < 1e-12) at t = " + std::to_string(t), t);
}

}  // namespace

SqueezingState::SqueezingState(cplx b) : b_(b) {
  if (!(std::abs(b) < 0.5)) throw ValidationError("squeezing parameter requires |b| < 1/2");
}

double SqueezingState::magnitude() const { return std::atanh(2.0 * std::abs(b_)); }

void Trajectory::write_csv(std::ostream& os) const {
  os << "t,re_b,im_b,N\n";
  char buf[160];
  for (const auto& s : samples) {
    std::snprintf(buf, sizeof buf, "%.16e,%.16e,%.16e,%.16e\n", s.t, s.b.real(), s.b.imag(), s.n);
    os << buf;
  }
}

double squeeze_norm(cplx b) {
  const double m = std::abs(b);
  return (1.0 - 2.0 * m) * (1.0 + 2.0 * m);
}

double photon_number(cplx b) { return 4.0 * std::norm(b) / squeeze_norm(b); }

double variance_x(cplx b) { return 0.5 * std::norm(1.0 + 2.0 * b) / squeeze_norm(b); }

double variance_p(cplx b) { return 0.5 * std::norm(1.0 - 2.0 * b) / squeeze_norm(b); }

SqueezingState ground_state_b(double g) {
  if (!(g >= 0 && g < 1)) throw ValidationError("ground state requires 0 <= g < 1");
  return SqueezingState(cplx(-0.5 + 1.0 / (1.0 + std::sqrt(1.0 - g * g)), 0.0));
}

cplx riccati_rhs(cplx b, double g, double omega) {
  const double g2 = g * g;
  return cplx(0.0, -omega) * (-0.25 * g2 + (2.0 - g2) * b - g2 * b * b);
}

SqueezingState quench_b_exact(double g, double omega, double t) {
  if (!(g >= 0 && g <= 1)) throw ValidationError("quench solution requires 0 <= g <= 1");
  if (t < 0) throw ValidationError("quench solution requires t >= 0");
  if (g == 0 || t == 0) return SqueezingState();
  const double wt = omega * t;
  if (g == 1.0) return SqueezingState(wt / (2.0 * cplx(wt, -2.0)));
  const double g2 = g * g;
  const double root = std::sqrt((1.0 - g) * (1.0 + g));
  const double shift = std::atanh(2.0 * root / (2.0 - g2));
  const cplx arg(root * wt, -shift);
  return SqueezingState((2.0 - g2) / (2.0 * g2) + cplx(0.0, root) / (g2 * std::tan(arg)));
}

std::vector<double> sample_times(double T, std::size_t samples) {
  if (!(T > 0)) throw ValidationError("duration must be positive");
  if (samples < 16) throw ValidationError("at least 16 samples required");
  std::vector<double> ts;
  ts.reserve(2 * samples + 1);
  ts.push_back(0.0);
  const double t_first = 1e-4 * T;
  const double ratio = std::pow(T / t_first, 1.0 / static_cast<double>(samples - 1));
  for (std::size_t k = 0; k < samples; ++k)
    ts.push_back(k + 1 == samples ? T : t_first * std::pow(ratio, static_cast<double>(k)));
  for (std::size_t k = 1; k <= samples; ++k)
    ts.push_back(T * static_cast<double>(k) / static_cast<double>(samples));
  std::sort(ts.begin(), ts.end());
  // Drop near-duplicates so that consecutive samples are strictly increasing.
  std::vector<double> out;
  out.reserve(ts.size());
  for (double t : ts)
    if (out.empty() || t > out.back() * (1.0 + 1e-12) + 1e-300) out.push_back(t);
  out.back() = T;
  return out;
}

Trajectory evolve_b(const std::function<double(double)>& g_of_t, double omega,
                    std::span<const double> times, double tol, cplx b0) {
  if (!(tol > 0)) throw ValidationError("tolerance must be positive");
  if (!(omega > 0)) throw ValidationError("omega must be positive");
  const SqueezingState start(b0);
  Trajectory traj;
  traj.info.tol = tol;
  std::array<cplx, 1> y{start.b()};
  auto rhs = [&](double t, const std::array<cplx, 1>& v, std::array<cplx, 1>& dv) {
    dv[0] = riccati_rhs(v[0], g_of_t(t), omega);
  };
  ode::Options opt;
  opt.tol = tol;
  opt.time_scale = 1.0 / omega;
  // Keeps steps inside the stability region when the error estimate vanishes (stationary b).
  opt.max_step = 0.5 / omega;
  auto observe = [&](double t, const std::array<cplx, 1>& v) {
    traj.samples.push_back({t, v[0], photon_number(v[0])});
  };
  auto guard = [](double t, const std::array<cplx, 1>& v) { check_normalizable(t, v[0]); };
  std::span<const double> stops = times;
  if (!stops.empty() && stops.front() == 0.0) {
    traj.samples.push_back({0.0, y[0], photon_number(y[0])});
    stops = stops.subspan(1);
  }
  const ode::Stats st = ode::integrate(rhs, y, 0.0, stops, opt, observe, guard);
  traj.info.steps = st.accepted;
  traj.info.rejected = st.rejected;
  return traj;
}

Trajectory evolve_b(const CouplingSchedule& s, double omega, double T, const EvolveOptions& opt) {
  if (std::abs(T - s.duration()) > 1e-12 * T && s.duration() < T)
    throw ValidationError("evolution time exceeds the schedule duration");
  const std::vector<double> ts = sample_times(T, opt.samples);
  return evolve_b([&s](double t) { return coupling_at(s, t); }, omega, ts, opt.tol);
}

std::vector<SensitivitySample> evolve_sensitivity_series(const CouplingSchedule& s,
                                                         const DriveSensitivity& d, double omega,
                                                         std::span<const double> times,
                                                         double tol) {
  if (!(tol > 0)) throw ValidationError("tolerance must be positive");
  if (!(omega > 0)) throw ValidationError("omega must be positive");
  if (!times.empty() && times.back() > s.duration() * (1.0 + 1e-12))
    throw ValidationError("sensitivity output beyond the schedule duration");
  std::vector<SensitivitySample> out;
  out.reserve(times.size());
  Pair y{cplx(0.0, 0.0), cplx(0.0, 0.0)};
  const double kappa = d.coupling_scale;
  const double dw = d.domega_dx;
  auto rhs = [&](double t, const Pair& v, Pair& dv) {
    const double g = coupling_at(s, t);
    const double g2 = g * g;
    const cplx b = v[0];
    const cplx f = cplx(0.0, -omega) * (-0.25 * g2 + (2.0 - g2) * b - g2 * b * b);
    const cplx df_db = cplx(0.0, -omega) * ((2.0 - g2) - 2.0 * g2 * b);
    const cplx df_dg = cplx(0.0, -omega) * (-0.5 * g - 2.0 * g * b - 2.0 * g * b * b);
    dv[0] = f;
    dv[1] = df_db * v[1] + df_dg * (g * kappa) + (f / omega) * dw;
  };
  ode::Options opt;
  opt.tol = tol;
  opt.time_scale = 1.0 / omega;
  // Keeps steps inside the stability region when the error estimate vanishes (stationary b).
  opt.max_step = 0.5 / omega;
  auto observe = [&](double t, const Pair& v) { out.push_back({t, v[0], v[1]}); };
  auto guard = [](double t, const Pair& v) { check_normalizable(t, v[0]); };
  std::span<const double> stops = times;
  if (!stops.empty() && stops.front() == 0.0) {
    out.push_back({0.0, cplx(0.0, 0.0), cplx(0.0, 0.0)});
    stops = stops.subspan(1);
  }
  ode::integrate(rhs, y, 0.0, stops, opt, observe, guard);
  return out;
}

SensitivityState evolve_sensitivity(const CouplingSchedule& s, const EstimandTag& x,
                                    const EffectiveParams& e, double T, double tol) {
  const DriveSensitivity d = drive_sensitivity(x, e);
  const double t[1] = {T};
  const auto series = evolve_sensitivity_series(s, d, e.omega, t, tol);
  return {series.back().b, series.back().s, x};
}

double qfi_squeezed(cplx b, cplx s) {
  const double n = squeeze_norm(b);
  if (!(n > 0)) throw ValidationError("QFI requires |b| < 1/2");
  return 8.0 * std::norm(s) / (n * n);
}

double snr(double x, double qfi) {
  if (!(qfi >= 0)) throw ValidationError("QFI must be non-negative");
  return x * x * qfi;
}

}  // namespace critq
