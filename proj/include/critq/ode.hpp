#pragma once

// Adaptive Dormand-Prince 5(4) with FSAL, PI step control and exact landing on
// requested output times. State is any indexable container of double or
// std::complex<double> with size().

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <span>
#include <string>

#include "critq/error.hpp"

namespace critq::ode {

struct Options {
  double tol = 1e-10;
  // Error is controlled per unit of this time scale (typically 1/omega).
  double time_scale = 1.0;
  double initial_step = 0.0;  // 0: pick from the rhs magnitude
  std::size_t max_steps = 50'000'000;
  double max_step = 0.0;  // 0: unlimited
};

struct Stats {
  std::size_t accepted = 0;
  std::size_t rejected = 0;
};

namespace detail {

inline double magnitude(double v) { return std::abs(v); }
inline double magnitude(const std::complex<double>& v) { return std::abs(v); }

// Butcher tableau of DP5(4).
inline constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
inline constexpr double a21 = 1.0 / 5;
inline constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
inline constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
inline constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                        a54 = -212.0 / 729;
inline constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                        a64 = 49.0 / 176, a65 = -5103.0 / 18656;
inline constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                        b6 = 11.0 / 84;
// b - b_hat
inline constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                        e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

}  // namespace detail

// Integrates y' = f(t, y) from t0 through every time in `stops` (ascending, > t0),
// calling observe(t, y) on arrival and guard(t, y) after every accepted step.
// Rhs: void(double t, const State& y, State& dy).
template <class State, class Rhs, class Observe, class Guard>
Stats integrate(Rhs&& f, State& y, double t0, std::span<const double> stops, const Options& opt,
                Observe&& observe, Guard&& guard) {
  using detail::magnitude;
  Stats stats;
  if (stops.empty()) return stats;
  const std::size_t n = y.size();
  State k1 = y, k2 = y, k3 = y, k4 = y, k5 = y, k6 = y, k7 = y, tmp = y, ynew = y;

  double t = t0;
  f(t, y, k1);
  double h = opt.initial_step;
  if (h <= 0) {
    double ymax = 0, dmax = 0;
    for (std::size_t i = 0; i < n; ++i) {
      ymax = std::max(ymax, magnitude(y[i]));
      dmax = std::max(dmax, magnitude(k1[i]));
    }
    h = dmax > 0 ? 0.01 * std::max(ymax, opt.tol) / dmax : 1e-3 * opt.time_scale;
    h = std::min(h, 1e-2 * opt.time_scale);
    h = std::max(h, 1e-8 * opt.time_scale);
  }
  auto cap = [&](double v) { return opt.max_step > 0 ? std::min(v, opt.max_step) : v; };
  h = cap(h);
  double err_prev = 1e-4;
  bool last_rejected = false;

  for (double stop : stops) {
    if (!(stop > t)) {
      if (stop == t) {
        observe(t, y);
        continue;
      }
      throw IntegrationError("output times must be ascending", t);
    }
    while (t < stop) {
      if (stats.accepted + stats.rejected >= opt.max_steps)
        throw IntegrationError("step budget exhausted", t);
      bool landing = false;
      double step = h;
      if (t + step >= stop || t + 1.01 * step >= stop) {
        step = stop - t;
        landing = true;
      }
      if (step < 1e-14 * std::max(1.0, std::abs(t)))
        throw IntegrationError("step size underflow", t);

      using namespace detail;
      for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + step * (a21 * k1[i]);
      f(t + c2 * step, tmp, k2);
      for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + step * (a31 * k1[i] + a32 * k2[i]);
      f(t + c3 * step, tmp, k3);
      for (std::size_t i = 0; i < n; ++i)
        tmp[i] = y[i] + step * (a41 * k1[i] + a42 * k2[i] + a43 * k3[i]);
      f(t + c4 * step, tmp, k4);
      for (std::size_t i = 0; i < n; ++i)
        tmp[i] = y[i] + step * (a51 * k1[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]);
      f(t + c5 * step, tmp, k5);
      for (std::size_t i = 0; i < n; ++i)
        tmp[i] = y[i] + step * (a61 * k1[i] + a62 * k2[i] + a63 * k3[i] + a64 * k4[i] + a65 * k5[i]);
      f(t + step, tmp, k6);
      for (std::size_t i = 0; i < n; ++i)
        ynew[i] = y[i] + step * (b1 * k1[i] + b3 * k3[i] + b4 * k4[i] + b5 * k5[i] + b6 * k6[i]);
      const double tnew = landing ? stop : t + step;
      f(tnew, ynew, k7);

      // Mixed absolute/relative error, per unit time below the time scale.
      double err = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const auto ei =
            step * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] + e7 * k7[i]);
        const double sc = opt.tol * (1.0 + std::max(magnitude(y[i]), magnitude(ynew[i])));
        err = std::max(err, magnitude(ei) / sc);
      }
      err /= std::min(1.0, step / opt.time_scale);

      if (!std::isfinite(err)) {
        h = 0.25 * step;
        ++stats.rejected;
        last_rejected = true;
        continue;
      }
      if (err <= 1.0) {
        t = tnew;
        y = ynew;
        k1 = k7;
        ++stats.accepted;
        guard(t, y);
        // PI controller (exponents for an error per unit step of order 4).
        double fac = 0.9 * std::pow(err, -0.7 / 4.0) * std::pow(err_prev, 0.4 / 4.0);
        fac = std::clamp(fac, 0.2, last_rejected ? 1.0 : 5.0);
        err_prev = std::max(err, 1e-4);
        last_rejected = false;
        const double hnext = step * fac;
        // Keep the pre-landing step size if landing shortened this one.
        h = cap(landing ? std::max(hnext, h) : hnext);
      } else {
        h = step * std::max(0.2, 0.9 * std::pow(err, -1.0 / 4.0));
        ++stats.rejected;
        last_rejected = true;
      }
    }
    observe(t, y);
  }
  return stats;
}

}  // namespace critq::ode
