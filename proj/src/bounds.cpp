#include "critq/bounds.hpp"

#include <algorithm>
#include <cmath>

#include "critq/error.hpp"

namespace critq {

FormEigenvalues mx_eigenvalues(const QuadraticForm& q) {
  const double mean = 0.5 * (q.m11 + q.m22);
  const double half = 0.5 * (q.m11 - q.m22);
  const double r = std::hypot(half, q.m12);
  // Avoid cancellation in the smaller eigenvalue: l1 * l2 = det.
  const double big = mean >= 0 ? mean + r : mean - r;
  const double det = q.m11 * q.m22 - q.m12 * q.m12;
  const double small = big != 0.0 ? det / big : 0.0;
  return {big, small};
}

QuadraticForm generator_form(double omega, double g, double dg_dx, double domega_dx) {
  QuadraticForm q;
  q.m11 = 0.5 * domega_dx * (1.0 - g) * (1.0 + g) - omega * g * dg_dx;
  q.m22 = 0.5 * domega_dx;
  return q;
}

namespace {

double trapezoid(const std::vector<BoundSample>& s, std::size_t stride) {
  double acc = 0.0;
  std::size_t i = 0;
  const std::size_t last = s.size() - 1;
  auto f = [&](std::size_t k) { return s[k].weight * (2.0 * s[k].n + 1.0); };
  while (i < last) {
    const std::size_t j = std::min(i + stride, last);
    acc += 0.5 * (s[j].t - s[i].t) * (f(i) + f(j));
    i = j;
  }
  return acc;
}

}  // namespace

BoundReport general_bound(const Trajectory& traj, std::span<const QuadraticForm> q) {
  if (traj.samples.size() < 16) throw ValidationError("bound quadrature needs at least 16 samples");
  if (q.size() != traj.samples.size())
    throw ValidationError("one quadratic form per trajectory sample required");
  if (traj.samples.front().t != 0.0) throw ValidationError("trajectory must start at t = 0");
  BoundReport rep;
  rep.integrand.reserve(q.size());
  for (std::size_t k = 0; k < q.size(); ++k) {
    const auto& smp = traj.samples[k];
    if (k > 0 && !(smp.t > traj.samples[k - 1].t))
      throw ValidationError("trajectory times must be strictly increasing");
    if (!(smp.n >= 0)) throw ValidationError("negative photon number in trajectory");
    const FormEigenvalues ev = mx_eigenvalues(q[k]);
    rep.integrand.push_back({smp.t, std::hypot(ev.phi, ev.chi), smp.n});
  }
  const double fine = trapezoid(rep.integrand, 1);
  const double coarse = trapezoid(rep.integrand, 2);
  rep.bound = 8.0 * fine * fine;
  rep.coarse_bound = 8.0 * coarse * coarse;
  rep.error_estimate = std::abs(rep.bound - rep.coarse_bound) / 3.0;
  return rep;
}

BoundReport general_bound(const Trajectory& traj, const std::function<QuadraticForm(double)>& q) {
  std::vector<QuadraticForm> forms;
  forms.reserve(traj.samples.size());
  for (const auto& s : traj.samples) forms.push_back(q(s.t));
  return general_bound(traj, forms);
}

BoundReport protocol_bound(const CouplingSchedule& s, const EstimandTag& x,
                           const EffectiveParams& e, double T, const EvolveOptions& opt) {
  const DriveSensitivity d = drive_sensitivity(x, e);
  const Trajectory traj = evolve_b(s, e.omega, T, opt);
  return general_bound(traj, [&](double t) {
    const double g = coupling_at(s, t);
    return generator_form(e.omega, g, g * d.coupling_scale, d.domega_dx);
  });
}

double quench_bound_closed(QuenchEstimand x, double wT) {
  const double y2 = wT * wT;
  const double q = (2.0 / 9.0) * y2 * y2 * y2 + (8.0 / 3.0) * y2 * y2 + 8.0 * y2;
  return x == QuenchEstimand::Lambda ? q : 0.5 * q;
}

double variance_quadratic(double A1, double A2, double b_off, double /*c_off*/, double xm2,
                          double pm2) {
  if (!(xm2 > 0 && pm2 > 0) || xm2 * pm2 < 0.25 * (1.0 - 1e-12))
    throw ValidationError("second moments violate the uncertainty relation");
  return 2.0 * (A1 * A1 * xm2 * xm2 + A2 * A2 * pm2 * pm2) + 4.0 * xm2 * pm2 * b_off * b_off -
         A1 * A2 + b_off * b_off;
}

double displaced_bound(double phi, double chi, double n, double v_norm, bool has_linear) {
  if (!(n >= 0)) throw ValidationError("photon number must be non-negative");
  const double w = phi * phi + chi * chi;
  const double s = 2.0 * n + 1.0;
  if (!has_linear) return 2.5 * w * s * s;
  return 2.0 * w * (s * s - 0.5) + 2.0 * (w + v_norm * v_norm) * (n + 1.0) * (n + 1.0);
}

}  // namespace critq
