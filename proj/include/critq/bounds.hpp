#pragma once

#include <array>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "critq/gaussian.hpp"
#include "critq/model.hpp"

namespace critq {

// d_x H = m11 x^2 + m22 p^2 + m12 (xp + px) + linear . (x, p) + offset
struct QuadraticForm {
  double m11 = 0.0;
  double m22 = 0.0;
  double m12 = 0.0;
  std::array<double, 2> linear{0.0, 0.0};
  double offset = 0.0;
};

struct FormEigenvalues {
  double phi;  // larger magnitude
  double chi;
};

FormEigenvalues mx_eigenvalues(const QuadraticForm& q);

// d_x of omega [p^2/2 + (1 - g^2) x^2/2] at coupling g, given dg/dx and domega/dx at that instant.
QuadraticForm generator_form(double omega, double g, double dg_dx, double domega_dx);

struct BoundSample {
  double t;
  double weight;  // sqrt(phi^2 + chi^2)
  double n;
};

struct BoundReport {
  double bound = 0.0;           // on I_x
  double coarse_bound = 0.0;    // same rule on every other sample
  double error_estimate = 0.0;  // |bound - coarse| / 3
  std::vector<BoundSample> integrand;
  std::string rule = "trapezoid";
};

// 8 [int_0^T sqrt(phi^2 + chi^2) (2N + 1) dt]^2 with one form per trajectory sample.
BoundReport general_bound(const Trajectory& traj, std::span<const QuadraticForm> q);
BoundReport general_bound(const Trajectory& traj, const std::function<QuadraticForm(double)>& q);

// Evolves the vacuum under the schedule and bounds I_x at time T.
BoundReport protocol_bound(const CouplingSchedule& s, const EstimandTag& x,
                           const EffectiveParams& e, double T, const EvolveOptions& opt = {});

enum class QuenchEstimand { Lambda, Omega };
// Closed-form bound on Q_x for the critical quench.
double quench_bound_closed(QuenchEstimand x, double wT);

// Variance of A1 x^2 + A2 p^2 + 2 b :xp: (rotated frame) for a zero-mean Gaussian state.
// c_off is accepted for the frame bookkeeping; it only shifts the operator by a constant.
double variance_quadratic(double A1, double A2, double b_off, double c_off, double xm2, double pm2);

double displaced_bound(double phi, double chi, double n, double v_norm, bool has_linear);

}  // namespace critq
