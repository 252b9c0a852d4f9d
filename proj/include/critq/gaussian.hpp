#pragma once

#include <complex>
#include <cstddef>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "critq/model.hpp"

namespace critq {

using cplx = std::complex<double>;

// Squeezed vacuum exp(b a^2^dagger)|0>, normalized; |b| < 1/2.
class SqueezingState {
 public:
  SqueezingState() = default;
  explicit SqueezingState(cplx b);

  cplx b() const { return b_; }
  double magnitude() const;  // |z| = artanh(2|b|)
  double angle() const { return std::arg(b_); }

 private:
  cplx b_{0.0, 0.0};
};

struct SensitivityState {
  cplx b;
  cplx s;  // db/dx
  EstimandTag x;
};

struct TrajectorySample {
  double t;
  cplx b;
  double n;
};

struct IntegratorInfo {
  std::size_t steps = 0;
  std::size_t rejected = 0;
  double tol = 0.0;
};

struct Trajectory {
  std::vector<TrajectorySample> samples;
  IntegratorInfo info;

  double duration() const { return samples.empty() ? 0.0 : samples.back().t; }
  // Columns t, re_b, im_b, N.
  void write_csv(std::ostream& os) const;
};

double photon_number(cplx b);
inline double photon_number(const SqueezingState& st) { return photon_number(st.b()); }
double variance_x(cplx b);  // <x^2>
double variance_p(cplx b);  // <p^2>
// Normalization 1 - 4|b|^2, computed without cancellation near |b| = 1/2 where possible.
double squeeze_norm(cplx b);

SqueezingState ground_state_b(double g);
cplx riccati_rhs(cplx b, double g, double omega);
SqueezingState quench_b_exact(double g, double omega, double t);

struct EvolveOptions {
  double tol = 1e-10;
  std::size_t samples = 512;
};

// Below this value of 1 - 4|b|^2 the integration aborts.
inline constexpr double kBlowupThreshold = 1e-12;

// Sample grid on [0, T]: t = 0, a geometric grid from T*1e-4, and a uniform grid, merged.
std::vector<double> sample_times(double T, std::size_t samples);

Trajectory evolve_b(const CouplingSchedule& s, double omega, double T,
                    const EvolveOptions& opt = {});
// Arbitrary coupling g(t), output at the given ascending times (> 0), starting from b0 at 0.
Trajectory evolve_b(const std::function<double(double)>& g_of_t, double omega,
                    std::span<const double> times, double tol = 1e-10, cplx b0 = 0.0);

struct SensitivitySample {
  double t;
  cplx b;
  cplx s;
};

SensitivityState evolve_sensitivity(const CouplingSchedule& s, const EstimandTag& x,
                                    const EffectiveParams& e, double T, double tol = 1e-10);
// One integration serving every output time; the schedule's duration must cover the times.
std::vector<SensitivitySample> evolve_sensitivity_series(const CouplingSchedule& s,
                                                         const DriveSensitivity& d, double omega,
                                                         std::span<const double> times,
                                                         double tol = 1e-10);

double qfi_squeezed(cplx b, cplx s);
inline double qfi_squeezed(const SensitivityState& st) { return qfi_squeezed(st.b, st.s); }
double snr(double x, double qfi);

}  // namespace critq
