#pragma once

#include <complex>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "critq/kernels.hpp"
#include "critq/model.hpp"

namespace critq {

using cplx = std::complex<double>;

struct FockVector {
  std::vector<cplx> amp;  // c_0 .. c_Nmax

  static FockVector vacuum(std::size_t nmax);
  std::size_t nmax() const { return amp.size() - 1; }
  double norm() const;
  // Occupation of levels n > 0.9 Nmax.
  double tail() const;
};

// Default tail-occupation threshold for truncation adequacy.
inline constexpr double kTailThreshold = 1e-10;

class BandedHamiltonian {
 public:
  BandedHamiltonian(std::size_t nmax, double omega, double g, double eta, QuarticKind kind);

  std::size_t dim() const { return d0_.size(); }
  std::size_t nmax() const { return d0_.size() - 1; }
  double omega() const { return omega_; }
  double g() const { return g_; }
  double eta() const { return eta_; }
  QuarticKind kind() const { return kind_; }
  // Coefficient of x^4 in energy units.
  double quartic_coefficient() const { return quartic_; }

  const std::vector<double>& d0() const { return d0_; }
  const std::vector<double>& d2() const { return d2_; }
  const std::vector<double>& d4() const { return d4_; }
  kernels::BandView view() const { return {d0_.data(), d2_.data(), d4_.data(), d0_.size()}; }
  double element(std::size_t i, std::size_t j) const;

 private:
  double omega_, g_, eta_;
  QuarticKind kind_;
  double quartic_;
  std::vector<double> d0_, d2_, d4_;
};

// omega [p^2/2 + (1 - g^2) x^2/2 + f(g)/eta x^4]
BandedHamiltonian build_hamiltonian(const EffectiveParams& e, double g, std::size_t nmax);

// Number-basis diagonals of the quadrature operators (exact elements of the infinite matrices).
struct QuadratureBands {
  std::vector<double> x2_d0, x2_d2;
  std::vector<double> p2_d0, p2_d2;
  std::vector<double> x4_d0, x4_d2, x4_d4;
};
QuadratureBands quadrature_bands(std::size_t nmax);

struct SpectrumSlice {
  double e0;
  double e1;
  double gap;
};

SpectrumSlice ground_and_gap(const BandedHamiltonian& h);
FockVector ground_state(const BandedHamiltonian& h);

struct ConvergedSpectrum {
  SpectrumSlice spectrum;
  std::size_t nmax;
};
// Doubles Nmax until the gap moves by less than rel_tol; returns the larger-basis result.
ConvergedSpectrum converged_spectrum(const EffectiveParams& e, double g, std::size_t nmax = 0,
                                     double rel_tol = 1e-6);

std::size_t auto_nmax(const EffectiveParams& e);

struct FockObservables {
  double n;
  double x2;
  double p2;
};
FockObservables observables_fock(const FockVector& psi);
double energy_expectation(const BandedHamiltonian& h, const FockVector& psi);

enum class Propagator { Magnus4, RungeKutta };

struct PropagateOptions {
  double tol = 1e-10;
  Propagator method = Propagator::Magnus4;
  double tail_threshold = kTailThreshold;
};

// Coupling g(t) = coupling_scale * schedule(t) with fixed omega, eta.
struct FockDrive {
  double omega;
  double eta;
  QuarticKind kind;
  double coupling_scale = 1.0;
};

// Step end times of an adaptive run, replayable for perturbed parameters.
struct StepLog {
  std::vector<double> ends;
};

struct PropagationStats {
  std::size_t steps = 0;
  std::size_t rejected = 0;
  std::size_t krylov_max = 0;
  double max_norm_drift = 0.0;
};

using FockObserver = std::function<void(double t, const FockVector& psi)>;

// Evolves |0> under the drive, calling observe at each requested time (ascending, <= T).
// Records accepted steps into `record` if given; follows `replay` exactly if given.
PropagationStats propagate_series(const CouplingSchedule& s, const FockDrive& d,
                                  std::span<const double> times, std::size_t nmax,
                                  const PropagateOptions& opt, const FockObserver& observe,
                                  StepLog* record = nullptr, const StepLog* replay = nullptr);

FockVector propagate(const CouplingSchedule& s, const EffectiveParams& e, double T,
                     std::size_t nmax, const PropagateOptions& opt = {});

struct FockQfiOptions {
  double delta_rel = 1e-5;
  double refine_tol = 1e-3;  // |I(delta) - I(delta/2)| relative
  int max_halvings = 10;     // delta_rel / 2^k, per sample
  PropagateOptions propagate;
};

struct FockQfiSample {
  double t;
  double qfi;            // at the accepted delta
  double qfi_half;       // at half of it
  FockObservables obs;   // nominal state
};

// Nmax = 0 selects auto_nmax and doubles on truncation breach.
std::vector<FockQfiSample> qfi_fock_series(const CouplingSchedule& s, const EffectiveParams& e,
                                           const EstimandTag& x, std::span<const double> times,
                                           std::size_t nmax = 0, const FockQfiOptions& opt = {},
                                           std::size_t* nmax_used = nullptr);

double qfi_fock(const CouplingSchedule& s, const EffectiveParams& e, const EstimandTag& x, double T,
                std::size_t nmax = 0, const FockQfiOptions& opt = {});

// QFI of the ground state at the model's nominal coupling, by finite differences in x.
double ground_state_qfi(const EffectiveParams& e, const EstimandTag& x, std::size_t nmax = 0,
                        double delta_rel = 1e-4);

// Drive for the model at estimand value `value` (unchecked mapping; g may exceed 1 slightly).
FockDrive perturbed_drive(const EffectiveParams& e, const EstimandTag& x, double value);

namespace krylov {

struct ExpResult {
  std::size_t dim;     // Krylov dimension used
  double error;        // a-posteriori estimate
  bool converged;
};

// y = exp(-i tau H) v for the banded real symmetric H.
ExpResult expmv(const kernels::BandView& h, double tau, std::span<const cplx> v, std::span<cplx> y,
                double tol, std::size_t max_dim = 60);

}  // namespace krylov

}  // namespace critq
