#include <gtest/gtest.h>

#include <lapacke.h>

#include <cmath>
#include <numbers>
#include <random>

#include "critq/error.hpp"
#include "critq/fock.hpp"
#include "critq/gaussian.hpp"

using namespace critq;

namespace {

EffectiveParams direct(double g, double eta, QuarticKind q = QuarticKind::Rabi, double w = 1.0) {
  return map_direct({w, EffectiveSize::finite(eta), g, q});
}

EffectiveParams rabi(double g, double eta) {
  return map_quantum_rabi({1.0, eta, 0.5 * g * std::sqrt(eta)});
}

// x in a basis of dimension n, as a dense row-major matrix.
std::vector<double> dense_x(std::size_t n) {
  std::vector<double> x(n * n, 0.0);
  for (std::size_t i = 0; i + 1 < n; ++i) x[i * n + i + 1] = x[(i + 1) * n + i] = std::sqrt((i + 1) / 2.0);
  return x;
}

std::vector<double> matmul(const std::vector<double>& a, const std::vector<double>& b, std::size_t n) {
  std::vector<double> c(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t j = 0; j < n; ++j) c[i * n + j] += a[i * n + k] * b[k * n + j];
  return c;
}

}  // namespace

TEST(Quadratures, VacuumAndExactElements) {
  const std::size_t nmax = 40, big = 60;
  const auto q = quadrature_bands(nmax);
  EXPECT_DOUBLE_EQ(q.x4_d0[0], 0.75);
  EXPECT_DOUBLE_EQ(q.x2_d0[0], 0.5);
  EXPECT_DOUBLE_EQ(q.p2_d0[0], 0.5);
  // Elements from products in a larger basis, away from its edge.
  const auto x = dense_x(big);
  const auto x2 = matmul(x, x, big), x4 = matmul(x2, x2, big);
  for (std::size_t i = 0; i <= nmax; ++i) {
    EXPECT_NEAR(q.x2_d0[i], x2[i * big + i], 1e-12);
    EXPECT_NEAR(q.x4_d0[i], x4[i * big + i], 1e-9);
    if (i + 2 <= nmax) {
      EXPECT_NEAR(q.x2_d2[i], x2[i * big + i + 2], 1e-12);
      EXPECT_NEAR(q.p2_d2[i], -x2[i * big + i + 2], 1e-12);
      EXPECT_NEAR(q.x4_d2[i], x4[i * big + i + 2], 1e-9);
    }
    if (i + 4 <= nmax) EXPECT_NEAR(q.x4_d4[i], x4[i * big + i + 4], 1e-9);
  }
  // The truncated edge keeps the untruncated value.
  EXPECT_NEAR(q.x4_d0[nmax], (6.0 * nmax * nmax + 6.0 * nmax + 3) / 4, 1e-9);
}

TEST(Hamiltonian, QuarticCoefficientAndSymmetry) {
  const auto h = build_hamiltonian(rabi(1.0, 250.0), 1.0, 32);
  EXPECT_NEAR(h.quartic_coefficient(), 1.0 / (4 * 250.0), 1e-15);
  for (std::size_t i = 0; i < h.dim(); ++i)
    for (std::size_t j = 0; j < h.dim(); ++j) EXPECT_EQ(h.element(i, j), h.element(j, i));
  EXPECT_EQ(h.element(0, 1), 0.0);
  EXPECT_EQ(h.element(0, 6), 0.0);
  EXPECT_THROW(build_hamiltonian(rabi(1.0, 250.0), 1.0, 8), ValidationError);
  EXPECT_THROW(build_hamiltonian(map_direct({1.0, EffectiveSize::infinite(), 0.5, QuarticKind::None}), 0.5, 32),
               ValidationError);
}

TEST(Spectrum, HarmonicLimits) {
  auto sp = ground_and_gap(build_hamiltonian(direct(0.0, 10.0, QuarticKind::None, 2.0), 0.0, 64));
  EXPECT_NEAR(sp.e0, 1.0, 1e-12);
  EXPECT_NEAR(sp.gap, 2.0, 1e-12);
  // Parity-even ladder: the two lowest states are n=0 and n=1 at g=0.
  const auto e = direct(std::sqrt(0.75), 10.0, QuarticKind::None);
  const auto h = build_hamiltonian(e, e.g, 256);
  sp = ground_and_gap(h);
  EXPECT_NEAR(sp.gap, 0.5, 1e-9);
  const auto o = observables_fock(ground_state(h));
  EXPECT_NEAR(o.x2, 1.0, 1e-9);
  EXPECT_NEAR(o.n, photon_number(ground_state_b(e.g).b()), 1e-9);
}

TEST(Spectrum, CriticalGapScaling) {
  std::vector<double> c;
  for (double eta : {1e2, 1e3, 1e4}) {
    const auto sp = converged_spectrum(rabi(1.0, eta), 1.0);
    EXPECT_GT(sp.spectrum.gap, 0.0);
    c.push_back(sp.spectrum.gap * std::cbrt(eta));
  }
  for (double v : c) EXPECT_NEAR(v / c.front(), 1.0, 0.1);
}

TEST(Observables, VacuumAndCriticalSpread) {
  const auto o = observables_fock(FockVector::vacuum(20));
  EXPECT_EQ(o.n, 0.0);
  EXPECT_DOUBLE_EQ(o.x2, 0.5);
  EXPECT_DOUBLE_EQ(o.p2, 0.5);
  std::vector<double> scaled;
  for (double eta : {1e2, 1e3, 1e4}) {
    const auto e = rabi(1.0, eta);
    const auto sp = converged_spectrum(e, 1.0);
    const auto gs = ground_state(build_hamiltonian(e, 1.0, sp.nmax));
    scaled.push_back(observables_fock(gs).x2 / std::cbrt(eta));
    // The critical region replaces 1 - g^2 by eta^(-2/3).
    const double gstar = std::sqrt(1 - std::pow(eta, -2.0 / 3.0));
    const double heur = variance_x(ground_state_b(gstar).b());
    const double ratio = observables_fock(gs).x2 / heur;
    EXPECT_GE(ratio, 0.5);
    EXPECT_LE(ratio, 2.0);
  }
  for (double v : scaled) EXPECT_NEAR(v / scaled.front(), 1.0, 0.1);
}

// Lanczos exponential against a dense eigendecomposition.
TEST(Krylov, MatchesDenseExponential) {
  const auto h = build_hamiltonian(rabi(0.9, 50.0), 0.9, 40);
  const std::size_t n = h.dim();
  std::vector<double> a(n * n), w(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) a[i * n + j] = h.element(i, j);
  ASSERT_EQ(LAPACKE_dsyev(LAPACK_ROW_MAJOR, 'V', 'U', static_cast<int>(n), a.data(), static_cast<int>(n), w.data()), 0);
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g;
  std::vector<cplx> v(n), y(n);
  for (auto& z : v) z = {g(rng), g(rng)};
  double nv = 0;
  for (auto& z : v) nv += std::norm(z);
  for (auto& z : v) z /= std::sqrt(nv);
  for (double tau : {0.01, 0.1, 0.5}) {
    const auto r = krylov::expmv(h.view(), tau, v, y, 1e-13);
    ASSERT_TRUE(r.converged);
    for (std::size_t i = 0; i < n; ++i) {
      cplx ref = 0;
      for (std::size_t k = 0; k < n; ++k) {
        cplx c = 0;
        for (std::size_t j = 0; j < n; ++j) c += a[j * n + k] * v[j];
        ref += a[i * n + k] * std::exp(cplx(0, -tau * w[k])) * c;
      }
      EXPECT_LT(std::abs(y[i] - ref), 1e-11) << tau;
    }
  }
}

TEST(Propagate, ZeroCouplingStaysVacuum) {
  const FockDrive d{1.0, 100.0, QuarticKind::Rabi, 0.0};
  const std::vector<double> ts = {1.0, 10.0, 37.0};
  propagate_series(CouplingSchedule::quench(0.5, 37.0), d, ts, 32, {}, [](double, const FockVector& psi) {
    EXPECT_NEAR(std::abs(psi.amp[0]), 1.0, 1e-12);
    EXPECT_NEAR(psi.norm(), 1.0, 1e-12);
  });
}

TEST(Propagate, GaussianLimitHalfPeriod) {
  const double g = std::sqrt(0.8), tau = std::numbers::pi / std::sqrt(0.2);
  const auto e = rabi(g, 1e6);
  const auto psi = propagate(CouplingSchedule::quench(g, tau / 2), e, tau / 2, 64);
  EXPECT_NEAR(observables_fock(psi).n / 0.8, 1.0, 0.01);
  EXPECT_NEAR(psi.norm(), 1.0, 1e-9);
}

TEST(Propagate, CriticalRevivals) {
  const auto e = rabi(1.0, 1e3);
  std::vector<double> ts;
  for (int k = 1; k <= 300; ++k) ts.push_back(k * 1.0);
  std::vector<double> n;
  const FockDrive d{e.omega, e.eta.value(), e.quartic, 1.0};
  propagate_series(CouplingSchedule::quench(1.0, 300.0), d, ts, 256, {},
                   [&](double, const FockVector& psi) { n.push_back(observables_fock(psi).n); });
  // Free growth would give N = T^2/4 = 22500 at T = 300.
  double peak = 0;
  for (double v : n) peak = std::max(peak, v);
  EXPECT_LT(peak, 100.0);
  int turns = 0;
  for (std::size_t i = 1; i + 1 < n.size(); ++i)
    if (n[i] > n[i - 1] && n[i] > n[i + 1]) ++turns;
  EXPECT_GE(turns, 2);
}

TEST(Propagate, EnergyConservation) {
  const auto e = rabi(0.9, 200.0);
  const auto h = build_hamiltonian(e, e.g, 128);
  const FockDrive d{e.omega, e.eta.value(), e.quartic, 1.0};
  std::vector<double> ts;
  for (int k = 1; k <= 20; ++k) ts.push_back(5.0 * k);
  std::vector<double> energy;
  const auto stats = propagate_series(CouplingSchedule::quench(e.g, 100.0), d, ts, 128, {},
                                      [&](double, const FockVector& psi) { energy.push_back(energy_expectation(h, psi)); });
  const double e0 = energy_expectation(h, FockVector::vacuum(128));
  for (double v : energy) EXPECT_LT(std::abs(v - e0) / std::abs(e0), 1e-8);
  EXPECT_LT(stats.max_norm_drift, 1e-9);
}

TEST(Propagate, MagnusAgreesWithRungeKutta) {
  const auto e = rabi(1.0, 100.0);
  for (const auto& s : {CouplingSchedule::ramp(2.0, 15.0), CouplingSchedule::adiabatic(0.1, 1.0, 15.0)}) {
    PropagateOptions m, r;
    r.method = Propagator::RungeKutta;
    const auto a = propagate(s, e, 15.0, 96, m), b = propagate(s, e, 15.0, 96, r);
    double diff = 0;
    for (std::size_t i = 0; i < a.amp.size(); ++i) diff = std::max(diff, std::abs(a.amp[i] - b.amp[i]));
    EXPECT_LT(diff, 1e-7) << s.name();
  }
}

TEST(Propagate, TruncationBreachReported) {
  const auto e = rabi(1.0, 1e6);
  try {
    propagate(CouplingSchedule::quench(1.0, 40.0), e, 40.0, 24);
    FAIL() << "expected truncation error";
  } catch (const TruncationError& err) {
    EXPECT_GT(err.time(), 0.0);
    EXPECT_LT(err.time(), 40.0);
    EXPECT_GT(err.tail(), kTailThreshold);
  }
}

TEST(QfiFock, GaussianLimit) {
  const PhysicalParams p = RabiParams{1.0, 1e6, 0.5 * std::sqrt(0.8) * 1e3};
  const auto e = map_effective(p);
  const auto s = CouplingSchedule::quench(e.g, 20.0);
  std::vector<double> ts = {2.0, 5.0, 10.0, 20.0};
  for (Estimand w : {Estimand::RabiOmega, Estimand::RabiLambda}) {
    const auto x = make_estimand(p, w);
    const auto f = qfi_fock_series(s, e, x, ts);
    const auto ginf = map_quantum_rabi({1.0, 1e12, 0.5 * std::sqrt(0.8) * 1e6});
    const auto xg = make_estimand(ginf.source, w);
    const auto d = drive_sensitivity(xg, ginf);
    const auto gs = evolve_sensitivity_series(s, d, 1.0, ts);
    for (std::size_t i = 0; i < ts.size(); ++i) {
      const double Ig = qfi_squeezed(gs[i].b, gs[i].s);
      EXPECT_NEAR(snr(x.value, f[i].qfi) / snr(xg.value, Ig), 1.0, 0.01) << ts[i];
      EXPECT_NEAR(f[i].obs.n / photon_number(gs[i].b), 1.0, 0.01);
      EXPECT_NEAR(f[i].qfi_half / f[i].qfi, 1.0, 1e-3);
    }
  }
}

TEST(QfiFock, TruncationDoublingStable) {
  const auto e = rabi(1.0, 100.0);
  const auto x = make_estimand(e.source, Estimand::RabiOmega);
  const auto s = CouplingSchedule::quench(1.0, 30.0);
  const double a = qfi_fock(s, e, x, 30.0, 64), b = qfi_fock(s, e, x, 30.0, 128);
  EXPECT_NEAR(a / b, 1.0, 1e-3);
}

TEST(QfiFock, GroundStateMatchesGaussian) {
  // g^2 = 0.75 at eta = 1e7: the quartic correction is negligible.
  const double g = std::sqrt(0.75);
  const auto e = rabi(g, 1e7);
  const auto x = make_estimand(e.source, Estimand::RabiLambda);
  const double I = ground_state_qfi(e, x, 128);
  // d b / d lambda through the ground-state formula.
  const double h = 1e-6;
  const double dbdg = (ground_state_b(g + h).b().real() - ground_state_b(g - h).b().real()) / (2 * h);
  const double dgdl = e.g / x.value;
  const double Ig = qfi_squeezed(ground_state_b(g).b(), dbdg * dgdl);
  EXPECT_NEAR(I / Ig, 1.0, 1e-3);
}
