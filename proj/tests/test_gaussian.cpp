#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "critq/error.hpp"
#include "critq/gaussian.hpp"

using namespace critq;
using namespace std::complex_literals;

namespace {

// <b1|b2> for normalized squeezed vacua.
cplx overlap(cplx b1, cplx b2) {
  const double n1 = std::pow(1 - 4 * std::norm(b1), 0.25), n2 = std::pow(1 - 4 * std::norm(b2), 0.25);
  return n1 * n2 / std::sqrt(1.0 - 4.0 * std::conj(b1) * b2);
}

EffectiveParams direct(double g, double w = 1.0) {
  return map_direct({w, EffectiveSize::infinite(), g, QuarticKind::None});
}

}  // namespace

TEST(GroundState, Examples) {
  EXPECT_EQ(ground_state_b(0.0).b(), cplx(0.0));
  const auto st = ground_state_b(std::sqrt(0.75));
  EXPECT_NEAR(st.b().real(), 1.0 / 6.0, 1e-15);
  EXPECT_EQ(st.b().imag(), 0.0);
  EXPECT_NEAR(variance_x(st.b()), 1.0, 1e-14);
  EXPECT_NEAR(variance_x(st.b()), 1 / (2 * std::sqrt(0.25)), 1e-14);
  EXPECT_THROW(ground_state_b(1.0), ValidationError);
}

TEST(SqueezingStateType, Invariants) {
  EXPECT_THROW(SqueezingState(cplx(0.5, 0.0)), ValidationError);
  const SqueezingState s(0.25 + 0.25i);
  EXPECT_NEAR(s.magnitude(), std::atanh(2 * std::abs(s.b())), 1e-15);
  EXPECT_NEAR(s.angle(), std::numbers::pi / 4, 1e-15);
  EXPECT_NEAR(photon_number(s), std::pow(std::sinh(s.magnitude()), 2), 1e-13);
}

TEST(Riccati, Examples) {
  EXPECT_EQ(riccati_rhs(0.0, 0.0, 1.0), cplx(0.0));
  EXPECT_NEAR(std::abs(riccati_rhs(0.0, 1.0, 1.0) - 0.25i), 0.0, 1e-16);
  for (double g : {0.1, 0.5, 0.9, 0.999})
    EXPECT_LT(std::abs(riccati_rhs(ground_state_b(g).b(), g, 2.0)), 1e-14);
}

TEST(PhotonNumber, Examples) {
  EXPECT_EQ(photon_number(0.0), 0.0);
  EXPECT_NEAR(photon_number(1.0 / 3.0), 0.8, 1e-14);
  EXPECT_NEAR(photon_number(0.25 + 0.25i), 1.0, 1e-14);
}

TEST(QuenchExact, Examples) {
  const double tau = std::numbers::pi / std::sqrt(0.2);
  const double g = std::sqrt(0.8);
  EXPECT_LT(std::abs(quench_b_exact(g, 1.0, tau).b()), 1e-14);
  EXPECT_NEAR(std::abs(quench_b_exact(g, 1.0, tau / 2).b() - 1.0 / 3.0), 0.0, 1e-14);
  EXPECT_NEAR(std::abs(quench_b_exact(1.0, 1.0, 2.0).b() - (0.25 + 0.25i)), 0.0, 1e-15);
  EXPECT_EQ(quench_b_exact(0.0, 1.0, 5.0).b(), cplx(0.0));
  EXPECT_EQ(quench_b_exact(0.7, 1.0, 0.0).b(), cplx(0.0));
}

TEST(EvolveB, QuenchExamples) {
  const double g = std::sqrt(0.8), tau = std::numbers::pi / std::sqrt(0.2);
  auto tr = evolve_b(CouplingSchedule::quench(g, tau), 1.0, tau);
  EXPECT_DOUBLE_EQ(tr.samples.back().t, tau);
  EXPECT_LT(std::abs(tr.samples.back().b), 1e-9);
  tr = evolve_b(CouplingSchedule::quench(g, tau / 2), 1.0, tau / 2);
  EXPECT_NEAR(std::abs(tr.samples.back().b - 1.0 / 3.0), 0.0, 1e-9);
  tr = evolve_b(CouplingSchedule::quench(1.0, 2.0), 1.0, 2.0);
  EXPECT_NEAR(std::abs(tr.samples.back().b - (0.25 + 0.25i)), 0.0, 1e-9);
}

TEST(EvolveB, OracleEquivalence) {
  const double tol = 1e-10;
  for (double g2 : {0.5, 0.8, 0.9, 0.95, 1.0}) {
    const double g = std::sqrt(g2);
    EvolveOptions opt;
    opt.tol = tol;
    const auto tr = evolve_b(CouplingSchedule::quench(g, 50.0), 1.0, 50.0, opt);
    double worst = 0;
    for (const auto& s : tr.samples) worst = std::max(worst, std::abs(s.b - quench_b_exact(g, 1.0, s.t).b()));
    EXPECT_LT(worst, 10 * tol) << "g^2=" << g2;
  }
}

TEST(EvolveB, TrajectoryInvariants) {
  EvolveOptions opt;
  opt.samples = 100;
  const auto tr = evolve_b(CouplingSchedule::ramp(2.0, 30.0), 1.0, 30.0, opt);
  for (std::size_t i = 1; i < tr.samples.size(); ++i) EXPECT_GT(tr.samples[i].t, tr.samples[i - 1].t);
  for (const auto& s : tr.samples) EXPECT_LT(std::abs(s.b), 0.5);
  EXPECT_GT(tr.info.steps, 0u);
  std::ostringstream os;
  tr.write_csv(os);
  EXPECT_EQ(os.str().substr(0, 15), "t,re_b,im_b,N\n0");
}

TEST(EvolveB, Stationarity) {
  const double tol = 1e-10;
  for (double g : {0.3, 0.8, 0.99}) {
    const cplx b0 = ground_state_b(g).b();
    std::vector<double> ts;
    for (int k = 1; k <= 50; ++k) ts.push_back(k * 2.0);
    const auto tr = evolve_b([g](double) { return g; }, 1.0, ts, tol, b0);
    for (const auto& s : tr.samples) EXPECT_LT(std::abs(s.b - b0), tol) << g;
  }
}

TEST(EvolveB, Periodicity) {
  for (double g2 : {0.5, 0.9}) {
    const double g = std::sqrt(g2), tau = std::numbers::pi / std::sqrt(1 - g2);
    std::vector<double> ts;
    for (int k = 1; k <= 40; ++k) ts.push_back(0.025 * k * tau);
    for (int k = 1; k <= 40; ++k) ts.push_back(tau + 0.025 * k * tau);
    const auto tr = evolve_b([g](double) { return g; }, 1.0, ts, 1e-11);
    const double nmax = g2 * g2 / (4 * (1 - g2));
    for (int k = 0; k < 40; ++k) {
      EXPECT_LT(std::abs(tr.samples[k].b - tr.samples[k + 40].b), 1e-8);
      EXPECT_LE(tr.samples[k].n, nmax * (1 + 1e-8));
    }
  }
}

TEST(EvolveB, CriticalGrowth) {
  const auto tr = evolve_b(CouplingSchedule::quench(1.0, 40.0), 1.0, 40.0);
  for (const auto& s : tr.samples) {
    EXPECT_NEAR(s.n, s.t * s.t / 4, 1e-8 * (1 + s.t * s.t));
    if (s.t > 0) EXPECT_NEAR(std::arg(s.b), std::atan(2 / s.t), 1e-8);
  }
}

TEST(EvolveB, BlowUpReported) {
  // Above the critical point 1 - 4|b|^2 decays like exp(-2 sqrt(g^2 - 1) wt): crosses 1e-12 near wt = 12.
  std::vector<double> ts;
  for (int k = 1; k <= 25; ++k) ts.push_back(2.0 * k);
  try {
    evolve_b([](double) { return 1.5; }, 1.0, ts);
    FAIL() << "expected blow-up";
  } catch (const IntegrationError& e) {
    EXPECT_GT(e.time(), 8.0);
    EXPECT_LT(e.time(), 20.0);
  }
}

TEST(EvolveB, AdiabaticFollowsGroundState) {
  for (double phi : {0.01, 0.005}) {
    for (double T : {100.0, 300.0, 1000.0}) {
      const auto s = CouplingSchedule::adiabatic(phi, 1.0, T);
      const auto tr = evolve_b(s, 1.0, T);
      EXPECT_LT(std::abs(tr.samples.back().b - ground_state_b(schedule_value(s, T)).b()), 1e-2);
    }
  }
}

TEST(QfiSqueezed, Examples) {
  EXPECT_EQ(qfi_squeezed(0.2, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(qfi_squeezed(0.0, 1.0), 8.0);
  // Ground state in eps = 1 - g^2 at eps = 1/4.
  const double eps = 0.25;
  const cplx s = -1.0 / (2 * std::sqrt(eps) * std::pow(1 + std::sqrt(eps), 2));
  EXPECT_NEAR(s.real(), -4.0 / 9.0, 1e-15);
  EXPECT_NEAR(qfi_squeezed(1.0 / 6.0, s), 1 / (8 * eps * eps), 1e-13);
  EXPECT_DOUBLE_EQ(snr(1.0, 8.0), 8.0);
  EXPECT_DOUBLE_EQ(snr(3.0, 2.0), 18.0);
}

// Fidelity QFI from the analytic overlap against the closed form.
TEST(QfiSqueezed, OverlapOracle) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int k = 0; k < 200; ++k) {
    cplx b(0.35 * u(rng), 0.35 * u(rng));
    const cplx s(u(rng), u(rng));
    const double d = 1e-5;
    const double fid = std::abs(overlap(b, b + d * s));
    const double I_fid = 8 * (1 - fid) / (d * d);
    const double I = qfi_squeezed(b, s);
    EXPECT_NEAR(I_fid, I, 1e-3 * I);
  }
}

TEST(Sensitivity, AbsentParameter) {
  const auto e = direct(0.7);
  const auto s = CouplingSchedule::quench(0.7, 10.0);
  const std::vector<double> ts = {1.0, 10.0};
  const auto out = evolve_sensitivity_series(s, DriveSensitivity{0.0, 0.0}, 1.0, ts);
  for (const auto& p : out) EXPECT_EQ(p.s, cplx(0.0));
  (void)e;
}

// The asymptote i wT holds up to a constant: the exact series gives g s -> (2/3) i wT.
TEST(Sensitivity, CriticalQuenchAsymptote) {
  const auto e = direct(1.0);
  const auto x = make_estimand(e.source, Estimand::DirectCoupling);
  const std::vector<double> ts = {1e3, 2e3, 4e3};
  const auto out = evolve_sensitivity_series(CouplingSchedule::quench(1.0, 4e3), drive_sensitivity(x, e), 1.0, ts, 1e-11);
  for (const auto& p : out) {
    EXPECT_NEAR(std::abs(p.s) / p.t, 2.0 / 3.0, 2e-3);
    EXPECT_NEAR(std::arg(p.s), std::numbers::pi / 2, 5e-3);
  }
}

// Q_lambda = (2/9) T^6 + (2/3) T^4 + 2 T^2 at the critical quench (exact series expansion).
TEST(Sensitivity, CriticalQuenchPolynomial) {
  const PhysicalParams p = RabiParams{1.0, 1e12, 0.5e6};
  const auto e = map_effective(p);
  const auto x = make_estimand(p, Estimand::RabiLambda);
  for (double T : {0.5, 1.0, 3.0, 10.0, 50.0}) {
    const double q = snr(x.value, qfi_squeezed(evolve_sensitivity(CouplingSchedule::quench(1.0, T), x, e, T, 1e-12)));
    const double ref = 2.0 / 9 * std::pow(T, 6) + 2.0 / 3 * std::pow(T, 4) + 2 * T * T;
    EXPECT_NEAR(q / ref, 1.0, 1e-7) << T;
  }
}

// Forward sensitivity against central differences of evolve_b.
TEST(Sensitivity, FiniteDifferenceOracle) {
  const PhysicalParams rabi = RabiParams{1.0, 1e12, 0.45e6};
  const auto check = [](const CouplingSchedule& sched, const PhysicalParams& p, Estimand which, double T) {
    const auto e = map_effective(p);
    const auto x = make_estimand(p, which);
    const auto st = evolve_sensitivity(sched, x, e, T, 1e-12);
    const double d = 1e-6 * x.value;
    auto endpoint = [&](double v) {
      const auto raw = map_unchecked(with_estimand(p, which, v));
      const double scale = raw.g / e.g;
      const std::vector<double> ts = {T};
      return evolve_b([&](double t) { return scale * coupling_at(sched, t); }, raw.omega, ts, 1e-13)
          .samples.back()
          .b;
    };
    const cplx fd = (endpoint(x.value + d) - endpoint(x.value - d)) / (2 * d);
    EXPECT_NEAR(std::abs(st.s - fd), 0.0, 1e-4 * std::abs(fd)) << sched.name() << " " << estimand_name(which);
  };
  for (Estimand w : {Estimand::RabiOmega, Estimand::RabiLambda, Estimand::RabiQubitOmega}) {
    check(CouplingSchedule::quench(0.9, 15.0), rabi, w, 15.0);
    check(CouplingSchedule::ramp(2.0, 25.0), rabi, w, 25.0);
    check(CouplingSchedule::adiabatic(0.05, 1.0, 40.0), rabi, w, 40.0);
  }
  const PhysicalParams lmg = LmgParams{1.0, 0.6, 1e12};
  check(CouplingSchedule::quench(std::sqrt(0.6), 12.0), lmg, Estimand::LmgField, 12.0);
  check(CouplingSchedule::quench(std::sqrt(0.6), 12.0), lmg, Estimand::LmgInteraction, 12.0);
}

TEST(Snr, QuenchOmegaOverLambda) {
  const PhysicalParams p = RabiParams{1.0, 1e12, 0.5e6};
  const auto e = map_effective(p);
  const double T = 1000.0;
  const auto s = CouplingSchedule::quench(1.0, T);
  const auto xw = make_estimand(p, Estimand::RabiOmega), xl = make_estimand(p, Estimand::RabiLambda);
  const double qw = snr(xw.value, qfi_squeezed(evolve_sensitivity(s, xw, e, T)));
  const double ql = snr(xl.value, qfi_squeezed(evolve_sensitivity(s, xl, e, T)));
  EXPECT_NEAR(qw / ql, 0.25, 0.01);
}

TEST(Snr, AdiabaticPrefactorOrder) {
  const PhysicalParams p = RabiParams{1.0, 1e12, 0.5e6};
  const auto e = map_effective(p);
  const auto x = make_estimand(p, Estimand::RabiOmega);
  for (double T : {1000.0, 3000.0}) {
    const auto s = CouplingSchedule::adiabatic(0.01, 1.0, T);
    const double q = snr(x.value, qfi_squeezed(evolve_sensitivity(s, x, e, T)));
    const double ref = std::pow(0.01 * T, 4);
    EXPECT_GT(q / ref, 0.05);
    EXPECT_LT(q / ref, 1.0);
  }
}
