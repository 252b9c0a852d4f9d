#include "critq/fock.hpp"

#include <lapacke.h>

#include <algorithm>
#include <cmath>
#include <string>

#include "critq/error.hpp"
#include "critq/ode.hpp"

namespace critq {

namespace kn = critq::kernels;

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw ValidationError(msg);
}

// H = cp P^2 + cx2 X^2 + cx4 X^4
struct Mix {
  double cp, cx2, cx4;
};

Mix operator*(double a, const Mix& m) { return {a * m.cp, a * m.cx2, a * m.cx4}; }
Mix operator+(const Mix& a, const Mix& b) { return {a.cp + b.cp, a.cx2 + b.cx2, a.cx4 + b.cx4}; }

Mix hamiltonian_mix(double omega, double g, double eta, QuarticKind kind) {
  const double quartic = std::isinf(eta) ? 0.0 : omega * quartic_prefactor(kind, g) / eta;
  return {0.5 * omega, 0.5 * omega * (1.0 - g) * (1.0 + g), quartic};
}

struct Band {
  std::vector<double> d0, d2, d4;
  explicit Band(std::size_t dim)
      : d0(dim), d2(dim >= 2 ? dim - 2 : 0), d4(dim >= 4 ? dim - 4 : 0) {}
  kn::BandView view() const { return {d0.data(), d2.data(), d4.data(), d0.size()}; }
};

void fill(const QuadratureBands& q, const Mix& m, Band& b) {
  for (std::size_t i = 0; i < b.d0.size(); ++i)
    b.d0[i] = m.cp * q.p2_d0[i] + m.cx2 * q.x2_d0[i] + m.cx4 * q.x4_d0[i];
  for (std::size_t i = 0; i < b.d2.size(); ++i)
    b.d2[i] = m.cp * q.p2_d2[i] + m.cx2 * q.x2_d2[i] + m.cx4 * q.x4_d2[i];
  for (std::size_t i = 0; i < b.d4.size(); ++i) b.d4[i] = m.cx4 * q.x4_d4[i];
}

double tail_of(std::span<const cplx> a) {
  const std::size_t nmax = a.size() - 1;
  const std::size_t first = static_cast<std::size_t>(std::floor(0.9 * static_cast<double>(nmax))) + 1;
  double s = 0;
  for (std::size_t n = first; n < a.size(); ++n) s += std::norm(a[n]);
  return s;
}

struct Eigen2 {
  double e0, e1;
  std::vector<double> v0;
};

// Two lowest eigenpairs of the banded matrix (LAPACK banded solver).
Eigen2 lowest_two(const BandedHamiltonian& h) {
  const lapack_int n = static_cast<lapack_int>(h.dim());
  const lapack_int kd = 4, ldab = kd + 1;
  std::vector<double> ab(static_cast<std::size_t>(ldab) * n, 0.0);
  for (lapack_int j = 0; j < n; ++j) {
    ab[0 + j * ldab] = h.d0()[j];
    if (j + 2 < n) ab[2 + j * ldab] = h.d2()[j];
    if (j + 4 < n) ab[4 + j * ldab] = h.d4()[j];
  }
  std::vector<double> q(static_cast<std::size_t>(n) * n), w(n), z(static_cast<std::size_t>(n) * 2);
  std::vector<lapack_int> ifail(n);
  lapack_int m = 0;
  const double abstol = 2.0 * LAPACKE_dlamch('S');
  const lapack_int info = LAPACKE_dsbevx(LAPACK_COL_MAJOR, 'V', 'I', 'L', n, kd, ab.data(), ldab,
                                         q.data(), n, 0.0, 0.0, 1, 2, abstol, &m, w.data(),
                                         z.data(), n, ifail.data());
  if (info != 0 || m != 2)
    throw ConvergenceError("banded eigensolve failed (info = " + std::to_string(info) + ")");
  Eigen2 out{w[0], w[1], std::vector<double>(z.begin(), z.begin() + n)};
  // Residual of the ground pair.
  std::vector<cplx> v(n), hv(n);
  for (lapack_int i = 0; i < n; ++i) v[i] = out.v0[i];
  kn::band_matvec(h.view(), v.data(), hv.data());
  double res = 0, scale = 0;
  for (lapack_int i = 0; i < n; ++i) {
    res = std::max(res, std::abs(hv[i].real() - out.e0 * out.v0[i]));
    scale = std::max(scale, std::abs(h.d0()[i]));
  }
  if (res > 1e-9 * std::max(1.0, scale))
    throw ConvergenceError("banded eigensolve residual " + std::to_string(res));
  return out;
}

}  // namespace

FockVector FockVector::vacuum(std::size_t nmax) {
  FockVector v;
  v.amp.assign(nmax + 1, cplx(0.0, 0.0));
  v.amp[0] = 1.0;
  return v;
}

double FockVector::norm() const { return std::sqrt(kn::norm_sq(amp.data(), amp.size())); }

double FockVector::tail() const { return tail_of(amp); }

QuadratureBands quadrature_bands(std::size_t nmax) {
  const std::size_t dim = nmax + 1;
  QuadratureBands q;
  q.x2_d0.resize(dim);
  q.p2_d0.resize(dim);
  q.x4_d0.resize(dim);
  q.x2_d2.resize(dim - 2);
  q.p2_d2.resize(dim - 2);
  q.x4_d2.resize(dim - 2);
  q.x4_d4.resize(dim - 4);
  for (std::size_t i = 0; i < dim; ++i) {
    const double n = static_cast<double>(i);
    q.x2_d0[i] = n + 0.5;
    q.p2_d0[i] = n + 0.5;
    q.x4_d0[i] = (6.0 * n * n + 6.0 * n + 3.0) / 4.0;
    if (i + 2 < dim) {
      const double r = std::sqrt((n + 1.0) * (n + 2.0));
      q.x2_d2[i] = 0.5 * r;
      q.p2_d2[i] = -0.5 * r;
      q.x4_d2[i] = (4.0 * n + 6.0) * r / 4.0;
    }
    if (i + 4 < dim) q.x4_d4[i] = std::sqrt((n + 1.0) * (n + 2.0) * (n + 3.0) * (n + 4.0)) / 4.0;
  }
  return q;
}

BandedHamiltonian::BandedHamiltonian(std::size_t nmax, double omega, double g, double eta,
                                     QuarticKind kind)
    : omega_(omega), g_(g), eta_(eta), kind_(kind) {
  require(nmax >= 16, "Fock truncation requires Nmax >= 16");
  require(omega > 0, "omega must be positive");
  const Mix m = hamiltonian_mix(omega, g, eta, kind);
  quartic_ = m.cx4;
  const QuadratureBands q = quadrature_bands(nmax);
  Band b(nmax + 1);
  fill(q, m, b);
  d0_ = std::move(b.d0);
  d2_ = std::move(b.d2);
  d4_ = std::move(b.d4);
}

double BandedHamiltonian::element(std::size_t i, std::size_t j) const {
  if (i > j) std::swap(i, j);
  const std::size_t k = j - i;
  if (j >= dim()) return 0.0;
  if (k == 0) return d0_[i];
  if (k == 2) return d2_[i];
  if (k == 4) return d4_[i];
  return 0.0;
}

BandedHamiltonian build_hamiltonian(const EffectiveParams& e, double g, std::size_t nmax) {
  require(!e.eta.is_infinite(), "Fock simulation requires finite eta");
  require(g >= 0 && g <= 1.0, "coupling outside the normal phase");
  return BandedHamiltonian(nmax, e.omega, g, e.eta.value(), e.quartic);
}

SpectrumSlice ground_and_gap(const BandedHamiltonian& h) {
  const Eigen2 ev = lowest_two(h);
  return {ev.e0, ev.e1, ev.e1 - ev.e0};
}

FockVector ground_state(const BandedHamiltonian& h) {
  const Eigen2 ev = lowest_two(h);
  FockVector v;
  v.amp.resize(h.dim());
  // Sign convention: largest-magnitude component positive.
  std::size_t imax = 0;
  for (std::size_t i = 0; i < h.dim(); ++i)
    if (std::abs(ev.v0[i]) > std::abs(ev.v0[imax])) imax = i;
  const double sgn = ev.v0[imax] < 0 ? -1.0 : 1.0;
  for (std::size_t i = 0; i < h.dim(); ++i) v.amp[i] = sgn * ev.v0[i];
  return v;
}

std::size_t auto_nmax(const EffectiveParams& e) {
  require(!e.eta.is_infinite(), "Fock simulation requires finite eta");
  const double n = 8.0 * std::cbrt(e.eta.value());
  return std::max<std::size_t>(64, static_cast<std::size_t>(std::ceil(n)));
}

ConvergedSpectrum converged_spectrum(const EffectiveParams& e, double g, std::size_t nmax,
                                     double rel_tol) {
  std::size_t n = nmax ? nmax : auto_nmax(e);
  SpectrumSlice prev = ground_and_gap(build_hamiltonian(e, g, n));
  for (int k = 0; k < 8; ++k) {
    const SpectrumSlice next = ground_and_gap(build_hamiltonian(e, g, 2 * n));
    n *= 2;
    if (std::abs(next.gap - prev.gap) <= rel_tol * std::abs(next.gap)) return {next, n};
    prev = next;
  }
  throw ConvergenceError("gap did not converge under Nmax doubling");
}

FockObservables observables_fock(const FockVector& psi) {
  const std::size_t dim = psi.amp.size();
  const QuadratureBands q = quadrature_bands(dim - 1);
  std::vector<double> zeros(dim >= 4 ? dim - 4 : 0, 0.0);
  std::vector<cplx> tmp(dim);
  FockObservables o{};
  double n = 0;
  for (std::size_t i = 0; i < dim; ++i) n += static_cast<double>(i) * std::norm(psi.amp[i]);
  o.n = n;
  kn::band_matvec({q.x2_d0.data(), q.x2_d2.data(), zeros.data(), dim}, psi.amp.data(), tmp.data());
  o.x2 = kn::dot(psi.amp.data(), tmp.data(), dim).real();
  kn::band_matvec({q.p2_d0.data(), q.p2_d2.data(), zeros.data(), dim}, psi.amp.data(), tmp.data());
  o.p2 = kn::dot(psi.amp.data(), tmp.data(), dim).real();
  return o;
}

double energy_expectation(const BandedHamiltonian& h, const FockVector& psi) {
  std::vector<cplx> tmp(h.dim());
  kn::band_matvec(h.view(), psi.amp.data(), tmp.data());
  return kn::dot(psi.amp.data(), tmp.data(), h.dim()).real();
}

namespace krylov {

ExpResult expmv(const kn::BandView& h, double tau, std::span<const cplx> v, std::span<cplx> y,
                double tol, std::size_t max_dim) {
  const std::size_t n = h.dim;
  const double beta0 = std::sqrt(kn::norm_sq(v.data(), n));
  if (beta0 == 0.0) {
    std::fill(y.begin(), y.end(), cplx(0.0, 0.0));
    return {0, 0.0, true};
  }
  max_dim = std::min(max_dim, n);
  std::vector<cplx> basis((max_dim + 1) * n);
  std::vector<double> alpha, beta;
  alpha.reserve(max_dim);
  beta.reserve(max_dim);
  auto V = [&](std::size_t k) { return basis.data() + k * n; };
  std::copy(v.begin(), v.end(), V(0));
  kn::scale(1.0 / beta0, V(0), n);

  std::vector<double> d, e, z;
  std::vector<cplx> coef;
  auto exp_coefficients = [&](std::size_t m) {
    d.assign(alpha.begin(), alpha.begin() + m);
    e.assign(beta.begin(), beta.begin() + (m - 1));
    e.resize(std::max<std::size_t>(m, 1));
    z.assign(m * m, 0.0);
    const lapack_int info = LAPACKE_dstev(LAPACK_COL_MAJOR, 'V', static_cast<lapack_int>(m), d.data(),
                                          e.data(), z.data(), static_cast<lapack_int>(m));
    if (info != 0) throw ConvergenceError("tridiagonal eigensolve failed");
    coef.assign(m, cplx(0.0, 0.0));
    for (std::size_t l = 0; l < m; ++l) {
      const cplx ph = std::exp(cplx(0.0, -tau * d[l])) * z[0 + l * m];
      for (std::size_t k = 0; k < m; ++k) coef[k] += z[k + l * m] * ph;
    }
  };

  ExpResult res{0, 0.0, false};
  std::size_t m = 0;
  for (std::size_t j = 0; j < max_dim; ++j) {
    cplx* w = V(j + 1);
    kn::band_matvec(h, V(j), w);
    const double a = kn::dot(V(j), w, n).real();
    alpha.push_back(a);
    kn::axpy(-a, V(j), w, n);
    if (j > 0) kn::axpy(-beta[j - 1], V(j - 1), w, n);
    for (std::size_t k = 0; k <= j; ++k) kn::axpy(-kn::dot(V(k), w, n), V(k), w, n);
    const double b = std::sqrt(kn::norm_sq(w, n));
    beta.push_back(b);
    m = j + 1;
    const bool breakdown = b <= 1e-13 * (std::abs(a) + 1.0);
    if (breakdown || m == max_dim || (m >= 4 && m % 3 == 0)) {
      exp_coefficients(m);
      const double err = breakdown ? 0.0 : beta0 * b * std::abs(coef[m - 1]);
      res = {m, err, err <= tol * beta0};
      if (res.converged || breakdown) break;
    }
    kn::scale(1.0 / b, w, n);
  }
  std::fill(y.begin(), y.end(), cplx(0.0, 0.0));
  for (std::size_t k = 0; k < m; ++k) kn::axpy(beta0 * coef[k], V(k), y.data(), n);
  return res;
}

}  // namespace krylov

namespace {

constexpr double kSqrt3Over6 = 0.28867513459481288225;  // sqrt(3)/6
constexpr double kAlpha1 = 0.25 + kSqrt3Over6;
constexpr double kAlpha2 = 0.25 - kSqrt3Over6;
constexpr std::size_t kKrylovMax = 64;

class MagnusStepper {
 public:
  MagnusStepper(const CouplingSchedule& s, const FockDrive& d, std::size_t nmax, double tol)
      : s_(s), d_(d), q_(quadrature_bands(nmax)), band_(nmax + 1), tmp_(nmax + 1), tol_(tol) {}

  Mix mix_at(double t) const {
    const double g = d_.coupling_scale * coupling_at(s_, t);
    return hamiltonian_mix(d_.omega, g, d_.eta, d_.kind);
  }

  // Fourth-order commutator-free Magnus step; false if a Krylov solve did not converge.
  bool step(std::span<const cplx> in, double t, double h, std::span<cplx> out) {
    const Mix h1 = mix_at(t + (0.5 - kSqrt3Over6) * h);
    const Mix h2 = mix_at(t + (0.5 + kSqrt3Over6) * h);
    fill(q_, kAlpha2 * h1 + kAlpha1 * h2, band_);
    auto r1 = krylov::expmv(band_.view(), h, in, tmp_, krylov_tol(), kKrylovMax);
    fill(q_, kAlpha1 * h1 + kAlpha2 * h2, band_);
    auto r2 = krylov::expmv(band_.view(), h, tmp_, out, krylov_tol(), kKrylovMax);
    last_krylov_ = std::max(r1.dim, r2.dim);
    return r1.converged && r2.converged;
  }

  std::size_t last_krylov() const { return last_krylov_; }

 private:
  double krylov_tol() const { return std::max(1e-14, 1e-3 * tol_); }

  const CouplingSchedule& s_;
  FockDrive d_;
  QuadratureBands q_;
  Band band_;
  std::vector<cplx> tmp_;
  double tol_;
  std::size_t last_krylov_ = 0;
};

struct Checker {
  double tail_threshold;
  PropagationStats* stats;
  void operator()(double t, std::span<const cplx> psi) const {
    const double tail = tail_of(psi);
    if (tail > tail_threshold)
      throw TruncationError("Fock tail occupation " + std::to_string(tail) + " at t = " +
                                std::to_string(t),
                            t, tail);
    const double drift = std::abs(std::sqrt(kn::norm_sq(psi.data(), psi.size())) - 1.0);
    stats->max_norm_drift = std::max(stats->max_norm_drift, drift);
    if (drift > 1e-9) throw IntegrationError("norm drift exceeded 1e-9", t);
  }
};

PropagationStats run_magnus(const CouplingSchedule& s, const FockDrive& d,
                            std::span<const double> times, std::size_t nmax,
                            const PropagateOptions& opt, const FockObserver& observe,
                            StepLog* record, const StepLog* replay) {
  PropagationStats stats;
  const std::size_t dim = nmax + 1;
  MagnusStepper stepper(s, d, nmax, opt.tol);
  const Checker check{opt.tail_threshold, &stats};
  const double ts = 1.0 / d.omega;
  FockVector psi = FockVector::vacuum(nmax);
  std::vector<cplx> full(dim), half(dim), two(dim);
  double t = 0.0;
  std::size_t attempt_krylov = 0;
  auto advance_two_halves = [&](double h) {
    const bool ok1 = stepper.step(psi.amp, t, 0.5 * h, half);
    attempt_krylov = std::max(attempt_krylov, stepper.last_krylov());
    const bool ok2 = stepper.step(half, t + 0.5 * h, 0.5 * h, two);
    attempt_krylov = std::max(attempt_krylov, stepper.last_krylov());
    stats.krylov_max = std::max(stats.krylov_max, attempt_krylov);
    return ok1 && ok2;
  };

  if (replay) {
    std::size_t next = 0;
    for (double stop : times) {
      while (t < stop) {
        if (next >= replay->ends.size()) throw IntegrationError("step log exhausted", t);
        const double tnew = replay->ends[next++];
        if (!advance_two_halves(tnew - t))
          throw ConvergenceError("Krylov solve failed while replaying steps");
        psi.amp.swap(two);
        t = tnew;
        ++stats.steps;
        check(t, psi.amp);
      }
      if (t != stop) throw IntegrationError("replayed steps do not land on output time", t);
      observe(t, psi);
    }
    return stats;
  }

  double h = 0.05 * ts;
  for (double stop : times) {
    require(stop >= t, "output times must be ascending");
    while (t < stop) {
      bool landing = false;
      double step = h;
      if (t + 1.01 * step >= stop) {
        step = stop - t;
        landing = true;
      }
      if (step < 1e-12 * ts) throw IntegrationError("step size underflow", t);
      const bool ok_full = stepper.step(psi.amp, t, step, full);
      attempt_krylov = stepper.last_krylov();
      const bool ok_half = advance_two_halves(step);
      if (!ok_full || !ok_half) {
        h = 0.5 * step;
        ++stats.rejected;
        continue;
      }
      double diff = 0;
      for (std::size_t i = 0; i < dim; ++i) diff += std::norm(two[i] - full[i]);
      const double err = std::sqrt(diff) / 15.0 / (opt.tol * std::min(1.0, step / ts));
      if (err <= 1.0) {
        psi.amp.swap(two);
        t = landing ? stop : t + step;
        ++stats.steps;
        if (record) record->ends.push_back(t);
        check(t, psi.amp);
        double fac = std::clamp(0.9 * std::pow(std::max(err, 1e-12), -0.25), 0.2, 2.0);
        // Keep Krylov spaces comfortably below the cap.
        if (attempt_krylov > 0.9 * kKrylovMax) fac = std::min(fac, 0.8);
        else if (attempt_krylov > 0.6 * kKrylovMax) fac = std::min(fac, 1.0);
        h = landing ? std::max(h, step * fac) : step * fac;
      } else {
        h = step * std::max(0.2, 0.9 * std::pow(err, -0.25));
        ++stats.rejected;
      }
    }
    observe(t, psi);
  }
  return stats;
}

PropagationStats run_rk(const CouplingSchedule& s, const FockDrive& d,
                        std::span<const double> times, std::size_t nmax,
                        const PropagateOptions& opt, const FockObserver& observe) {
  PropagationStats stats;
  const QuadratureBands q = quadrature_bands(nmax);
  Band band(nmax + 1);
  const Checker check{opt.tail_threshold, &stats};
  FockVector psi = FockVector::vacuum(nmax);
  auto rhs = [&](double t, const std::vector<cplx>& y, std::vector<cplx>& dy) {
    const double g = d.coupling_scale * coupling_at(s, t);
    fill(q, hamiltonian_mix(d.omega, g, d.eta, d.kind), band);
    kn::band_matvec(band.view(), y.data(), dy.data());
    for (auto& c : dy) c = cplx(c.imag(), -c.real());
  };
  ode::Options o;
  o.tol = opt.tol;
  o.time_scale = 1.0 / d.omega;
  FockVector view;
  auto obs = [&](double t, const std::vector<cplx>& y) {
    view.amp = y;
    observe(t, view);
  };
  auto guard = [&](double t, const std::vector<cplx>& y) { check(t, y); };
  const ode::Stats st = ode::integrate(rhs, psi.amp, 0.0, times, o, obs, guard);
  stats.steps = st.accepted;
  stats.rejected = st.rejected;
  return stats;
}

}  // namespace

PropagationStats propagate_series(const CouplingSchedule& s, const FockDrive& d,
                                  std::span<const double> times, std::size_t nmax,
                                  const PropagateOptions& opt, const FockObserver& observe,
                                  StepLog* record, const StepLog* replay) {
  require(nmax >= 16, "Fock truncation requires Nmax >= 16");
  require(d.omega > 0 && d.eta >= 1.0 && !std::isinf(d.eta), "Fock drive needs finite eta >= 1");
  require(opt.tol > 0, "tolerance must be positive");
  if (!times.empty()) require(times.back() <= s.duration() * (1.0 + 1e-12), "time beyond schedule");
  std::vector<double> stops;
  std::size_t first = 0;
  if (!times.empty() && times.front() == 0.0) {
    observe(0.0, FockVector::vacuum(nmax));
    first = 1;
  }
  stops.assign(times.begin() + first, times.end());
  if (opt.method == Propagator::RungeKutta) {
    require(record == nullptr && replay == nullptr, "step replay needs the Magnus propagator");
    return run_rk(s, d, stops, nmax, opt, observe);
  }
  return run_magnus(s, d, stops, nmax, opt, observe, record, replay);
}

FockVector propagate(const CouplingSchedule& s, const EffectiveParams& e, double T,
                     std::size_t nmax, const PropagateOptions& opt) {
  require(!e.eta.is_infinite(), "Fock simulation requires finite eta");
  const FockDrive d{e.omega, e.eta.value(), e.quartic, 1.0};
  FockVector out;
  const double t[1] = {T};
  propagate_series(s, d, t, nmax ? nmax : auto_nmax(e), opt,
                   [&](double, const FockVector& psi) { out = psi; });
  return out;
}

FockDrive perturbed_drive(const EffectiveParams& e, const EstimandTag& x, double value) {
  const RawEffective raw = map_unchecked(with_estimand(e.source, x.which, value));
  double scale = 1.0;
  if (e.g > 0) scale = raw.g / e.g;
  else require(raw.g == 0.0, "schedule cannot be rescaled around a zero nominal coupling");
  return {raw.omega, raw.eta, e.quartic, scale};
}

namespace {

void align_phase(std::span<const cplx> ref, std::vector<cplx>& v) {
  const cplx p = kn::dot(ref.data(), v.data(), v.size());
  const double a = std::abs(p);
  if (a == 0) return;
  const cplx ph = std::conj(p) / a;
  for (auto& c : v) c *= ph;
}

double fd_qfi(std::span<const cplx> psi, std::vector<cplx> plus, std::vector<cplx> minus,
              double dx) {
  align_phase(psi, plus);
  align_phase(psi, minus);
  const std::size_t n = psi.size();
  std::vector<cplx> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = (plus[i] - minus[i]) / (2.0 * dx);
  const double dd = kn::norm_sq(d.data(), n);
  const cplx pd = kn::dot(psi.data(), d.data(), n);
  return std::max(0.0, 4.0 * (dd - std::norm(pd)));
}

}  // namespace

std::vector<FockQfiSample> qfi_fock_series(const CouplingSchedule& s, const EffectiveParams& e,
                                           const EstimandTag& x, std::span<const double> times,
                                           std::size_t nmax, const FockQfiOptions& opt,
                                           std::size_t* nmax_used) {
  require(!e.eta.is_infinite(), "Fock simulation requires finite eta");
  require(estimand_belongs(e.source, x.which), "estimand/model mismatch");
  require(x.value != 0.0, "finite-difference QFI needs a non-zero estimand value");
  require(opt.delta_rel > 0 && opt.delta_rel < 0.1, "delta_rel must be in (0, 0.1)");
  require(opt.propagate.method == Propagator::Magnus4, "QFI uses the Magnus propagator");
  const bool automatic = nmax == 0;
  std::size_t n = automatic ? auto_nmax(e) : nmax;
  const FockDrive nominal{e.omega, e.eta.value(), e.quartic, 1.0};

  for (;;) {
    try {
      std::vector<std::vector<cplx>> base;
      std::vector<FockQfiSample> out;
      StepLog log;
      propagate_series(s, nominal, times, n, opt.propagate,
                       [&](double t, const FockVector& psi) {
                         base.push_back(psi.amp);
                         out.push_back({t, 0.0, 0.0, observables_fock(psi)});
                       },
                       &log);
      auto run_at = [&](double value) {
        std::vector<std::vector<cplx>> states;
        const FockDrive d = perturbed_drive(e, x, value);
        const StepLog* rp = times.empty() || times.back() == 0.0 ? nullptr : &log;
        propagate_series(s, d, times, n, opt.propagate,
                         [&](double, const FockVector& psi) { states.push_back(psi.amp); }, nullptr,
                         rp);
        return states;
      };
      const double xv = x.value;
      const double floor = 1e-10 / (xv * xv);
      // Halve delta until consecutive levels agree; long evolutions need small steps
      // because the state depends on x through a phase ~ E T.
      std::vector<double> prev(out.size(), -1.0);
      std::vector<char> done(out.size(), 0);
      std::size_t open = out.size();
      double delta = opt.delta_rel;
      for (int level = 0; open > 0; ++level, delta *= 0.5) {
        if (level > opt.max_halvings) {
          for (std::size_t k = 0; k < out.size(); ++k)
            if (!done[k])
              throw ConvergenceError("finite-difference QFI not converged under delta halving at t = " +
                                     std::to_string(out[k].t));
        }
        const double xp = xv * (1.0 + delta), xm = xv * (1.0 - delta);
        const auto plus = run_at(xp);
        const auto minus = run_at(xm);
        const double dx = 0.5 * (xp - xm);
        for (std::size_t k = 0; k < out.size(); ++k) {
          if (done[k]) continue;
          const double q = fd_qfi(base[k], plus[k], minus[k], dx);
          if (prev[k] >= 0 && std::abs(q - prev[k]) <= opt.refine_tol * std::max(q, prev[k]) + floor) {
            out[k].qfi = prev[k];
            out[k].qfi_half = q;
            done[k] = 1;
            --open;
          }
          prev[k] = q;
        }
      }
      if (nmax_used) *nmax_used = n;
      return out;
    } catch (const TruncationError&) {
      if (!automatic || n >= 16384) throw;
      n *= 2;
    }
  }
}

double qfi_fock(const CouplingSchedule& s, const EffectiveParams& e, const EstimandTag& x, double T,
                std::size_t nmax, const FockQfiOptions& opt) {
  const double t[1] = {T};
  return qfi_fock_series(s, e, x, t, nmax, opt).back().qfi;
}

double ground_state_qfi(const EffectiveParams& e, const EstimandTag& x, std::size_t nmax,
                        double delta_rel) {
  require(!e.eta.is_infinite(), "Fock simulation requires finite eta");
  require(x.value != 0.0, "finite-difference QFI needs a non-zero estimand value");
  auto state = [&](double value, std::size_t n) {
    const FockDrive d = perturbed_drive(e, x, value);
    return ground_state(BandedHamiltonian(n, d.omega, d.coupling_scale * e.g, d.eta, d.kind)).amp;
  };
  auto at = [&](std::size_t n) {
    const double xp = x.value * (1.0 + delta_rel), xm = x.value * (1.0 - delta_rel);
    return fd_qfi(state(x.value, n), state(xp, n), state(xm, n), 0.5 * (xp - xm));
  };
  std::size_t n = nmax ? nmax : auto_nmax(e);
  double prev = at(n);
  for (int k = 0; k < 6; ++k) {
    const double next = at(2 * n);
    n *= 2;
    if (std::abs(next - prev) <= 1e-6 * std::abs(next)) return next;
    prev = next;
  }
  throw ConvergenceError("ground-state QFI did not converge under Nmax doubling");
}

}  // namespace critq
