#pragma once

#include <limits>
#include <string>
#include <string_view>
#include <variant>

namespace critq {

// Effective size of the oscillator; infinite selects the Gaussian (thermodynamic) path.
class EffectiveSize {
 public:
  static EffectiveSize infinite() { return EffectiveSize(); }
  static EffectiveSize finite(double eta);

  bool is_infinite() const { return infinite_; }
  // Throws ValidationError when infinite.
  double value() const;
  // Infinite maps to +inf.
  double as_double() const {
    return infinite_ ? std::numeric_limits<double>::infinity() : eta_;
  }

  bool operator==(const EffectiveSize&) const = default;

 private:
  EffectiveSize() = default;
  bool infinite_ = true;
  double eta_ = 0.0;
};

enum class QuarticKind { Rabi, Lmg, None };

double quartic_prefactor(QuarticKind kind, double g);

struct RabiParams {
  double omega;        // boson frequency
  double qubit_omega;  // Omega
  double lambda;
};

struct LmgParams {
  double h;
  double interaction;  // Lambda
  double spins;        // N
};

struct DirectParams {
  double omega;
  EffectiveSize eta;
  double g;
  QuarticKind quartic = QuarticKind::None;
};

using PhysicalParams = std::variant<RabiParams, LmgParams, DirectParams>;

struct EffectiveParams {
  double omega;
  EffectiveSize eta;
  double g;
  QuarticKind quartic;
  PhysicalParams source;
};

EffectiveParams map_quantum_rabi(const RabiParams& p);
EffectiveParams map_lmg(const LmgParams& p);
EffectiveParams map_direct(const DirectParams& p);
EffectiveParams map_effective(const PhysicalParams& p);

// Same formulas without phase-boundary checks; finite differences straddle g = 1.
struct RawEffective {
  double omega;
  double eta;  // +inf when infinite
  double g;
};
RawEffective map_unchecked(const PhysicalParams& p);

enum class Estimand {
  RabiOmega,
  RabiQubitOmega,
  RabiLambda,
  LmgField,
  LmgInteraction,
  DirectCoupling,
  DirectOmega,
  DirectDetuning,  // eps = 1 - g^2
};

struct EstimandTag {
  Estimand which;
  double value;
};

std::string_view estimand_name(Estimand x);
// Names: omega, Omega, lambda (Rabi); h, Lambda (LMG); g, omega, eps (direct).
Estimand parse_estimand(const PhysicalParams& p, std::string_view name);
bool estimand_belongs(const PhysicalParams& p, Estimand x);

EstimandTag make_estimand(const PhysicalParams& p, Estimand x);
// Copy of p with the estimand set to value.
PhysicalParams with_estimand(const PhysicalParams& p, Estimand x, double value);

struct ChainRule {
  double dg_dx;
  double domega_dx;
};
ChainRule chain_rule(const EstimandTag& x, const EffectiveParams& e);

struct SuddenQuench {
  double g_final;
};

struct AdiabaticRamp {
  double speed;  // phi_ad
  double tau_q;  // 1 / (phi_ad * omega)
};

struct FiniteRamp {
  double exponent;  // r
};

using Protocol = std::variant<SuddenQuench, AdiabaticRamp, FiniteRamp>;

class CouplingSchedule {
 public:
  static CouplingSchedule quench(double g_final, double T);
  static CouplingSchedule adiabatic(double speed, double omega, double T);
  static CouplingSchedule ramp(double exponent, double T);

  const Protocol& protocol() const { return protocol_; }
  double duration() const { return T_; }
  CouplingSchedule with_duration(double T) const;

  // Coupling the schedule drives towards (g_f for a quench, 1 otherwise).
  double target() const;
  // True when g(t) does not depend on T, so one run serves every duration.
  bool duration_independent() const;
  std::string_view name() const;

 private:
  CouplingSchedule(Protocol p, double T) : protocol_(p), T_(T) {}
  Protocol protocol_;
  double T_;
};

double schedule_value(const CouplingSchedule& s, double t);
double schedule_rate(const CouplingSchedule& s, double t);  // dg/dt

// Unchecked evaluation used inside integrators (t may overshoot T by rounding).
double coupling_at(const CouplingSchedule& s, double t);

// Time-dependent sensitivities of the coupling and frequency to the estimand.
// The schedule is read as the physical control: g(t; x) = g(t) * g(x) / g(x0).
struct DriveSensitivity {
  double coupling_scale;  // (dg/dx) / g at the nominal point
  double domega_dx;
};
DriveSensitivity drive_sensitivity(const EstimandTag& x, const EffectiveParams& e);

}  // namespace critq
