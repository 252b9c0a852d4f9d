#include "critq/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "critq/error.hpp"

namespace critq {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

// Couplings this close above 1 are rounding noise from the mappings and get clamped.
constexpr double kCouplingSlack = 1e-13;

void require(bool ok, const std::string& msg) {
  if (!ok) throw ValidationError(msg);
}

double clamp_coupling(double g, const char* what) {
  require(std::isfinite(g), std::string(what) + ": coupling is not finite");
  require(g <= 1.0 + kCouplingSlack,
          std::string(what) + ": g = " + std::to_string(g) + " > 1 (superradiant phase)");
  return g > 1.0 ? 1.0 : g;
}

}  // namespace

EffectiveSize EffectiveSize::finite(double eta) {
  require(std::isfinite(eta) && eta >= 1.0, "effective size must satisfy eta >= 1");
  EffectiveSize s;
  s.infinite_ = false;
  s.eta_ = eta;
  return s;
}

double EffectiveSize::value() const {
  if (infinite_) throw ValidationError("effective size is infinite");
  return eta_;
}

double quartic_prefactor(QuarticKind kind, double g) {
  switch (kind) {
    case QuarticKind::Rabi:
      return 0.25 * g * g * g * g;
    case QuarticKind::Lmg:
      return 0.25 * g * g;
    case QuarticKind::None:
      return 0.0;
  }
  return 0.0;
}

EffectiveParams map_quantum_rabi(const RabiParams& p) {
  require(p.omega > 0 && p.qubit_omega > 0, "Rabi: frequencies must be positive");
  require(p.lambda >= 0, "Rabi: lambda must be non-negative");
  const double eta = p.qubit_omega / p.omega;
  require(eta >= 1.0, "Rabi: Omega/omega < 1, effective mapping invalid");
  const double g = clamp_coupling(2.0 * p.lambda / std::sqrt(p.omega * p.qubit_omega), "Rabi");
  return {p.omega, EffectiveSize::finite(eta), g, QuarticKind::Rabi, p};
}

EffectiveParams map_lmg(const LmgParams& p) {
  require(p.h > 0, "LMG: h must be positive");
  require(p.interaction >= 0, "LMG: Lambda must be non-negative");
  require(p.interaction <= p.h * (1.0 + kCouplingSlack), "LMG: Lambda > h (ferromagnetic phase)");
  require(p.spins >= 1, "LMG: N must be >= 1");
  const double g = clamp_coupling(std::sqrt(p.interaction / p.h), "LMG");
  return {p.h, EffectiveSize::finite(p.spins), g, QuarticKind::Lmg, p};
}

EffectiveParams map_direct(const DirectParams& p) {
  require(p.omega > 0, "direct: omega must be positive");
  require(p.g >= 0, "direct: g must be non-negative");
  const double g = clamp_coupling(p.g, "direct");
  if (!p.eta.is_infinite()) require(p.eta.value() >= 1.0, "direct: eta must be >= 1");
  return {p.omega, p.eta, g, p.quartic, p};
}

EffectiveParams map_effective(const PhysicalParams& p) {
  return std::visit(overloaded{[](const RabiParams& r) { return map_quantum_rabi(r); },
                               [](const LmgParams& l) { return map_lmg(l); },
                               [](const DirectParams& d) { return map_direct(d); }},
                    p);
}

RawEffective map_unchecked(const PhysicalParams& p) {
  return std::visit(
      overloaded{[](const RabiParams& r) {
                   return RawEffective{r.omega, r.qubit_omega / r.omega,
                                       2.0 * r.lambda / std::sqrt(r.omega * r.qubit_omega)};
                 },
                 [](const LmgParams& l) {
                   return RawEffective{l.h, l.spins, std::sqrt(l.interaction / l.h)};
                 },
                 [](const DirectParams& d) { return RawEffective{d.omega, d.eta.as_double(), d.g}; }},
      p);
}

std::string_view estimand_name(Estimand x) {
  switch (x) {
    case Estimand::RabiOmega:
    case Estimand::DirectOmega:
      return "omega";
    case Estimand::RabiQubitOmega:
      return "Omega";
    case Estimand::RabiLambda:
      return "lambda";
    case Estimand::LmgField:
      return "h";
    case Estimand::LmgInteraction:
      return "Lambda";
    case Estimand::DirectCoupling:
      return "g";
    case Estimand::DirectDetuning:
      return "eps";
  }
  return "?";
}

bool estimand_belongs(const PhysicalParams& p, Estimand x) {
  switch (x) {
    case Estimand::RabiOmega:
    case Estimand::RabiQubitOmega:
    case Estimand::RabiLambda:
      return std::holds_alternative<RabiParams>(p);
    case Estimand::LmgField:
    case Estimand::LmgInteraction:
      return std::holds_alternative<LmgParams>(p);
    case Estimand::DirectCoupling:
    case Estimand::DirectOmega:
    case Estimand::DirectDetuning:
      return std::holds_alternative<DirectParams>(p);
  }
  return false;
}

Estimand parse_estimand(const PhysicalParams& p, std::string_view name) {
  if (std::holds_alternative<RabiParams>(p)) {
    if (name == "omega") return Estimand::RabiOmega;
    if (name == "Omega") return Estimand::RabiQubitOmega;
    if (name == "lambda") return Estimand::RabiLambda;
  } else if (std::holds_alternative<LmgParams>(p)) {
    if (name == "h") return Estimand::LmgField;
    if (name == "Lambda") return Estimand::LmgInteraction;
  } else {
    if (name == "g") return Estimand::DirectCoupling;
    if (name == "omega") return Estimand::DirectOmega;
    if (name == "eps") return Estimand::DirectDetuning;
  }
  throw ValidationError("estimand '" + std::string(name) + "' is not a parameter of this model");
}

EstimandTag make_estimand(const PhysicalParams& p, Estimand x) {
  require(estimand_belongs(p, x), "estimand does not belong to the model");
  double v = 0.0;
  std::visit(overloaded{[&](const RabiParams& r) {
                          v = x == Estimand::RabiOmega        ? r.omega
                              : x == Estimand::RabiQubitOmega ? r.qubit_omega
                                                              : r.lambda;
                        },
                        [&](const LmgParams& l) { v = x == Estimand::LmgField ? l.h : l.interaction; },
                        [&](const DirectParams& d) {
                          v = x == Estimand::DirectCoupling ? d.g
                              : x == Estimand::DirectOmega  ? d.omega
                                                            : 1.0 - d.g * d.g;
                        }},
             p);
  return {x, v};
}

PhysicalParams with_estimand(const PhysicalParams& p, Estimand x, double value) {
  require(estimand_belongs(p, x), "estimand does not belong to the model");
  PhysicalParams q = p;
  std::visit(overloaded{[&](RabiParams& r) {
                          if (x == Estimand::RabiOmega) r.omega = value;
                          else if (x == Estimand::RabiQubitOmega) r.qubit_omega = value;
                          else r.lambda = value;
                        },
                        [&](LmgParams& l) {
                          if (x == Estimand::LmgField) l.h = value;
                          else l.interaction = value;
                        },
                        [&](DirectParams& d) {
                          if (x == Estimand::DirectCoupling) d.g = value;
                          else if (x == Estimand::DirectOmega) d.omega = value;
                          else d.g = std::sqrt(1.0 - value);
                        }},
             q);
  return q;
}

ChainRule chain_rule(const EstimandTag& x, const EffectiveParams& e) {
  require(estimand_belongs(e.source, x.which), "estimand/model mismatch");
  const double g = e.g;
  switch (x.which) {
    case Estimand::RabiLambda: {
      const auto& r = std::get<RabiParams>(e.source);
      return {2.0 / std::sqrt(r.omega * r.qubit_omega), 0.0};
    }
    case Estimand::RabiOmega:
      return {-0.5 * g / std::get<RabiParams>(e.source).omega, 1.0};
    case Estimand::RabiQubitOmega:
      return {-0.5 * g / std::get<RabiParams>(e.source).qubit_omega, 0.0};
    case Estimand::LmgField:
      return {-0.5 * g / std::get<LmgParams>(e.source).h, 1.0};
    case Estimand::LmgInteraction: {
      const auto& l = std::get<LmgParams>(e.source);
      require(l.interaction > 0, "dg/dLambda diverges at Lambda = 0");
      return {0.5 / std::sqrt(l.interaction * l.h), 0.0};
    }
    case Estimand::DirectCoupling:
      return {1.0, 0.0};
    case Estimand::DirectOmega:
      return {0.0, 1.0};
    case Estimand::DirectDetuning:
      require(g > 0, "dg/deps diverges at g = 0");
      return {-0.5 / g, 0.0};
  }
  return {0.0, 0.0};
}

DriveSensitivity drive_sensitivity(const EstimandTag& x, const EffectiveParams& e) {
  const ChainRule c = chain_rule(x, e);
  if (c.dg_dx == 0.0) return {0.0, c.domega_dx};
  require(e.g > 0, "schedule cannot be rescaled around a zero nominal coupling");
  return {c.dg_dx / e.g, c.domega_dx};
}

CouplingSchedule CouplingSchedule::quench(double g_final, double T) {
  require(g_final > 0 && g_final <= 1.0, "quench: need 0 < g_f <= 1");
  require(T > 0, "schedule duration must be positive");
  return CouplingSchedule(SuddenQuench{g_final}, T);
}

CouplingSchedule CouplingSchedule::adiabatic(double speed, double omega, double T) {
  require(speed > 0 && speed <= 0.5, "adiabatic: need 0 < phi_ad <= 0.5");
  require(omega > 0, "adiabatic: omega must be positive");
  require(T > 0, "schedule duration must be positive");
  return CouplingSchedule(AdiabaticRamp{speed, 1.0 / (speed * omega)}, T);
}

CouplingSchedule CouplingSchedule::ramp(double exponent, double T) {
  require(exponent > 0, "ramp: exponent must be positive");
  require(T > 0, "schedule duration must be positive");
  return CouplingSchedule(FiniteRamp{exponent}, T);
}

CouplingSchedule CouplingSchedule::with_duration(double T) const {
  require(T > 0, "schedule duration must be positive");
  return CouplingSchedule(protocol_, T);
}

double CouplingSchedule::target() const {
  if (const auto* q = std::get_if<SuddenQuench>(&protocol_)) return q->g_final;
  return 1.0;
}

bool CouplingSchedule::duration_independent() const {
  return !std::holds_alternative<FiniteRamp>(protocol_);
}

std::string_view CouplingSchedule::name() const {
  return std::visit(overloaded{[](const SuddenQuench&) { return std::string_view("quench"); },
                               [](const AdiabaticRamp&) { return std::string_view("adiabatic"); },
                               [](const FiniteRamp&) { return std::string_view("ramp"); }},
                    protocol_);
}

double coupling_at(const CouplingSchedule& s, double t) {
  const double T = s.duration();
  return std::visit(overloaded{[](const SuddenQuench& q) { return q.g_final; },
                               [t](const AdiabaticRamp& a) {
                                 const double u = t / a.tau_q;
                                 return u / std::sqrt(1.0 + u * u);
                               },
                               [t, T](const FiniteRamp& r) {
                                 const double rest = std::max(0.0, (T - t) / T);
                                 return 1.0 - std::pow(rest, r.exponent);
                               }},
                    s.protocol());
}

double schedule_value(const CouplingSchedule& s, double t) {
  require(t >= 0 && t <= s.duration(), "schedule evaluated outside [0, T]");
  return coupling_at(s, t);
}

double schedule_rate(const CouplingSchedule& s, double t) {
  require(t >= 0 && t <= s.duration(), "schedule evaluated outside [0, T]");
  const double T = s.duration();
  return std::visit(overloaded{[](const SuddenQuench&) { return 0.0; },
                               [t](const AdiabaticRamp& a) {
                                 const double u = t / a.tau_q;
                                 return 1.0 / (a.tau_q * std::pow(1.0 + u * u, 1.5));
                               },
                               [t, T](const FiniteRamp& r) {
                                 return r.exponent / T * std::pow((T - t) / T, r.exponent - 1.0);
                               }},
                    s.protocol());
}

}  // namespace critq
