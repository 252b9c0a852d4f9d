#include "critq/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include "critq/bounds.hpp"
#include "critq/error.hpp"
#include "critq/fock.hpp"
#include "critq/gaussian.hpp"
#include "critq/kernels.hpp"
#include "json.hpp"

namespace critq::harness {

using nlohmann::json;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
// Size used for the physical source parameters of thermodynamic-limit points; no Gaussian
// quantity depends on it.
constexpr double kReferenceEta = 1e12;
constexpr const char* kVersion = "1.0.0";

[[noreturn]] void field_error(const std::string& path, const std::string& msg) {
  throw ValidationError("field " + path + ": " + msg);
}

double get_number(const json& j, const std::string& path) {
  if (!j.is_number()) field_error(path, "expected a number");
  return j.get<double>();
}

std::vector<double> number_list(const json& j, const std::string& path) {
  std::vector<double> out;
  if (j.is_array()) {
    if (j.empty()) field_error(path, "list must not be empty");
    for (std::size_t i = 0; i < j.size(); ++i)
      out.push_back(get_number(j[i], path + "[" + std::to_string(i) + "]"));
  } else {
    out.push_back(get_number(j, path));
  }
  return out;
}

double eta_value(const json& j, const std::string& path) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf" || s == "infinite") return kInf;
    field_error(path, "expected a number or \"inf\"");
  }
  const double v = get_number(j, path);
  if (!(v >= 1.0)) field_error(path, "eta must be >= 1");
  return v;
}

void check_keys(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) field_error(path.empty() ? "<root>" : path, "expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!ok.count(it.key()))
      field_error(path.empty() ? it.key() : path + "." + it.key(), "unknown field");
}

std::string model_name(ModelKind m) {
  return m == ModelKind::Rabi ? "rabi" : m == ModelKind::Lmg ? "lmg" : "direct";
}
std::string protocol_name(ProtocolKind p) {
  return p == ProtocolKind::Quench ? "quench" : p == ProtocolKind::Adiabatic ? "adiabatic" : "ramp";
}
std::string quartic_name(QuarticKind q) {
  return q == QuarticKind::Rabi ? "rabi" : q == QuarticKind::Lmg ? "lmg" : "none";
}

std::string error_tag(const std::exception& e) {
  std::string kind = "error";
  if (dynamic_cast<const TruncationError*>(&e)) kind = "truncation";
  else if (dynamic_cast<const IntegrationError*>(&e)) kind = "integration";
  else if (dynamic_cast<const ConvergenceError*>(&e)) kind = "convergence";
  else if (dynamic_cast<const ValidationError*>(&e)) kind = "validation";
  std::string msg = kind + ": " + e.what();
  std::replace(msg.begin(), msg.end(), ',', ';');
  std::replace(msg.begin(), msg.end(), '\n', ' ');
  return msg;
}

}  // namespace

std::vector<double> RunConfig::times() const {
  std::vector<double> ts;
  if (t_grid.points == 1) return {t_grid.min};
  for (std::size_t k = 0; k < t_grid.points; ++k) {
    const double u = static_cast<double>(k) / static_cast<double>(t_grid.points - 1);
    ts.push_back(k + 1 == t_grid.points ? t_grid.max
                                        : t_grid.min * std::pow(t_grid.max / t_grid.min, u));
  }
  return ts;
}

RunConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    const std::size_t pos = std::min<std::size_t>(e.byte, text.size());
    const std::size_t line = 1 + std::count(text.begin(), text.begin() + pos, '\n');
    throw ValidationError("line " + std::to_string(line) + ": " + e.what());
  }
  check_keys(j, "", {"name", "model", "protocol", "estimands", "eta", "T_grid", "tolerance",
                     "samples", "fock", "workers", "seed", "output", "spectrum"});
  RunConfig c;
  c.name = j.value("name", std::string("unnamed"));

  if (!j.contains("model")) field_error("model", "required");
  const json& m = j["model"];
  check_keys(m, "model", {"type", "omega", "h", "g", "quartic"});
  const std::string type = m.value("type", std::string("rabi"));
  if (type == "rabi") c.model = ModelKind::Rabi;
  else if (type == "lmg") c.model = ModelKind::Lmg;
  else if (type == "direct") c.model = ModelKind::Direct;
  else field_error("model.type", "expected rabi, lmg or direct");
  const char* wkey = c.model == ModelKind::Lmg ? "h" : "omega";
  c.omega = m.contains(wkey) ? get_number(m[wkey], std::string("model.") + wkey) : 1.0;
  if (!(c.omega > 0)) field_error(std::string("model.") + wkey, "must be positive");
  if (!m.contains("g")) field_error("model.g", "required");
  c.couplings = number_list(m["g"], "model.g");
  for (double g : c.couplings)
    if (!(g > 0 && g <= 1)) field_error("model.g", "couplings must lie in (0, 1]");
  if (m.contains("quartic")) {
    if (c.model != ModelKind::Direct) field_error("model.quartic", "only for the direct model");
    const std::string q = m["quartic"].get<std::string>();
    c.quartic = q == "rabi" ? QuarticKind::Rabi : q == "lmg" ? QuarticKind::Lmg : QuarticKind::None;
    if (q != "rabi" && q != "lmg" && q != "none") field_error("model.quartic", "expected rabi, lmg or none");
  } else {
    c.quartic = c.model == ModelKind::Lmg ? QuarticKind::Lmg : QuarticKind::Rabi;
  }

  if (!j.contains("protocol")) field_error("protocol", "required");
  const json& p = j["protocol"];
  check_keys(p, "protocol", {"type", "phi", "r"});
  const std::string pt = p.value("type", std::string());
  if (pt == "quench") {
    c.protocol = ProtocolKind::Quench;
    c.protocol_params = {0.0};
  } else if (pt == "adiabatic") {
    c.protocol = ProtocolKind::Adiabatic;
    if (!p.contains("phi")) field_error("protocol.phi", "required for adiabatic ramps");
    c.protocol_params = number_list(p["phi"], "protocol.phi");
    for (double v : c.protocol_params)
      if (!(v > 0 && v <= 0.5)) field_error("protocol.phi", "need 0 < phi <= 0.5");
  } else if (pt == "ramp") {
    c.protocol = ProtocolKind::Ramp;
    if (!p.contains("r")) field_error("protocol.r", "required for finite-time ramps");
    c.protocol_params = number_list(p["r"], "protocol.r");
    for (double v : c.protocol_params)
      if (!(v > 0)) field_error("protocol.r", "exponent must be positive");
  } else {
    field_error("protocol.type", "expected quench, adiabatic or ramp");
  }
  if (c.protocol != ProtocolKind::Quench)
    for (double g : c.couplings)
      if (g != 1.0) field_error("model.g", "ramps drive to the critical point; set g = 1");

  if (!j.contains("estimands")) field_error("estimands", "required");
  const json& es = j["estimands"];
  if (!es.is_array() || es.empty()) field_error("estimands", "expected a non-empty list");
  for (std::size_t i = 0; i < es.size(); ++i) {
    if (!es[i].is_string()) field_error("estimands[" + std::to_string(i) + "]", "expected a string");
    c.estimands.push_back(es[i].get<std::string>());
  }

  if (!j.contains("eta")) field_error("eta", "required");
  const json& eta = j["eta"];
  if (eta.is_array()) {
    if (eta.empty()) field_error("eta", "list must not be empty");
    for (std::size_t i = 0; i < eta.size(); ++i)
      c.etas.push_back(eta_value(eta[i], "eta[" + std::to_string(i) + "]"));
  } else {
    c.etas.push_back(eta_value(eta, "eta"));
  }

  if (!j.contains("T_grid")) field_error("T_grid", "required");
  const json& tg = j["T_grid"];
  check_keys(tg, "T_grid", {"min", "max", "points"});
  if (!tg.contains("min") || !tg.contains("max") || !tg.contains("points"))
    field_error("T_grid", "needs min, max and points");
  c.t_grid.min = get_number(tg["min"], "T_grid.min");
  c.t_grid.max = get_number(tg["max"], "T_grid.max");
  const double pts = get_number(tg["points"], "T_grid.points");
  if (!(pts >= 1) || pts != std::floor(pts)) field_error("T_grid.points", "must be a positive integer");
  c.t_grid.points = static_cast<std::size_t>(pts);
  if (!(c.t_grid.min > 0)) field_error("T_grid.min", "must be positive");
  if (!(c.t_grid.max >= c.t_grid.min)) field_error("T_grid.max", "must be >= T_grid.min");
  if (c.t_grid.points == 1 && c.t_grid.max != c.t_grid.min)
    field_error("T_grid.points", "a single point needs min == max");
  if (c.t_grid.points > 1 && !(c.t_grid.max > c.t_grid.min))
    field_error("T_grid.points", "several points need max > min");

  if (j.contains("tolerance")) c.tol = get_number(j["tolerance"], "tolerance");
  if (!(c.tol > 0 && c.tol < 1e-2)) field_error("tolerance", "must be in (0, 1e-2)");
  if (j.contains("samples")) {
    const double s = get_number(j["samples"], "samples");
    if (!(s >= 16)) field_error("samples", "at least 16 required");
    c.samples = static_cast<std::size_t>(s);
  }
  if (j.contains("fock")) {
    const json& f = j["fock"];
    check_keys(f, "fock", {"nmax", "delta_rel"});
    if (f.contains("nmax")) {
      const double n = get_number(f["nmax"], "fock.nmax");
      if (n != 0 && n < 16) field_error("fock.nmax", "0 (automatic) or >= 16");
      c.nmax = static_cast<std::size_t>(n);
    }
    if (f.contains("delta_rel")) c.delta_rel = get_number(f["delta_rel"], "fock.delta_rel");
    if (!(c.delta_rel > 0 && c.delta_rel < 0.1)) field_error("fock.delta_rel", "must be in (0, 0.1)");
  }
  if (j.contains("workers")) {
    const double w = get_number(j["workers"], "workers");
    if (!(w >= 1)) field_error("workers", "must be >= 1");
    c.workers = static_cast<std::size_t>(w);
  }
  if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("output")) {
    const json& o = j["output"];
    check_keys(o, "output", {"csv", "manifest", "trajectories", "timing"});
    c.csv_name = o.value("csv", c.csv_name);
    c.manifest_name = o.value("manifest", c.manifest_name);
    c.trajectories = o.value("trajectories", false);
    c.record_timing = o.value("timing", false);
  }
  if (j.contains("spectrum")) {
    const json& s = j["spectrum"];
    check_keys(s, "spectrum", {"eta"});
    if (!s.contains("eta")) field_error("spectrum.eta", "required");
    c.spectrum_etas = number_list(s["eta"], "spectrum.eta");
    for (double e : c.spectrum_etas)
      if (!(e >= 1)) field_error("spectrum.eta", "eta must be finite and >= 1");
  }

  // Every estimand must belong to the model.
  const EffectiveParams probe = effective_for(c, c.couplings.front(), c.etas.front());
  for (std::size_t i = 0; i < c.estimands.size(); ++i) {
    try {
      parse_estimand(probe.source, c.estimands[i]);
    } catch (const ValidationError& e) {
      field_error("estimands[" + std::to_string(i) + "]", e.what());
    }
  }
  return c;
}

std::string canonical_json(const RunConfig& c) {
  json j;
  j["name"] = c.name;
  j["model"] = {{"type", model_name(c.model)}, {"omega", c.omega}, {"g", c.couplings},
                {"quartic", quartic_name(c.quartic)}};
  j["protocol"] = {{"type", protocol_name(c.protocol)}, {"params", c.protocol_params}};
  j["estimands"] = c.estimands;
  json etas = json::array();
  for (double e : c.etas) etas.push_back(std::isinf(e) ? json("inf") : json(e));
  j["eta"] = etas;
  j["T_grid"] = {{"min", c.t_grid.min}, {"max", c.t_grid.max}, {"points", c.t_grid.points}};
  j["tolerance"] = c.tol;
  j["samples"] = c.samples;
  j["fock"] = {{"nmax", c.nmax}, {"delta_rel", c.delta_rel}};
  j["workers"] = c.workers;
  j["seed"] = c.seed;
  j["output"] = {{"csv", c.csv_name}, {"manifest", c.manifest_name},
                 {"trajectories", c.trajectories}, {"timing", c.record_timing}};
  if (!c.spectrum_etas.empty()) j["spectrum"] = {{"eta", c.spectrum_etas}};
  return j.dump();
}

std::string config_hash(const RunConfig& c) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : canonical_json(c)) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::optional<double> ResultRow::bound_q() const {
  if (!bound) return std::nullopt;
  return x * x * *bound;
}

std::optional<double> ResultRow::ratio() const {
  if (!bound || !qfi || *qfi <= 0) return std::nullopt;
  return *bound / *qfi;
}

EffectiveParams effective_for(const RunConfig& c, double g, double eta) {
  const bool inf = std::isinf(eta);
  const double size = inf ? kReferenceEta : eta;
  EffectiveParams e = [&] {
    switch (c.model) {
      case ModelKind::Rabi: {
        const double big = size * c.omega;
        return map_quantum_rabi({c.omega, big, 0.5 * g * std::sqrt(c.omega * big)});
      }
      case ModelKind::Lmg:
        return map_lmg({c.omega, g * g * c.omega, size});
      case ModelKind::Direct:
        return map_direct({c.omega, inf ? EffectiveSize::infinite() : EffectiveSize::finite(eta), g,
                           c.quartic});
    }
    throw ValidationError("unknown model");
  }();
  if (inf) e.eta = EffectiveSize::infinite();
  return e;
}

CouplingSchedule schedule_for(const RunConfig& c, double param, double g, double T) {
  switch (c.protocol) {
    case ProtocolKind::Quench:
      return CouplingSchedule::quench(g, T);
    case ProtocolKind::Adiabatic:
      return CouplingSchedule::adiabatic(param, c.omega, T);
    case ProtocolKind::Ramp:
      return CouplingSchedule::ramp(param, T);
  }
  throw ValidationError("unknown protocol");
}

namespace {

struct Task {
  double param;
  double g;
  std::string estimand;
  double eta;
  std::size_t index;
};

struct TaskResult {
  std::vector<ResultRow> rows;
  std::string regime_json;
  std::string trajectory_csv;
};

ResultRow base_row(const RunConfig& c, const Task& k, const EffectiveParams& e,
                   const EstimandTag& x, double T, const RegimeReport& reg) {
  ResultRow r;
  r.protocol = protocol_name(c.protocol);
  r.protocol_param = k.param;
  r.g = k.g;
  r.estimand = k.estimand;
  r.x = x.value;
  r.eta = k.eta;
  r.T = T;
  r.regime = reg.label_at(T);
  (void)e;
  return r;
}

void gaussian_point(const RunConfig& c, const CouplingSchedule& s, const EffectiveParams& e,
                    const EstimandTag& x, const SensitivitySample& smp, ResultRow& row) {
  const double I = qfi_squeezed(smp.b, smp.s);
  row.qfi = I;
  row.q = snr(x.value, I);
  row.n_final = photon_number(smp.b);
  row.x2_final = variance_x(smp.b);
  EvolveOptions opt;
  opt.tol = c.tol;
  opt.samples = c.samples;
  row.bound = protocol_bound(s, x, e, smp.t, opt).bound;
}

TaskResult run_task(const RunConfig& c, const Task& k) {
  TaskResult out;
  const std::vector<double> ts = c.times();
  const EffectiveParams e = effective_for(c, k.g, k.eta);
  const EstimandTag x = make_estimand(e.source, parse_estimand(e.source, k.estimand));
  const CouplingSchedule full = schedule_for(c, k.param, k.g, ts.back());
  const RegimeReport reg = regime_boundaries(e, full);
  out.regime_json = reg.to_json();
  for (double T : ts) out.rows.push_back(base_row(c, k, e, x, T, reg));

  auto timed = [](auto&& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };

  if (e.eta.is_infinite()) {
    const DriveSensitivity d = drive_sensitivity(x, e);
    // One integration for every T when the schedule does not depend on T.
    bool done = false;
    if (full.duration_independent()) {
      try {
        const double wall = timed([&] {
          const auto series = evolve_sensitivity_series(full, d, e.omega, ts, c.tol);
          for (std::size_t i = 0; i < ts.size(); ++i)
            gaussian_point(c, full.with_duration(ts[i]), e, x, series[i], out.rows[i]);
        });
        for (auto& r : out.rows) r.wall_time = wall / static_cast<double>(ts.size());
        done = true;
      } catch (const Error&) {
        for (auto& r : out.rows) r.qfi = r.q = r.bound = r.n_final = r.x2_final = std::nullopt;
      }
    }
    if (!done) {
      for (std::size_t i = 0; i < ts.size(); ++i) {
        ResultRow& r = out.rows[i];
        try {
          r.wall_time = timed([&] {
            const CouplingSchedule s = full.with_duration(ts[i]);
            const double t1[1] = {ts[i]};
            const auto series = evolve_sensitivity_series(s, d, e.omega, t1, c.tol);
            gaussian_point(c, s, e, x, series.back(), r);
          });
        } catch (const std::exception& ex) {
          r.qfi = r.q = r.bound = r.n_final = r.x2_final = std::nullopt;
          r.error = error_tag(ex);
        }
      }
    }
    if (c.trajectories) {
      try {
        EvolveOptions opt;
        opt.tol = c.tol;
        opt.samples = c.samples;
        std::ostringstream os;
        evolve_b(full, e.omega, ts.back(), opt).write_csv(os);
        out.trajectory_csv = os.str();
      } catch (const std::exception&) {
      }
    }
    return out;
  }

  FockQfiOptions fo;
  fo.delta_rel = c.delta_rel;
  fo.propagate.tol = c.tol;
  auto fill_fock = [&](ResultRow& r, const FockQfiSample& smp, std::size_t nmax) {
    r.qfi = smp.qfi;
    r.q = snr(x.value, smp.qfi);
    r.n_final = smp.obs.n;
    r.x2_final = smp.obs.x2;
    r.nmax = nmax;
  };
  bool done = false;
  if (full.duration_independent()) {
    try {
      std::size_t used = 0;
      const double wall = timed([&] {
        const auto series = qfi_fock_series(full, e, x, ts, c.nmax, fo, &used);
        for (std::size_t i = 0; i < ts.size(); ++i) fill_fock(out.rows[i], series[i], used);
      });
      for (auto& r : out.rows) r.wall_time = wall / static_cast<double>(ts.size());
      done = true;
    } catch (const Error&) {
    }
  }
  if (!done) {
    for (std::size_t i = 0; i < ts.size(); ++i) {
      ResultRow& r = out.rows[i];
      try {
        r.wall_time = timed([&] {
          std::size_t used = 0;
          const double t1[1] = {ts[i]};
          const auto series = qfi_fock_series(full.with_duration(ts[i]), e, x, t1, c.nmax, fo, &used);
          fill_fock(r, series.back(), used);
        });
      } catch (const std::exception& ex) {
        r.qfi = r.q = r.n_final = r.x2_final = std::nullopt;
        r.error = error_tag(ex);
      }
    }
  }
  return out;
}

std::string fmt_opt(const std::optional<double>& v) { return v ? format_number(*v) : std::string(); }

}  // namespace

std::string format_number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.16e", v);
  return buf;
}

void write_csv(std::ostream& os, const std::vector<ResultRow>& rows, const std::string& hash,
               bool timing) {
  os << "config_hash,protocol,protocol_param,g,estimand,x,eta,T,Q,qfi,bound,bound_Q,ratio,N_final,"
        "x2_final,regime,nmax,error";
  if (timing) os << ",wall_time_s";
  os << '\n';
  for (const auto& r : rows) {
    os << hash << ',' << r.protocol << ',' << format_number(r.protocol_param) << ','
       << format_number(r.g) << ',' << r.estimand << ',' << format_number(r.x) << ','
       << format_number(r.eta) << ',' << format_number(r.T) << ',' << fmt_opt(r.q) << ','
       << fmt_opt(r.qfi) << ',' << fmt_opt(r.bound) << ',' << fmt_opt(r.bound_q()) << ','
       << fmt_opt(r.ratio()) << ',' << fmt_opt(r.n_final) << ',' << fmt_opt(r.x2_final) << ','
       << r.regime << ',' << r.nmax << ',' << r.error;
    if (timing) os << ',' << format_number(r.wall_time);
    os << '\n';
  }
}

namespace {

std::vector<Task> make_tasks(const RunConfig& c) {
  std::vector<Task> tasks;
  for (double p : c.protocol_params)
    for (double g : c.couplings)
      for (const auto& x : c.estimands)
        for (double eta : c.etas) tasks.push_back({p, g, x, eta, tasks.size()});
  return tasks;
}

std::vector<TaskResult> execute(const RunConfig& c) {
  const std::vector<Task> tasks = make_tasks(c);
  std::vector<TaskResult> results(tasks.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      try {
        results[i] = run_task(c, tasks[i]);
      } catch (const std::exception& ex) {
        // Whole-task failure (e.g. model construction): one error row per T.
        TaskResult tr;
        for (double T : c.times()) {
          ResultRow r;
          r.protocol = protocol_name(c.protocol);
          r.protocol_param = tasks[i].param;
          r.g = tasks[i].g;
          r.estimand = tasks[i].estimand;
          r.eta = tasks[i].eta;
          r.T = T;
          r.error = error_tag(ex);
          tr.rows.push_back(r);
        }
        results[i] = std::move(tr);
      }
    }
  };
  const std::size_t n = std::max<std::size_t>(1, std::min(c.workers, tasks.size()));
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < n; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  return results;
}

}  // namespace

std::vector<ResultRow> run_rows(const RunConfig& c) {
  std::vector<ResultRow> rows;
  for (auto& tr : execute(c))
    for (auto& r : tr.rows) rows.push_back(std::move(r));
  return rows;
}

RunSummary run(const RunConfig& c, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const std::vector<Task> tasks = make_tasks(c);
  std::vector<TaskResult> results = execute(c);
  RunSummary sum;
  sum.hash = config_hash(c);
  std::vector<ResultRow> rows;
  for (auto& tr : results)
    for (auto& r : tr.rows) rows.push_back(r);
  sum.rows = rows.size();
  for (const auto& r : rows)
    if (!r.error.empty()) ++sum.failed;

  sum.csv_path = (fs::path(out_dir) / c.csv_name).string();
  {
    std::ofstream os(sum.csv_path);
    if (!os) throw Error("cannot write " + sum.csv_path);
    write_csv(os, rows, sum.hash, c.record_timing);
  }

  json man;
  man["config_hash"] = sum.hash;
  man["config"] = json::parse(canonical_json(c));
  man["versions"] = {{"critq", kVersion},
                     {"compiler", __VERSION__},
                     {"kernels", std::string(kernels::backend_name(kernels::active_backend()))}};
  man["totals"] = {{"rows", sum.rows}, {"failed", sum.failed}, {"tasks", tasks.size()}};
  man["outputs"]["csv"] = c.csv_name;
  json task_list = json::array();
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    json t;
    t["index"] = i;
    t["protocol_param"] = tasks[i].param;
    t["g"] = tasks[i].g;
    t["estimand"] = tasks[i].estimand;
    t["eta"] = std::isinf(tasks[i].eta) ? json("inf") : json(tasks[i].eta);
    if (!results[i].regime_json.empty()) t["regimes"] = json::parse(results[i].regime_json);
    if (!results[i].trajectory_csv.empty()) {
      const std::string name = "trajectory_" + std::to_string(i) + ".csv";
      std::ofstream(fs::path(out_dir) / name) << results[i].trajectory_csv;
      t["trajectory"] = name;
    }
    task_list.push_back(t);
  }
  man["tasks"] = task_list;

  if (!c.spectrum_etas.empty()) {
    const std::string name = "spectrum.csv";
    std::ofstream os(fs::path(out_dir) / name);
    os << "eta,g,nmax,E0,E1,gap,gap_scaled,N,x2,p2\n";
    for (double eta : c.spectrum_etas) {
      const EffectiveParams e = effective_for(c, c.couplings.front(), eta);
      const ConvergedSpectrum sp = converged_spectrum(e, e.g);
      const FockVector gs = ground_state(build_hamiltonian(e, e.g, sp.nmax));
      const FockObservables o = observables_fock(gs);
      os << format_number(eta) << ',' << format_number(e.g) << ',' << sp.nmax << ','
         << format_number(sp.spectrum.e0) << ',' << format_number(sp.spectrum.e1) << ','
         << format_number(sp.spectrum.gap) << ','
         << format_number(sp.spectrum.gap * std::cbrt(eta) / e.omega) << ',' << format_number(o.n)
         << ',' << format_number(o.x2) << ',' << format_number(o.p2) << '\n';
    }
    man["outputs"]["spectrum"] = name;
  }

  sum.manifest_path = (fs::path(out_dir) / c.manifest_name).string();
  std::ofstream(sum.manifest_path) << man.dump(2) << '\n';
  return sum;
}

int Table::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<int>(i);
  return -1;
}

Table read_csv(std::istream& is) {
  Table t;
  std::string line;
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : s) {
      if (ch == ',') {
        out.push_back(cur);
        cur.clear();
      } else if (ch != '\r') {
        cur.push_back(ch);
      }
    }
    out.push_back(cur);
    return out;
  };
  if (!std::getline(is, line)) throw ValidationError("results file is empty");
  t.header = split(line);
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto cells = split(line);
    if (cells.size() != t.header.size())
      throw ValidationError("line " + std::to_string(lineno) + ": expected " +
                            std::to_string(t.header.size()) + " columns");
    t.rows.push_back(std::move(cells));
  }
  return t;
}

WindowSpec parse_window(const std::string& spec) {
  WindowSpec w;
  if (spec == "auto") {
    w.automatic = true;
    return w;
  }
  const auto comma = spec.find(',');
  if (comma == std::string::npos) throw ValidationError("window must be 'lo,hi' or 'auto'");
  try {
    w.lo = std::stod(spec.substr(0, comma));
    w.hi = std::stod(spec.substr(comma + 1));
  } catch (const std::exception&) {
    throw ValidationError("window bounds are not numbers");
  }
  if (!(w.lo > 0 && w.hi > w.lo)) throw ValidationError("window needs 0 < lo < hi");
  return w;
}

namespace {

double cell_number(const std::string& s) {
  if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return kInf;
  try {
    return std::stod(s);
  } catch (const std::exception&) {
    throw ValidationError("malformed number '" + s + "'");
  }
}

int need(const Table& t, const std::string& name) {
  const int c = t.column(name);
  if (c < 0) throw ValidationError("results file lacks column '" + name + "'");
  return c;
}

}  // namespace

std::vector<FitRow> fit_table(const Table& t, const WindowSpec& w) {
  const int cp = need(t, "protocol"), cpp = need(t, "protocol_param"), cg = need(t, "g"),
            ce = need(t, "estimand"), ceta = need(t, "eta"), cT = need(t, "T"), cQ = need(t, "Q"),
            creg = need(t, "regime");
  using Key = std::tuple<std::string, std::string, std::string, std::string, std::string>;
  std::vector<Key> order;
  std::map<Key, std::vector<std::pair<SeriesPoint, std::string>>> groups;
  for (const auto& r : t.rows) {
    Key k{r[cp], r[cpp], r[cg], r[ce], r[ceta]};
    if (!groups.count(k)) order.push_back(k);
    const double q = cell_number(r[cQ]);
    auto& g = groups[k];
    if (std::isfinite(q)) g.push_back({{cell_number(r[cT]), q}, r[creg]});
    else groups[k];
  }
  std::vector<FitRow> out;
  for (const auto& k : order) {
    FitRow fr{std::get<0>(k), std::get<1>(k), std::get<2>(k), std::get<3>(k), std::get<4>(k), {}, {}};
    const auto& pts = groups[k];
    std::vector<SeriesPoint> series;
    for (const auto& p : pts) series.push_back(p.first);
    try {
      FitWindow win{w.lo, w.hi};
      if (w.automatic) {
        double lo = kInf, hi = 0;
        for (const auto& p : pts)
          if (p.second == "II" || p.second == "IIb") {
            lo = std::min(lo, p.first.t);
            hi = std::max(hi, p.first.t);
          }
        if (!(hi > 0)) throw ValidationError("no regime-II rows");
        win = {3.0 * lo, hi / 3.0};
      }
      if (series.empty()) throw ValidationError("no valid rows");
      FitOptions fo;
      fo.min_span = w.min_span;
      fr.fit = fit_exponent(series, win, fo);
    } catch (const Error& e) {
      fr.error = e.what();
    }
    out.push_back(fr);
  }
  return out;
}

std::vector<FitRow> eta_scaling_table(const Table& t, double plateau_frac) {
  const int cp = need(t, "protocol"), cpp = need(t, "protocol_param"), cg = need(t, "g"),
            ce = need(t, "estimand"), ceta = need(t, "eta"), cT = need(t, "T"), cQ = need(t, "Q");
  using Key = std::tuple<std::string, std::string, std::string, std::string>;
  std::vector<Key> order;
  std::map<Key, std::map<double, std::vector<std::pair<double, double>>>> groups;
  for (const auto& r : t.rows) {
    const double eta = cell_number(r[ceta]);
    if (!std::isfinite(eta)) continue;
    Key k{r[cp], r[cpp], r[cg], r[ce]};
    if (!groups.count(k)) order.push_back(k);
    const double q = cell_number(r[cQ]);
    if (std::isfinite(q)) groups[k][eta].push_back({cell_number(r[cT]), q});
  }
  std::vector<FitRow> out;
  for (const auto& k : order) {
    FitRow fr{std::get<0>(k), std::get<1>(k), std::get<2>(k), std::get<3>(k), "plateau-vs-eta", {}, {}};
    std::vector<SeriesPoint> series;
    for (const auto& [eta, pts] : groups[k]) {
      double tmax = 0;
      for (auto [T, q] : pts) tmax = std::max(tmax, T);
      double acc = 0;
      std::size_t n = 0;
      for (auto [T, q] : pts)
        if (T >= plateau_frac * tmax) {
          acc += q;
          ++n;
        }
      if (n) series.push_back({eta, acc / static_cast<double>(n)});
    }
    try {
      if (series.size() < 2) throw ValidationError("need at least two finite eta values");
      if (series.size() == 2) {
        // Two sizes: the exponent is the log ratio, with no residual.
        const auto& a = series.front();
        const auto& b = series.back();
        fr.fit.beta = std::log(b.q / a.q) / std::log(b.t / a.t);
        fr.fit.lo = a.t;
        fr.fit.hi = b.t;
        fr.fit.points = 2;
        fr.fit.log_prefactor = std::log(a.q) - fr.fit.beta * std::log(a.t);
      } else {
        FitOptions fo;
        fo.min_points = 3;
        fo.min_span = 1.0;
        fr.fit = fit_exponent(series, {series.front().t, series.back().t}, fo);
      }
    } catch (const Error& e) {
      fr.error = e.what();
    }
    out.push_back(fr);
  }
  return out;
}

void write_fit_csv(std::ostream& os, const std::vector<FitRow>& rows) {
  os << "protocol,protocol_param,g,estimand,eta,T_lo,T_hi,points,beta,stderr,rms,error\n";
  for (const auto& r : rows) {
    os << r.protocol << ',' << r.protocol_param << ',' << r.g << ',' << r.estimand << ',' << r.eta
       << ',';
    if (r.error.empty()) {
      os << format_number(r.fit.lo) << ',' << format_number(r.fit.hi) << ',' << r.fit.points << ','
         << format_number(r.fit.beta) << ',' << format_number(r.fit.std_error) << ','
         << format_number(r.fit.rms) << ",\n";
    } else {
      std::string e = r.error;
      std::replace(e.begin(), e.end(), ',', ';');
      os << ",,,,,," << e << '\n';
    }
  }
}

BoundCheck verify_bounds(const Table& t, double rel_tol) {
  const int cq = need(t, "qfi"), cb = need(t, "bound");
  const int cerr = t.column("error");
  BoundCheck out;
  out.min_ratio = kInf;
  out.max_ratio = 0;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    if (cerr >= 0 && !r[cerr].empty()) continue;
    const double q = cell_number(r[cq]), b = cell_number(r[cb]);
    if (!std::isfinite(q) || !std::isfinite(b)) continue;
    ++out.checked;
    if (q > 0) {
      out.min_ratio = std::min(out.min_ratio, b / q);
      out.max_ratio = std::max(out.max_ratio, b / q);
    }
    if (q > b * (1.0 + rel_tol)) out.violations.push_back({i, q, b, q / b - 1.0});
  }
  if (out.checked == 0) out.min_ratio = 0;
  return out;
}

namespace {

struct PresetEntry {
  const char* description;
  const char* config;
};

const std::map<std::string, PresetEntry>& preset_table() {
  static const std::map<std::string, PresetEntry> table = {
      {"fig2-quench-state",
       {"squeezing trajectories and photon number after quenches to several couplings",
        R"({"name": "fig2-quench-state",
  "model": {"type": "rabi", "omega": 1.0, "g": [0.5, 0.9, 0.99, 1.0]},
  "protocol": {"type": "quench"},
  "estimands": ["lambda"],
  "eta": "inf",
  "T_grid": {"min": 0.1, "max": 100.0, "points": 60},
  "output": {"trajectories": true}})"}},
      {"fig3-quench",
       {"critical quench in the thermodynamic limit, Q against T with the closed-form bound",
        R"({"name": "fig3-quench",
  "model": {"type": "rabi", "omega": 1.0, "g": 1.0},
  "protocol": {"type": "quench"},
  "estimands": ["omega", "lambda"],
  "eta": "inf",
  "T_grid": {"min": 0.1, "max": 10000.0, "points": 81}})"}},
      {"fig4-finite-size",
       {"critical quench at finite size against the Gaussian limit",
        R"({"name": "fig4-finite-size",
  "model": {"type": "rabi", "omega": 1.0, "g": 1.0},
  "protocol": {"type": "quench"},
  "estimands": ["omega"],
  "eta": [100, 1000, "inf"],
  "T_grid": {"min": 0.1, "max": 300.0, "points": 36}})"}},
      {"fig5-adiabatic",
       {"adiabatic ramp to the critical point in the thermodynamic limit",
        R"({"name": "fig5-adiabatic",
  "model": {"type": "rabi", "omega": 1.0, "g": 1.0},
  "protocol": {"type": "adiabatic", "phi": 0.01},
  "estimands": ["omega", "lambda"],
  "eta": "inf",
  "T_grid": {"min": 1.0, "max": 100000.0, "points": 81}})"}},
      {"fig6-adiabatic-speeds",
       {"adiabatic ramps at several speeds",
        R"({"name": "fig6-adiabatic-speeds",
  "model": {"type": "rabi", "omega": 1.0, "g": 1.0},
  "protocol": {"type": "adiabatic", "phi": [0.005, 0.01, 0.02, 0.05]},
  "estimands": ["omega"],
  "eta": "inf",
  "T_grid": {"min": 1.0, "max": 100000.0, "points": 61}})"}},
      {"fig7-kz",
       {"finite-time ramps with exponents 1 to 8: Kibble-Zurek crossover",
        R"({"name": "fig7-kz",
  "model": {"type": "rabi", "omega": 1.0, "g": 1.0},
  "protocol": {"type": "ramp", "r": [1, 2, 4, 8]},
  "estimands": ["omega"],
  "eta": "inf",
  "T_grid": {"min": 10.0, "max": 10000.0, "points": 61}})"}},
      {"fig7-large-r",
       {"finite-time ramps with large exponents approaching the quench",
        R"({"name": "fig7-large-r",
  "model": {"type": "rabi", "omega": 1.0, "g": 1.0},
  "protocol": {"type": "ramp", "r": [16, 32, 64]},
  "estimands": ["omega"],
  "eta": "inf",
  "T_grid": {"min": 1.0, "max": 1000.0, "points": 61}})"}},
      {"fig8-saturation",
       {"adiabatic ramps at finite size: saturation of Q with eta, plus the critical spectrum",
        R"({"name": "fig8-saturation",
  "model": {"type": "rabi", "omega": 1.0, "g": 1.0},
  "protocol": {"type": "adiabatic", "phi": 0.05},
  "estimands": ["omega"],
  "eta": [100, 1000],
  "T_grid": {"min": 10.0, "max": 3000.0, "points": 31},
  "spectrum": {"eta": [100, 1000, 10000]}})"}},
      {"fig8-ramp",
       {"linear ramp at finite size",
        R"({"name": "fig8-ramp",
  "model": {"type": "rabi", "omega": 1.0, "g": 1.0},
  "protocol": {"type": "ramp", "r": 1},
  "estimands": ["omega"],
  "eta": [100, 1000],
  "T_grid": {"min": 1.0, "max": 1000.0, "points": 31}})"}},
  };
  return table;
}

}  // namespace

const std::map<std::string, std::string>& presets() {
  static const std::map<std::string, std::string> m = [] {
    std::map<std::string, std::string> out;
    for (const auto& [k, v] : preset_table()) out[k] = v.config;
    return out;
  }();
  return m;
}

std::string preset_description(const std::string& name) {
  const auto it = preset_table().find(name);
  if (it == preset_table().end()) throw ValidationError("unknown preset '" + name + "'");
  return it->second.description;
}

}  // namespace critq::harness
