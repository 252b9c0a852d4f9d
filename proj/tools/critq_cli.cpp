// critq: run sweeps, fit exponents, check bounds.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "critq/error.hpp"
#include "critq/harness.hpp"

namespace h = critq::harness;

namespace {

enum Exit { kOk = 0, kValidation = 1, kRuntime = 2, kViolation = 3 };

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw critq::ValidationError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

h::Table load_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw critq::ValidationError("cannot open " + path);
  return h::read_csv(in);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"critq: critical quantum metrology sweeps"};
  app.require_subcommand(1);

  std::string config_path, preset, out_dir = "out";
  std::size_t workers = 0;
  double tol = 0.0;
  auto* run = app.add_subcommand("run", "run a sweep and write CSV + manifest");
  auto* src = run->add_option("--config", config_path, "config file (JSON)");
  run->add_option("--preset", preset, "bundled preset name")->excludes(src);
  run->add_option("--out", out_dir, "output directory");
  run->add_option("--workers", workers, "worker threads (overrides config)");
  run->add_option("--tol", tol, "integrator tolerance (overrides config)");

  std::string results, window = "auto", fit_out;
  bool across_eta = false;
  double plateau = 0.5, min_span = 3.0;
  auto* fit = app.add_subcommand("fit", "fit power-law exponents to a results file");
  fit->add_option("results", results, "results CSV")->required();
  fit->add_option("--window", window, "lo,hi or auto");
  fit->add_option("--min-span", min_span, "minimum hi/lo of the window");
  fit->add_flag("--across-eta", across_eta, "fit the long-time plateau against eta");
  fit->add_option("--plateau", plateau, "plateau rows: T >= frac * T_max");
  fit->add_option("--out", fit_out, "write the fit table here instead of stdout");

  std::string verify_file;
  double rel_tol = 1e-6;
  auto* verify = app.add_subcommand("verify-bounds", "check qfi <= bound on every row");
  verify->add_option("results", verify_file, "results CSV")->required();
  verify->add_option("--rel-tol", rel_tol, "relative tolerance");

  std::string dump_name, write_dir;
  auto* pre = app.add_subcommand("presets", "list the bundled figure configs");
  pre->add_option("--show", dump_name, "print one preset");
  pre->add_option("--write", write_dir, "write every preset into a directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kValidation;
  }

  try {
    if (*run) {
      std::string text;
      if (!preset.empty()) {
        const auto& ps = h::presets();
        const auto it = ps.find(preset);
        if (it == ps.end()) throw critq::ValidationError("unknown preset '" + preset + "'");
        text = it->second;
      } else if (!config_path.empty()) {
        text = slurp(config_path);
      } else {
        throw critq::ValidationError("run needs --config or --preset");
      }
      h::RunConfig cfg = h::parse_config(text);
      if (workers) cfg.workers = workers;
      if (tol > 0) {
        if (!(tol < 1e-2)) throw critq::ValidationError("--tol must be below 1e-2");
        cfg.tol = tol;
      }
      const h::RunSummary s = h::run(cfg, out_dir);
      std::printf("%s: %zu rows (%zu with errors), hash %s\n  %s\n  %s\n", cfg.name.c_str(), s.rows,
                  s.failed, s.hash.c_str(), s.csv_path.c_str(), s.manifest_path.c_str());
      return kOk;
    }
    if (*fit) {
      const h::Table t = load_table(results);
      std::vector<h::FitRow> rows;
      if (across_eta) {
        rows = h::eta_scaling_table(t, plateau);
      } else {
        h::WindowSpec w = h::parse_window(window);
        w.min_span = min_span;
        rows = h::fit_table(t, w);
      }
      if (fit_out.empty()) {
        h::write_fit_csv(std::cout, rows);
      } else {
        std::ofstream os(fit_out);
        h::write_fit_csv(os, rows);
      }
      bool any = false;
      for (const auto& r : rows) any = any || r.error.empty();
      if (!any) throw critq::ValidationError("no group could be fitted");
      return kOk;
    }
    if (*verify) {
      const h::BoundCheck c = h::verify_bounds(load_table(verify_file), rel_tol);
      std::printf("checked %zu rows, bound/qfi in [%.6g, %.6g], %zu violations\n", c.checked,
                  c.min_ratio, c.max_ratio, c.violations.size());
      for (const auto& v : c.violations)
        std::printf("  row %zu: qfi %.16e > bound %.16e (margin %.3e)\n", v.row + 1, v.qfi, v.bound,
                    v.margin);
      return c.violations.empty() ? kOk : kViolation;
    }
    if (*pre) {
      if (!dump_name.empty()) {
        const auto it = h::presets().find(dump_name);
        if (it == h::presets().end()) throw critq::ValidationError("unknown preset '" + dump_name + "'");
        std::printf("%s\n", it->second.c_str());
        return kOk;
      }
      for (const auto& [name, text] : h::presets()) {
        std::printf("%-24s %s\n", name.c_str(), h::preset_description(name).c_str());
        if (!write_dir.empty()) std::ofstream(write_dir + "/" + name + ".json") << text << '\n';
      }
      return kOk;
    }
  } catch (const critq::ValidationError& e) {
    std::fprintf(stderr, "validation error: %s\n", e.what());
    return kValidation;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kRuntime;
  }
  return kOk;
}
