// Command-line front end: run, sweep, list-scenarios.

#include "aplr/runner.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <string>
#include <vector>

namespace {

// String-valued overrides keyed by manifest key; only options given on the
// command line are applied, after the config file.
struct Overrides {
  std::string config;
  std::map<std::string, std::string> values;
  bool unweighted = false;
  bool bench = false;
  bool self_reference = false;
};

void add_run_options(CLI::App& app, Overrides& o) {
  app.add_option("--config", o.config, "key = value configuration file");
  for (const auto& [flag, key, help] : std::vector<std::array<std::string, 3>>{
           {"--scenario", "scenario", "scenario name (see list-scenarios)"},
           {"--scheme", "scheme", "IMEX, IMEX-S, IMEX-BUG, IMEX-S-BUG, IMEX-aBUG or IMEX-S-aBUG"},
           {"--rank", "rank", "fixed (BUG) or initial (aBUG) rank"},
           {"--tau", "tau", "aBUG truncation tolerance"},
           {"--dt-mult", "dt_mult", "multiplier on the scenario time step"},
           {"--mesh-div", "mesh_div", "divide mesh and quadrature sizes"},
           {"--theta", "theta", "theta of the reported energy"},
           {"--out", "out", "output directory"},
           {"--seed", "seed", "seed for basis completion"},
           {"--epsilon", "epsilon", "Knudsen number (manufactured scenarios)"},
           {"--max-rank", "max_rank", "rank cap of the adaptive integrators"},
           {"--final-time", "final_time", "override the final time"}}) {
    app.add_option_function<std::string>(flag, [&o, key](const std::string& v) { o.values[key] = v; }, help);
  }
  app.add_flag("--unweighted", o.unweighted, "factorize G instead of G M");
  app.add_flag("--bench", o.bench, "repeat 5 times and report mean wall times");
  app.add_flag("--self-reference", o.self_reference, "compute the self-refined reference when available");
}

aplr::RunManifest build_manifest(const Overrides& o) {
  aplr::RunManifest m;
  if (!o.config.empty()) m = aplr::parse_manifest_file(o.config);
  for (const auto& [key, value] : o.values) aplr::apply_override(m, key, value);
  if (o.unweighted) m.unweighted = true;
  if (o.bench) m.bench = true;
  if (o.self_reference) m.self_reference = true;
  m.validate();
  return m;
}

int exit_code(const aplr::RunResult& r) {
  if (r.status == "ok") return 0;
  return r.status == "diverged" ? 3 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"AP IMEX and low-rank solvers for linear kinetic transport"};
  app.require_subcommand(1);

  Overrides run_opts;
  CLI::App* run = app.add_subcommand("run", "run one scenario with one scheme");
  add_run_options(*run, run_opts);

  Overrides sweep_opts;
  std::string axis;
  CLI::App* sw = app.add_subcommand("sweep", "run a template once per axis value");
  add_run_options(*sw, sweep_opts);
  sw->add_option("--axis", axis, "key=v1,v2,... (omit for a single run)");

  CLI::App* list = app.add_subcommand("list-scenarios", "print scenario names and scheme tags");

  CLI11_PARSE(app, argc, argv);

  try {
    if (list->parsed()) {
      for (const auto& name : aplr::scenario_names()) std::cout << name << '\n';
      std::cout << "schemes:";
      for (aplr::Scheme s : aplr::all_schemes) std::cout << ' ' << aplr::to_string(s);
      std::cout << '\n';
      return 0;
    }
    if (run->parsed()) {
      const aplr::RunManifest m = build_manifest(run_opts);
      const aplr::RunResult r = aplr::execute(m);
      aplr::write_summary(std::cout, r);
      return exit_code(r);
    }
    const aplr::RunManifest m = build_manifest(sweep_opts);
    std::string key;
    std::vector<std::string> values;
    if (!axis.empty()) {
      const auto eq = axis.find('=');
      if (eq == std::string::npos) throw std::invalid_argument("--axis expects key=v1,v2,...");
      key = axis.substr(0, eq);
      values = CLI::detail::split(axis.substr(eq + 1), ',');
    }
    const aplr::SweepResult s = aplr::sweep(m, key, values);
    int failures = 0;
    for (std::size_t i = 0; i < s.rows.size(); ++i) {
      const aplr::RunResult& r = s.rows[i].result;
      std::cout << i << ' ' << s.rows[i].value << ' ' << r.status;
      if (r.error) std::cout << " error_l2=" << *r.error;
      std::cout << " per_step_seconds=" << r.wall_per_step;
      if (!r.ok()) std::cout << " (" << r.message << ')';
      std::cout << '\n';
      failures += r.ok() ? 0 : 1;
    }
    if (s.fitted_slope) std::cout << "fitted_order = " << -*s.fitted_slope << '\n';
    return failures == 0 ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
