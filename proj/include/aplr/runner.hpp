#pragma once

// Scenario execution, per-step traces, artifacts on disk and parameter sweeps.

#include "aplr/diagnostics.hpp"
#include "aplr/fullrank.hpp"
#include "aplr/lowrank.hpp"
#include "aplr/scenarios.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace aplr {

struct RunManifest {
  std::string scenario;
  Scheme scheme = Scheme::imex;
  std::optional<Index> rank;
  std::optional<double> tau;
  double dt_mult = 1.0;
  int mesh_div = 1;
  std::optional<double> theta;
  bool unweighted = false;
  std::string out;
  std::uint64_t seed = 42;
  bool bench = false;
  // Extensions beyond the built-in defaults.
  std::optional<double> epsilon;
  std::optional<Index> max_rank;
  std::optional<double> final_time;
  // Compute the (possibly expensive) self-refined reference when the scenario has one.
  bool self_reference = false;

  void validate() const {
    if (scenario.empty()) throw std::invalid_argument("manifest: scenario is required");
    if (rank && *rank < 1) throw std::invalid_argument("manifest: rank must be at least 1");
    if (tau && !(*tau > 0.0)) throw std::invalid_argument("manifest: tau must be positive");
    if (!(dt_mult > 0.0) || !std::isfinite(dt_mult)) throw std::invalid_argument("manifest: dt_mult must be positive");
    if (mesh_div < 1) throw std::invalid_argument("manifest: mesh_div must be at least 1");
    if (theta && !(*theta >= 0.0 && *theta <= 1.0)) throw std::invalid_argument("manifest: theta must lie in [0, 1]");
    if (epsilon && !(*epsilon > 0.0)) throw std::invalid_argument("manifest: epsilon must be positive");
    if (max_rank && *max_rank < 1) throw std::invalid_argument("manifest: max_rank must be at least 1");
    if (final_time && !(*final_time > 0.0)) throw std::invalid_argument("manifest: final_time must be positive");
    if (unweighted && !is_low_rank(scheme))
      throw std::invalid_argument("manifest: unweighted mode needs a low-rank scheme");
  }
};

namespace detail {

inline bool parse_bool(const std::string& v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw std::invalid_argument("expected a boolean, got '" + v + "'");
}

inline double parse_double(const std::string& v) {
  std::size_t used = 0;
  const double d = std::stod(v, &used);
  if (used != v.size()) throw std::invalid_argument("expected a number, got '" + v + "'");
  return d;
}

inline long long parse_int(const std::string& v) {
  std::size_t used = 0;
  const long long i = std::stoll(v, &used);
  if (used != v.size()) throw std::invalid_argument("expected an integer, got '" + v + "'");
  return i;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

// Applies one key = value override.
inline void apply_override(RunManifest& m, const std::string& key, const std::string& value) {
  try {
    if (key == "scenario") m.scenario = value;
    else if (key == "scheme") m.scheme = parse_scheme(value);
    else if (key == "rank") m.rank = static_cast<Index>(detail::parse_int(value));
    else if (key == "tau") m.tau = detail::parse_double(value);
    else if (key == "dt_mult" || key == "dt-mult") m.dt_mult = detail::parse_double(value);
    else if (key == "mesh_div" || key == "mesh-div") m.mesh_div = static_cast<int>(detail::parse_int(value));
    else if (key == "theta") m.theta = detail::parse_double(value);
    else if (key == "unweighted") m.unweighted = detail::parse_bool(value);
    else if (key == "out") m.out = value;
    else if (key == "seed") m.seed = static_cast<std::uint64_t>(detail::parse_int(value));
    else if (key == "bench") m.bench = detail::parse_bool(value);
    else if (key == "epsilon") m.epsilon = detail::parse_double(value);
    else if (key == "max_rank" || key == "max-rank") m.max_rank = static_cast<Index>(detail::parse_int(value));
    else if (key == "final_time" || key == "final-time") m.final_time = detail::parse_double(value);
    else if (key == "self_reference" || key == "self-reference") m.self_reference = detail::parse_bool(value);
    else throw std::invalid_argument("unknown key");
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument("override " + key + " = " + value + ": " + e.what());
  } catch (const std::out_of_range&) {
    throw std::invalid_argument("override " + key + " = " + value + ": out of range");
  }
}

// Plain-text configuration: one "key = value" per line, '#' starts a comment.
inline RunManifest parse_manifest(std::istream& in) {
  RunManifest m;
  std::string line;
  int lineno = 0;
  bool have_scenario = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    apply_override(m, key, value);
    have_scenario = have_scenario || key == "scenario";
  }
  if (!have_scenario) throw std::invalid_argument("config: the scenario key is required");
  return m;
}

inline RunManifest parse_manifest_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file " + path);
  return parse_manifest(in);
}

struct SliceData {
  std::string name;
  std::vector<double> coord;
  std::vector<double> rho;
};

struct RunResult {
  RunManifest manifest;
  Scenario scenario;
  std::string integrator;
  std::vector<EnergyRecord> trace;
  VectorXd rho;
  double dt = 0.0;
  long steps = 0;
  double final_time = 0.0;
  double theta = 1.0;
  double wall_total = 0.0;
  double wall_per_step = 0.0;
  std::string status = "ok";
  long failed_step = -1;
  std::string message;
  // L2 distance to the scenario reference (absolute and relative).
  std::optional<double> error, rel_error;
  std::vector<SliceData> slices;
  std::vector<double> step_seconds;

  bool ok() const { return status == "ok"; }
};

// Rho values along a slice, ordered by the free coordinate.
inline SliceData extract_slice(const StaggeredGrid& grid, const VectorXd& rho, const SliceSpec& spec) {
  SliceData out;
  out.name = spec.name;
  if (grid.dim() == 1) {
    std::vector<std::pair<double, double>> pts;
    for (Index k = 0; k < grid.rho_count(); ++k) pts.emplace_back(grid.position(Lattice::rho, k)[0], rho(k));
    std::sort(pts.begin(), pts.end());
    for (const auto& [c, v] : pts) {
      out.coord.push_back(c);
      out.rho.push_back(v);
    }
    return out;
  }
  const int fixed = spec.fixed_axis;
  const int free = 1 - fixed;
  double best = std::numeric_limits<double>::infinity();
  for (Index k = 0; k < grid.rho_count(); ++k)
    best = std::min(best, std::abs(grid.position(Lattice::rho, k)[fixed] - spec.value));
  std::vector<std::pair<double, double>> pts;
  const double tol = 1e-9 * grid.min_spacing();
  for (Index k = 0; k < grid.rho_count(); ++k) {
    const auto p = grid.position(Lattice::rho, k);
    if (std::abs(std::abs(p[fixed] - spec.value) - best) <= tol) pts.emplace_back(p[free], rho(k));
  }
  std::sort(pts.begin(), pts.end());
  for (const auto& [c, v] : pts) {
    out.coord.push_back(c);
    out.rho.push_back(v);
  }
  return out;
}

namespace detail {

// Rho indices of a 1D grid sorted by position.
inline std::vector<Index> position_order(const StaggeredGrid& g) {
  std::vector<Index> idx(static_cast<std::size_t>(g.rho_count()));
  for (Index k = 0; k < g.rho_count(); ++k) idx[static_cast<std::size_t>(k)] = k;
  std::sort(idx.begin(), idx.end(), [&](Index a, Index b) {
    return g.position(Lattice::rho, a)[0] < g.position(Lattice::rho, b)[0];
  });
  return idx;
}

inline long step_count(double final_time, double dt) {
  return std::max(1L, static_cast<long>(std::ceil(final_time / dt * (1.0 - 1e-12))));
}

inline Integrator choose_integrator(Scheme scheme, const Scenario& sc) {
  if (!is_adaptive(scheme)) return Integrator::bug;
  return sc.material.sigma_s_floor > 0.0 && sc.epsilon <= 1e-3 ? Integrator::ap_abug : Integrator::abug;
}

inline std::string integrator_name(Scheme scheme, Integrator integ) {
  if (!is_low_rank(scheme)) return "full-rank";
  switch (integ) {
    case Integrator::bug: return "BUG";
    case Integrator::abug: return "aBUG";
    case Integrator::ap_abug: return "AP-aBUG";
  }
  return "";
}

// Full-rank IMEX with the given step count, used for self-refined references.
inline VectorXd full_rank_density(const Scenario& sc, const SolverConfig& cfg, long steps) {
  FullState s{sc.rho0, sc.g0.dense()};
  for (long n = 0; n < steps; ++n) s = imex_step(sc.grid, sc.quad, sc.material, cfg, s, (n + 1) * cfg.dt);
  return s.rho;
}

inline void fill_reference(const Scenario& sc, const RunManifest& m, const SolverConfig& cfg, RunResult& r) {
  const StaggeredGrid& g = sc.grid;
  VectorXd ref;
  switch (sc.reference) {
    case ReferenceKind::none: return;
    case ReferenceKind::manufactured: {
      const double t = r.final_time;
      ref = sample(g, Lattice::rho, [&](double x, double y) { return sc.exact_rho(t, x, y); });
      break;
    }
    case ReferenceKind::diffusion: {
      const double h = g.min_spacing();
      const double target = sc.reference_dt_factor > 0.0 ? sc.reference_dt_factor * h * h : r.dt;
      const long n = step_count(r.final_time, target);
      ref = diffusion_reference(g, sc.material, sc.rho0, r.final_time / n, n, cfg);
      break;
    }
    case ReferenceKind::self_refined: {
      if (!m.self_reference || !sc.refined) return;
      const Scenario fine = sc.refined();
      SolverConfig fc = cfg;
      fc.scheme = Scheme::imex;
      fc.dt = r.dt / 4.0;
      const VectorXd rf = full_rank_density(fine, fc, 4 * r.steps);
      // Coarse rho points are every fourth fine point in position order.
      const std::vector<Index> coarse = position_order(g);
      const std::vector<Index> fine_order = position_order(fine.grid);
      ref.resize(g.rho_count());
      for (std::size_t i = 0; i < coarse.size(); ++i) ref(coarse[i]) = rf(fine_order[4 * i]);
      break;
    }
  }
  r.error = l2_error(g, r.rho, ref);
  const double rn = l2_error(g, ref, VectorXd::Zero(ref.size()));
  r.rel_error = rn > 0.0 ? *r.error / rn : *r.error;
}

}  // namespace detail

// Runs one manifest on an already built scenario.
inline RunResult run_scenario(const Scenario& sc, const RunManifest& m) {
  m.validate();
  RunResult r;
  r.manifest = m;
  r.scenario = sc;
  const Scheme scheme = m.scheme;
  r.dt = scenario_dt(sc, scheme) * m.dt_mult;
  const double horizon = m.final_time.value_or(sc.final_time);
  r.steps = detail::step_count(horizon, r.dt);
  r.theta = m.theta.value_or(default_theta(scheme));

  SolverConfig cfg;
  cfg.epsilon = sc.epsilon;
  cfg.dt = r.dt;
  cfg.theta = r.theta;
  cfg.scheme = scheme;
  cfg.validate();

  const StaggeredGrid& g = sc.grid;
  const QuadratureSet& q = sc.quad;
  const MaterialField& mat = sc.material;
  std::optional<SchurOperator> schur;
  if (is_schur(scheme)) schur = build_schur(g, q, mat, cfg);

  const Integrator integ = detail::choose_integrator(scheme, sc);
  r.integrator = detail::integrator_name(scheme, integ);
  LowRankConfig lr;
  lr.integrator = integ;
  lr.rank = m.rank.value_or(sc.rank);
  lr.tau = m.tau.value_or(sc.tau);
  lr.max_rank = m.max_rank.value_or(0);
  lr.weighted = !m.unweighted;
  lr.seed = m.seed;

  const Index full_rank = std::min<Index>(g.g_count(), q.count() - 1);
  FullState full;
  LowRankState low;
  std::optional<LowRankStepper> stepper;
  VectorXd rho = sc.rho0;
  if (is_low_rank(scheme)) {
    stepper.emplace(g, q, mat, cfg, lr);
    low = stepper->factorize(sc.g0);
  } else {
    full = {sc.rho0, sc.g0.dense()};
  }

  auto record = [&](long step, double t) {
    EnergyRecord e;
    e.step = step;
    e.time = t;
    e.dt = r.dt;
    const double rn = norm(g, rho);
    double gw2;
    if (is_low_rank(scheme)) {
      gw2 = micro_norm_w2(g, low);
      e.rank = low.rank();
      e.zero_density_residual = zero_density_residual(q, low);
    } else {
      const double gw = norm_w(g, q, full.G);
      gw2 = gw * gw;
      e.rank = full_rank;
      e.zero_density_residual = zero_density_residual(q, full.G);
    }
    e.rho_norm = rn;
    e.micro_norm_w = std::sqrt(gw2);
    e.energy = energy_from_norms(q, rn * rn, gw2, r.theta, cfg.epsilon, cfg.dt, mat.sigma_s_floor);
    e.mass = mass(g, rho);
    if (!std::isfinite(e.energy) || !std::isfinite(e.mass)) throw DivergenceError(step, "non-finite energy");
    if (!r.trace.empty() && e.energy > 1e12 * std::max(r.trace.front().energy, 1e-300))
      throw DivergenceError(step, "energy grew by more than 1e12");
    r.trace.push_back(e);
  };

  using clock = std::chrono::steady_clock;
  long n = 0;
  double t = 0.0;
  double loop_seconds = 0.0;
  try {
    record(0, 0.0);
    for (n = 0; n < r.steps; ++n) {
      const double t_next = (n + 1) * r.dt;
      const auto t0 = clock::now();
      if (is_low_rank(scheme)) {
        auto [rho1, s1] =
            lowrank_coupled_step(g, q, mat, cfg, *stepper, schur ? &*schur : nullptr, rho, low, t_next);
        rho = std::move(rho1);
        low = std::move(s1);
      } else {
        full = is_schur(scheme) ? imex_s_step(g, q, mat, cfg, *schur, full, t_next)
                                : imex_step(g, q, mat, cfg, full, t_next);
        rho = full.rho;
      }
      const double sec = std::chrono::duration<double>(clock::now() - t0).count();
      r.step_seconds.push_back(sec);
      loop_seconds += sec;
      t = t_next;
      record(n + 1, t);
    }
  } catch (const DivergenceError& e) {
    r.status = "diverged";
    r.failed_step = e.step();
    r.message = e.what();
  } catch (const std::exception& e) {
    r.status = "failed";
    r.failed_step = n + 1;
    r.message = e.what();
  }
  r.rho = rho;
  r.final_time = t;
  r.wall_total = loop_seconds;
  r.wall_per_step = r.step_seconds.empty() ? 0.0 : loop_seconds / static_cast<double>(r.step_seconds.size());
  if (r.ok()) {
    detail::fill_reference(sc, m, cfg, r);
    for (const auto& spec : sc.slices) r.slices.push_back(extract_slice(g, rho, spec));
    if (g.dim() == 1) r.slices.push_back(extract_slice(g, rho, {"x", 1, 0.0}));
  }
  return r;
}

inline Scenario scenario_for(const RunManifest& m) { return make_scenario(m.scenario, m.mesh_div, m.epsilon); }

inline void write_artifacts(const RunResult& r, const std::string& dir);

// Builds the scenario, runs it (5 times with bench, reporting mean wall
// times) and writes artifacts when an output directory is set.
inline RunResult execute(const RunManifest& m) {
  m.validate();
  const Scenario sc = scenario_for(m);
  RunResult r = run_scenario(sc, m);
  if (m.bench && r.ok()) {
    double total = r.wall_total, per = r.wall_per_step;
    for (int rep = 1; rep < 5; ++rep) {
      const RunResult again = run_scenario(sc, m);
      total += again.wall_total;
      per += again.wall_per_step;
    }
    r.wall_total = total / 5.0;
    r.wall_per_step = per / 5.0;
  }
  if (!m.out.empty()) write_artifacts(r, m.out);
  return r;
}

namespace detail {

inline std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream f(p);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  f << std::setprecision(17);
  return f;
}

inline std::string opt_str(const std::optional<double>& v) {
  if (!v) return "none";
  std::ostringstream s;
  s << std::setprecision(17) << *v;
  return s.str();
}

}  // namespace detail

inline void write_trace_csv(std::ostream& f, const std::vector<EnergyRecord>& trace) {
  f << "step,time,dt,energy,rho_norm,micro_norm_w,rank,zero_density_residual,mass\n";
  for (const auto& e : trace)
    f << e.step << ',' << e.time << ',' << e.dt << ',' << e.energy << ',' << e.rho_norm << ',' << e.micro_norm_w
      << ',' << e.rank << ',' << e.zero_density_residual << ',' << e.mass << '\n';
}

inline void write_summary(std::ostream& f, const RunResult& r) {
  const EnergyRecord last = r.trace.empty() ? EnergyRecord{} : r.trace.back();
  f << "scenario = " << r.scenario.name << '\n'
    << "scheme = " << to_string(r.manifest.scheme) << '\n'
    << "integrator = " << r.integrator << '\n'
    << "weighted = " << (r.manifest.unweighted ? "false" : "true") << '\n'
    << "status = " << r.status << '\n'
    << "failed_step = " << r.failed_step << '\n'
    << "message = " << r.message << '\n'
    << "epsilon = " << r.scenario.epsilon << '\n'
    << "mesh_div = " << r.manifest.mesh_div << '\n'
    << "theta = " << r.theta << '\n'
    << "dt = " << r.dt << '\n'
    << "steps = " << r.steps << '\n'
    << "final_time = " << r.final_time << '\n'
    << "total_wall_seconds = " << r.wall_total << '\n'
    << "per_step_seconds = " << r.wall_per_step << '\n'
    << "bench_repetitions = " << (r.manifest.bench ? 5 : 1) << '\n'
    << "final_energy = " << last.energy << '\n'
    << "final_rank = " << last.rank << '\n'
    << "error_l2 = " << detail::opt_str(r.error) << '\n'
    << "error_rel = " << detail::opt_str(r.rel_error) << '\n'
    << "seed = " << r.manifest.seed << '\n';
}

inline void write_artifacts(const RunResult& r, const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path root(dir);
  fs::create_directories(root);
  {
    auto f = detail::open_out(root / "trace.csv");
    write_trace_csv(f, r.trace);
  }
  {
    auto f = detail::open_out(root / "rho_final.csv");
    const StaggeredGrid& g = r.scenario.grid;
    f << (g.dim() == 1 ? "x,rho\n" : "x,y,rho\n");
    for (Index k = 0; k < r.rho.size(); ++k) {
      const auto p = g.position(Lattice::rho, k);
      f << p[0] << ',';
      if (g.dim() == 2) f << p[1] << ',';
      f << r.rho(k) << '\n';
    }
  }
  for (const auto& s : r.slices) {
    std::string name = s.name;
    std::replace(name.begin(), name.end(), '=', '_');
    auto f = detail::open_out(root / ("slice_" + name + ".csv"));
    f << "s,rho\n";
    for (std::size_t i = 0; i < s.coord.size(); ++i) f << s.coord[i] << ',' << s.rho[i] << '\n';
  }
  auto f = detail::open_out(root / "summary.txt");
  write_summary(f, r);
}

// Least-squares slope of log(y) against log(x).
inline double fit_log_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("fit needs at least two points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(x.size());
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (std::log(x[i]) - mx) * (std::log(y[i]) - my);
    sxx += (std::log(x[i]) - mx) * (std::log(x[i]) - mx);
  }
  return sxy / sxx;
}

struct SweepRow {
  std::string value;
  RunResult result;
};

struct SweepResult {
  std::string key;
  std::vector<SweepRow> rows;
  // Slope of log(error) vs log(N) over successful manufactured runs.
  std::optional<double> fitted_slope;
};

// Mesh size of a manufactured scenario name (mms2d-N), or 0.
inline int manufactured_size(const std::string& name) {
  if (name.rfind("mms2d-", 0) != 0) return 0;
  try {
    return std::stoi(name.substr(6));
  } catch (const std::exception&) {
    return 0;
  }
}

// Runs the template once per value of `key` (once when `values` is empty).
// Member failures are recorded and the sweep continues.
inline SweepResult sweep(const RunManifest& tmpl, const std::string& key, const std::vector<std::string>& values) {
  namespace fs = std::filesystem;
  SweepResult out;
  out.key = key;
  std::vector<std::string> vals = values;
  if (vals.empty()) vals.push_back("");
  for (std::size_t i = 0; i < vals.size(); ++i) {
    RunManifest m = tmpl;
    SweepRow row;
    row.value = vals[i];
    try {
      if (!key.empty() && !vals[i].empty()) apply_override(m, key, vals[i]);
      if (!tmpl.out.empty()) m.out = (fs::path(tmpl.out) / ("run_" + std::to_string(i))).string();
      row.result = execute(m);
    } catch (const std::exception& e) {
      row.result.manifest = m;
      row.result.status = "failed";
      row.result.message = e.what();
    }
    out.rows.push_back(std::move(row));
  }
  std::vector<double> ns, errs;
  for (const auto& row : out.rows) {
    const int n = manufactured_size(row.result.manifest.scenario);
    if (row.result.ok() && n > 0 && row.result.error && *row.result.error > 0.0) {
      ns.push_back(static_cast<double>(n) / row.result.manifest.mesh_div);
      errs.push_back(*row.result.error);
    }
  }
  if (ns.size() >= 2) out.fitted_slope = fit_log_slope(ns, errs);
  if (!tmpl.out.empty()) {
    fs::create_directories(tmpl.out);
    auto f = detail::open_out(fs::path(tmpl.out) / "sweep.csv");
    f << "index,key,value,scenario,scheme,status,steps,dt,error_l2,error_rel,per_step_seconds,total_seconds,"
         "final_energy,final_rank\n";
    for (std::size_t i = 0; i < out.rows.size(); ++i) {
      const RunResult& r = out.rows[i].result;
      const EnergyRecord last = r.trace.empty() ? EnergyRecord{} : r.trace.back();
      f << i << ',' << key << ',' << out.rows[i].value << ',' << r.manifest.scenario << ','
        << to_string(r.manifest.scheme) << ',' << r.status << ',' << r.steps << ',' << r.dt << ','
        << detail::opt_str(r.error) << ',' << detail::opt_str(r.rel_error) << ',' << r.wall_per_step << ','
        << r.wall_total << ',' << last.energy << ',' << last.rank << '\n';
    }
    auto s = detail::open_out(fs::path(tmpl.out) / "sweep_summary.txt");
    s << "key = " << key << '\n' << "runs = " << out.rows.size() << '\n';
    s << "fitted_slope = " << detail::opt_str(out.fitted_slope) << '\n';
    s << "fitted_order = " << detail::opt_str(out.fitted_slope ? std::optional<double>(-*out.fitted_slope) : std::nullopt)
      << '\n';
  }
  return out;
}

}  // namespace aplr
