#pragma once

// Built-in experiments: grids, quadratures, materials, initial data,
// sources, time-step policy and reference solutions.

#include "aplr/config.hpp"
#include "aplr/diagnostics.hpp"
#include "aplr/grid.hpp"
#include "aplr/operators.hpp"
#include "aplr/quadrature.hpp"

#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace aplr {

enum class ReferenceKind { none, diffusion, manufactured, self_refined };

// Line through the domain along which the final density is reported:
// all rho points whose `fixed_axis` coordinate is closest to `value`.
struct SliceSpec {
  std::string name;
  int fixed_axis = 1;
  double value = 0.0;
};

struct Scenario {
  std::string name;
  StaggeredGrid grid;
  QuadratureSet quad;
  MaterialField material;
  double epsilon = 1.0;
  double final_time = 1.0;
  VectorXd rho0;
  // Initial micro state G0 = left * right^T (zero angular density).
  Factored g0;
  // Fixed rank (BUG) and initial rank (aBUG variants).
  Index rank = 10;
  double tau = 1e-5;
  // Every scheme uses dt_explicit instead of the scheme-family bound.
  bool explicit_for_all = false;
  // Literal time steps of the IMEX and IMEX-S families (full resolution only).
  std::optional<double> dt_imex, dt_schur;
  ReferenceKind reference = ReferenceKind::none;
  // Exact density for manufactured solutions.
  std::function<double(double, double, double)> exact_rho;
  // Time step of the diffusion reference as a multiple of dx^2 (0: use the scheme's step).
  double reference_dt_factor = 0.0;
  std::vector<SliceSpec> slices;
  // Mesh divisor the scenario was built with.
  int divisor = 1;
  // Same problem with 4x finer cells, for self-refined references.
  std::function<Scenario()> refined;
};

namespace detail {

inline int reduced(int n, int divisor, int floor) {
  if (divisor < 1) throw std::invalid_argument("mesh divisor must be at least 1");
  return std::max(floor, n / divisor);
}

inline VectorXd centered_constant(const QuadratureSet& q, const VectorXd& v) {
  VectorXd out = v;
  out.array() -= q.average(v);
  return out;
}

}  // namespace detail

// Time step of `scheme` on `sc`: dt_explicit for the IMEX family, dt_implicit
// for the IMEX-S family (10 dt_explicit when unconditionally stable), or the
// scenario's literal values.
inline double scenario_dt(const Scenario& sc, Scheme scheme) {
  const bool schur = is_schur(scheme);
  if (sc.divisor == 1) {
    if (schur && sc.dt_schur) return *sc.dt_schur;
    if (!schur && sc.dt_imex) return *sc.dt_imex;
  }
  const double floor = sc.material.sigma_s_floor;
  const double de = dt_explicit(sc.grid, sc.epsilon, floor);
  if (!schur || sc.explicit_for_all) return de;
  if (sc.dt_schur) return 10.0 * de;
  const auto di = dt_implicit(sc.grid, sc.epsilon, floor);
  return di ? *di : 10.0 * de;
}

// Gaussian pulse in slab geometry; regime in {kinetic, mid, diff}.
inline Scenario gaussian_1d(const std::string& regime, int divisor = 1, int refine = 1) {
  Scenario sc;
  if (regime == "kinetic") {
    sc.epsilon = 1.0;
    sc.final_time = 1.0;
    sc.rank = 50;
    sc.reference = ReferenceKind::self_refined;
  } else if (regime == "mid") {
    sc.epsilon = 1e-2;
    sc.final_time = 0.2;
    sc.rank = 10;
  } else if (regime == "diff") {
    sc.epsilon = 1e-6;
    sc.final_time = 0.2;
    sc.rank = 3;
    sc.reference = ReferenceKind::diffusion;
    sc.reference_dt_factor = 0.75;
  } else {
    throw std::invalid_argument("unknown Gaussian regime: " + regime);
  }
  sc.name = "gaussian1d-" + regime;
  sc.divisor = divisor;
  sc.grid = StaggeredGrid::line({-1.5, 1.5}, detail::reduced(500, divisor, 8) * refine);
  sc.quad = gauss_legendre_1d(detail::reduced(200, divisor, 4));
  sc.material = MaterialField::uniform(sc.grid, 1.0, 0.0);
  if (sc.reference == ReferenceKind::self_refined && refine == 1)
    sc.refined = [regime, divisor] { return gaussian_1d(regime, divisor, 4); };
  const double var = 9e-4;
  sc.rho0 = sample(sc.grid, Lattice::rho, [var](double x, double) {
    return std::exp(-x * x / (2.0 * var)) / std::sqrt(2.0 * std::numbers::pi * var);
  });
  sc.g0 = {MatrixXd::Zero(sc.grid.g_count(), 1), MatrixXd::Zero(sc.quad.count(), 1)};
  return sc;
}

// Non-equilibrium two-beam state used for the weighted/unweighted comparison.
inline Scenario bimodal_1d(int divisor = 1) {
  Scenario sc;
  sc.name = "bimodal1d";
  sc.divisor = divisor;
  sc.epsilon = 1.0;
  sc.final_time = 2.5;
  sc.rank = 2;
  sc.grid = StaggeredGrid::line({-1.5, 1.5}, detail::reduced(50, divisor, 8));
  sc.quad = gauss_legendre_1d(detail::reduced(50, divisor, 4));
  sc.material = MaterialField::uniform(sc.grid, 1.0, 0.0);
  const double var = 1e-4;
  auto spatial = [var](double x, double) { return std::exp(-x * x / (2.0 * var)) / (2.0 * std::numbers::pi * var); };
  VectorXd beams(sc.quad.count());
  for (Index k = 0; k < beams.size(); ++k) {
    const double v = sc.quad.omega[0](k);
    beams(k) = std::exp(-(v - 1.0) * (v - 1.0) / (2.0 * var)) + std::exp(-(v + 1.0) * (v + 1.0) / (2.0 * var));
  }
  // f = a(x) b(v): rho = a <b>, g = a (b - <b>) / eps.
  sc.rho0 = sample(sc.grid, Lattice::rho, spatial) * sc.quad.average(beams);
  sc.g0 = {sample(sc.grid, Lattice::g, spatial), detail::centered_constant(sc.quad, beams) / sc.epsilon};
  return sc;
}

// Manufactured kinetic solution and the source it induces, pointwise.
inline double manufactured_f(double eps, double t, double x, double y, double oy) {
  const double s = std::sin(2.0 * std::numbers::pi * x) * std::sin(2.0 * std::numbers::pi * y);
  return 2.0 + std::exp(-t) * s * (1.0 + eps * oy);
}

inline double manufactured_source(double eps, double sigma_s, double t, double x, double y, double ox, double oy) {
  const double tp = 2.0 * std::numbers::pi;
  const double s = std::sin(tp * x) * std::sin(tp * y);
  const double sx = tp * std::cos(tp * x) * std::sin(tp * y);
  const double sy = tp * std::sin(tp * x) * std::cos(tp * y);
  return std::exp(-t) * (s * (-1.0 - eps * oy + sigma_s / eps * oy) + sx * (ox / eps + ox * oy) +
                         sy * (oy / eps + oy * oy));
}

// Low-rank manufactured solution f = 2 + e^-t s + eps e^-t s Omega^y with
// s = sin(2 pi x) sin(2 pi y) on [0,1]^2, sigma_s = 1, sigma_a = 0.
inline Scenario manufactured_2d(int n, double epsilon = 1.0, int divisor = 1) {
  if (n < 8 || n % 8 != 0) throw std::invalid_argument("manufactured mesh size must be a positive multiple of 8");
  Scenario sc;
  sc.name = "mms2d-" + std::to_string(n);
  sc.divisor = divisor;
  sc.epsilon = epsilon;
  sc.final_time = 0.1;
  sc.rank = 4;
  sc.tau = 1e-8;
  sc.explicit_for_all = true;
  sc.reference = ReferenceKind::manufactured;
  const int nn = detail::reduced(n, divisor, 4);
  sc.grid = StaggeredGrid::rectangle({0.0, 1.0}, {0.0, 1.0}, nn, nn);
  sc.quad = chebyshev_legendre_2d(std::max(2, nn / 8));
  sc.material = MaterialField::uniform(sc.grid, 1.0, 0.0);
  const double tp = 2.0 * std::numbers::pi;
  auto s = [tp](double x, double y) { return std::sin(tp * x) * std::sin(tp * y); };
  auto sx = [tp](double x, double y) { return tp * std::cos(tp * x) * std::sin(tp * y); };
  auto sy = [tp](double x, double y) { return tp * std::sin(tp * x) * std::cos(tp * y); };
  sc.exact_rho = [s](double t, double x, double y) { return 2.0 + std::exp(-t) * s(x, y); };
  sc.rho0 = sample(sc.grid, Lattice::rho, [&](double x, double y) { return sc.exact_rho(0.0, x, y); });
  // g = (f - rho) / eps = e^-t s Omega^y.
  sc.g0 = {sample(sc.grid, Lattice::g, s), sc.quad.omega[1]};

  const QuadratureSet& q = sc.quad;
  const double sig = 1.0, eps = epsilon;
  const VectorXd& ox = q.omega[0];
  const VectorXd& oy = q.omega[1];
  // Phi = e^-t [ s a_0 + s_x a_1 + s_y a_2 ] with
  // a_0 = -1 - eps Oy + (sig/eps) Oy, a_1 = Ox/eps + Ox Oy, a_2 = Oy/eps + Oy^2.
  const VectorXd a0 = (sig / eps - eps) * oy - VectorXd::Ones(q.count());
  const VectorXd a1 = ox / eps + ox.cwiseProduct(oy);
  const VectorXd a2 = oy / eps + oy.cwiseProduct(oy);
  const VectorXd macro = q.average(a0) * sample(sc.grid, Lattice::rho, s) +
                         q.average(a1) * sample(sc.grid, Lattice::rho, sx) +
                         q.average(a2) * sample(sc.grid, Lattice::rho, sy);
  sc.material.source_rho = [macro](double t) { return VectorXd(std::exp(-t) * macro); };
  MicroSource base;
  base.spatial.resize(sc.grid.g_count(), 3);
  base.spatial.col(0) = sample(sc.grid, Lattice::g, s);
  base.spatial.col(1) = sample(sc.grid, Lattice::g, sx);
  base.spatial.col(2) = sample(sc.grid, Lattice::g, sy);
  base.angular.resize(q.count(), 3);
  base.angular.col(0) = detail::centered_constant(q, a0) / eps;
  base.angular.col(1) = detail::centered_constant(q, a1) / eps;
  base.angular.col(2) = detail::centered_constant(q, a2) / eps;
  sc.material.source_micro = [base](double t) {
    MicroSource m = base;
    m.spatial *= std::exp(-t);
    return m;
  };
  return sc;
}

// Gaussian pulse on [-1,1]^2 in the diffusive regime.
inline Scenario gaussian_2d(int divisor = 1) {
  Scenario sc;
  sc.name = "gaussian2d";
  sc.divisor = divisor;
  sc.epsilon = 1e-6;
  sc.final_time = 0.1;
  sc.rank = 10;
  sc.dt_imex = 2.04e-5;
  sc.dt_schur = 2.04e-4;
  sc.reference = ReferenceKind::diffusion;
  sc.reference_dt_factor = 0.75;
  const int n = detail::reduced(128, divisor, 8);
  sc.grid = StaggeredGrid::rectangle({-1.0, 1.0}, {-1.0, 1.0}, n, n);
  sc.quad = chebyshev_legendre_2d(detail::reduced(16, divisor, 2));
  sc.material = MaterialField::uniform(sc.grid, 1.0, 0.0);
  const double var = 1e-2;
  sc.rho0 = sample(sc.grid, Lattice::rho, [var](double x, double y) {
    return std::exp(-(x * x + y * y) / (4.0 * var)) / (4.0 * std::numbers::pi * var);
  });
  sc.g0 = {MatrixXd::Zero(sc.grid.g_count(), 1), MatrixXd::Zero(sc.quad.count(), 1)};
  sc.slices = {{"y=0", 1, 0.0}};
  return sc;
}

// Lower-left corners of the absorbing unit blocks of the lattice problem.
inline const std::vector<std::array<int, 2>>& lattice_absorbers() {
  static const std::vector<std::array<int, 2>> blocks = {{1, 1}, {1, 3}, {1, 5}, {2, 2}, {2, 4}, {3, 1},
                                                         {4, 2}, {4, 4}, {5, 1}, {5, 3}, {5, 5}};
  return blocks;
}

inline bool in_lattice_absorber(double x, double y) {
  for (const auto& b : lattice_absorbers())
    if (x >= b[0] && x <= b[0] + 1 && y >= b[1] && y <= b[1] + 1) return true;
  return false;
}

// Checkerboard lattice on [0,7]^2 with a unit source on the central block.
inline Scenario lattice_2d(int divisor = 1) {
  Scenario sc;
  sc.name = "lattice2d";
  sc.divisor = divisor;
  sc.epsilon = 1.0;
  sc.final_time = 2.0;
  sc.rank = 100;
  const int n = detail::reduced(128, divisor, 8);
  sc.grid = StaggeredGrid::rectangle({0.0, 7.0}, {0.0, 7.0}, n, n);
  sc.quad = chebyshev_legendre_2d(detail::reduced(16, divisor, 2));
  // Points on a block edge belong to the absorber.
  sc.material = MaterialField::sampled(
      sc.grid, [](double x, double y) { return in_lattice_absorber(x, y) ? 0.0 : 1.0; },
      [](double x, double y) { return in_lattice_absorber(x, y) ? 10.0 : 0.0; }, 0.0);
  const VectorXd phi = sample(sc.grid, Lattice::rho, [](double x, double y) {
    return x >= 3.0 && x <= 4.0 && y >= 3.0 && y <= 4.0 ? 1.0 : 0.0;
  });
  sc.material.source_rho = [phi](double) { return phi; };
  const double var = 1e-2;
  sc.rho0 = sample(sc.grid, Lattice::rho, [var](double x, double y) {
    const double r2 = (x - 3.5) * (x - 3.5) + (y - 3.5) * (y - 3.5);
    return std::exp(-r2 / (4.0 * var)) / (4.0 * std::numbers::pi * var);
  });
  sc.g0 = {MatrixXd::Zero(sc.grid.g_count(), 1), MatrixXd::Zero(sc.quad.count(), 1)};
  sc.slices = {{"x=3.5", 0, 3.5}, {"y=4.047", 1, 4.047}};
  return sc;
}

inline std::vector<std::string> scenario_names() {
  return {"gaussian1d-kinetic", "gaussian1d-mid", "gaussian1d-diff", "bimodal1d",
          "mms2d-N",            "gaussian2d",     "lattice2d"};
}

// Builds a scenario by CLI name; mms2d-N accepts an optional ":eps" suffix
// through the epsilon argument.
inline Scenario make_scenario(const std::string& name, int divisor = 1, std::optional<double> epsilon = {}) {
  Scenario sc;
  if (name.rfind("gaussian1d-", 0) == 0) {
    sc = gaussian_1d(name.substr(11), divisor);
  } else if (name == "bimodal1d") {
    sc = bimodal_1d(divisor);
  } else if (name.rfind("mms2d-", 0) == 0) {
    int n = 0;
    try {
      std::size_t used = 0;
      n = std::stoi(name.substr(6), &used);
      if (used != name.size() - 6) throw std::invalid_argument(name);
    } catch (const std::exception&) {
      throw std::invalid_argument("bad manufactured scenario name: " + name);
    }
    return manufactured_2d(n, epsilon.value_or(1.0), divisor);
  } else if (name == "gaussian2d") {
    sc = gaussian_2d(divisor);
  } else if (name == "lattice2d") {
    sc = lattice_2d(divisor);
  } else {
    throw std::invalid_argument("unknown scenario: " + name);
  }
  if (epsilon) throw std::invalid_argument("epsilon override is only available for manufactured scenarios");
  return sc;
}

}  // namespace aplr
