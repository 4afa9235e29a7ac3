#pragma once

// Discrete energy, time-step bounds, error norms and the diffusion-limit
// reference solver.

#include "aplr/lowrank.hpp"
#include "aplr/schur.hpp"

#include <optional>
#include <type_traits>

namespace aplr {

struct EnergyRecord {
  long step = 0;
  double time = 0.0;
  double dt = 0.0;
  double energy = 0.0;
  double rho_norm = 0.0;
  double micro_norm_w = 0.0;
  Index rank = 0;
  double zero_density_residual = 0.0;
  double mass = 0.0;
};

// E_theta = |D| ||rho||^2 + (eps^2 + (1 - theta) dt sigma_0) ||G||_w^2.
inline double energy_from_norms(const QuadratureSet& quad, double rho_norm2, double micro_norm_w2, double theta,
                                double epsilon, double dt, double sigma_floor) {
  return quad.measure * rho_norm2 + (epsilon * epsilon + (1.0 - theta) * dt * sigma_floor) * micro_norm_w2;
}

inline double energy(const StaggeredGrid& grid, const QuadratureSet& quad, const VectorXd& rho, const MatrixXd& G,
                     double theta, const SolverConfig& cfg, const MaterialField& material) {
  const double r = norm(grid, rho);
  const double g = norm_w(grid, quad, G);
  return energy_from_norms(quad, r * r, g * g, theta, cfg.epsilon, cfg.dt, material.sigma_s_floor);
}

inline double energy(const StaggeredGrid& grid, const QuadratureSet& quad, const VectorXd& rho, const LowRankState& s,
                     double theta, const SolverConfig& cfg, const MaterialField& material) {
  const double r = norm(grid, rho);
  return energy_from_norms(quad, r * r, micro_norm_w2(grid, s), theta, cfg.epsilon, cfg.dt,
                           material.sigma_s_floor);
}

// ||G w||_inf.
inline double zero_density_residual(const QuadratureSet& quad, const MatrixXd& G) {
  if (G.size() == 0) return 0.0;
  return (G * quad.weights).cwiseAbs().maxCoeff();
}

// Sum of rho times the area each rho point represents.
inline double mass(const StaggeredGrid& grid, const VectorXd& rho) { return grid.point_volume() * rho.sum(); }

// Discrete L2 distance, each rho point carrying its share of the cell.
inline double l2_error(const StaggeredGrid& grid, const VectorXd& numeric, const VectorXd& reference) {
  if (numeric.size() != reference.size() || numeric.size() != grid.rho_count())
    throw std::invalid_argument("l2_error: length mismatch");
  return std::sqrt(grid.point_volume()) * (numeric - reference).norm();
}

template <typename F>
  requires std::is_invocable_r_v<double, F, double, double>
double l2_error(const StaggeredGrid& grid, const VectorXd& numeric, F&& exact) {
  return l2_error(grid, numeric, sample(grid, Lattice::rho, std::forward<F>(exact)));
}

// Explicit-scheme bound (IMEX): 1D (2/3) eps dx + (1/3) sigma_0 dx^2,
// 2D (1/3) eps ds + (1/12) sigma_0 ds^2 with ds = min(dx, dy).
inline double dt_explicit(const StaggeredGrid& grid, double epsilon, double sigma_floor) {
  const double h = grid.min_spacing();
  if (grid.dim() == 1) return (2.0 / 3.0) * epsilon * h + (1.0 / 3.0) * sigma_floor * h * h;
  return (1.0 / 3.0) * epsilon * h + (1.0 / 12.0) * sigma_floor * h * h;
}

// Implicit-density bound (IMEX-S, theta = 0); std::nullopt means unconditionally stable.
inline std::optional<double> dt_implicit(const StaggeredGrid& grid, double epsilon, double sigma_floor) {
  const double h = grid.min_spacing();
  const double a = grid.dim() == 1 ? epsilon / (2.0 * h) : epsilon / h;
  const double b = sigma_floor / 4.0;
  if (!(a > b)) return std::nullopt;
  return epsilon * epsilon / (2.0 * (a - b));
}

// Backward-Euler steps of d rho/dt = div((1/3) sigma_s^-1 grad rho) - sigma_a rho + Phi.
class DiffusionReference {
 public:
  DiffusionReference(const StaggeredGrid& grid, const MaterialField& material, double dt, const SolverConfig& solver)
      : grid_(&grid), material_(&material), dt_(dt) {
    if ((material.sigma_s_g.array() <= 0.0).any())
      throw std::invalid_argument("diffusion reference needs positive scattering");
    SparseMatrix T(grid.rho_count(), grid.rho_count());
    std::vector<Eigen::Triplet<double>> diag;
    for (Index k = 0; k < grid.rho_count(); ++k) diag.emplace_back(k, k, 1.0 / dt + material.sigma_a_rho(k));
    T.setFromTriplets(diag.begin(), diag.end());
    const VectorXd coeff = material.sigma_s_g.cwiseInverse() / 3.0;
    for (int j = 0; j < grid.dim(); ++j) {
      const SparseMatrix D = diff_plus_matrix(grid, j);
      SparseMatrix CD = coeff.asDiagonal() * D;
      T += SparseMatrix(D.transpose()) * CD;
    }
    T.makeCompressed();
    SolverConfig cfg = solver;
    cfg.dt = dt;
    op_ = SchurOperator(std::move(T), VectorXd(), cfg);
  }

  VectorXd advance(VectorXd rho, double t0, long n_steps) const {
    for (long n = 0; n < n_steps; ++n) {
      const double t = t0 + (n + 1) * dt_;
      const VectorXd b = rho / dt_ + material_->macro_source(t, grid_->rho_count());
      rho = op_.solve(b, rho);
    }
    return rho;
  }

  const SchurOperator& op() const { return op_; }

 private:
  const StaggeredGrid* grid_;
  const MaterialField* material_;
  double dt_;
  SchurOperator op_;
};

inline VectorXd diffusion_reference(const StaggeredGrid& grid, const MaterialField& material, const VectorXd& rho0,
                                    double dt, long n_steps, const SolverConfig& solver = {}) {
  return DiffusionReference(grid, material, dt, solver).advance(rho0, 0.0, n_steps);
}

}  // namespace aplr
