#pragma once

// Full-rank IMEX and IMEX-S steps of the macro-micro system.
//
// IMEX:   G' = R (G/dt - A(G)P/eps - J(rho)/eps^2 + S_g)
//         (1/dt + sigma_a) rho' = rho/dt + Phi - H(G')
// IMEX-S: T rho' = rho/dt + Phi - H(R (G/dt - A(G)P/eps + S_g))
//         G' = R (G/dt - A(G)P/eps - J(rho')/eps^2 + S_g)
//
// P removes the angular average and S_g is the angular-resolved source
// (Phi - <Phi>)/eps on the g-lattice.  Sources are sampled at t^{n+1}.

#include "aplr/config.hpp"
#include "aplr/operators.hpp"
#include "aplr/schur.hpp"

namespace aplr {

struct FullState {
  VectorXd rho;
  MatrixXd G;
};

namespace detail {

// G/dt - A(G)P/eps + S_g, the part of the micro right-hand side that does not depend on rho.
inline MatrixXd micro_rhs_explicit(const StaggeredGrid& grid, const QuadratureSet& quad, const MaterialField& material,
                                   const SolverConfig& cfg, const MatrixXd& G, double t_next) {
  MatrixXd rhs = G / cfg.dt - remove_average(quad, advect(grid, quad, G)) / cfg.epsilon;
  const MicroSource src = material.micro_source(t_next);
  if (!src.empty()) rhs.noalias() += src.spatial * src.angular.transpose();
  return rhs;
}

inline void subtract_density_grad(const StaggeredGrid& grid, const QuadratureSet& quad, const VectorXd& rho, double eps,
                                  MatrixXd& rhs) {
  const Factored J = density_grad(grid, quad, rho);
  rhs.noalias() -= J.left * J.right.transpose() / (eps * eps);
}

}  // namespace detail

inline FullState imex_step(const StaggeredGrid& grid, const QuadratureSet& quad, const MaterialField& material,
                           const SolverConfig& cfg, const FullState& s, double t_next) {
  detail::check_micro_shape(grid, quad, s.G);
  const VectorXd R = implicit_factor(material, cfg);
  MatrixXd rhs = detail::micro_rhs_explicit(grid, quad, material, cfg, s.G, t_next);
  detail::subtract_density_grad(grid, quad, s.rho, cfg.epsilon, rhs);
  FullState out;
  out.G = R.asDiagonal() * rhs;
  const VectorXd phi = material.macro_source(t_next, grid.rho_count());
  out.rho = (s.rho / cfg.dt + phi - flux_div(grid, quad, out.G))
                .cwiseQuotient((1.0 / cfg.dt + material.sigma_a_rho.array()).matrix());
  return out;
}

inline FullState imex_s_step(const StaggeredGrid& grid, const QuadratureSet& quad, const MaterialField& material,
                             const SolverConfig& cfg, const SchurOperator& schur, const FullState& s, double t_next) {
  detail::check_micro_shape(grid, quad, s.G);
  const VectorXd& R = schur.factor();
  MatrixXd rhs = detail::micro_rhs_explicit(grid, quad, material, cfg, s.G, t_next);
  const VectorXd phi = material.macro_source(t_next, grid.rho_count());
  const VectorXd b = s.rho / cfg.dt + phi - flux_div(grid, quad, R.asDiagonal() * rhs);
  FullState out;
  out.rho = schur.solve(b, s.rho);
  detail::subtract_density_grad(grid, quad, out.rho, cfg.epsilon, rhs);
  out.G = R.asDiagonal() * rhs;
  return out;
}

}  // namespace aplr
