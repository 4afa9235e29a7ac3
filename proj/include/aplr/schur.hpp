#pragma once

// Schur complement of the implicit macro-micro block system:
//
//   T = (1/dt + sigma_a) I - 1/(|D| eps^2) sum_{j,k} D^{(j),-} R D^{(k),+} (1^T Q^{(k)} Q^{(j)} w)
//
// with R = (1/dt + sigma_s/eps^2 + sigma_a)^-1 pointwise on the g-lattice.
// Since D^{(j),-} = -(D^{(j),+})^T the matrix is symmetric positive definite.
// Coefficients do not change in time, so it is assembled once per run.

#include "aplr/config.hpp"
#include "aplr/errors.hpp"
#include "aplr/operators.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include <memory>
#include <vector>

namespace aplr {

using SparseMatrix = Eigen::SparseMatrix<double>;

// Pointwise implicit factor R on the g-lattice.
inline VectorXd implicit_factor(const MaterialField& material, const SolverConfig& cfg) {
  const double e2 = cfg.epsilon * cfg.epsilon;
  VectorXd denom = (1.0 / cfg.dt + material.sigma_a_g.array() + material.sigma_s_g.array() / e2).matrix();
  if ((denom.array() <= 0.0).any()) throw std::invalid_argument("implicit factor is not invertible");
  return denom.cwiseInverse();
}

// D^{(j),+} as a sparse N_g x N_rho matrix.
inline SparseMatrix diff_plus_matrix(const StaggeredGrid& grid, int axis) {
  const Stencil& s = grid.stencil(axis, Side::plus, Lattice::rho, Lattice::g);
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(2 * s.hi.size());
  for (std::size_t k = 0; k < s.hi.size(); ++k) {
    t.emplace_back(static_cast<Index>(k), s.hi[k], s.inv_h);
    t.emplace_back(static_cast<Index>(k), s.lo[k], -s.inv_h);
  }
  SparseMatrix D(grid.g_count(), grid.rho_count());
  D.setFromTriplets(t.begin(), t.end());
  return D;
}

class SchurOperator {
 public:
  SchurOperator() = default;

  SchurOperator(SparseMatrix matrix, VectorXd factor, const SolverConfig& cfg)
      : matrix_(std::make_shared<const SparseMatrix>(std::move(matrix))),
        factor_(std::move(factor)),
        tolerance_(cfg.linear_tolerance) {
    const SparseMatrix& A = *matrix_;
    const Index n = A.rows();
    max_iterations_ = cfg.max_iterations > 0 ? cfg.max_iterations : 10 * n;
    const SparseMatrix asym = A - SparseMatrix(A.transpose());
    if (asym.norm() > 1e-12 * A.norm()) throw std::logic_error("Schur matrix is not symmetric");
    if (n < cfg.direct_threshold) {
      direct_ = std::make_shared<Eigen::SimplicialLDLT<SparseMatrix>>(A);
      if (direct_->info() != Eigen::Success) throw SolverError(1.0, 0);
    } else {
      iterative_ = std::make_shared<CG>();
      iterative_->setTolerance(tolerance_);
      iterative_->setMaxIterations(max_iterations_);
      // The solver keeps a reference to A, which the shared pointer keeps alive across moves.
      iterative_->compute(A);
    }
  }

  const SparseMatrix& matrix() const { return *matrix_; }
  // R on the g-lattice.
  const VectorXd& factor() const { return factor_; }
  bool direct() const { return static_cast<bool>(direct_); }
  long last_iterations() const { return last_iterations_; }

  VectorXd apply(const VectorXd& rho) const { return *matrix_ * rho; }

  VectorXd solve(const VectorXd& rhs, const VectorXd& guess) const {
    if (rhs.size() != matrix_->rows()) throw std::invalid_argument("Schur solve: rhs length mismatch");
    VectorXd x;
    if (direct_) {
      x = direct_->solve(rhs);
      last_iterations_ = 1;
    } else {
      x = iterative_->solveWithGuess(rhs, guess.size() == rhs.size() ? guess : VectorXd::Zero(rhs.size()));
      last_iterations_ = iterative_->iterations();
      if (iterative_->info() != Eigen::Success) throw SolverError(iterative_->error(), iterative_->iterations());
    }
    const double bnorm = rhs.norm();
    const double res = (*matrix_ * x - rhs).norm() / (bnorm > 0.0 ? bnorm : 1.0);
    if (!std::isfinite(res) || res > std::max(1e3 * tolerance_, 1e-10)) throw SolverError(res, last_iterations_);
    return x;
  }

 private:
  using CG = Eigen::ConjugateGradient<SparseMatrix, Eigen::Lower | Eigen::Upper, Eigen::DiagonalPreconditioner<double>>;

  std::shared_ptr<const SparseMatrix> matrix_;
  VectorXd factor_;
  double tolerance_ = 1e-12;
  long max_iterations_ = 0;
  std::shared_ptr<Eigen::SimplicialLDLT<SparseMatrix>> direct_;
  std::shared_ptr<CG> iterative_;
  mutable long last_iterations_ = 0;
};

// Coupling weights c_{jk} = 1^T Q^{(k)} Q^{(j)} w / |D|, with negligible
// off-diagonal entries dropped (they vanish for symmetric quadratures).
inline Eigen::Matrix2d angular_coupling(const QuadratureSet& quad, int dim) {
  Eigen::Matrix2d c = Eigen::Matrix2d::Zero();
  for (int j = 0; j < dim; ++j)
    for (int k = 0; k < dim; ++k) c(j, k) = quad.second_moment(j, k);
  for (int j = 0; j < dim; ++j)
    for (int k = 0; k < dim; ++k)
      if (j != k && std::abs(c(j, k)) < 1e-13 * std::max(c(j, j), c(k, k))) c(j, k) = 0.0;
  return c;
}

inline SchurOperator build_schur(const StaggeredGrid& grid, const QuadratureSet& quad, const MaterialField& material,
                                 const SolverConfig& cfg) {
  cfg.validate();
  material.validate(grid);
  const VectorXd R = implicit_factor(material, cfg);
  const double e2 = cfg.epsilon * cfg.epsilon;
  const Eigen::Matrix2d c = angular_coupling(quad, grid.dim());

  SparseMatrix T(grid.rho_count(), grid.rho_count());
  {
    std::vector<Eigen::Triplet<double>> diag;
    diag.reserve(static_cast<std::size_t>(grid.rho_count()));
    for (Index k = 0; k < grid.rho_count(); ++k) diag.emplace_back(k, k, 1.0 / cfg.dt + material.sigma_a_rho(k));
    T.setFromTriplets(diag.begin(), diag.end());
  }
  std::array<SparseMatrix, 2> D;
  for (int j = 0; j < grid.dim(); ++j) D[j] = diff_plus_matrix(grid, j);
  const auto Rdiag = R.asDiagonal();
  for (int j = 0; j < grid.dim(); ++j) {
    for (int k = 0; k < grid.dim(); ++k) {
      if (c(j, k) == 0.0) continue;
      SparseMatrix RDk = Rdiag * D[k];
      SparseMatrix term = SparseMatrix(D[j].transpose()) * RDk;
      T += (c(j, k) / e2) * term;
    }
  }
  T.makeCompressed();
  return SchurOperator(std::move(T), R, cfg);
}

// Matrix-free application of T straight from the operator definitions; used
// to cross-check the assembled matrix.
inline VectorXd schur_apply_composed(const StaggeredGrid& grid, const QuadratureSet& quad, const MaterialField& material,
                                     const SolverConfig& cfg, const VectorXd& rho) {
  const VectorXd R = implicit_factor(material, cfg);
  const MatrixXd J = density_grad(grid, quad, rho).dense();
  const MatrixXd RJ = R.asDiagonal() * J;
  const double e2 = cfg.epsilon * cfg.epsilon;
  VectorXd out = (1.0 / cfg.dt + material.sigma_a_rho.array()).matrix().cwiseProduct(rho);
  out -= flux_div(grid, quad, RJ) / e2;
  return out;
}

}  // namespace aplr
