#pragma once

// Dense reference implementations assembled directly from the half-index
// layout and explicit Kronecker products.  Small problems only.

#include "aplr/fullrank.hpp"

#include <Eigen/Dense>
#include <unsupported/Eigen/KroneckerProduct>

#include <map>
#include <random>
#include <utility>

namespace oracle {

using aplr::Index;
using aplr::Lattice;
using Eigen::MatrixXd;
using Eigen::VectorXd;

// Difference matrix from lattice `from` to lattice `to`: row k holds
// (e_hi - e_lo)/h where hi/lo are the half-index neighbours at +hi_off/lo_off.
inline MatrixXd difference(const aplr::StaggeredGrid& grid, int axis, Lattice from, Lattice to, int hi_off, int lo_off) {
  std::map<std::pair<Index, Index>, Index> lookup;
  const Index ea = 2 * grid.cells(0);
  const Index eb = grid.dim() == 2 ? 2 * grid.cells(1) : 2;
  for (Index k = 0; k < grid.count(from); ++k) {
    const auto h = grid.location(from, k);
    lookup[{h.a, h.b}] = k;
  }
  auto find = [&](aplr::HalfIndex h, int off) {
    if (axis == 0) h.a = ((h.a + off) % ea + ea) % ea;
    else h.b = ((h.b + off) % eb + eb) % eb;
    return lookup.at({h.a, h.b});
  };
  MatrixXd D = MatrixXd::Zero(grid.count(to), grid.count(from));
  const double inv_h = 1.0 / grid.spacing(axis);
  for (Index k = 0; k < grid.count(to); ++k) {
    const auto h = grid.location(to, k);
    D(k, find(h, hi_off)) += inv_h;
    D(k, find(h, lo_off)) -= inv_h;
  }
  return D;
}

inline MatrixXd d_plus(const aplr::StaggeredGrid& g, int j) { return difference(g, j, Lattice::rho, Lattice::g, 1, -1); }
inline MatrixXd d_minus(const aplr::StaggeredGrid& g, int j) { return difference(g, j, Lattice::g, Lattice::rho, 1, -1); }
inline MatrixXd dgg_plus(const aplr::StaggeredGrid& g, int j) { return difference(g, j, Lattice::g, Lattice::g, 2, 0); }
inline MatrixXd dgg_minus(const aplr::StaggeredGrid& g, int j) { return difference(g, j, Lattice::g, Lattice::g, 0, -2); }

inline MatrixXd Q(const aplr::QuadratureSet& q, int j) { return q.omega[j].asDiagonal(); }
inline MatrixXd Qp(const aplr::QuadratureSet& q, int j) { return (0.5 * (q.omega[j] + q.omega[j].cwiseAbs())).asDiagonal(); }
inline MatrixXd Qm(const aplr::QuadratureSet& q, int j) { return (0.5 * (q.omega[j] - q.omega[j].cwiseAbs())).asDiagonal(); }

// I - w 1^T / |D| acting from the right of G.
inline MatrixXd P(const aplr::QuadratureSet& q) {
  const Index n = q.count();
  return MatrixXd::Identity(n, n) - q.weights * VectorXd::Ones(n).transpose() / q.measure;
}

inline MatrixXd A(const aplr::StaggeredGrid& g, const aplr::QuadratureSet& q, const MatrixXd& G) {
  MatrixXd out = MatrixXd::Zero(G.rows(), G.cols());
  for (int j = 0; j < g.dim(); ++j) out += dgg_minus(g, j) * G * Qp(q, j) + dgg_plus(g, j) * G * Qm(q, j);
  return out;
}

inline MatrixXd A_adjoint(const aplr::StaggeredGrid& g, const aplr::QuadratureSet& q, const MatrixXd& G) {
  MatrixXd out = MatrixXd::Zero(G.rows(), G.cols());
  for (int j = 0; j < g.dim(); ++j) out -= dgg_minus(g, j) * G * Qm(q, j) + dgg_plus(g, j) * G * Qp(q, j);
  return out;
}

inline VectorXd H(const aplr::StaggeredGrid& g, const aplr::QuadratureSet& q, const MatrixXd& G) {
  VectorXd out = VectorXd::Zero(g.rho_count());
  for (int j = 0; j < g.dim(); ++j) out += d_minus(g, j) * G * Q(q, j) * q.weights;
  return out / q.measure;
}

inline MatrixXd J(const aplr::StaggeredGrid& g, const aplr::QuadratureSet& q, const VectorXd& rho) {
  MatrixXd out = MatrixXd::Zero(g.g_count(), q.count());
  for (int j = 0; j < g.dim(); ++j) out += d_plus(g, j) * rho * VectorXd::Ones(q.count()).transpose() * Q(q, j);
  return out;
}

// Operator matrices acting on [rho; vec(G)] (column-major vec).
struct Blocks {
  MatrixXd H;  // N_rho x (N_g N_Omega)
  MatrixXd J;  // (N_g N_Omega) x N_rho
  MatrixXd A;  // (N_g N_Omega) x (N_g N_Omega), includes the right projection P
};

inline Blocks blocks(const aplr::StaggeredGrid& g, const aplr::QuadratureSet& q) {
  const Index ng = g.g_count(), nr = g.rho_count(), no = q.count();
  Blocks b{MatrixXd::Zero(nr, ng * no), MatrixXd::Zero(ng * no, nr), MatrixXd::Zero(ng * no, ng * no)};
  const MatrixXd PP = P(q);
  for (int j = 0; j < g.dim(); ++j) {
    const VectorXd qw = Q(q, j) * q.weights;
    b.H += Eigen::kroneckerProduct(MatrixXd(qw.transpose()), d_minus(g, j)) / q.measure;
    b.J += Eigen::kroneckerProduct(MatrixXd(q.omega[j]), d_plus(g, j));
    b.A += Eigen::kroneckerProduct(MatrixXd((Qp(q, j) * PP).transpose()), dgg_minus(g, j)) +
           Eigen::kroneckerProduct(MatrixXd((Qm(q, j) * PP).transpose()), dgg_plus(g, j));
  }
  return b;
}

inline VectorXd vec(const MatrixXd& M) { return Eigen::Map<const VectorXd>(M.data(), M.size()); }
inline MatrixXd unvec(const VectorXd& v, Index rows, Index cols) { return Eigen::Map<const MatrixXd>(v.data(), rows, cols); }

// One IMEX (schur = false) or IMEX-S (schur = true) step as a monolithic dense solve.
inline aplr::FullState block_step(const aplr::StaggeredGrid& g, const aplr::QuadratureSet& q, const aplr::MaterialField& m,
                                  const aplr::SolverConfig& cfg, const aplr::FullState& s, double t_next, bool schur) {
  const Index ng = g.g_count(), nr = g.rho_count(), no = q.count();
  const Blocks b = blocks(g, q);
  const double e = cfg.epsilon, dt = cfg.dt;
  const Index n = nr + ng * no;
  MatrixXd M = MatrixXd::Zero(n, n);
  VectorXd rhs(n);
  M.topLeftCorner(nr, nr) = (1.0 / dt + m.sigma_a_rho.array()).matrix().asDiagonal();
  M.topRightCorner(nr, ng * no) = b.H;
  VectorXd diag_g(ng * no);
  for (Index c = 0; c < no; ++c)
    diag_g.segment(c * ng, ng) = (1.0 / dt + m.sigma_s_g.array() / (e * e) + m.sigma_a_g.array()).matrix();
  M.bottomRightCorner(ng * no, ng * no) = diag_g.asDiagonal();
  VectorXd micro = vec(s.G) / dt - b.A * vec(s.G) / e;
  const aplr::MicroSource src = m.micro_source(t_next);
  if (!src.empty()) micro += vec(src.spatial * src.angular.transpose());
  if (schur) M.bottomLeftCorner(ng * no, nr) = b.J / (e * e);
  else micro -= b.J * s.rho / (e * e);
  rhs.head(nr) = s.rho / dt + m.macro_source(t_next, nr);
  rhs.tail(ng * no) = micro;
  const VectorXd x = M.fullPivLu().solve(rhs);
  return {x.head(nr), unvec(x.tail(ng * no), ng, no)};
}

inline MatrixXd random_matrix(std::mt19937_64& rng, Index r, Index c) {
  std::normal_distribution<double> nd;
  MatrixXd M(r, c);
  for (Index j = 0; j < c; ++j)
    for (Index i = 0; i < r; ++i) M(i, j) = nd(rng);
  return M;
}

inline VectorXd random_vector(std::mt19937_64& rng, Index n) { return random_matrix(rng, n, 1); }

// Random micro state with zero angular density (G w = 0).
inline MatrixXd random_micro(std::mt19937_64& rng, const aplr::StaggeredGrid& g, const aplr::QuadratureSet& q) {
  return aplr::remove_average(q, random_matrix(rng, g.g_count(), q.count()));
}

inline double rel_diff(const MatrixXd& a, const MatrixXd& b) {
  const double s = std::max(a.norm(), b.norm());
  return s > 0.0 ? (a - b).norm() / s : 0.0;
}

}  // namespace oracle
