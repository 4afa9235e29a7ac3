#pragma once

// Discrete transport operators on the staggered grid:
//
//   A(G)   = sum_j D^{(j),-} G Q^{(j),+} + D^{(j),+} G Q^{(j),-}      (g -> g, upwind)
//   A*(G)  = -sum_j D^{(j),-} G Q^{(j),-} + D^{(j),+} G Q^{(j),+}     (adjoint of A in <.,.>_w)
//   H(G)   = (1/|D|) sum_j D^{(j),-} G Q^{(j)} w                     (g -> rho)
//   J(rho) = sum_j (D^{(j),+} rho) 1^T Q^{(j)}                       (rho -> g, rank d)
//   B(Y)   = A(Y m^-1) (I - w 1^T / |D|) diag(m)                      (on factors of G diag(m))
//
// G is stored N_g x N_Omega with one column per ordinate.

#include "aplr/grid.hpp"
#include "aplr/quadrature.hpp"

#include <Eigen/Core>

#include <functional>
#include <stdexcept>

namespace aplr {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// A matrix kept as left * right^T.
struct Factored {
  MatrixXd left;
  MatrixXd right;
  MatrixXd dense() const { return left * right.transpose(); }
};

// Angular-resolved part of a source on the g-lattice, already divided by
// epsilon and free of its angular average: term = spatial * angular^T.
struct MicroSource {
  MatrixXd spatial;
  MatrixXd angular;
  bool empty() const { return spatial.cols() == 0; }
};

struct MaterialField {
  VectorXd sigma_s_rho, sigma_a_rho;
  VectorXd sigma_s_g, sigma_a_g;
  double sigma_s_floor = 0.0;
  // Phi^n on the rho-lattice; empty means zero.
  std::function<VectorXd(double)> source_rho;
  // Angular-resolved micro source; empty means none.
  std::function<MicroSource(double)> source_micro;

  template <typename SigmaS, typename SigmaA>
  static MaterialField sampled(const StaggeredGrid& grid, SigmaS&& sigma_s, SigmaA&& sigma_a, double floor) {
    MaterialField m;
    m.sigma_s_rho = sample(grid, Lattice::rho, sigma_s);
    m.sigma_a_rho = sample(grid, Lattice::rho, sigma_a);
    m.sigma_s_g = sample(grid, Lattice::g, sigma_s);
    m.sigma_a_g = sample(grid, Lattice::g, sigma_a);
    m.sigma_s_floor = floor;
    m.validate(grid);
    return m;
  }

  static MaterialField uniform(const StaggeredGrid& grid, double sigma_s, double sigma_a) {
    return sampled(
        grid, [=](double, double) { return sigma_s; }, [=](double, double) { return sigma_a; }, sigma_s);
  }

  void validate(const StaggeredGrid& grid) const {
    if (sigma_s_rho.size() != grid.rho_count() || sigma_a_rho.size() != grid.rho_count() ||
        sigma_s_g.size() != grid.g_count() || sigma_a_g.size() != grid.g_count())
      throw std::invalid_argument("material: coefficient vectors do not match the grid");
    if (sigma_s_floor < 0.0) throw std::invalid_argument("material: negative scattering floor");
    const double tol = 1e-14 * std::max(1.0, sigma_s_floor);
    if ((sigma_s_rho.array() < sigma_s_floor - tol).any() || (sigma_s_g.array() < sigma_s_floor - tol).any())
      throw std::invalid_argument("material: scattering below its floor");
    if ((sigma_a_rho.array() < 0.0).any() || (sigma_a_g.array() < 0.0).any())
      throw std::invalid_argument("material: negative absorption");
  }

  VectorXd macro_source(double t, Index n) const {
    if (!source_rho) return VectorXd::Zero(n);
    VectorXd s = source_rho(t);
    if (s.size() != n) throw std::invalid_argument("material: source has the wrong length");
    return s;
  }

  MicroSource micro_source(double t) const {
    if (!source_micro) return {};
    return source_micro(t);
  }

  bool has_source() const { return static_cast<bool>(source_rho) || static_cast<bool>(source_micro); }
};

namespace detail {

inline void check_micro_shape(const StaggeredGrid& grid, const QuadratureSet& quad, const MatrixXd& G) {
  if (G.rows() != grid.g_count() || G.cols() != quad.count())
    throw std::invalid_argument("micro state must be N_g x N_Omega");
  if (quad.dim != grid.dim()) throw std::invalid_argument("quadrature and grid dimensions differ");
}

// out.col(c) += scale * D col(c) for a same-lattice stencil.
inline void add_column_diff(const Stencil& s, const MatrixXd& in, Index c, double scale, MatrixXd& out) {
  const double f = scale * s.inv_h;
  const double* src = in.col(c).data();
  double* dst = out.col(c).data();
  const Index n = static_cast<Index>(s.hi.size());
  for (Index k = 0; k < n; ++k) dst[k] += f * (src[s.hi[static_cast<std::size_t>(k)]] - src[s.lo[static_cast<std::size_t>(k)]]);
}

}  // namespace detail

// A(G): first-order upwind advection of every ordinate on the g-lattice.
inline MatrixXd advect(const StaggeredGrid& grid, const QuadratureSet& quad, const MatrixXd& G) {
  detail::check_micro_shape(grid, quad, G);
  MatrixXd out = MatrixXd::Zero(G.rows(), G.cols());
  for (int j = 0; j < grid.dim(); ++j) {
    const Stencil& back = grid.stencil(j, Side::minus, Lattice::g, Lattice::g);
    const Stencil& fwd = grid.stencil(j, Side::plus, Lattice::g, Lattice::g);
    for (Index m = 0; m < G.cols(); ++m) {
      const double om = quad.omega[j](m);
      if (om > 0.0) detail::add_column_diff(back, G, m, om, out);
      else if (om < 0.0) detail::add_column_diff(fwd, G, m, om, out);
    }
  }
  return out;
}

// A*(G): adjoint of A in the weighted inner product (downwind counterpart).
inline MatrixXd advect_adjoint(const StaggeredGrid& grid, const QuadratureSet& quad, const MatrixXd& G) {
  detail::check_micro_shape(grid, quad, G);
  MatrixXd out = MatrixXd::Zero(G.rows(), G.cols());
  for (int j = 0; j < grid.dim(); ++j) {
    const Stencil& back = grid.stencil(j, Side::minus, Lattice::g, Lattice::g);
    const Stencil& fwd = grid.stencil(j, Side::plus, Lattice::g, Lattice::g);
    for (Index m = 0; m < G.cols(); ++m) {
      const double om = quad.omega[j](m);
      if (om < 0.0) detail::add_column_diff(back, G, m, -om, out);
      else if (om > 0.0) detail::add_column_diff(fwd, G, m, -om, out);
    }
  }
  return out;
}

// Z (I - w 1^T / |D|): removes the quadrature average from every row.
inline MatrixXd remove_average(const QuadratureSet& quad, const MatrixXd& Z) {
  const VectorXd avg = Z * quad.weights / quad.measure;
  return Z - avg * Eigen::RowVectorXd::Ones(Z.cols());
}

// H(G) on the rho-lattice.
inline VectorXd flux_div(const StaggeredGrid& grid, const QuadratureSet& quad, const MatrixXd& G) {
  detail::check_micro_shape(grid, quad, G);
  VectorXd out = VectorXd::Zero(grid.rho_count());
  for (int j = 0; j < grid.dim(); ++j) {
    const VectorXd flux = G * quad.omega[j].cwiseProduct(quad.weights);
    out += diff_minus(grid, j, flux);
  }
  return out / quad.measure;
}

// H applied to a per-axis flux: (1/|D|) sum_j D^{(j),-} flux_j, flux_j = G Q^{(j)} w.
inline VectorXd flux_div_from_fluxes(const StaggeredGrid& grid, const QuadratureSet& quad, const MatrixXd& fluxes) {
  VectorXd out = VectorXd::Zero(grid.rho_count());
  for (int j = 0; j < grid.dim(); ++j) out += diff_minus(grid, j, fluxes.col(j));
  return out / quad.measure;
}

// J(rho) in factored form: left = [D^{(j),+} rho]_j, right = [Omega^(j)]_j.
inline Factored density_grad(const StaggeredGrid& grid, const QuadratureSet& quad, const VectorXd& rho) {
  if (rho.size() != grid.rho_count()) throw std::invalid_argument("density must have N_rho entries");
  Factored f;
  f.left.resize(grid.g_count(), grid.dim());
  f.right.resize(quad.count(), grid.dim());
  for (int j = 0; j < grid.dim(); ++j) {
    f.left.col(j) = diff_plus(grid, j, rho);
    f.right.col(j) = quad.omega[j];
  }
  return f;
}

// Angular side of B for one axis and upwind side:
//   (diag(m^-1) Q^{(j),s} (I - w 1^T / |D|) diag(m))^T V
//     = diag(m) (I - 1 w^T / |D|) diag(Q^{(j),s} / m) V.
inline MatrixXd projected_angular_factor(const QuadratureSet& quad, const VectorXd& scale, int axis, Side side,
                                         const MatrixXd& V) {
  const VectorXd q = side == Side::plus ? quad.q_plus(axis) : quad.q_minus(axis);
  MatrixXd t = q.cwiseQuotient(scale).asDiagonal() * V;
  const Eigen::RowVectorXd avg = quad.weights.transpose() * t / quad.measure;
  t.rowwise() -= avg;
  return scale.asDiagonal() * t;
}

// The forward map C = V^T diag(m^-1) Q^{(j),s} (I - w 1^T/|D|) diag(m) W, an r x r' contraction.
inline MatrixXd projected_angular_coupling(const QuadratureSet& quad, const VectorXd& scale, int axis, Side side,
                                           const MatrixXd& V, const MatrixXd& W) {
  return projected_angular_factor(quad, scale, axis, side, V).transpose() * W;
}

// B(X S V^T) in factored form; never forms an N_g x N_Omega temporary.
// `scale` is the diagonal m relating the factored matrix Y to G via Y = G diag(m)
// (m = sqrt(w) for the energy-consistent representation).
inline Factored advect_projected(const StaggeredGrid& grid, const QuadratureSet& quad, const VectorXd& scale,
                                 const MatrixXd& X, const MatrixXd& S, const MatrixXd& V) {
  if (X.rows() != grid.g_count() || V.rows() != quad.count() || S.rows() != X.cols() || S.cols() != V.cols() ||
      scale.size() != quad.count())
    throw std::invalid_argument("advect_projected: factor shape mismatch");
  const Index r = S.rows();
  const Index d = grid.dim();
  Factored f;
  f.left.resize(X.rows(), 2 * d * r);
  f.right.resize(V.rows(), 2 * d * r);
  for (int j = 0; j < d; ++j) {
    f.left.middleCols((2 * j) * r, r) = diff(grid, j, Side::minus, Lattice::g, Lattice::g, X);
    f.left.middleCols((2 * j + 1) * r, r) = diff(grid, j, Side::plus, Lattice::g, Lattice::g, X);
    f.right.middleCols((2 * j) * r, r) = projected_angular_factor(quad, scale, j, Side::plus, V) * S.transpose();
    f.right.middleCols((2 * j + 1) * r, r) = projected_angular_factor(quad, scale, j, Side::minus, V) * S.transpose();
  }
  return f;
}

// <f1, f2> = (prod_j dx_j) f1^T f2 on the rho-lattice.
inline double inner(const StaggeredGrid& grid, const VectorXd& f1, const VectorXd& f2) {
  if (f1.size() != f2.size()) throw std::invalid_argument("inner: length mismatch");
  return grid.cell_volume() * f1.dot(f2);
}

inline double norm(const StaggeredGrid& grid, const VectorXd& f) { return std::sqrt(inner(grid, f, f)); }

// <F1, F2>_w = (prod_j dx_j) tr(F1 M^2 F2^T).
inline double inner_w(const StaggeredGrid& grid, const QuadratureSet& quad, const MatrixXd& F1, const MatrixXd& F2) {
  if (F1.rows() != F2.rows() || F1.cols() != F2.cols() || F1.cols() != quad.count())
    throw std::invalid_argument("inner_w: shape mismatch");
  return grid.cell_volume() * (F1 * quad.weights.asDiagonal()).cwiseProduct(F2).sum();
}

inline double norm_w(const StaggeredGrid& grid, const QuadratureSet& quad, const MatrixXd& F) {
  return std::sqrt(inner_w(grid, quad, F, F));
}

}  // namespace aplr
