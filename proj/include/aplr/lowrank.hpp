#pragma once

// Energy-consistent dynamical low-rank evolution of the micro variable.
//
// The factors represent Y = G diag(m) = X S V^T with orthonormal X and V.
// m = sqrt(w) in the weighted (energy-consistent) mode and m = 1 in the
// unweighted mode.  The zero-density constraint G w = 0 becomes
// V^T c = 0 with c = w / m.
//
// Integrators: fixed-rank BUG, augmented BUG with SVD truncation, and the
// AP variant that enriches the bases with the diffusion-limit directions
// and keeps them through a conservative truncation.

#include "aplr/config.hpp"
#include "aplr/errors.hpp"
#include "aplr/operators.hpp"
#include "aplr/schur.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>
#include <Eigen/SVD>

#include <cstdint>
#include <random>
#include <utility>

namespace aplr {

enum class Integrator { bug, abug, ap_abug };

struct LowRankConfig {
  Integrator integrator = Integrator::bug;
  // Fixed rank (BUG) and initial rank (aBUG variants).
  Index rank = 10;
  // Relative truncation tolerance of the augmented integrators.
  double tau = 1e-5;
  // Upper bound on the truncated rank; 0 means min(N_g, N_Omega - 1).
  Index max_rank = 0;
  bool weighted = true;
  std::uint64_t seed = 42;

  void validate() const {
    if (rank < 1) throw std::invalid_argument("rank must be at least 1");
    if (!(tau > 0.0)) throw std::invalid_argument("truncation tolerance must be positive");
    if (max_rank < 0) throw std::invalid_argument("max rank must be non-negative");
  }
};

struct LowRankState {
  MatrixXd X;
  MatrixXd S;
  MatrixXd V;
  bool weighted = true;

  Index rank() const { return S.rows(); }
};

// Diagonal m with Y = G diag(m).
inline VectorXd angular_scale(const QuadratureSet& quad, bool weighted) {
  return weighted ? quad.weight_root() : VectorXd::Ones(quad.count());
}

// Constraint vector c (V^T c = 0 <=> G w = 0).
inline VectorXd angular_constraint(const QuadratureSet& quad, bool weighted) {
  return quad.weights.cwiseQuotient(angular_scale(quad, weighted));
}

inline MatrixXd reconstruct(const LowRankState& s, const QuadratureSet& quad) {
  return s.X * s.S * s.V.transpose() * angular_scale(quad, s.weighted).cwiseInverse().asDiagonal();
}

// Energy norm of the micro state from the factors, (prod dx) ||S||_F^2.  This
// is ||G||_w^2 in the weighted mode and the plain norm of G otherwise.
inline double micro_norm_w2(const StaggeredGrid& grid, const LowRankState& s) {
  return grid.cell_volume() * s.S.squaredNorm();
}

// ||G||_w^2 of the reconstructed state, (prod dx) ||S V^T diag(sqrt(w)/m)||_F^2.
inline double reconstructed_norm_w2(const StaggeredGrid& grid, const QuadratureSet& quad, const LowRankState& s) {
  const VectorXd f = quad.weight_root().cwiseQuotient(angular_scale(quad, s.weighted));
  return grid.cell_volume() * (s.S * (f.asDiagonal() * s.V).transpose()).squaredNorm();
}

// ||G w||_inf = ||X S (V^T c)||_inf without forming G.
inline double zero_density_residual(const QuadratureSet& quad, const LowRankState& s) {
  if (s.rank() == 0) return 0.0;
  return (s.X * (s.S * (s.V.transpose() * angular_constraint(quad, s.weighted)))).cwiseAbs().maxCoeff();
}

namespace detail {

// Largest-magnitude entry of every column made positive.
inline void normalize_signs(MatrixXd& B) {
  for (Index c = 0; c < B.cols(); ++c) {
    Index i = 0;
    B.col(c).cwiseAbs().maxCoeff(&i);
    if (B(i, c) < 0.0) B.col(c) = -B.col(c);
  }
}

// Thin Q of a Householder QR.
inline MatrixXd thin_q(const MatrixXd& A) {
  if (A.cols() == 0) return MatrixXd(A.rows(), 0);
  Eigen::HouseholderQR<MatrixXd> qr(A);
  return qr.householderQ() * MatrixXd::Identity(A.rows(), A.cols());
}

// H = I - beta u u^T with H c = -sign(c_0) |c| e_1, so the columns 2..n of H
// span the orthogonal complement of c.
struct Reflector {
  VectorXd u;
  double beta = 0.0;

  explicit Reflector(const VectorXd& c) {
    const double nc = c.norm();
    if (!(nc > 0.0)) throw std::invalid_argument("constraint vector must be non-zero");
    u = c / nc;
    u(0) += u(0) >= 0.0 ? 1.0 : -1.0;
    beta = 2.0 / u.squaredNorm();
  }

  MatrixXd apply(const MatrixXd& A) const { return A - beta * u * (u.transpose() * A); }

  // Coordinates in the constraint null space: rows 2..n of H A.
  MatrixXd reduce(const MatrixXd& A) const { return apply(A).bottomRows(A.rows() - 1); }

  MatrixXd expand(const MatrixXd& Z) const {
    MatrixXd full = MatrixXd::Zero(Z.rows() + 1, Z.cols());
    full.bottomRows(Z.rows()) = Z;
    return apply(full);
  }
};

inline MatrixXd random_columns(std::mt19937_64& rng, Index rows, Index cols) {
  std::normal_distribution<double> nd;
  MatrixXd R(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) R(i, j) = nd(rng);
  return R;
}

inline void project_out(const MatrixXd& B, MatrixXd& A) {
  if (B.cols() == 0 || A.cols() == 0) return;
  for (int pass = 0; pass < 2; ++pass) A -= B * (B.transpose() * A);
}

// New orthonormal columns orthogonal to B0 spanning the numerically
// significant part of (I - B0 B0^T) A, completed with seeded random
// directions up to min_new columns and capped at max_new (if >= 0).
inline MatrixXd extend_unconstrained(const MatrixXd& B0, const MatrixXd& A, Index min_new, Index max_new,
                                     std::mt19937_64& rng) {
  const Index n = A.rows();
  const Index room = n - B0.cols();
  if (max_new < 0 || max_new > room) max_new = room;
  if (min_new > max_new) throw std::invalid_argument("requested more basis columns than the space holds");
  MatrixXd A1 = A;
  project_out(B0, A1);
  Index k = 0;
  MatrixXd Q(n, 0);
  const double ref = A.cols() > 0 ? A.colwise().norm().maxCoeff() : 0.0;
  if (ref > 0.0 && A1.cols() > 0) {
    Eigen::ColPivHouseholderQR<MatrixXd> qr(A1);
    const Index kmax = std::min(A1.cols(), n);
    const auto R = qr.matrixR();
    while (k < kmax && std::abs(R(k, k)) > 1e-12 * ref) ++k;
    k = std::min(k, max_new);
    if (k > 0) {
      Q = qr.householderQ() * MatrixXd::Identity(n, k);
      project_out(B0, Q);
      Q = thin_q(Q);
    }
  }
  if (k < min_new) {
    MatrixXd C = random_columns(rng, n, min_new - k);
    project_out(B0, C);
    project_out(Q, C);
    C = thin_q(C);
    project_out(B0, C);
    project_out(Q, C);
    C = thin_q(C);
    MatrixXd both(n, k + C.cols());
    both << Q, C;
    Q = std::move(both);
  }
  return Q;
}

}  // namespace detail

// Orthonormal columns extending B0 (orthonormal, possibly empty). With a
// non-empty constraint vector all columns also satisfy c^T v = 0.
inline MatrixXd extend_basis(const MatrixXd& B0, const MatrixXd& A, Index min_new, Index max_new,
                             const VectorXd& constraint, std::mt19937_64& rng) {
  const Index n = A.rows();
  const MatrixXd base = B0.cols() > 0 ? B0 : MatrixXd(n, 0);
  MatrixXd out;
  if (constraint.size() == 0) {
    out = detail::extend_unconstrained(base, A, min_new, max_new, rng);
  } else {
    if (constraint.size() != n) throw std::invalid_argument("constraint length mismatch");
    const detail::Reflector H(constraint);
    const MatrixXd red = detail::extend_unconstrained(H.reduce(base), H.reduce(A), min_new, max_new, rng);
    out = H.expand(red);
  }
  detail::normalize_signs(out);
  return out;
}

// Orthonormal basis of span(Z Z^T L) where Z spans the null space of c^T,
// completed to `cols` columns when L is numerically rank deficient.
inline MatrixXd constrained_qr(const MatrixXd& L, const VectorXd& constraint, Index cols, std::mt19937_64& rng) {
  return extend_basis(MatrixXd(L.rows(), 0), L, cols, cols, constraint, rng);
}

// Per-step bookkeeping of the micro update.
struct MicroStepInfo {
  // ||G~||_w^2 of the Galerkin initial value P^X G^n P^V.
  double tilde_norm_w2 = 0.0;
  Index augmented_rank = 0;
  // Galerkin-step factors before truncation (filled when keep_factors is set).
  bool keep_factors = false;
  MatrixXd X_hat, V_hat, S_tilde, S_hat;
};

class LowRankStepper {
 public:
  LowRankStepper(const StaggeredGrid& grid, const QuadratureSet& quad, const MaterialField& material,
                 const SolverConfig& cfg, const LowRankConfig& lr)
      : grid_(&grid), quad_(&quad), material_(&material), cfg_(cfg), lr_(lr), rng_(lr.seed) {
    cfg_.validate();
    lr_.validate();
    material.validate(grid);
    scale_ = angular_scale(quad, lr.weighted);
    constraint_ = angular_constraint(quad, lr.weighted);
    sigma_g_ = (material.sigma_s_g.array() / (cfg.epsilon * cfg.epsilon) + material.sigma_a_g.array()).matrix();
    implicit_ = (1.0 / cfg.dt + sigma_g_.array()).matrix();
    cap_ = std::min<Index>(grid.g_count(), quad.count() - 1);
    if (lr_.max_rank > 0) cap_ = std::min(cap_, lr_.max_rank);
    if (lr_.integrator == Integrator::ap_abug) {
      if ((material.sigma_s_g.array() <= 0.0).any())
        throw std::invalid_argument("AP enrichment needs strictly positive scattering");
      if (cap_ < grid.dim() + 1) throw std::invalid_argument("AP enrichment needs room for d + 1 basis columns");
    }
    for (int j = 0; j < grid.dim(); ++j) omega_m_.push_back(quad.omega[j].cwiseProduct(scale_));
  }

  const LowRankConfig& config() const { return lr_; }
  const VectorXd& scale() const { return scale_; }
  Index rank_cap() const { return cap_; }

  // Rank of a fresh state: the fixed rank for BUG (capped), the initial rank otherwise.
  Index initial_rank() const { return std::min(lr_.rank, cap_); }

  // Factorizes G = left * right^T (never formed) into energy-consistent factors.
  LowRankState factorize(const Factored& G) {
    const Index k_target = initial_rank();
    LowRankState s;
    s.weighted = lr_.weighted;
    const MatrixXd Ly = G.left;
    MatrixXd Ry = scale_.asDiagonal() * G.right;
    if (Ly.cols() != Ry.cols() || Ly.rows() != grid_->g_count() || Ry.rows() != quad_->count())
      throw std::invalid_argument("initial micro factors have the wrong shape");
    // Drop any component that violates the zero-density constraint.
    const VectorXd ch = constraint_.normalized();
    Ry -= ch * (ch.transpose() * Ry);
    const MatrixXd none;
    const MatrixXd Qx = extend_basis(none, Ly, 0, -1, VectorXd(), rng_);
    const MatrixXd Qv = extend_basis(none, Ry, 0, -1, constraint_, rng_);
    MatrixXd U(Qx.cols(), 0), W(Qv.cols(), 0);
    Index k = 0;
    if (Qx.cols() > 0 && Qv.cols() > 0) {
      const MatrixXd core = (Qx.transpose() * Ly) * (Qv.transpose() * Ry).transpose();
      Eigen::JacobiSVD<MatrixXd> svd(core, Eigen::ComputeThinU | Eigen::ComputeThinV);
      const VectorXd& sv = svd.singularValues();
      while (k < sv.size() && sv(k) > 1e-14 * sv(0)) ++k;
      if (lr_.integrator != Integrator::bug) k = std::min(k, truncation_rank(sv, 1));
      k = std::min(k, k_target);
      U = svd.matrixU().leftCols(k);
      W = svd.matrixV().leftCols(k);
    }
    const Index r = lr_.integrator == Integrator::bug ? k_target : std::max<Index>(k, 1);
    if (r > cap_) throw RankOverflowError(r, cap_);
    MatrixXd X0 = Qx * U, V0 = Qv * W;
    detail::normalize_signs(X0);
    detail::normalize_signs(V0);
    s.X = concat(X0, extend_basis(X0, MatrixXd(grid_->g_count(), 0), r - k, r - k, VectorXd(), rng_));
    s.V = concat(V0, extend_basis(V0, MatrixXd(quad_->count(), 0), r - k, r - k, constraint_, rng_));
    s.S = (s.X.transpose() * Ly) * (s.V.transpose() * Ry).transpose();
    return s;
  }

  // One micro step with the density rho_J entering the J term.
  LowRankState micro_step(const LowRankState& s, const VectorXd& rho_J, double t_next, MicroStepInfo* info = nullptr) {
    check(s);
    const MicroSource src = material_->micro_source(t_next);
    MatrixXd src_ang;
    if (!src.empty()) src_ang = scale_.asDiagonal() * src.angular;
    MatrixXd grad(grid_->g_count(), grid_->dim());
    for (int j = 0; j < grid_->dim(); ++j) grad.col(j) = diff_plus(*grid_, j, rho_J);

    const MatrixXd K1 = k_step(s, grad, src, src_ang);
    const MatrixXd L1 = l_step(s, grad, src, src_ang);

    MatrixXd Xh, Vh;
    Index pinned = 0;
    const MatrixXd none;
    switch (lr_.integrator) {
      case Integrator::bug: {
        const Index r = s.rank();
        Xh = extend_basis(none, K1, r, r, VectorXd(), rng_);
        Vh = extend_basis(none, L1, r, r, constraint_, rng_);
        break;
      }
      case Integrator::abug: {
        Xh = extend_basis(none, concat(K1, s.X), 1, -1, VectorXd(), rng_);
        Vh = extend_basis(none, concat(L1, s.V), 1, -1, constraint_, rng_);
        break;
      }
      case Integrator::ap_abug: {
        pinned = grid_->dim();
        MatrixXd ex(grid_->g_count(), pinned), ev(quad_->count(), pinned);
        for (int j = 0; j < pinned; ++j) {
          ex.col(j) = -grad.col(j).cwiseQuotient(material_->sigma_s_g);
          ev.col(j) = omega_m_[j];
        }
        const MatrixXd Px = extend_basis(none, ex, pinned, pinned, VectorXd(), rng_);
        const MatrixXd Pv = extend_basis(none, ev, pinned, pinned, constraint_, rng_);
        Xh = concat(Px, extend_basis(Px, concat(K1, s.X), 0, -1, VectorXd(), rng_));
        Vh = concat(Pv, extend_basis(Pv, concat(L1, s.V), 0, -1, constraint_, rng_));
        break;
      }
    }

    const MatrixXd S_tilde = (Xh.transpose() * s.X) * s.S * (s.V.transpose() * Vh);
    const MatrixXd S_hat = s_step(Xh, Vh, S_tilde, grad, src, src_ang);

    if (info) {
      LowRankState tilde{Xh, S_tilde, Vh, lr_.weighted};
      info->tilde_norm_w2 = micro_norm_w2(*grid_, tilde);
      info->augmented_rank = std::max(Xh.cols(), Vh.cols());
      if (info->keep_factors) {
        info->X_hat = Xh;
        info->V_hat = Vh;
        info->S_tilde = S_tilde;
        info->S_hat = S_hat;
      }
    }

    LowRankState out;
    out.weighted = lr_.weighted;
    if (lr_.integrator == Integrator::bug) {
      out.X = std::move(Xh);
      out.V = std::move(Vh);
      out.S = S_hat;
      return out;
    }
    truncate(Xh, Vh, S_hat, pinned, out);
    return out;
  }

  // Flux G Q^(j) w per axis straight from the factors.
  MatrixXd fluxes(const LowRankState& s) const {
    MatrixXd f(grid_->g_count(), grid_->dim());
    const MatrixXd XS = s.X * s.S;
    for (int j = 0; j < grid_->dim(); ++j)
      f.col(j) = XS * (s.V.transpose() * quad_->omega[j].cwiseProduct(quad_->weights).cwiseQuotient(scale_));
    return f;
  }

  // (G/dt - A(G)P/eps + S_g) Q^(j) w per axis, in O(N_g r) per axis.
  MatrixXd explicit_fluxes(const LowRankState& s, double t_next) const {
    MatrixXd f = fluxes(s) / cfg_.dt;
    const Factored B = advect_projected(*grid_, *quad_, scale_, s.X, s.S, s.V);
    const MicroSource src = material_->micro_source(t_next);
    for (int j = 0; j < grid_->dim(); ++j) {
      const VectorXd qw = quad_->omega[j].cwiseProduct(quad_->weights);
      f.col(j) -= B.left * (B.right.transpose() * qw.cwiseQuotient(scale_)) / cfg_.epsilon;
      if (!src.empty()) f.col(j) += src.spatial * (src.angular.transpose() * qw);
    }
    return f;
  }

 private:
  static MatrixXd concat(const MatrixXd& a, const MatrixXd& b) {
    MatrixXd c(a.rows(), a.cols() + b.cols());
    c << a, b;
    return c;
  }

  void check(const LowRankState& s) const {
    if (s.X.rows() != grid_->g_count() || s.V.rows() != quad_->count() || s.S.rows() != s.X.cols() ||
        s.S.cols() != s.V.cols())
      throw std::invalid_argument("low-rank state has inconsistent factor shapes");
    if (s.weighted != lr_.weighted) throw std::invalid_argument("low-rank state weighting differs from the stepper");
  }

  // Smallest k with (sum_{i>=k} sv_i^2)^{1/2} <= tau * reference, at least `floor`.
  Index truncation_rank(const VectorXd& sv, Index floor, double reference = -1.0) const {
    if (reference < 0.0) reference = sv.norm();
    Index k = sv.size();
    double tail = 0.0;
    while (k > floor) {
      const double next = tail + sv(k - 1) * sv(k - 1);
      if (std::sqrt(next) > lr_.tau * reference) break;
      tail = next;
      --k;
    }
    return k;
  }

  MatrixXd k_step(const LowRankState& s, const MatrixXd& grad, const MicroSource& src, const MatrixXd& src_ang) const {
    const MatrixXd K = s.X * s.S;
    MatrixXd rhs = K / cfg_.dt;
    const double e = cfg_.epsilon;
    for (int j = 0; j < grid_->dim(); ++j) {
      const MatrixXd Cp = projected_angular_coupling(*quad_, scale_, j, Side::plus, s.V, s.V);
      const MatrixXd Cm = projected_angular_coupling(*quad_, scale_, j, Side::minus, s.V, s.V);
      rhs -= (diff(*grid_, j, Side::minus, Lattice::g, Lattice::g, K) * Cp +
              diff(*grid_, j, Side::plus, Lattice::g, Lattice::g, K) * Cm) /
             e;
      rhs -= grad.col(j) * (omega_m_[j].transpose() * s.V) / (e * e);
    }
    if (!src.empty()) rhs += src.spatial * (src_ang.transpose() * s.V);
    return implicit_.cwiseInverse().asDiagonal() * rhs;
  }

  MatrixXd l_step(const LowRankState& s, const MatrixXd& grad, const MicroSource& src, const MatrixXd& src_ang) const {
    const MatrixXd L = s.V * s.S.transpose();
    MatrixXd rhs = L / cfg_.dt;
    const double e = cfg_.epsilon;
    for (int j = 0; j < grid_->dim(); ++j) {
      const MatrixXd XDm = s.X.transpose() * diff(*grid_, j, Side::minus, Lattice::g, Lattice::g, s.X);
      const MatrixXd XDp = s.X.transpose() * diff(*grid_, j, Side::plus, Lattice::g, Lattice::g, s.X);
      rhs -= (projected_angular_factor(*quad_, scale_, j, Side::plus, L) * XDm.transpose() +
              projected_angular_factor(*quad_, scale_, j, Side::minus, L) * XDp.transpose()) /
             e;
      rhs -= omega_m_[j] * (grad.col(j).transpose() * s.X) / (e * e);
    }
    if (!src.empty()) rhs += src_ang * (src.spatial.transpose() * s.X);
    const MatrixXd A = galerkin_matrix(s.X);
    Eigen::LLT<MatrixXd> llt(A);
    if (llt.info() != Eigen::Success) throw std::logic_error("L-step matrix is not positive definite");
    return llt.solve(rhs.transpose()).transpose();
  }

  MatrixXd s_step(const MatrixXd& X, const MatrixXd& V, const MatrixXd& S_tilde, const MatrixXd& grad,
                  const MicroSource& src, const MatrixXd& src_ang) const {
    MatrixXd rhs = S_tilde / cfg_.dt;
    const double e = cfg_.epsilon;
    for (int j = 0; j < grid_->dim(); ++j) {
      const MatrixXd XDm = X.transpose() * diff(*grid_, j, Side::minus, Lattice::g, Lattice::g, X);
      const MatrixXd XDp = X.transpose() * diff(*grid_, j, Side::plus, Lattice::g, Lattice::g, X);
      const MatrixXd Cp = projected_angular_coupling(*quad_, scale_, j, Side::plus, V, V);
      const MatrixXd Cm = projected_angular_coupling(*quad_, scale_, j, Side::minus, V, V);
      rhs -= (XDm * S_tilde * Cp + XDp * S_tilde * Cm) / e;
      rhs -= (X.transpose() * grad.col(j)) * (omega_m_[j].transpose() * V) / (e * e);
    }
    if (!src.empty()) rhs += (X.transpose() * src.spatial) * (src_ang.transpose() * V);
    Eigen::LLT<MatrixXd> llt(galerkin_matrix(X));
    if (llt.info() != Eigen::Success) throw std::logic_error("S-step matrix is not positive definite");
    return llt.solve(rhs);
  }

  // I/dt + X^T diag(sigma_s/eps^2 + sigma_a) X.
  MatrixXd galerkin_matrix(const MatrixXd& X) const {
    MatrixXd A = X.transpose() * sigma_g_.asDiagonal() * X;
    A = 0.5 * (A + A.transpose()).eval();
    A.diagonal().array() += 1.0 / cfg_.dt;
    return A;
  }

  // SVD truncation of the augmented Galerkin solution.  With pinned > 0 the
  // leading pinned columns of both bases are kept and only the remainder
  // block is truncated (an orthogonal projection of S_hat).
  void truncate(const MatrixXd& Xh, const MatrixXd& Vh, const MatrixXd& S_hat, Index pinned, LowRankState& out) const {
    const Index rx = S_hat.rows() - pinned, rv = S_hat.cols() - pinned;
    MatrixXd U(rx, 0), W(rv, 0);
    VectorXd sv;
    Index k = 0;
    if (rx > 0 && rv > 0) {
      Eigen::JacobiSVD<MatrixXd> svd(S_hat.bottomRightCorner(rx, rv), Eigen::ComputeThinU | Eigen::ComputeThinV);
      sv = svd.singularValues();
      k = pinned > 0 ? truncation_rank(sv, 0, S_hat.norm()) : truncation_rank(sv, 1);
      U = svd.matrixU().leftCols(k);
      W = svd.matrixV().leftCols(k);
    } else if (pinned == 0) {
      throw std::logic_error("empty augmented basis");
    }
    if (pinned + k > cap_) throw RankOverflowError(pinned + k, cap_);
    MatrixXd Xr = Xh.rightCols(rx) * U, Vr = Vh.rightCols(rv) * W;
    // Sign convention on the truncated columns, carried into the core.
    VectorXd fx = VectorXd::Ones(k), fv = VectorXd::Ones(k);
    for (Index c = 0; c < k; ++c) {
      Index i = 0;
      Xr.col(c).cwiseAbs().maxCoeff(&i);
      if (Xr(i, c) < 0.0) fx(c) = -1.0;
      Vr.col(c).cwiseAbs().maxCoeff(&i);
      if (Vr(i, c) < 0.0) fv(c) = -1.0;
    }
    Xr = Xr * fx.asDiagonal();
    Vr = Vr * fv.asDiagonal();
    U = U * fx.asDiagonal();
    W = W * fv.asDiagonal();
    const Index r = pinned + k;
    out.X.resize(Xh.rows(), r);
    out.V.resize(Vh.rows(), r);
    out.X << Xh.leftCols(pinned), Xr;
    out.V << Vh.leftCols(pinned), Vr;
    out.S.resize(r, r);
    out.S.topLeftCorner(pinned, pinned) = S_hat.topLeftCorner(pinned, pinned);
    out.S.topRightCorner(pinned, k) = S_hat.topRightCorner(pinned, rv) * W;
    out.S.bottomLeftCorner(k, pinned) = U.transpose() * S_hat.bottomLeftCorner(rx, pinned);
    out.S.bottomRightCorner(k, k) = U.transpose() * S_hat.bottomRightCorner(rx, rv) * W;
  }

  const StaggeredGrid* grid_;
  const QuadratureSet* quad_;
  const MaterialField* material_;
  SolverConfig cfg_;
  LowRankConfig lr_;
  std::mt19937_64 rng_;
  VectorXd scale_, constraint_, sigma_g_, implicit_;
  std::vector<VectorXd> omega_m_;
  Index cap_ = 0;
};

// One macro-micro step.  IMEX coupling: micro with rho^n, then the diagonal
// macro update.  IMEX-S coupling: Schur solve for rho^{n+1} with the
// right-hand side built from the factors, then micro with rho^{n+1}.
inline std::pair<VectorXd, LowRankState> lowrank_coupled_step(const StaggeredGrid& grid, const QuadratureSet& quad,
                                                              const MaterialField& material, const SolverConfig& cfg,
                                                              LowRankStepper& stepper, const SchurOperator* schur,
                                                              const VectorXd& rho, const LowRankState& s,
                                                              double t_next, MicroStepInfo* info = nullptr) {
  const VectorXd phi = material.macro_source(t_next, grid.rho_count());
  if (is_schur(cfg.scheme)) {
    if (!schur) throw std::invalid_argument("IMEX-S coupling needs a Schur operator");
    const MatrixXd f = schur->factor().asDiagonal() * stepper.explicit_fluxes(s, t_next);
    const VectorXd b = rho / cfg.dt + phi - flux_div_from_fluxes(grid, quad, f);
    VectorXd rho1 = schur->solve(b, rho);
    LowRankState s1 = stepper.micro_step(s, rho1, t_next, info);
    return {std::move(rho1), std::move(s1)};
  }
  LowRankState s1 = stepper.micro_step(s, rho, t_next, info);
  const VectorXd h = flux_div_from_fluxes(grid, quad, stepper.fluxes(s1));
  VectorXd rho1 = (rho / cfg.dt + phi - h).cwiseQuotient((1.0 / cfg.dt + material.sigma_a_rho.array()).matrix());
  return {std::move(rho1), std::move(s1)};
}

}  // namespace aplr
