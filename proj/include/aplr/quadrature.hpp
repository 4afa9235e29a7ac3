#pragma once

// Discrete-ordinates angular quadratures.

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>

namespace aplr {

struct QuadratureSet {
  int dim = 1;
  // omega[j](k): j-th component of the k-th ordinate (projected onto the plane in 2D).
  std::array<Eigen::VectorXd, 2> omega;
  Eigen::VectorXd weights;
  // |D_Omega|: 2 for the slab rule, 2*pi for the projected 2D rule.
  double measure = 2.0;

  Eigen::Index count() const { return weights.size(); }

  // Diagonal of M = diag(sqrt(w)).
  Eigen::VectorXd weight_root() const { return weights.array().sqrt(); }

  const Eigen::VectorXd& q(int axis) const { return omega.at(axis); }
  Eigen::VectorXd q_plus(int axis) const { return omega.at(axis).cwiseMax(0.0); }
  Eigen::VectorXd q_minus(int axis) const { return omega.at(axis).cwiseMin(0.0); }
  Eigen::VectorXd q_abs(int axis) const { return omega.at(axis).cwiseAbs(); }

  // Quadrature average (1/|D|) sum_k w_k v_k.
  double average(const Eigen::Ref<const Eigen::VectorXd>& v) const { return weights.dot(v) / measure; }

  // (1/|D|) sum_k w_k |Omega^(j)_k|.
  double boundary_constant(int axis) const { return weights.dot(q_abs(axis)) / measure; }

  // (1/|D|) sum_k w_k Omega^(i)_k Omega^(j)_k.
  double second_moment(int i, int j) const {
    return weights.dot(omega.at(i).cwiseProduct(omega.at(j))) / measure;
  }
};

namespace detail {

// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration on P_n.
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> gauss_legendre(int n) {
  Eigen::VectorXd x(n), w(n);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = 0.0;
      for (int k = 1; k <= n; ++k) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p2) / k;
      }
      dp = n * (z * p0 - p1) / (z * z - 1.0);
      const double dz = p0 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    x(i) = -z;
    x(n - 1 - i) = z;
    w(i) = w(n - 1 - i) = 2.0 / ((1.0 - z * z) * dp * dp);
  }
  if (n % 2 == 1) x(n / 2) = 0.0;
  return {x, w};
}

}  // namespace detail

// Slab-geometry rule: Gauss-Legendre in mu on [-1, 1], |D| = 2.
inline QuadratureSet gauss_legendre_1d(int n_points) {
  if (n_points < 2 || n_points % 2 != 0)
    throw std::invalid_argument("1D quadrature needs an even number of points >= 2, got " + std::to_string(n_points));
  auto [x, w] = detail::gauss_legendre(n_points);
  QuadratureSet q;
  q.dim = 1;
  q.omega[0] = x;
  q.omega[1] = Eigen::VectorXd::Zero(n_points);
  q.weights = w;
  q.measure = 2.0;
  return q;
}

// Chebyshev-Legendre product rule on the upper hemisphere, projected onto the
// xy-plane: n_polar Gauss-Legendre nodes in mu on (0, 1) times 2*n_polar
// equispaced azimuths phi_b = (2b - 1) pi / (2 n_polar).  N = 2 n_polar^2
// directions with weights summing to 2*pi.
inline QuadratureSet chebyshev_legendre_2d(int n_polar) {
  if (n_polar < 2) throw std::invalid_argument("2D quadrature needs n_polar >= 2, got " + std::to_string(n_polar));
  auto [t, wt] = detail::gauss_legendre(n_polar);
  const int n_az = 2 * n_polar;
  const int n = n_polar * n_az;
  QuadratureSet q;
  q.dim = 2;
  q.omega[0].resize(n);
  q.omega[1].resize(n);
  q.weights.resize(n);
  q.measure = 2.0 * std::numbers::pi;
  const double w_az = std::numbers::pi / n_polar;
  int k = 0;
  for (int a = 0; a < n_polar; ++a) {
    const double mu = 0.5 * (t(a) + 1.0);
    const double w_mu = 0.5 * wt(a);
    const double s = std::sqrt(1.0 - mu * mu);
    for (int b = 1; b <= n_az; ++b, ++k) {
      const double phi = (2.0 * b - 1.0) * std::numbers::pi / n_az;
      q.omega[0](k) = s * std::cos(phi);
      q.omega[1](k) = s * std::sin(phi);
      q.weights(k) = w_mu * w_az;
    }
  }
  return q;
}

}  // namespace aplr
