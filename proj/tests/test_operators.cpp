#include "oracles.hpp"

#include <gtest/gtest.h>

#include <numbers>

using namespace aplr;

namespace {

struct Setup {
  StaggeredGrid grid;
  QuadratureSet quad;
};

Setup line8() { return {StaggeredGrid::line({0.0, 1.0}, 8), gauss_legendre_1d(8)}; }
Setup square4() { return {StaggeredGrid::rectangle({0.0, 1.0}, {0.0, 1.5}, 4, 3), chebyshev_legendre_2d(2)}; }

}  // namespace

TEST(Operators, AdvectZeroAndConstant) {
  for (const auto& s : {line8(), square4()}) {
    const MatrixXd Z = MatrixXd::Zero(s.grid.g_count(), s.quad.count());
    EXPECT_EQ(advect(s.grid, s.quad, Z).norm(), 0.0);
    MatrixXd C(s.grid.g_count(), s.quad.count());
    for (Index c = 0; c < C.cols(); ++c) C.col(c).setConstant(1.0 + c);
    EXPECT_LT(advect(s.grid, s.quad, C).norm(), 1e-12);
  }
}

TEST(Operators, AdvectMatchesDenseAssembly) {
  std::mt19937_64 rng(1);
  for (const auto& s : {line8(), square4()}) {
    const MatrixXd G = oracle::random_matrix(rng, s.grid.g_count(), s.quad.count());
    const MatrixXd got = advect(s.grid, s.quad, G);
    const MatrixXd want = oracle::A(s.grid, s.quad, G);
    EXPECT_LT((got - want).cwiseAbs().maxCoeff(), 1e-13 * want.cwiseAbs().maxCoeff());
    EXPECT_LT(oracle::rel_diff(advect_adjoint(s.grid, s.quad, G), oracle::A_adjoint(s.grid, s.quad, G)), 1e-13);
  }
}

TEST(Operators, FluxDivAndDensityGradMatchDense) {
  std::mt19937_64 rng(2);
  for (const auto& s : {line8(), square4()}) {
    const MatrixXd G = oracle::random_matrix(rng, s.grid.g_count(), s.quad.count());
    const VectorXd rho = oracle::random_vector(rng, s.grid.rho_count());
    EXPECT_LT(oracle::rel_diff(flux_div(s.grid, s.quad, G), oracle::H(s.grid, s.quad, G)), 1e-13);
    EXPECT_LT(oracle::rel_diff(density_grad(s.grid, s.quad, rho).dense(), oracle::J(s.grid, s.quad, rho)), 1e-13);
  }
}

TEST(Operators, FluxDivOfAngularConstantVanishes) {
  for (const auto& s : {line8(), square4()}) {
    MatrixXd G(s.grid.g_count(), s.quad.count());
    const VectorXd col = VectorXd::LinSpaced(s.grid.g_count(), -1.0, 2.0);
    for (Index c = 0; c < G.cols(); ++c) G.col(c) = col;
    EXPECT_LT(flux_div(s.grid, s.quad, G).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Operators, DensityGradStructure) {
  const auto s = line8();
  EXPECT_LT(density_grad(s.grid, s.quad, VectorXd::Constant(s.grid.rho_count(), 3.0)).dense().norm(), 1e-12);
  const VectorXd rho =
      sample(s.grid, Lattice::rho, [](double x, double) { return std::sin(2.0 * std::numbers::pi * x); });
  const Factored J = density_grad(s.grid, s.quad, rho);
  EXPECT_EQ(J.left.cols(), 1);
  Eigen::JacobiSVD<MatrixXd> svd(J.dense());
  EXPECT_LT(svd.singularValues()(1), 1e-12 * svd.singularValues()(0));
}

TEST(Operators, SummationByParts) {
  std::mt19937_64 rng(3);
  for (const auto& s : {line8(), square4()}) {
    const MatrixXd G = oracle::random_matrix(rng, s.grid.g_count(), s.quad.count());
    const VectorXd rho = oracle::random_vector(rng, s.grid.rho_count());
    const double a = s.quad.measure * inner(s.grid, rho, flux_div(s.grid, s.quad, G));
    const double b = inner_w(s.grid, s.quad, density_grad(s.grid, s.quad, rho).dense(), G);
    EXPECT_LT(std::abs(a + b), 1e-12 * (std::abs(a) + std::abs(b)));
  }
}

TEST(Operators, AdjointInWeightedProduct) {
  std::mt19937_64 rng(4);
  for (const auto& s : {line8(), square4()}) {
    const MatrixXd F = oracle::random_matrix(rng, s.grid.g_count(), s.quad.count());
    const MatrixXd G = oracle::random_matrix(rng, s.grid.g_count(), s.quad.count());
    const double a = inner_w(s.grid, s.quad, advect(s.grid, s.quad, F), G);
    const double b = inner_w(s.grid, s.quad, F, advect_adjoint(s.grid, s.quad, G));
    EXPECT_LT(std::abs(a - b), 1e-12 * (std::abs(a) + std::abs(b)));
    EXPECT_EQ(advect_adjoint(s.grid, s.quad, MatrixXd::Zero(F.rows(), F.cols())).norm(), 0.0);
  }
}

TEST(Operators, AdvectProjectedMatchesDense) {
  std::mt19937_64 rng(5);
  for (const auto& s : {line8(), square4()}) {
    for (bool weighted : {true, false}) {
      const VectorXd m = weighted ? s.quad.weight_root() : VectorXd::Ones(s.quad.count());
      const MatrixXd X = oracle::random_matrix(rng, s.grid.g_count(), 3).householderQr().householderQ() *
                         MatrixXd::Identity(s.grid.g_count(), 3);
      const MatrixXd V = oracle::random_matrix(rng, s.quad.count(), 3).householderQr().householderQ() *
                         MatrixXd::Identity(s.quad.count(), 3);
      const MatrixXd S = oracle::random_matrix(rng, 3, 3);
      const Factored B = advect_projected(s.grid, s.quad, m, X, S, V);
      const MatrixXd Y = X * S * V.transpose();
      const MatrixXd want =
          oracle::A(s.grid, s.quad, Y * m.cwiseInverse().asDiagonal()) * oracle::P(s.quad) * m.asDiagonal();
      EXPECT_LT(oracle::rel_diff(B.dense(), want), 1e-12);
      // The projection removes the density mode.
      const VectorXd wm = s.quad.weights.cwiseQuotient(m);
      EXPECT_LT((B.right.transpose() * wm).cwiseAbs().maxCoeff(), 1e-12 * B.right.norm() * wm.norm());
    }
  }
}

TEST(Operators, AdvectProjectedOfConstantBasisVanishes) {
  const auto s = line8();
  const MatrixXd X = VectorXd::Constant(s.grid.g_count(), 1.0 / std::sqrt(double(s.grid.g_count())));
  MatrixXd V = VectorXd::LinSpaced(s.quad.count(), -1.0, 1.0);
  V /= V.norm();
  const Factored B = advect_projected(s.grid, s.quad, s.quad.weight_root(), X, MatrixXd::Constant(1, 1, 2.0), V);
  EXPECT_LT(B.dense().norm(), 1e-12);
}

TEST(Operators, WeightedNormAndInnerProducts) {
  std::mt19937_64 rng(6);
  const auto s = square4();
  const MatrixXd ones = MatrixXd::Ones(s.grid.g_count(), s.quad.count());
  EXPECT_NEAR(norm_w(s.grid, s.quad, ones),
              std::sqrt(s.quad.measure * s.grid.cell_volume() * double(s.grid.g_count())), 1e-12);
  for (int t = 0; t < 20; ++t) {
    const MatrixXd F1 = oracle::random_matrix(rng, s.grid.g_count(), s.quad.count());
    const MatrixXd F2 = oracle::random_matrix(rng, s.grid.g_count(), s.quad.count());
    EXPECT_NEAR(inner_w(s.grid, s.quad, F1, F2), inner_w(s.grid, s.quad, F2, F1), 1e-12);
    const double ip = inner_w(s.grid, s.quad, F1, F2);
    EXPECT_LE(ip * ip, std::pow(norm_w(s.grid, s.quad, F1) * norm_w(s.grid, s.quad, F2), 2) * (1.0 + 1e-14));
  }
  EXPECT_THROW(inner_w(s.grid, s.quad, ones, MatrixXd::Ones(2, 2)), std::invalid_argument);
  EXPECT_THROW(advect(s.grid, s.quad, MatrixXd::Ones(3, 3)), std::invalid_argument);
  EXPECT_THROW(flux_div(s.grid, s.quad, MatrixXd::Ones(3, 3)), std::invalid_argument);
  EXPECT_THROW(density_grad(s.grid, s.quad, VectorXd::Ones(3)), std::invalid_argument);
}

TEST(Operators, Linearity) {
  std::mt19937_64 rng(7);
  const auto s = square4();
  const MatrixXd F = oracle::random_matrix(rng, s.grid.g_count(), s.quad.count());
  const MatrixXd G = oracle::random_matrix(rng, s.grid.g_count(), s.quad.count());
  const VectorXd u = oracle::random_vector(rng, s.grid.rho_count());
  const VectorXd v = oracle::random_vector(rng, s.grid.rho_count());
  const double a = 0.7, b = -1.3;
  EXPECT_LT(oracle::rel_diff(advect(s.grid, s.quad, a * F + b * G),
                             a * advect(s.grid, s.quad, F) + b * advect(s.grid, s.quad, G)),
            1e-12);
  EXPECT_LT(oracle::rel_diff(flux_div(s.grid, s.quad, a * F + b * G),
                             a * flux_div(s.grid, s.quad, F) + b * flux_div(s.grid, s.quad, G)),
            1e-12);
  EXPECT_LT(oracle::rel_diff(density_grad(s.grid, s.quad, a * u + b * v).dense(),
                             a * density_grad(s.grid, s.quad, u).dense() + b * density_grad(s.grid, s.quad, v).dense()),
            1e-12);
}

TEST(Operators, ConstraintTransport) {
  std::mt19937_64 rng(8);
  for (const auto& s : {line8(), square4()}) {
    const MatrixXd G = oracle::random_micro(rng, s.grid, s.quad);
    EXPECT_LT((G * s.quad.weights).cwiseAbs().maxCoeff(), 1e-12 * G.norm());
    const MatrixXd AP = remove_average(s.quad, advect(s.grid, s.quad, G));
    EXPECT_LT((AP * s.quad.weights).cwiseAbs().maxCoeff(), 1e-12 * AP.norm());
    const MatrixXd J = density_grad(s.grid, s.quad, oracle::random_vector(rng, s.grid.rho_count())).dense();
    EXPECT_LT((J * s.quad.weights).cwiseAbs().maxCoeff(), 1e-12 * J.norm());
  }
}

TEST(Operators, MaterialValidation) {
  const auto g = StaggeredGrid::line({0.0, 1.0}, 4);
  EXPECT_NO_THROW(MaterialField::uniform(g, 1.0, 0.5));
  EXPECT_THROW(MaterialField::uniform(g, 1.0, -0.5), std::invalid_argument);
  auto m = MaterialField::uniform(g, 1.0, 0.0);
  m.sigma_s_floor = 2.0;
  EXPECT_THROW(m.validate(g), std::invalid_argument);
  m.sigma_s_floor = 1.0;
  m.sigma_a_g.resize(3);
  EXPECT_THROW(m.validate(g), std::invalid_argument);
}
