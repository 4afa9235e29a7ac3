#include "oracles.hpp"

#include <gtest/gtest.h>

#include <numbers>
#include <set>

using namespace aplr;

namespace {

StaggeredGrid unit_square(int n) { return StaggeredGrid::rectangle({0.0, 1.0}, {0.0, 1.0}, n, n); }

}  // namespace

TEST(Grid, CountsInTwoDimensions) {
  const auto g = unit_square(4);
  EXPECT_EQ(g.rho_count(), 32);
  EXPECT_EQ(g.g_count(), 32);
}

TEST(Grid, CountsInOneDimension) {
  const auto g = StaggeredGrid::line({-1.5, 1.5}, 500);
  EXPECT_EQ(g.rho_count(), 1000);
  EXPECT_EQ(g.g_count(), 1000);
  EXPECT_DOUBLE_EQ(g.spacing(0), 3.0 / 500);
  EXPECT_NEAR(g.spacing(0), 0.006, 1e-15);
}

TEST(Grid, LatticeSpacing) {
  const auto g = StaggeredGrid::rectangle({0.0, 7.0}, {0.0, 7.0}, 128, 128);
  EXPECT_DOUBLE_EQ(g.spacing(0), 7.0 / 128);
  EXPECT_DOUBLE_EQ(g.spacing(1), 7.0 / 128);
}

TEST(Grid, RejectsBadInput) {
  EXPECT_THROW(StaggeredGrid::line({0.0, 1.0}, 1), std::invalid_argument);
  EXPECT_THROW(StaggeredGrid::line({0.0, 1.0}, 0), std::invalid_argument);
  EXPECT_THROW(StaggeredGrid::line({1.0, 1.0}, 8), std::invalid_argument);
  EXPECT_THROW(StaggeredGrid::rectangle({0.0, 1.0}, {2.0, 1.0}, 4, 4), std::invalid_argument);
}

TEST(Grid, IndexMapsAreBijective) {
  for (const auto& g : {unit_square(5), StaggeredGrid::line({0.0, 1.0}, 6), StaggeredGrid::rectangle({0, 2}, {0, 1}, 3, 4)}) {
    for (Lattice l : {Lattice::rho, Lattice::g}) {
      std::set<std::pair<Index, Index>> seen;
      for (Index k = 0; k < g.count(l); ++k) {
        const HalfIndex h = g.location(l, k);
        EXPECT_EQ(g.index(l, h), k);
        EXPECT_TRUE(g.on_lattice(l, h));
        seen.insert({h.a, h.b});
      }
      EXPECT_EQ(static_cast<Index>(seen.size()), g.count(l));
    }
  }
}

TEST(Grid, LocationsFollowStaggeredPattern) {
  const auto g = unit_square(4);
  for (Index k = 0; k < g.rho_count(); ++k) {
    const HalfIndex h = g.location(Lattice::rho, k);
    EXPECT_EQ((h.a + h.b) % 2, 0);
    EXPECT_EQ(h.a % 2, h.b % 2);  // centers (odd, odd) and corners (even, even)
  }
  for (Index k = 0; k < g.g_count(); ++k) {
    const HalfIndex h = g.location(Lattice::g, k);
    EXPECT_EQ((h.a + h.b) % 2, 1);  // face midpoints
  }
  EXPECT_THROW(g.index(Lattice::rho, {1, 0}), std::invalid_argument);
}

TEST(Grid, ConstantFieldHasZeroDifference) {
  const auto g = unit_square(6);
  const VectorXd one = VectorXd::Ones(g.rho_count());
  for (int j = 0; j < 2; ++j) {
    EXPECT_LT(diff_plus(g, j, one).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_LT(diff_minus(g, j, VectorXd::Ones(g.g_count())).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(Grid, DifferenceConvergesToDerivative) {
  const double pi2 = 2.0 * std::numbers::pi;
  auto error_at = [&](int n) {
    const auto g = StaggeredGrid::line({0.0, 1.0}, n);
    const VectorXd f = sample(g, Lattice::rho, [&](double x, double) { return std::sin(pi2 * x); });
    const VectorXd exact = sample(g, Lattice::g, [&](double x, double) { return pi2 * std::cos(pi2 * x); });
    return (diff_plus(g, 0, f) - exact).cwiseAbs().maxCoeff();
  };
  const double e64 = error_at(64), e128 = error_at(128);
  const double c = e64 * 64.0;  // C fitted on the coarse level
  EXPECT_LE(e128, 1.05 * c / 128.0);
  EXPECT_LT(e64, 1.0 / 64.0 * 2.0 * pi2 * pi2);
}

TEST(Grid, MinusIsNegatedTransposeOfPlus) {
  std::mt19937_64 rng(7);
  for (const auto& g : {unit_square(5), StaggeredGrid::line({-1.0, 2.0}, 7)}) {
    for (int j = 0; j < g.dim(); ++j) {
      const VectorXd u = oracle::random_vector(rng, g.rho_count());
      const VectorXd v = oracle::random_vector(rng, g.g_count());
      const double lhs = inner(g, diff_plus(g, j, u), v);
      const double rhs = inner(g, u, diff_minus(g, j, v));
      EXPECT_LT(std::abs(lhs + rhs), 1e-13 * (std::abs(lhs) + std::abs(rhs) + 1.0));
      EXPECT_LT((oracle::d_minus(g, j) + oracle::d_plus(g, j).transpose()).cwiseAbs().maxCoeff(), 1e-12);
    }
  }
}

TEST(Grid, StencilsMatchDenseAssembly) {
  std::mt19937_64 rng(3);
  const auto g = StaggeredGrid::rectangle({0.0, 1.0}, {0.0, 2.0}, 4, 3);
  for (int j = 0; j < 2; ++j) {
    const VectorXd r = oracle::random_vector(rng, g.rho_count());
    const MatrixXd G = oracle::random_matrix(rng, g.g_count(), 3);
    EXPECT_LT((diff_plus(g, j, r) - oracle::d_plus(g, j) * r).norm(), 1e-12);
    EXPECT_LT((diff(g, j, Side::plus, Lattice::g, Lattice::g, G) - oracle::dgg_plus(g, j) * G).norm(), 1e-12);
    EXPECT_LT((diff(g, j, Side::minus, Lattice::g, Lattice::g, G) - oracle::dgg_minus(g, j) * G).norm(), 1e-12);
  }
}

TEST(Grid, DifferencesTelescope) {
  std::mt19937_64 rng(11);
  const auto g = unit_square(7);
  for (int j = 0; j < 2; ++j) {
    const VectorXd u = oracle::random_vector(rng, g.rho_count());
    const VectorXd v = oracle::random_vector(rng, g.g_count());
    EXPECT_LT(std::abs(diff_plus(g, j, u).sum() * g.spacing(j)), 1e-12 * u.norm());
    EXPECT_LT(std::abs(diff_minus(g, j, v).sum() * g.spacing(j)), 1e-12 * v.norm());
  }
}

TEST(Grid, MinusPlusIsThreePointLaplacian) {
  const auto g = StaggeredGrid::line({0.0, 1.0}, 8);
  const double h = g.spacing(0);
  const MatrixXd L = oracle::d_minus(g, 0) * oracle::d_plus(g, 0);
  VectorXd impulse = VectorXd::Zero(g.rho_count());
  const Index k = g.index(Lattice::rho, {5, 1});
  impulse(k) = 1.0;
  VectorXd got(g.rho_count());
  got = diff_minus(g, 0, diff_plus(g, 0, impulse));
  EXPECT_LT((got - L * impulse).norm(), 1e-10);
  // Same-lattice neighbours sit one cell (two half-steps) away.
  EXPECT_NEAR(got(k), -2.0 / (h * h), 1e-9);
  EXPECT_NEAR(got(g.index(Lattice::rho, {7, 1})), 1.0 / (h * h), 1e-9);
  EXPECT_NEAR(got(g.index(Lattice::rho, {3, 1})), 1.0 / (h * h), 1e-9);
  EXPECT_NEAR(got.cwiseAbs().sum(), 4.0 / (h * h), 1e-9);
}

TEST(Grid, DiffRejectsWrongLength) {
  const auto g = unit_square(4);
  EXPECT_THROW(diff_plus(g, 0, VectorXd::Zero(5)), std::invalid_argument);
  EXPECT_THROW(diff_plus(g, 2, VectorXd::Zero(g.rho_count())), std::out_of_range);
}
