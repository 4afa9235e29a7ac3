#include "identities.hpp"

#include <gtest/gtest.h>

namespace {

template <class Check>
void run_trials(Check check, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (int t = 0; t < identity::trials; ++t) EXPECT_LE(check(rng, t), 1.0) << "trial " << t;
}

}  // namespace

TEST(Properties, SummationByParts) { run_trials(identity::summation_by_parts, 101); }

TEST(Properties, AdvectionEnergyIdentity) { run_trials(identity::advection_identity, 102); }

TEST(Properties, AdjointAdvectionBound) { run_trials(identity::adjoint_bound, 103); }

TEST(Properties, AngularFluxMatrixInequality) { run_trials(identity::flux_inequality, 104); }

TEST(Properties, UpwindSplitting) { run_trials(identity::upwind_split, 105); }

TEST(Properties, GalerkinResidualVanishes) { run_trials(identity::galerkin_residual, 106); }

TEST(Properties, LowRankEnergyChain) { run_trials(identity::energy_chain, 107); }

TEST(Properties, CheckersDetectViolations) {
  // The scaled-defect helper reports violations above one.
  EXPECT_EQ(identity::excess(1.0, 2.0, 1e-12, 1.0), 0.0);
  EXPECT_GT(identity::excess(1.0 + 1e-10, 1.0, 1e-12, 1.0), 1.0);
}
