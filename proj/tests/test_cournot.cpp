#include <gtest/gtest.h>

#include <set>

#include "gne/cournot.hpp"
#include "support/finite_difference.hpp"

using namespace gne;
using namespace gne::cournot;

namespace {

CournotConfig single_company(double pi = 1.0) {
  CournotConfig cfg;
  cfg.companies = 1;
  cfg.markets = 1;
  cfg.incidence = {{0}};
  cfg.capacities = Vec::Constant(1, 5.0);
  cfg.price_intercept = Vec::Constant(1, 10.0);
  cfg.price_slope = Vec::Constant(1, 1.0);
  cfg.cost_pi = Vec::Constant(1, pi);
  cfg.cost_b = {Vec::Zero(1)};
  cfg.box_upper = {Vec::Constant(1, 10.0)};
  return cfg;
}

}  // namespace

TEST(CournotGame, DuopolyStructure) {
  const auto game = build_cournot_game(duopoly());
  ASSERT_EQ(game.players.size(), 2u);
  EXPECT_EQ(game.m, 1u);
  EXPECT_EQ(game.players[0].A, Mat::Constant(1, 1, -1.0));
  EXPECT_NEAR(game.coupling_rhs()(0), -3.0, 1e-15);
  EXPECT_TRUE(game.interference.has_edge(0, 1));
  Mat jf(2, 2);
  jf << 4, 1, 1, 4;
  EXPECT_LT((game.affine_pseudo_gradient->jacobian - jf).norm(), 1e-12);
  EXPECT_LT((game.affine_pseudo_gradient->offset - Vec::Constant(2, -10.0)).norm(), 1e-12);
}

TEST(CournotGame, IncidenceColumn) {
  CournotConfig cfg = sample_random_instance(1, 1, 3, 0.0);
  cfg.incidence = {{1}};
  cfg.cost_b = {Vec::Ones(1)};
  cfg.box_upper = {Vec::Constant(1, 12.0)};
  Mat expected(3, 1);
  expected << 0, 1, 0;
  EXPECT_EQ(incidence_block(cfg, 0), expected);
  EXPECT_EQ(build_cournot_game(cfg).players[0].A, -expected);
}

TEST(CournotGame, RejectsInvalidConfigs) {
  CournotConfig cfg = duopoly();
  cfg.incidence[1].clear();
  EXPECT_THROW(build_cournot_game(cfg), InvalidConfig);
  cfg = duopoly(0.0);
  EXPECT_THROW(build_cournot_game(cfg), InvalidConfig);
  cfg = duopoly();
  cfg.cost_pi(0) = 0.0;
  EXPECT_THROW(build_cournot_game(cfg), InvalidConfig);
  cfg = duopoly();
  cfg.incidence[0] = {3};
  EXPECT_THROW(build_cournot_game(cfg), InvalidConfig);
}

TEST(CournotGame, FullScaleInstanceDrawsAndValidates) {
  for (std::uint64_t seed : {1u, 2u, 99u}) {
    const auto cfg = sample_random_instance(seed, 20, 7, 0.3);
    EXPECT_EQ(cfg.companies, 20u);
    EXPECT_EQ(cfg.markets, 7u);
    auto within = [](const Vec& v, double lo, double hi) { return (v.array() > lo).all() && (v.array() < hi).all(); };
    EXPECT_TRUE(within(cfg.capacities, 20, 80));
    EXPECT_TRUE(within(cfg.cost_pi, 1, 8));
    EXPECT_TRUE(within(cfg.price_intercept, 250, 500));
    EXPECT_TRUE(within(cfg.price_slope, 1, 5));
    for (std::size_t i = 0; i < 20; ++i) {
      EXPECT_FALSE(cfg.incidence[i].empty());
      EXPECT_TRUE(within(cfg.box_upper[i], 10, 25));
      EXPECT_TRUE(within(cfg.cost_b[i], 1, 4));
    }
    const auto game = build_cournot_game(cfg);
    EXPECT_TRUE(validate_game(game).ok());
    EXPECT_TRUE(is_connected(game.multiplier));
  }
}

TEST(CournotGame, SamplerIsDeterministic) {
  EXPECT_EQ(sample_random_instance(5, 20, 7, 0.3), sample_random_instance(5, 20, 7, 0.3));
  EXPECT_FALSE(sample_random_instance(5, 20, 7, 0.3) == sample_random_instance(6, 20, 7, 0.3));
}

TEST(CournotGame, SingleCompanySingleMarket) {
  const auto cfg = sample_random_instance(3, 1, 1, 0.5);
  const auto game = build_cournot_game(cfg);
  EXPECT_EQ(game.players.size(), 1u);
  EXPECT_TRUE(validate_game(game).ok());
}

TEST(CournotGame, DefaultMultiplierGraphIsInterferencePlusCycle) {
  auto cfg = sample_random_instance(4, 6, 3, 0.5);
  cfg.multiplier_edges.reset();
  const auto g = multiplier_graph(cfg);
  const auto f = interference_graph(cfg);
  EXPECT_TRUE(is_connected(g));
  for (const auto& e : f.edges()) EXPECT_TRUE(g.has_edge(e.i, e.j));
  for (std::size_t i = 0; i < 6; ++i) EXPECT_TRUE(g.has_edge(i, (i + 1) % 6));
}

TEST(AssembleQ, Duopoly) {
  Mat expected(2, 2);
  expected << 2, 1, 1, 2;
  EXPECT_LT((assemble_q_factored(duopoly()) - expected).norm(), 1e-15);
  EXPECT_LT((assemble_q_blockwise(duopoly()) - expected).norm(), 1e-15);
}

TEST(AssembleQ, SingleCompany) { EXPECT_EQ(assemble_q(single_company()), Mat::Constant(1, 1, 2.0)); }

TEST(AssembleQ, PositiveSemidefiniteAndFormulasAgree) {
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    const auto cfg = sample_random_instance(seed, 2 + seed % 15, 1 + seed % 7, 0.4);
    const Mat q1 = assemble_q_factored(cfg);
    const Mat q2 = assemble_q_blockwise(cfg);
    EXPECT_LE((q1 - q2).lpNorm<Eigen::Infinity>(), 1e-12);
    Eigen::SelfAdjointEigenSolver<Mat> eig(q1, Eigen::EigenvaluesOnly);
    EXPECT_GE(eig.eigenvalues().minCoeff(), -1e-10);
  }
}

TEST(Monotonicity, DuopolyEigenvalues) {
  const auto mono = estimate_monotonicity(duopoly());
  EXPECT_NEAR(mono.eta, 3.0, 1e-12);
  EXPECT_NEAR(mono.theta, 5.0, 1e-12);
}

TEST(Monotonicity, SingleCompany) {
  const auto mono = estimate_monotonicity(single_company(1.0));
  EXPECT_NEAR(mono.eta, 4.0, 1e-12);
  EXPECT_NEAR(mono.theta, 4.0, 1e-12);
}

TEST(Monotonicity, FullScaleInstancesAreStronglyMonotone) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) EXPECT_GT(estimate_monotonicity(sample_random_instance(seed, 20, 7, 0.3)).eta, 0.0);
}

TEST(Gradient, MatchesFiniteDifferences) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto cfg = sample_random_instance(seed, 2 + seed % 9, 1 + seed % 5, 0.5);
    const auto game = build_cournot_game(cfg);
    SplitMix64 rng(seed * 7);
    for (int k = 0; k < 10; ++k) EXPECT_LE(fixtures::gradient_fd_error(cfg, game, sample_point(game, rng)), 1e-5);
  }
}

TEST(Gradient, ObjectiveOracleAgreesWithFullProfileObjective) {
  const auto cfg = sample_random_instance(11, 5, 3, 0.6);
  const auto game = build_cournot_game(cfg);
  SplitMix64 rng(1);
  const auto x = sample_point(game, rng);
  for (std::size_t i = 0; i < 5; ++i)
    EXPECT_NEAR(game.players[i].objective(x.blocks[i], neighbor_view(game, x, i)),
                company_objective(cfg, i, x.stacked()), 1e-9);
}

TEST(SignConvention, ResidualNonPositiveIffSupplyWithinCapacity) {
  const auto cfg = sample_random_instance(8, 6, 3, 0.5);
  const auto game = build_cournot_game(cfg);
  const Mat a = supply_matrix(cfg);
  SplitMix64 rng(8);
  int feasible = 0;
  for (int k = 0; k < 200; ++k) {
    auto x = sample_point(game, rng);
    for (auto& blk : x.blocks) blk *= rng.uniform(0.0, 1.0);
    const Vec res = feasibility_residual(game, x);
    const Vec supply = a * x.stacked();
    const bool algo = (res.array() <= 0).all();
    const bool market = (supply.array() <= cfg.capacities.array()).all();
    EXPECT_EQ(algo, market);
    feasible += market;
  }
  EXPECT_GT(feasible, 0);
}
