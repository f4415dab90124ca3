#include <gtest/gtest.h>

#include "gne/cournot.hpp"
#include "gne/verify.hpp"
#include "support/instances.hpp"

using namespace gne;

namespace {

DecisionProfile scalar_profile(double a, double b) {
  DecisionProfile x;
  x.blocks = {Vec::Constant(1, a), Vec::Constant(1, b)};
  return x;
}

// Hand KKT algebra for the duopoly with an active constraint:
// 4q + q - 10 + lambda = 0 and 2q = r give q = r/2, lambda = 10 - 5r/2.
double duopoly_lambda(double r) { return 10.0 - 2.5 * r; }

}  // namespace

TEST(KKT, ZeroAtDuopolyEquilibrium) {
  const auto game = cournot::build_cournot_game(cournot::duopoly());
  const auto r = kkt_residual(game, scalar_profile(1.5, 1.5), Vec::Constant(1, 2.5));
  EXPECT_LE(r.max(), 1e-12);
}

TEST(KKT, OriginOfDuopoly) {
  const auto game = cournot::build_cournot_game(cournot::duopoly());
  const auto r = kkt_residual(game, scalar_profile(0, 0), Vec::Zero(1));
  EXPECT_NEAR(r.stationarity, 10.0, 1e-12);  // projection of 0 - (-10) onto [0, 10]
  EXPECT_EQ(r.primal, 0.0);
  EXPECT_EQ(r.dual, 0.0);
}

TEST(KKT, NegativeMultiplier) {
  const auto game = cournot::build_cournot_game(cournot::duopoly());
  EXPECT_NEAR(kkt_residual(game, scalar_profile(1.5, 1.5), Vec::Constant(1, -0.5)).dual, 0.5, 1e-15);
}

TEST(KKT, MultiMultiplierConsensus) {
  const auto game = cournot::build_cournot_game(cournot::duopoly());
  NetworkState st{AgentState::at(Vec::Constant(1, 1.5), Vec::Zero(1), Vec::Constant(1, 2.0)),
                  AgentState::at(Vec::Constant(1, 1.5), Vec::Zero(1), Vec::Constant(1, 3.0))};
  const auto r = kkt_residual(game, st);
  EXPECT_NEAR(r.consensus, 1.0, 1e-15);
  EXPECT_GT(r.stationarity, 0.0);
  EXPECT_LE(r.complementarity, 1e-12);
}

TEST(ActiveSet, DuopolyCases) {
  const auto active = active_set_enumerate(cournot::build_cournot_game(cournot::duopoly(3.0)));
  EXPECT_FALSE(active.non_unique);
  ASSERT_EQ(active.solutions.size(), 1u);
  EXPECT_NEAR(active.solution.x_star.blocks[0](0), 1.5, 1e-12);
  EXPECT_NEAR(active.solution.x_star.blocks[1](0), 1.5, 1e-12);
  EXPECT_NEAR(active.solution.lambda_star(0), duopoly_lambda(3.0), 1e-12);

  const auto slack = active_set_solve(cournot::build_cournot_game(cournot::duopoly(10.0)));
  EXPECT_NEAR(slack.x_star.blocks[0](0), 2.0, 1e-12);
  EXPECT_NEAR(slack.x_star.blocks[1](0), 2.0, 1e-12);
  EXPECT_EQ(slack.lambda_star(0), 0.0);

  Vec box(2);
  box << 1.0, 10.0;
  const auto clamped = active_set_solve(cournot::build_cournot_game(cournot::duopoly(10.0, box)));
  EXPECT_NEAR(clamped.x_star.blocks[0](0), 1.0, 1e-12);
  EXPECT_NEAR(clamped.x_star.blocks[1](0), 2.25, 1e-12);
  EXPECT_EQ(clamped.lambda_star(0), 0.0);
}

TEST(ActiveSet, FlagsDegenerateComplementarity) {
  // r = 4: the unconstrained point (2, 2) sits exactly on the capacity.
  const auto res = active_set_enumerate(cournot::build_cournot_game(cournot::duopoly(4.0)));
  EXPECT_TRUE(res.degenerate);
  EXPECT_FALSE(res.non_unique);
  EXPECT_NEAR(res.solution.x_star.blocks[0](0), 2.0, 1e-12);
}

TEST(ActiveSet, RejectsLargeOrNonAffineGames) {
  EXPECT_THROW(active_set_solve(cournot::build_cournot_game(cournot::sample_random_instance(1, 12, 3, 0.5))),
               InvalidConfig);
  auto game = cournot::build_cournot_game(cournot::duopoly());
  game.affine_pseudo_gradient.reset();
  EXPECT_THROW(active_set_solve(game), InvalidConfig);
}

TEST(ActiveSet, SolutionsHaveZeroResidual) {
  int checked = 0;
  for (std::uint64_t seed = 1; checked < 15; ++seed) {
    const auto cfg = fixtures::small_weighted_instance(seed, 4, 3);
    const auto game = cournot::build_cournot_game(cfg);
    if (game.total_dim() + game.m > active_set_max_size) continue;
    const auto res = active_set_enumerate(game);
    EXPECT_FALSE(res.non_unique);
    EXPECT_LE(res.solution.residual.max(), 1e-8) << "seed " << seed;
    ++checked;
  }
}

TEST(CentralSolve, DuopolyCases) {
  const auto a = central_solve(cournot::build_cournot_game(cournot::duopoly(3.0)), 1e-10);
  EXPECT_NEAR(a.x_star.blocks[0](0), 1.5, 1e-6);
  EXPECT_NEAR(a.lambda_star(0), 2.5, 1e-6);
  const auto b = central_solve(cournot::build_cournot_game(cournot::duopoly(10.0)), 1e-10);
  EXPECT_NEAR(b.x_star.blocks[1](0), 2.0, 1e-6);
  EXPECT_NEAR(b.lambda_star(0), 0.0, 1e-6);
}

TEST(CentralSolve, AgreesWithActiveSet) {
  int checked = 0;
  for (std::uint64_t seed = 1; checked < 10; ++seed) {
    const auto game = cournot::build_cournot_game(fixtures::small_weighted_instance(seed, 4, 3));
    if (game.total_dim() + game.m > active_set_max_size) continue;
    const auto exact = active_set_solve(game);
    const auto iter = central_solve(game, 1e-9, CentralOptions{.max_iters = 2000000});
    EXPECT_LE((exact.x_star.stacked() - iter.x_star.stacked()).lpNorm<Eigen::Infinity>(), 1e-6) << "seed " << seed;
    EXPECT_LE((exact.lambda_star - iter.lambda_star).lpNorm<Eigen::Infinity>(), 1e-6) << "seed " << seed;
    ++checked;
  }
}

TEST(CentralSolve, CapReportsBestIterate) {
  try {
    central_solve(cournot::build_cournot_game(cournot::duopoly()), 1e-14, CentralOptions{.max_iters = 20});
    FAIL() << "expected non-convergence";
  } catch (const CentralNonConvergence& e) {
    EXPECT_EQ(e.best.iterations, 20u);
    EXPECT_EQ(e.best.x_star.blocks.size(), 2u);
  }
}

TEST(Trace, MetricsAtConvergence) {
  const auto game = cournot::build_cournot_game(cournot::duopoly());
  const auto s = auto_step_sizes(game);
  const auto star = run(game, s, Algorithm::plain, zero_state(game), StopRule{100000, 1e-13});
  ASSERT_EQ(star.status, RunStatus::converged);
  TraceReference ref;
  ref.x_star = Vec::Constant(2, 1.5);
  ref.w_star = stack_iterate(game, star.states);
  ref.phi = assemble_phi(game, s);
  TraceRecorder rec(game, ref);
  const auto res = run(game, s, Algorithm::plain, zero_state(game), StopRule{100000, 1e-12}, rec.observer());
  ASSERT_FALSE(rec.rows().empty());
  const auto& last = rec.rows().back();
  EXPECT_EQ(last.round, res.rounds);
  EXPECT_LE(last.dx_norm, 1e-9);
  EXPECT_LE(last.consensus, 1e-8);
  EXPECT_LE(std::abs(last.complementarity), 1e-8);
  EXPECT_LE(last.feasibility, 1e-8);
  EXPECT_LE(*last.rel_x_err, 1e-7);
  for (std::size_t k = 1; k < rec.rows().size(); ++k)
    EXPECT_LE(*rec.rows()[k].fejer_phi, *rec.rows()[k - 1].fejer_phi + 1e-10);
  EXPECT_EQ(rounds_to_tolerance(rec.rows(), 1e-6) <= res.rounds, true);
}

TEST(Trace, RoundsToTolerance) {
  std::vector<TraceRow> rows(5);
  const double dx[] = {1.0, 1e-7, 2e-6, 1e-8, 1e-9};
  for (std::size_t k = 0; k < 5; ++k) {
    rows[k].round = k + 1;
    rows[k].dx_norm = dx[k];
  }
  EXPECT_EQ(rounds_to_tolerance(rows, 1e-6), 4u);
  EXPECT_EQ(rounds_to_tolerance(rows, 10.0), 1u);
}
