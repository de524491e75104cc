#include "instances.hpp"

#include "rlq/errors.hpp"
#include "rlq/riccati.hpp"
#include "rlq/robust_lq.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <sstream>

using namespace rlq;
using namespace rlq::testing;

namespace {

// Single scalar scenario, dx = (a x + u) dt, cost 1/2 int u^2 + 1/2 g x_T^2.
// P' + 2 a P - P^2 = 0, P(T) = g; 1/P solves w' = 2 a w - 1.
double bernoulli_p(double a, double g, double t, double T) {
    return 1.0 / (1.0 / (2.0 * a) + (1.0 / g - 1.0 / (2.0 * a)) * std::exp(2.0 * a * (t - T)));
}

ScenarioSet drift_oracle(int steps, double a, double g) {
    const Matrix z = scalar(0.0);
    return make_lq_set(TimeGrid(1.0, steps), Vector::Ones(1),
                       {constant_lq_scenario(steps, scalar(a), scalar(1.0), z, z, 0.0, z, z, scalar(1.0), scalar(g))},
                       std::vector<double>(static_cast<std::size_t>(steps), 0.0));
}

TEST(Riccati, BernoulliClosedForm) {
    for (const double a : {-0.7, 0.3, 1.2}) {
        const ScenarioSet set = drift_oracle(50, a, 2.0);
        const RiccatiSolution sol = solve_riccati(assemble_single(set, 0));
        for (int i = 0; i <= 50; ++i) {
            ASSERT_NEAR(sol.P[i](0, 0), bernoulli_p(a, 2.0, set.grid.node(i), 1.0), 1e-9) << "a=" << a << " i=" << i;
            ASSERT_NEAR(sol.K[i](0, 0), sol.P[i](0, 0), 1e-15);
        }
    }
}

TEST(Riccati, WeightsScaleTerminalCondition) {
    const RiccatiSolution sol = solve_riccati(assemble_blocks(interior_pair(10), 0.25));
    const Matrix& PT = sol.P.back();
    EXPECT_DOUBLE_EQ(PT(0, 0), 0.25 * 2.0);
    EXPECT_DOUBLE_EQ(PT(1, 1), 0.75 * 1.0);
    EXPECT_EQ(PT(0, 1), 0.0);
    EXPECT_EQ(sol.feedback_gain().size(), 10u);
}

TEST(Riccati, SingularControlWeight) {
    ScenarioSet set = drift_oracle(10, 0.1, 0.0);
    for (auto& R : set.lq[0].R) R = scalar(0.0);
    try {
        solve_riccati(assemble_single(set, 0));
        FAIL() << "expected SingularityError";
    } catch (const SingularityError& e) {
        EXPECT_NEAR(e.time(), 1.0, 1e-12);
        EXPECT_LE(e.min_eigenvalue(), 1e-10);
    }
}

TEST(Riccati, BlowUpDetected) {
    // Negative control cost drives P to infinity in finite time.
    ScenarioSet set = drift_oracle(20, 0.0, 1.0);
    for (auto& R : set.lq[0].R) R = scalar(-0.2);
    EXPECT_THROW(solve_riccati(assemble_single(set, 0)), Error);
}

TEST(Riccati, InputChecks) {
    const ScenarioSet set = interior_pair(10);
    EXPECT_THROW(assemble_blocks(set, 1.5), InputError);
    EXPECT_THROW(assemble_blocks(set, -0.1), InputError);
    const std::vector<double> two{0.2, 0.4};
    EXPECT_THROW(lambda_lipschitz_probe(set, two), InputError);
}

TEST(Riccati, DiscountedBlocksAtNodes) {
    ScenarioSet set = interior_pair(8);
    for (std::size_t i = 0; i < 8; ++i) set.lq[1].E[i] = 0.1 * static_cast<double>(i);
    const BlockSystem b = assemble_blocks(set, 0.5);
    double s = 0.0;
    for (int i = 0; i < 5; ++i) s += 0.1 * i * set.grid.dt();
    EXPECT_NEAR(b.m_tilde_node(1, 5), std::exp(s), 1e-14);
    EXPECT_NEAR(b.m_tilde(1, 5, set.grid.node(5)), std::exp(s), 1e-14);
    EXPECT_NEAR(b.m_tilde_node(0, 8), 1.0, 1e-15);
}

TEST(Riccati, AggregateConvexityOfRandomPairs) {
    for (int seed = 0; seed < 5; ++seed) {
        const ScenarioSet set = random_pair(700 + seed, 10, 2, 2, true);
        for (const double lam : {0.0, 0.3, 1.0}) {
            EXPECT_TRUE(check_aggregate_convexity(assemble_blocks(set, lam)).ok);
        }
    }
}

TEST(Riccati, MatrixCsv) {
    std::ostringstream out;
    write_matrix_table_csv({Matrix::Identity(2, 2)}, out);
    EXPECT_EQ(out.str(), "step,row,col,value\n0,0,0,1\n0,0,1,0\n0,1,0,0\n0,1,1,1\n");
}

TEST(Lyapunov, ValueAtOptimalGainIsQuadraticForm) {
    // Identical scenarios, lambda = 1/2: y_theta(0) -> 1/2 x0 P_1(0) x0 = 1/4
    // with P_1 = 1/(2 - t). The gain is frozen over each step; the cost is
    // stationary in the gain, so the error is O(dt^2).
    std::vector<double> errors;
    for (const int N : {40, 80}) {
        const ScenarioSet set = scalar_oracle(N, 1.0);
        const RiccatiSolution sol = solve_riccati(assemble_blocks(set, 0.5));
        const std::vector<double> y = lyapunov_costs(set, sol.feedback_gain(), {});
        ASSERT_EQ(y.size(), 2u);
        EXPECT_EQ(y[0], y[1]);
        errors.push_back(std::abs(y[0] - 0.25));
    }
    EXPECT_LT(errors[0], 1e-4);
    EXPECT_NEAR(errors[0] / errors[1], 4.0, 0.5);
}

TEST(Robust, LiteralTerminalWeightPairIsCorner1) {
    // Scenario 1 carries the larger terminal weight under every feedback, so
    // g(lambda) >= 0 everywhere and the corner check selects lambda* = 1.
    const ScenarioSet set = terminal_weight_pair(50);
    const PathEnsemble ens(set.grid, 1, 2000, 2);
    const RobustSolution sol = solve_robust(set, ens);
    EXPECT_EQ(sol.branch, Branch::corner1);
    EXPECT_EQ(sol.lambda_star, 1.0);
    const std::vector<double> grid = lambda_grid(0.1);
    for (const SweepRow& r : lambda_sweep(set, ens, grid)) EXPECT_GE(r.y1, r.y2) << "lambda " << r.lambda;
}

TEST(Robust, IdenticalScenariosAreCorner0) {
    const ScenarioSet set = noisy_identical(30);
    const PathEnsemble ens(set.grid, 1, 1000, 6);
    const RobustSolution sol = solve_robust(set, ens);
    EXPECT_EQ(sol.branch, Branch::corner0);
    EXPECT_EQ(sol.lambda_star, 0.0);
    EXPECT_EQ(sol.costs[0].y0, sol.costs[1].y0);
}

TEST(Robust, InteriorEqualizesAndSwapMirrors) {
    const ScenarioSet set = interior_pair(40);
    const PathEnsemble ens(set.grid, 1, 2000, 12);
    SolveOptions opt;
    opt.tol_gap = 1e-8;
    const RobustSolution a = solve_robust(set, ens, opt);
    const RobustSolution b = solve_robust(swap_scenarios(set), ens, opt);
    ASSERT_EQ(a.branch, Branch::interior);
    ASSERT_EQ(b.branch, Branch::interior);
    EXPECT_LE(std::abs(a.gap), 1e-8 + 1e-12);
    EXPECT_NEAR(a.lambda_star, 1.0 - b.lambda_star, 1e-6);
    EXPECT_NEAR(a.robust_cost, b.robust_cost, 1e-6);
    EXPECT_NEAR(a.robust_cost, std::max(a.costs[0].y0, a.costs[1].y0), 0.0);
}

TEST(Robust, ExhaustedIterationsCarryBracket) {
    const ScenarioSet set = interior_pair(20);
    const PathEnsemble ens(set.grid, 1, 500, 1);
    SolveOptions opt;
    opt.tol_gap = 1e-12;
    opt.max_iter = 3;
    try {
        solve_robust(set, ens, opt);
        FAIL() << "expected ConvergenceError";
    } catch (const ConvergenceError& e) {
        EXPECT_NEAR(e.upper() - e.lower(), 0.125, 1e-15);
        EXPECT_GT(e.gap(), 1e-12);
    }
}

TEST(Robust, DeterministicAcrossThreadCounts) {
    const ScenarioSet set = interior_pair(30);
    const PathEnsemble ens(set.grid, 1, 1500, 5);
    setenv("RLQ_THREADS", "1", 1);
    const RobustSolution a = solve_robust(set, ens);
    setenv("RLQ_THREADS", "4", 1);
    const RobustSolution b = solve_robust(set, ens);
    unsetenv("RLQ_THREADS");
    EXPECT_EQ(a.lambda_star, b.lambda_star);
    EXPECT_EQ(a.costs[0].y0, b.costs[0].y0);
    EXPECT_EQ(a.costs[1].std_error, b.costs[1].std_error);
}

TEST(Robust, LambdaGrid) {
    const std::vector<double> g = lambda_grid(0.3);
    ASSERT_EQ(g.size(), 5u);
    EXPECT_DOUBLE_EQ(g[2], 0.6);
    EXPECT_EQ(g.back(), 1.0);
    EXPECT_EQ(lambda_grid(1e-3).size(), 1001u);
}

TEST(Robust, SweepMaxIsRobustCost) {
    const ScenarioSet set = interior_pair(20);
    const PathEnsemble ens(set.grid, 1, 400, 3);
    const std::vector<double> g{0.0, 0.5, 1.0};
    for (const SweepRow& r : lambda_sweep(set, ens, g)) EXPECT_EQ(r.J, std::max(r.y1, r.y2));
}

}  // namespace
