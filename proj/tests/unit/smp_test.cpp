#include "instances.hpp"

#include "rlq/errors.hpp"
#include "rlq/riccati.hpp"
#include "rlq/robust_lq.hpp"
#include "rlq/smp_verify.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace rlq;
using namespace rlq::testing;

namespace {

// dx = (sin x + u) dt + (0.2 cos x + 0.1 u) dW,
// f = e y + fz z + 1/2 (x^2 + u^2), phi = 1/2 x^2.
GeneralScenario nonlinear_toy(double e, double fz) {
    GeneralScenario s;
    s.drift = [](double, const Vector& x, const Vector& u) { return Vector::Constant(1, std::sin(x(0)) + u(0)); };
    s.drift_x = [](double, const Vector& x, const Vector&) { return Matrix::Constant(1, 1, std::cos(x(0))); };
    s.drift_u = [](double, const Vector&, const Vector&) { return Matrix::Constant(1, 1, 1.0); };
    s.diffusion = [](double, const Vector& x, const Vector& u) {
        return Matrix::Constant(1, 1, 0.2 * std::cos(x(0)) + 0.1 * u(0));
    };
    s.diffusion_x = [](double, const Vector& x, const Vector&) {
        return std::vector<Matrix>{Matrix::Constant(1, 1, -0.2 * std::sin(x(0)))};
    };
    s.diffusion_u = [](double, const Vector&, const Vector&) {
        return std::vector<Matrix>{Matrix::Constant(1, 1, 0.1)};
    };
    s.generator = [e, fz](double, const Vector& x, double y, const Vector& z, const Vector& u) {
        return e * y + fz * z(0) + 0.5 * (x.squaredNorm() + u.squaredNorm());
    };
    s.generator_x = [](double, const Vector& x, double, const Vector&, const Vector&) { return Vector(x); };
    s.generator_y = [e](double, const Vector&, double, const Vector&, const Vector&) { return e; };
    s.generator_z = [fz](double, const Vector&, double, const Vector&, const Vector&) {
        return Vector::Constant(1, fz);
    };
    s.generator_u = [](double, const Vector&, double, const Vector&, const Vector& u) { return Vector(u); };
    s.terminal = [](const Vector& x) { return 0.5 * x.squaredNorm(); };
    s.terminal_x = [](const Vector& x) { return Vector(x); };
    return s;
}

double pi_gap(const LinearAdjoint& a, const LinearAdjoint& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.Pi.size(); ++i) worst = std::max(worst, max_norm(a.Pi[i] - b.Pi[i]));
    return worst;
}

TEST(Adjoint, RiccatiAnsatzMatchesClosedLoopEquation) {
    // The simulated feedback freezes the gain over each step, so the adjoint
    // under that feedback approaches the Riccati ansatz at rate dt.
    std::vector<double> gaps;
    for (const int N : {60, 120, 240}) {
        const ScenarioSet set = random_pair(41, N, 2, 1, true);
        const RiccatiSolution ric = solve_riccati(assemble_blocks(set, 0.4));
        double worst = 0.0;
        for (int th = 0; th < 2; ++th) {
            worst = std::max(worst, pi_gap(closed_loop_adjoint(set, th, ric.feedback_gain(), {}),
                                           adjoint_from_riccati(set, ric, th)));
        }
        gaps.push_back(worst);
    }
    EXPECT_NEAR(gaps[0] / gaps[1], 2.0, 0.3);
    EXPECT_NEAR(gaps[1] / gaps[2], 2.0, 0.3);
    EXPECT_LT(gaps[2], 2e-3);
}

TEST(Adjoint, DiscreteConvergesToContinuousAtRateDt) {
    std::vector<double> gaps;
    for (const int N : {25, 50, 100}) {
        const ScenarioSet set = interior_pair(N);
        const MatrixTable gain(static_cast<std::size_t>(N), Matrix::Constant(1, 2, -0.4));
        const LinearAdjoint c = closed_loop_adjoint(set, 0, gain, {});
        const LinearAdjoint d = discrete_adjoint(set, 0, gain, {});
        EXPECT_TRUE(d.discrete);
        EXPECT_FALSE(c.discrete);
        gaps.push_back(max_norm(c.Pi[0] - d.Pi[0]));
    }
    EXPECT_NEAR(gaps[0] / gaps[1], 2.0, 0.3);
    EXPECT_NEAR(gaps[1] / gaps[2], 2.0, 0.3);
}

TEST(Adjoint, TerminalCondition) {
    const ScenarioSet set = interior_pair(10);
    const MatrixTable gain(10, Matrix::Zero(1, 2));
    const LinearAdjoint d = discrete_adjoint(set, 0, gain, {});
    EXPECT_DOUBLE_EQ(d.Pi.back()(0, 0), 2.0);
    EXPECT_DOUBLE_EQ(d.Pi.back()(0, 1), 0.0);
}

TEST(Hamiltonian, GradientMatchesFiniteDifference) {
    const GeneralScenario s = nonlinear_toy(0.1, 0.3);
    const Vector x = Vector::Constant(1, 0.7), z = Vector::Constant(1, -0.2), u = Vector::Constant(1, 0.4);
    const Vector p = Vector::Constant(1, 1.3);
    const Matrix q = Matrix::Constant(1, 1, -0.6);
    const double h = 1e-6;
    const Vector up = u + Vector::Constant(1, h), um = u - Vector::Constant(1, h);
    const double fd = (hamiltonian(s, 0.2, x, 0.5, z, up, u, p, q) - hamiltonian(s, 0.2, x, 0.5, z, um, u, p, q)) /
                      (2.0 * h);
    EXPECT_NEAR(hamiltonian_u(s, 0.2, x, 0.5, z, u, p, q)(0), fd, 1e-8);
}

TEST(Duality, DiscreteSchemeWithinMonteCarloError) {
    const ScenarioSet set = random_pair(77, 40, 1, 1, true);
    const RiccatiSolution ric = solve_riccati(assemble_blocks(set, 0.5));
    const ControlPath ubar = ControlPath::feedback(ric.feedback_gain());
    const ControlPath dir = ControlPath::constant(40, Vector::Constant(1, 0.5));
    const PathEnsemble ens(set.grid, 1, 8000, 3);
    for (int th = 0; th < 2; ++th) {
        const DualityResult r = duality_gap(set, th, ubar, dir, ens);
        EXPECT_LE(r.gap, 3.0 * r.combined_std_error) << "theta " << th;
        EXPECT_GT(r.combined_std_error, 0.0);
    }
}

TEST(Duality, ContinuousSchemeBiasShrinksWithStepSize) {
    std::vector<double> gaps;
    for (const int N : {20, 80}) {
        const ScenarioSet set = interior_pair(N, 0.0);
        Matrix g(1, 2);
        g << -0.5, -0.2;
        const MatrixTable gain(static_cast<std::size_t>(N), g);
        const ControlPath ubar = ControlPath::feedback(gain);
        const ControlPath dir = ControlPath::constant(N, Vector::Constant(1, 1.0));
        // Noise-free dynamics: one path is exact.
        const PathEnsemble ens(set.grid, 1, 1, 1);
        const DualityResult d = duality_gap(set, 0, ubar, dir, ens);
        const DualityResult c = duality_gap(set, 0, ubar, dir, ens, AdjointScheme::continuous);
        EXPECT_LT(d.gap, 1e-10 * (1.0 + std::abs(d.lhs)));
        gaps.push_back(c.gap);
    }
    EXPECT_GT(gaps[0] / gaps[1], 3.0);
}

TEST(Stationarity, OptimalGainsAreStationary) {
    const ScenarioSet set = random_pair(3, 30, 2, 2, true);
    const RiccatiSolution ric = solve_riccati(assemble_blocks(set, 0.6));
    const PathEnsemble ens(set.grid, 1, 200, 1);
    const StatePaths paths = closed_loop_paths(set, ric, ens);
    EXPECT_LE(stationarity_residual(set, ric, paths).max, 1e-10);
    std::vector<Matrix> off = ric.K;
    for (auto& K : off) K(0, 0) += 0.2;
    EXPECT_GE(stationarity_residual(set, ric, paths, &off).max, 1e-3);
}

TEST(Expansion, NonlinearToyHasFirstOrderRemainder) {
    const GeneralScenario s = nonlinear_toy(0.1, 0.2);
    const ScenarioSet set = make_general_set(TimeGrid(1.0, 50), Vector::Constant(1, 0.5), {s, nonlinear_toy(-0.1, 0.0)});
    EXPECT_TRUE(validate_derivatives(s, 1.0, 10, 2).ok);
    const ControlPath base = ControlPath::function(
        [](int, double, const Vector& x) { return Vector(-0.5 * x); }, "base");
    const ControlPath dir = ControlPath::constant(50, Vector::Constant(1, 1.0));
    const PathEnsemble ens(set.grid, 1, 4000, 8);
    const std::vector<double> rhos{1e-1, 3e-2, 1e-2};
    const ExpansionResult r = first_order_expansion(set, base, dir, rhos, ens);
    EXPECT_FALSE(r.state_exact);
    EXPECT_NEAR(r.state_slope, 1.0, 0.15);
    EXPECT_GE(r.cost_slope, 0.85);
}

TEST(Expansion, LinearStateIsExact) {
    const ScenarioSet set = noisy_identical(30);
    const ControlPath base = ControlPath::feedback(MatrixTable(30, Matrix::Constant(1, 2, -0.3)));
    const ControlPath dir = ControlPath::constant(30, Vector::Constant(1, 1.0));
    const PathEnsemble ens(set.grid, 1, 500, 2);
    const std::vector<double> rhos{1e-1, 1e-2, 1e-3};
    const ExpansionResult r = first_order_expansion(set, base, dir, rhos, ens);
    EXPECT_TRUE(r.state_exact);
    EXPECT_FALSE(r.cost_exact);
    EXPECT_NEAR(r.cost_slope, 1.0, 0.05);
}

TEST(SufficientCondition, Margins) {
    const ValidationReport ok = check_sufficient_condition(scalar_oracle(5));
    EXPECT_TRUE(ok.ok);
    EXPECT_NEAR(ok.margins.at("hessian"), 0.0, 1e-14);
    EXPECT_NEAR(ok.margins.at("G"), 1.0, 1e-14);
    ScenarioSet bad = scalar_oracle(5);
    for (auto& S : bad.lq[1].S) S = scalar(1.0);
    EXPECT_FALSE(check_sufficient_condition(bad).ok);
}

TEST(SmpVerify, RejectsGeneralSetsWhereLqOnly) {
    const ScenarioSet set = make_general_set(TimeGrid(1.0, 4), Vector::Ones(1), {nonlinear_toy(0, 0)});
    EXPECT_THROW(check_sufficient_condition(set), UnsupportedError);
}

}  // namespace
