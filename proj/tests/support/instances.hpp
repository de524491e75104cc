#pragma once

#include "rlq/scenario_model.hpp"

#include <Eigen/LU>

#include <cstdint>
#include <random>

namespace rlq::testing {

inline Matrix scalar(double v) { return Matrix::Constant(1, 1, v); }

/// dx = u dt, cost 1/2 int u^2 + 1/2 x_T^2 on [0, 1], both scenarios equal.
/// P(t) = 1 / (2 - t) and y(0) = x0^2 / 4.
inline ScenarioSet scalar_oracle(int steps, double x0 = 1.0) {
    const LQScenario s = constant_lq_scenario(steps, scalar(0), scalar(1), scalar(0), scalar(0), 0.0, scalar(0),
                                              scalar(0), scalar(1), scalar(1));
    return make_lq_set(TimeGrid(1.0, steps), Vector::Constant(1, x0), {s, s}, std::vector<double>(steps, 0.0));
}

/// Two equal scenarios with multiplicative noise, so Monte Carlo is not trivial.
inline ScenarioSet noisy_identical(int steps) {
    const LQScenario s = constant_lq_scenario(steps, scalar(0.2), scalar(1), scalar(0.3), scalar(0.2), 0.1,
                                              scalar(0.5), scalar(0), scalar(1), scalar(1));
    return make_lq_set(TimeGrid(1.0, steps), Vector::Constant(1, 1.0), {s, s}, std::vector<double>(steps, 0.1));
}

/// Scenario 2 is scenario 1 with the control direction flipped (B, D -> -B, -D).
/// Relabelling the scenarios maps the problem to itself, so lambda* = 1/2.
inline ScenarioSet mirrored_pair(int steps, double noise = 0.3) {
    const LQScenario s1 = constant_lq_scenario(steps, scalar(0.1), scalar(1), scalar(noise), scalar(0.1), 0.0,
                                               scalar(0.2), scalar(0), scalar(1), scalar(1));
    const LQScenario s2 = constant_lq_scenario(steps, scalar(0.1), scalar(-1), scalar(noise), scalar(-0.1), 0.0,
                                               scalar(0.2), scalar(0), scalar(1), scalar(1));
    return make_lq_set(TimeGrid(1.0, steps), Vector::Constant(1, 1.0), {s1, s2}, std::vector<double>(steps, 0.0));
}

/// Opposite control directions and terminal weights 2 and 1: the worst case
/// switches between the corners, so the robust solution is interior.
inline ScenarioSet interior_pair(int steps, double noise = 0.3) {
    const LQScenario s1 = constant_lq_scenario(steps, scalar(0), scalar(1), scalar(noise), scalar(0), 0.0, scalar(0),
                                               scalar(0), scalar(1), scalar(2));
    const LQScenario s2 = constant_lq_scenario(steps, scalar(0), scalar(-1), scalar(noise), scalar(0), 0.0, scalar(0),
                                               scalar(0), scalar(1), scalar(1));
    return make_lq_set(TimeGrid(1.0, steps), Vector::Constant(1, 1.0), {s1, s2}, std::vector<double>(steps, 0.0));
}

/// Terminal weights 2 and 1 with everything else shared.
inline ScenarioSet terminal_weight_pair(int steps) {
    const LQScenario s1 = constant_lq_scenario(steps, scalar(0), scalar(1), scalar(0), scalar(0), 0.0, scalar(0),
                                               scalar(0), scalar(1), scalar(2));
    const LQScenario s2 = constant_lq_scenario(steps, scalar(0), scalar(1), scalar(0), scalar(0), 0.0, scalar(0),
                                               scalar(0), scalar(1), scalar(1));
    return make_lq_set(TimeGrid(1.0, steps), Vector::Constant(1, 1.0), {s1, s2}, std::vector<double>(steps, 0.0));
}

inline Matrix random_matrix(std::mt19937_64& rng, int rows, int cols, double scale) {
    std::normal_distribution<double> normal(0.0, scale);
    Matrix m(rows, cols);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) m(r, c) = normal(rng);
    }
    return m;
}

/// Random convex scenario: G = M M^T, R = N N^T + r I, L = S^T R^-1 S + P P^T.
inline LQScenario random_scenario(std::mt19937_64& rng, int steps, int n, int k, bool noisy) {
    const Matrix A = random_matrix(rng, n, n, 0.4);
    const Matrix B = random_matrix(rng, n, k, 0.8);
    const Matrix C = noisy ? random_matrix(rng, n, n, 0.25) : Matrix::Zero(n, n);
    const Matrix D = noisy ? random_matrix(rng, n, k, 0.25) : Matrix::Zero(n, k);
    const Matrix Nr = random_matrix(rng, k, k, 0.5);
    const Matrix R = Nr * Nr.transpose() + 0.5 * Matrix::Identity(k, k);
    const Matrix S = random_matrix(rng, k, n, 0.3);
    const Matrix Pl = random_matrix(rng, n, n, 0.5);
    const Matrix L = S.transpose() * R.inverse() * S + Pl * Pl.transpose();
    const Matrix Mg = random_matrix(rng, n, n, 0.7);
    const Matrix G = Mg * Mg.transpose();
    std::uniform_real_distribution<double> e(-0.3, 0.3);
    return constant_lq_scenario(steps, A, B, C, D, e(rng), L, S, R, G);
}

inline ScenarioSet random_pair(std::uint64_t seed, int steps, int n, int k, bool noisy) {
    std::mt19937_64 rng(seed);
    LQScenario s1 = random_scenario(rng, steps, n, k, noisy);
    LQScenario s2 = random_scenario(rng, steps, n, k, noisy);
    const Vector x0 = Vector::Ones(n) + random_matrix(rng, n, 1, 0.5);
    std::uniform_real_distribution<double> f(-0.3, 0.3);
    const double F = noisy ? f(rng) : 0.0;
    return make_lq_set(TimeGrid(1.0, steps), x0, {std::move(s1), std::move(s2)}, std::vector<double>(steps, F));
}

}  // namespace rlq::testing
