#pragma once

#include "rlq/numerics.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace rlq {

/// Uniform partition of [0, T] into N steps.
class TimeGrid {
public:
    TimeGrid(double horizon, int steps);

    [[nodiscard]] double horizon() const noexcept { return horizon_; }
    [[nodiscard]] int steps() const noexcept { return steps_; }
    [[nodiscard]] double dt() const noexcept { return dt_; }
    /// t_i = i * dt, with t_N pinned to the horizon.
    [[nodiscard]] double node(int i) const noexcept;
    /// Index of the step containing t (clamped to [0, N-1]).
    [[nodiscard]] int step_of(double t) const noexcept;

    bool operator==(const TimeGrid&) const = default;

private:
    double horizon_;
    int steps_;
    double dt_;
};

/// Coefficients of one linear-quadratic scenario with one-dimensional noise:
///   dx = (A x + B u) dt + (C x + D u) dW
///   f  = E y + F z + 1/2 [<L x, x> + 2 <S x, u> + <R u, u>],  phi = 1/2 <G x, x>
/// Every table has one entry per step. F is shared across scenarios and lives
/// on the ScenarioSet.
struct LQScenario {
    MatrixTable A;   ///< n x n
    MatrixTable B;   ///< n x k
    MatrixTable C;   ///< n x n
    MatrixTable D;   ///< n x k
    std::vector<double> E;
    MatrixTable L;   ///< n x n, symmetric
    MatrixTable S;   ///< k x n
    MatrixTable R;   ///< k x k, symmetric
    Matrix G;        ///< n x n, symmetric
};

/// Builds an LQScenario whose tables are constant in time.
LQScenario constant_lq_scenario(int steps, const Matrix& A, const Matrix& B, const Matrix& C,
                                const Matrix& D, double E, const Matrix& L, const Matrix& S,
                                const Matrix& R, const Matrix& G);

/// Coefficients given as evaluators, for nonlinear toy models. Derivatives
/// follow the layout used by the variational equations: drift_x is n x n,
/// drift_u is n x k, diffusion is n x d, diffusion_x[j] / diffusion_u[j] are
/// the derivatives of column j.
struct GeneralScenario {
    int n = 1;
    int k = 1;
    int d = 1;
    std::function<Vector(double t, const Vector& x, const Vector& u)> drift;
    std::function<Matrix(double t, const Vector& x, const Vector& u)> drift_x;
    std::function<Matrix(double t, const Vector& x, const Vector& u)> drift_u;
    std::function<Matrix(double t, const Vector& x, const Vector& u)> diffusion;
    std::function<std::vector<Matrix>(double t, const Vector& x, const Vector& u)> diffusion_x;
    std::function<std::vector<Matrix>(double t, const Vector& x, const Vector& u)> diffusion_u;
    std::function<double(double t, const Vector& x, double y, const Vector& z, const Vector& u)> generator;
    std::function<Vector(double t, const Vector& x, double y, const Vector& z, const Vector& u)> generator_x;
    std::function<double(double t, const Vector& x, double y, const Vector& z, const Vector& u)> generator_y;
    std::function<Vector(double t, const Vector& x, double y, const Vector& z, const Vector& u)> generator_z;
    std::function<Vector(double t, const Vector& x, double y, const Vector& z, const Vector& u)> generator_u;
    std::function<double(const Vector& x)> terminal;
    std::function<Vector(const Vector& x)> terminal_x;
};

/// Finite family of scenarios driven by one Brownian motion. Either `lq` or
/// `general` is populated. Treated as immutable once built.
struct ScenarioSet {
    TimeGrid grid{1.0, 2};
    int n = 1;
    int k = 1;
    int d = 1;
    Vector x0;
    std::vector<LQScenario> lq;
    std::vector<double> F;  ///< shared z-coefficient of the LQ generator
    std::vector<GeneralScenario> general;
    std::vector<std::string> warnings;

    [[nodiscard]] bool is_lq() const noexcept { return !lq.empty(); }
    [[nodiscard]] int size() const noexcept {
        return static_cast<int>(is_lq() ? lq.size() : general.size());
    }
};

/// Assembles an LQ set, symmetrizing L, R and G as (M + M^T)/2 and recording a
/// warning whenever the asymmetry exceeded 1e-12.
ScenarioSet make_lq_set(const TimeGrid& grid, const Vector& x0, std::vector<LQScenario> scenarios,
                        std::vector<double> F);

ScenarioSet make_general_set(const TimeGrid& grid, const Vector& x0, std::vector<GeneralScenario> scenarios);

/// Evaluator view of an LQ scenario (piecewise-constant in t).
GeneralScenario as_general(const ScenarioSet& set, int scenario);

struct ValidationIssue {
    std::string check;
    std::string table;
    int scenario = -1;  ///< 0-based, -1 when shared
    int step = -1;      ///< -1 when time independent
    double value = 0.0;
    std::string message;
};

struct ValidationReport {
    bool ok = true;
    std::vector<ValidationIssue> issues;
    std::vector<std::string> warnings;
    /// Worst margins over all scenarios and steps.
    std::map<std::string, double> margins;
    /// Worst margins per scenario, in scenario order.
    std::vector<std::map<std::string, double>> scenario_margins;

    void fail(ValidationIssue issue) {
        ok = false;
        issues.push_back(std::move(issue));
    }
};

/// Boundedness (finite entries), symmetry residuals and dimension consistency.
/// Throws StructuralError on a dimension mismatch.
ValidationReport validate_structure(const ScenarioSet& set);

/// Convexity / coercivity conditions, per scenario and step:
///   G >= 0,  R - delta I >= 0,  L - S^T R^{-1} S >= 0  (all up to tol_psd).
/// Margins are reported under the keys "G", "R_minus_delta" and "L_schur".
ValidationReport validate_convexity(const ScenarioSet& set, double delta);

/// Compares supplied derivatives with central differences (h = 1e-5) at
/// random probe points. Error is |supplied - fd| / max(|fd|, 1), maximized over
/// probes and entries; passes iff <= 1e-4 ("max_relative_error" margin).
ValidationReport validate_derivatives(const GeneralScenario& scenario, double horizon, int probes,
                                      std::uint64_t seed);

struct ProbePoint {
    double t = 0.0;
    Vector x;
    double y = 0.0;
    Vector z;
    Vector u;
};

ValidationReport validate_derivatives_at(const GeneralScenario& scenario, const std::vector<ProbePoint>& points);

}  // namespace rlq
