#pragma once

#include "rlq/bsde_engine.hpp"
#include "rlq/riccati.hpp"
#include "rlq/scenario_model.hpp"
#include "rlq/sde_engine.hpp"

#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace rlq {

struct LambdaEvaluation {
    double lambda = 0.0;
    RiccatiSolution riccati;
    std::vector<BsdeValue> costs;  ///< y_theta(0) per scenario

    [[nodiscard]] double gap() const { return costs.at(0).y0 - costs.at(1).y0; }
    [[nodiscard]] double combined_std_error() const;
};

/// Riccati at lambda, feedback u = -K xbar on the stacked state, closed loop
/// simulated on `ens`, and both scenario costs by the representation solver.
LambdaEvaluation evaluate_at_lambda(const ScenarioSet& set, double lambda, const PathEnsemble& ens,
                                    const RiccatiOptions& options = {});

enum class Branch { corner0, corner1, interior };

std::string_view to_string(Branch branch) noexcept;

struct SolveOptions {
    /// When unset: max(3 * combined standard error, 1e-6 * scale) from the
    /// corner evaluations, scale = 1 + max |y_theta|.
    std::optional<double> tol_gap;
    int max_iter = 60;
    double min_interval = 1e-8;
    RiccatiOptions riccati;
};

struct RobustSolution {
    double lambda_star = 0.0;
    Branch branch = Branch::corner0;
    RiccatiSolution riccati;
    std::vector<BsdeValue> costs;
    double robust_cost = 0.0;
    double gap = 0.0;      ///< y_1 - y_2 at lambda_star
    double tol_gap = 0.0;
    int iterations = 0;    ///< bisection steps
    double bracket_low = 0.0;
    double bracket_high = 1.0;
    std::vector<LambdaEvaluation> corners;  ///< evaluations at 0 and 1

    /// Closed-loop feedback u = -K xbar on the stacked state.
    [[nodiscard]] ControlPath control() const;
};

/// Corner checks (corner-0 first) and bisection on g(lambda) = y_1 - y_2 with
/// a shared ensemble. Throws ConvergenceError when max_iter is exhausted.
RobustSolution solve_robust(const ScenarioSet& set, const PathEnsemble& ens, const SolveOptions& options = {});

struct SweepRow {
    double lambda = 0.0;
    double y1 = 0.0;
    double y2 = 0.0;
    double se1 = 0.0;
    double se2 = 0.0;
    double J = 0.0;
};

std::vector<SweepRow> lambda_sweep(const ScenarioSet& set, const PathEnsemble& ens, std::span<const double> lambdas,
                                   const RiccatiOptions& options = {});

/// Uniform grid 0, step, 2 step, ..., 1 (1 always included).
std::vector<double> lambda_grid(double step);

/// Stacked closed-loop states and controls at the solved gains.
StatePaths closed_loop_paths(const ScenarioSet& set, const RiccatiSolution& riccati, const PathEnsemble& ens);

/// Deterministic y_theta(0) for u = gain xbar + offset on the stacked state,
/// from the backward linear ODEs for the quadratic value under the measure
/// that absorbs the z-coefficient F. Integrated with RK4 at `refine` substeps.
std::vector<double> lyapunov_costs(const ScenarioSet& set, const MatrixTable& gain, const std::vector<Vector>& offset,
                                   int refine = 4);

/// Scenario set with the two scenarios swapped.
ScenarioSet swap_scenarios(const ScenarioSet& set);

}  // namespace rlq
