#pragma once

#include "rlq/numerics.hpp"
#include "rlq/scenario_model.hpp"
#include "rlq/sde_engine.hpp"

#include <span>
#include <string>
#include <vector>

namespace rlq {

/// m(t_i) per path and node for dm = E m dt + F m dW, plus the deterministic
/// factor exp(int_0^t E ds).
struct ExponentialProcess {
    TimeGrid grid{1.0, 1};
    std::int64_t paths = 0;
    std::vector<double> m;              ///< path * (N+1) + i
    std::vector<double> deterministic;  ///< N+1 entries

    [[nodiscard]] double at(std::int64_t path, int node) const noexcept {
        return m[static_cast<std::size_t>(path * (grid.steps() + 1) + node)];
    }
};

/// Log-Euler: log m_{i+1} = log m_i + (E_i - F_i^2 / 2) dt + F_i dW_i.
ExponentialProcess exponential_process(std::span<const double> E, std::span<const double> F,
                                       const PathEnsemble& ens);

enum class BsdeMethod { representation, regression };

struct BsdeValue {
    double y0 = 0.0;
    double std_error = 0.0;
    std::int64_t samples = 0;
    BsdeMethod method = BsdeMethod::representation;
    std::vector<std::string> warnings;
};

std::string_view to_string(BsdeMethod method) noexcept;

BsdeValue summarize(std::span<const double> samples, BsdeMethod method = BsdeMethod::representation);

/// Per-path samples of m(T) xi + sum_i m(t_i) c_i dt, whose mean is y(0) for
/// y(t) = xi + int (E y + F z + c) ds - int z dW. `c` is path-major (M x N).
std::vector<double> linear_bsde_samples(std::span<const double> xi, std::span<const double> c,
                                        std::span<const double> E, std::span<const double> F,
                                        const PathEnsemble& ens);

BsdeValue linear_bsde_value(std::span<const double> xi, std::span<const double> c, std::span<const double> E,
                            std::span<const double> F, const PathEnsemble& ens);

struct LsmcOptions {
    /// Basis size cap; the full degree-2 basis has 1 + n + n(n+1)/2 functions.
    int max_basis = 64;
    double ridge = 1e-8;
    int max_fixed_point = 50;
};

/// Least-squares Monte Carlo for y = phi(x_T) + int f(t, x, y, z, u) dt - int z dW
/// along simulated states `x_paths` (which carry the realized control).
BsdeValue lsmc_bsde_value(const GeneralScenario& scenario, const StatePaths& x_paths, const PathEnsemble& ens,
                          const LsmcOptions& options = {});

/// Per-path cost samples for an LQ scenario under `control` (streamed; no
/// paths stored). Identical arithmetic to linear_bsde_samples.
std::vector<double> recursive_cost_samples(const ScenarioSet& set, int theta, const ControlPath& control,
                                           const PathEnsemble& ens, const std::optional<Vector>& x0 = std::nullopt);

/// y_theta(0): representation for LQ scenarios, LSMC for general ones.
BsdeValue recursive_cost(const ScenarioSet& set, int theta, const ControlPath& control, const PathEnsemble& ens);

/// Per-path cost samples of every LQ scenario under one control evaluated on
/// the stacked state (block-diagonal dynamics). Result[theta][path].
std::vector<std::vector<double>> stacked_cost_samples(const ScenarioSet& set, const ControlPath& control,
                                                      const PathEnsemble& ens);

struct RobustCost {
    double J = 0.0;
    int vertex = 0;  ///< maximizing scenario, lowest index on ties
    /// For two scenarios, the weights lambda on scenario 1 attaining J form
    /// [lambda_low, lambda_high]: {1} or {0} for a strict max, [0, 1] on a tie.
    double lambda_low = 0.0;
    double lambda_high = 0.0;
};

/// J = max_theta y_theta(0). Values within `tie_tolerance` count as tied.
RobustCost robust_cost(std::span<const BsdeValue> values, double tie_tolerance = 0.0);

}  // namespace rlq
