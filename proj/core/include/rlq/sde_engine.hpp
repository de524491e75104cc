#pragma once

#include "rlq/numerics.hpp"
#include "rlq/scenario_model.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace rlq {

inline constexpr std::uint64_t kDefaultMemoryBudget = std::uint64_t{2} << 30;

/// Brownian increments for M paths on a grid. Increments are a pure function
/// of (seed, path, step), so an ensemble either regenerates them on demand
/// (lazy) or holds them in memory (materialized); both give identical values.
class PathEnsemble {
public:
    /// Lazy ensemble; nothing is allocated.
    PathEnsemble(TimeGrid grid, int dim, std::int64_t paths, std::uint64_t seed);

    [[nodiscard]] const TimeGrid& grid() const noexcept { return grid_; }
    [[nodiscard]] int dim() const noexcept { return dim_; }
    [[nodiscard]] std::int64_t paths() const noexcept { return paths_; }
    [[nodiscard]] std::uint64_t seed() const noexcept { return seed_; }
    [[nodiscard]] bool materialized() const noexcept { return data_ != nullptr; }

    /// Writes the N*d increments of `path`, step-major, into `out`.
    void fill(std::int64_t path, std::span<double> out) const;

    /// Single increment; convenient in tests, slow in loops.
    [[nodiscard]] double increment(std::int64_t path, int step, int component) const;

    /// Stores every increment. Throws CapacityError before allocating when
    /// M*N*d*8 bytes exceeds `budget_bytes`.
    void materialize(std::uint64_t budget_bytes = kDefaultMemoryBudget);

    bool operator==(const PathEnsemble& other) const;

private:
    TimeGrid grid_;
    int dim_;
    std::int64_t paths_;
    std::uint64_t seed_;
    std::shared_ptr<const std::vector<double>> data_;
};

/// Materialized ensemble: increments ~ N(0, dt I_d), keyed by (seed, path, step).
PathEnsemble generate_paths(const TimeGrid& grid, int dim, std::int64_t paths, std::uint64_t seed,
                            std::uint64_t budget_bytes = kDefaultMemoryBudget);

/// u_i = gain_i x_i + offset_i. Either table may be shorter than N only when
/// empty (offset empty means zero).
struct AffineFeedback {
    MatrixTable gain;            ///< k x n_state per step
    std::vector<Vector> offset;  ///< k per step, or empty
};

/// Control values fixed in advance, path-major: values[(path * steps + i) * k + j].
/// A single stored path is broadcast to every path.
struct OpenLoop {
    std::int64_t paths = 1;
    int steps = 0;
    int k = 0;
    std::vector<double> values;

    [[nodiscard]] const double* at(std::int64_t path, int step) const noexcept {
        const std::int64_t p = paths == 1 ? 0 : path;
        return values.data() + (p * steps + step) * k;
    }
};

using FeedbackFn = std::function<Vector(int step, double t, const Vector& x)>;

/// Control law evaluated at the left endpoint of each step.
struct ControlPath {
    std::variant<AffineFeedback, OpenLoop, FeedbackFn> law;
    std::string label;

    static ControlPath zero(int steps, int k);
    static ControlPath constant(int steps, const Vector& value);
    static ControlPath feedback(MatrixTable gain, std::vector<Vector> offset = {}, std::string label = "feedback");
    static ControlPath open_loop(OpenLoop values, std::string label = "open-loop");
    static ControlPath function(FeedbackFn fn, std::string label = "function");
};

/// Simulated states (and the realized control) for one scenario or for the
/// stacked system. x is path-major: x[(path * (N+1) + i) * n + j].
struct StatePaths {
    TimeGrid grid{1.0, 1};
    int n = 0;
    int k = 0;
    std::int64_t paths = 0;
    int scenario = -1;  ///< -1 for the stacked system
    std::string label;
    std::vector<double> x;
    std::vector<double> u;  ///< (path * N + i) * k + j

    [[nodiscard]] const double* state(std::int64_t path, int node) const noexcept {
        return x.data() + (path * (grid.steps() + 1) + node) * n;
    }
    [[nodiscard]] const double* control(std::int64_t path, int step) const noexcept {
        return u.data() + (path * grid.steps() + step) * k;
    }
    [[nodiscard]] Vector state_vector(std::int64_t path, int node) const;
    /// Rows [offset, offset + width) of every state, as a new StatePaths.
    [[nodiscard]] StatePaths component(int offset, int width, int scenario) const;
    /// Realized control as an open-loop path.
    [[nodiscard]] OpenLoop realized_control() const;
};

/// Evaluates `law` along `base` (step-wise on the stored states); the result
/// is an open-loop control with one row per path.
OpenLoop realize(const ControlPath& law, const StatePaths& base);

/// Euler-Maruyama for scenario `theta`. Throws SimulationError when |x| exceeds
/// 1e12 or becomes non-finite. `x0` overrides the scenario set's initial state.
StatePaths simulate_sde(const ScenarioSet& set, int theta, const ControlPath& control, const PathEnsemble& ens,
                        const std::optional<Vector>& x0 = std::nullopt);

/// All LQ scenarios stacked into one block-diagonal state of dimension K*n,
/// driven by one control evaluated on the stacked state.
StatePaths simulate_stacked(const ScenarioSet& set, const ControlPath& control, const PathEnsemble& ens);

/// Linearized dynamics along (base.x, base.u) in the direction `dir`, started
/// at zero. `dir` is evaluated on the base states.
StatePaths simulate_variational_sde(const ScenarioSet& set, int theta, const ControlPath& dir,
                                    const StatePaths& base, const PathEnsemble& ens);

/// Scalar linear test equation dx = a x dt + c x dW, x(0) = x0, whose exact
/// solution x0 exp((a - c^2/2) t + c W_t) is the reference.
struct ScalarLinearSde {
    double x0 = 1.0;
    double drift = 1.0;
    double volatility = 1.0;
    double horizon = 1.0;
    std::int64_t paths = 2000;
    std::uint64_t seed = 1;
};

struct ConvergenceFit {
    std::vector<double> dts;
    std::vector<double> errors;  ///< RMS terminal error per level
    double order = 0.0;
    bool exact = false;          ///< every error at rounding level; order meaningless
};

/// Strong error of Euler-Maruyama at each level against the exact solution,
/// using increments generated on the finest level and summed for coarser ones.
/// Levels must divide the finest level. Throws InputError with fewer than 3.
ConvergenceFit strong_convergence_order(const ScalarLinearSde& problem, std::span<const int> levels);

/// Monte Carlo estimate of E[sup_t |x(t)|^q].
MeanEstimate sup_moment(const StatePaths& paths, double q);

/// CSV with header path,step,component,value.
void write_paths_csv(const StatePaths& paths, std::ostream& out);

}  // namespace rlq
