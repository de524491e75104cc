#pragma once

#include "rlq/bsde_engine.hpp"
#include "rlq/riccati.hpp"
#include "rlq/robust_lq.hpp"
#include "rlq/scenario_model.hpp"
#include "rlq/sde_engine.hpp"

#include <span>
#include <vector>

namespace rlq {

/// Deterministic coefficients of the first-order adjoint of one scenario
/// under an affine stacked feedback u = gain xbar + offset: p = Pi xbar + phi.
struct LinearAdjoint {
    int scenario = 0;
    /// True for the exact dual of the Euler scheme (discrete_adjoint), false
    /// for the continuous-time equation.
    bool discrete = false;
    std::vector<Matrix> Pi;   ///< n x Kn per node
    std::vector<Vector> phi;  ///< n per node
};

/// Backward RK4 (refine substeps per grid step) for the continuous adjoint
///   -dp = [(A + F C)^T p + (C + F I)^T q + E p + L x + S^T u] dt - q dW,  p(T) = G x(T).
LinearAdjoint closed_loop_adjoint(const ScenarioSet& set, int theta, const MatrixTable& gain,
                                  const std::vector<Vector>& offset, int refine = 4);

/// Continuous adjoint from the Riccati ansatz, Pi = J_theta P / (w_theta mt_theta);
/// needs w_theta > 0.
LinearAdjoint adjoint_from_riccati(const ScenarioSet& set, const RiccatiSolution& riccati, int theta);

/// Adjoint for which the duality identity holds exactly in expectation for
/// the Euler scheme and the left-point cost sums used by the simulators:
///   p_i = E_i[rho_i Phi_i^T p_{i+1}] + (L x_i + S^T u_i) dt,
/// with Phi_i = I + A dt + C dW_i and rho_i = m_{i+1} / m_i. Converges to the
/// continuous adjoint at rate dt.
LinearAdjoint discrete_adjoint(const ScenarioSet& set, int theta, const MatrixTable& gain,
                               const std::vector<Vector>& offset);

/// p, q, m and the control gradient of the Hamiltonian along stacked paths.
struct AdjointPaths {
    TimeGrid grid{1.0, 1};
    int n = 0;
    int k = 0;
    std::int64_t paths = 0;
    int scenario = 0;
    std::vector<double> p;   ///< (path * (N+1) + i) * n, nodes 0..N
    std::vector<double> q;   ///< (path * N + i) * n, steps 0..N-1 (d = 1)
    std::vector<double> hu;  ///< (path * N + i) * k, dH/du per step
    std::vector<double> m;   ///< path * (N+1) + i

    [[nodiscard]] const double* p_at(std::int64_t path, int node) const noexcept {
        return p.data() + (path * (grid.steps() + 1) + node) * n;
    }
    [[nodiscard]] const double* q_at(std::int64_t path, int step) const noexcept {
        return q.data() + (path * grid.steps() + step) * n;
    }
    [[nodiscard]] const double* hu_at(std::int64_t path, int step) const noexcept {
        return hu.data() + (path * grid.steps() + step) * k;
    }
};

/// For a continuous adjoint, hu = (B + D F)^T p + D^T q + S x + R u. For a
/// discrete one it is the conditional expectation that makes the duality
/// identity exact; it tends to the same expression as dt -> 0.
AdjointPaths adjoint_paths(const ScenarioSet& set, const LinearAdjoint& adjoint, const StatePaths& stacked,
                           const PathEnsemble& ens);

/// H_theta(t, x, y, z, u, u', p, q) = <p, b + sum_i f_{z_i}(u') sigma^i> + sum_i <q^i, sigma^i> + f.
double hamiltonian(const GeneralScenario& s, double t, const Vector& x, double y, const Vector& z, const Vector& u,
                   const Vector& u_prime, const Vector& p, const Matrix& q);

/// Gradient of H in u at u' = u.
Vector hamiltonian_u(const GeneralScenario& s, double t, const Vector& x, double y, const Vector& z, const Vector& u,
                     const Vector& p, const Matrix& q);

struct VariationalPaths {
    StatePaths xhat;
    BsdeValue y;
    std::vector<double> samples;  ///< per-path estimator of yhat(0)
};

/// Variational state along `base` (which carries the realized control) and
/// yhat(0) by the representation solver. General scenarios must have a
/// generator affine in (y, z); its derivatives are evaluated at y = 0, z = 0.
VariationalPaths variational_value(const ScenarioSet& set, int theta, const StatePaths& base, const ControlPath& dir,
                                   const PathEnsemble& ens);

struct DualityResult {
    double lhs = 0.0;  ///< yhat_theta(0)
    double lhs_std_error = 0.0;
    double rhs = 0.0;  ///< E[int m <H_u, dir> dt]
    double rhs_std_error = 0.0;
    double gap = 0.0;  ///< |rhs - lhs|
    double combined_std_error = 0.0;
    double difference_std_error = 0.0;  ///< standard error of the per-path difference
};

enum class AdjointScheme { discrete, continuous };

/// Both sides of the duality identity for scenario theta under the stacked
/// affine feedback `ubar`. The continuous scheme carries an O(dt) bias
/// against the Euler-discretized variational cost. LQ only.
DualityResult duality_gap(const ScenarioSet& set, int theta, const ControlPath& ubar, const ControlPath& dir,
                          const PathEnsemble& ens, AdjointScheme scheme = AdjointScheme::discrete, int refine = 4);

struct StationarityResidual {
    double max = 0.0;  ///< max over paths and nodes of |r| / (1 + |xbar|)
    double rms = 0.0;
    double mean_abs_state = 0.0;
};

/// r = (B + D F)^T P xbar + D^T (P C xbar + P D u) + S Lambda xbar + R u with
/// u = -K xbar, on the stacked closed-loop paths. `gain` overrides K (N or
/// N+1 entries) to probe non-optimal feedback.
StationarityResidual stationarity_residual(const ScenarioSet& set, const RiccatiSolution& riccati,
                                           const StatePaths& stacked, const std::vector<Matrix>* gain = nullptr);

struct DirectionalDerivative {
    std::vector<double> rhos;
    std::vector<double> quotients;  ///< (J(u^rho) - J(ubar)) / rho
    std::vector<double> quotient_std_errors;
    std::vector<BsdeValue> yhat;    ///< per scenario
    double prediction = 0.0;        ///< sup over Q^ubar of the yhat mixture
    double mixture = 0.0;           ///< lambda* yhat_1 + (1 - lambda*) yhat_2
    bool tie = false;               ///< Q^ubar is the whole simplex
    double gap = 0.0;               ///< |quotient at smallest rho - prediction|
};

/// Open-loop perturbation u^rho = ubar + rho dir of the realized closed-loop
/// control (dir evaluated on the stacked closed-loop states).
DirectionalDerivative robust_directional_derivative(const ScenarioSet& set, const RobustSolution& sol,
                                                    const ControlPath& dir, std::span<const double> rhos,
                                                    const PathEnsemble& ens);

struct ExpansionResult {
    std::vector<double> rhos;
    std::vector<double> state_errors;  ///< max_theta E[sup_t |x^rho - xbar - rho xhat|] / rho
    std::vector<double> cost_errors;   ///< max_theta |y^rho - ybar - rho yhat| / rho
    double state_slope = 0.0;
    double cost_slope = 0.0;
    bool state_exact = false;  ///< errors at rounding level (linear dynamics)
    bool cost_exact = false;
};

/// First-order expansion errors. For LQ sets `base` is evaluated on the
/// stacked state; for general sets it acts on each scenario's own state.
ExpansionResult first_order_expansion(const ScenarioSet& set, const ControlPath& base, const ControlPath& dir,
                                      std::span<const double> rhos, const PathEnsemble& ens);

/// Per node, min eigenvalue of [[L, S^T], [S, R]] and of G, per scenario.
/// Margins "hessian" and "G"; passes iff both >= -tol_psd.
ValidationReport check_sufficient_condition(const ScenarioSet& set);

}  // namespace rlq
