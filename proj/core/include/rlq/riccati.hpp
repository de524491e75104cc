#pragma once

#include "rlq/numerics.hpp"
#include "rlq/scenario_model.hpp"

#include <iosfwd>
#include <span>
#include <vector>

namespace rlq {

/// Stacked system for a weighted family of K LQ scenarios. With K = 2 and
/// weights (lambda, 1 - lambda) this is the two-scenario aggregate; K = 1 is
/// the classical single-scenario problem.
///
/// Tables are per step. Quantities that carry the discount factor
/// mt_theta(t) = exp(int_0^t E_theta) are exposed as functions of (step, t)
/// because mt varies inside a step; at nodes they agree with the
/// left-endpoint sums exp(sum_{j<i} E_theta(t_j) dt).
struct BlockSystem {
    TimeGrid grid{1.0, 2};
    int n = 0;  ///< per-scenario state dimension
    int k = 0;
    int K = 0;
    Vector weights;           ///< K entries, sum 1
    Matrix Lambda;            ///< diag(w_theta I_n), Kn x Kn
    MatrixTable A_tilde;      ///< Kn x Kn, block diagonal
    MatrixTable C_tilde;      ///< Kn x Kn, block diagonal
    MatrixTable B;            ///< Kn x k, stacked
    MatrixTable D;            ///< Kn x k, stacked
    std::vector<double> F;
    std::vector<std::vector<double>> E;  ///< [theta][step]
    std::vector<MatrixTable> L, S, R;    ///< raw per-scenario tables
    std::vector<Matrix> G;
    std::vector<std::vector<double>> log_m_nodes;  ///< [theta][node], left-endpoint sums

    [[nodiscard]] int dim() const noexcept { return n * K; }
    [[nodiscard]] double lambda() const noexcept { return weights(0); }
    [[nodiscard]] double m_tilde(int theta, int step, double t) const;
    [[nodiscard]] double m_tilde_node(int theta, int node) const;
    /// blockdiag(mt_theta L_theta)
    [[nodiscard]] Matrix L_tilde(int step, double t) const;
    /// [mt_1 S_1, ..., mt_K S_K], k x Kn
    [[nodiscard]] Matrix S_tilde(int step, double t) const;
    /// sum_theta w_theta mt_theta R_theta
    [[nodiscard]] Matrix R_weighted(int step, double t) const;
    /// blockdiag(mt_theta(T) G_theta)
    [[nodiscard]] Matrix G_tilde() const;
    /// R_weighted at node i (step min(i, N-1)).
    [[nodiscard]] Matrix R_weighted_node(int node) const;
};

/// Two-scenario aggregate at weight lambda on scenario 1. Throws InputError
/// for lambda outside [0, 1].
BlockSystem assemble_blocks(const ScenarioSet& set, double lambda);

/// General weights over the scenarios of `set` (non-negative, summing to 1).
BlockSystem assemble_weighted(const ScenarioSet& set, const Vector& weights);

/// The classical problem for scenario `theta` alone.
BlockSystem assemble_single(const ScenarioSet& set, int theta);

struct RiccatiOptions {
    int refine = 4;              ///< RK4 substeps per simulation step
    bool symmetrize = true;      ///< symmetrize every RK4 stage
    double singular_floor = 1e-10;
    double blow_up = 1e12;
};

struct RiccatiSolution {
    TimeGrid grid{1.0, 2};
    Vector weights;
    Matrix Lambda;
    int refine = 4;
    std::vector<Matrix> P;  ///< N+1 nodes
    std::vector<Matrix> K;  ///< N+1 nodes, u = -K x (stacked)
    std::vector<double> min_eig_P;
    std::vector<double> min_eig_R;  ///< min eigenvalue of R_weighted + D^T P D
    double max_asymmetry = 0.0;     ///< before symmetrization, over all stages

    [[nodiscard]] double lambda() const noexcept { return weights(0); }
    /// Feedback u = -K x as a step-indexed gain table (N entries).
    [[nodiscard]] MatrixTable feedback_gain() const;
};

/// Backward RK4 for
///   P' + P(A + F C) + (A + F C)^T P + C^T P C + L Lambda - Q^T (R + D^T P D)^{-1} Q = 0,
///   Q = (B + D F)^T P + D^T P C + S Lambda,  P(T) = Lambda G,
/// with gains K = (R + D^T P D)^{-1} Q at every node.
/// Throws SingularityError / BlowUpError.
RiccatiSolution solve_riccati(const BlockSystem& blocks, const RiccatiOptions& options = {});

struct AggregateMargin {
    std::vector<double> min_eig;  ///< per node
    double worst = 0.0;
    bool ok = true;
};

/// Per node: min eigenvalue of sym(L Lambda - Lambda S^T R^{-1} S Lambda).
AggregateMargin check_aggregate_convexity(const BlockSystem& blocks);

struct LipschitzProbe {
    std::vector<double> lambdas;
    std::vector<double> ratios;  ///< max_t ||P^a - P^b||_inf / |a - b| per consecutive pair
    double max_ratio = 0.0;
};

/// Requires at least three lambda values.
LipschitzProbe lambda_lipschitz_probe(const ScenarioSet& set, std::span<const double> lambdas,
                                      const RiccatiOptions& options = {});

/// CSV with header step,row,col,value.
void write_matrix_table_csv(const std::vector<Matrix>& table, std::ostream& out);

}  // namespace rlq
