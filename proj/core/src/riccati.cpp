#include "rlq/riccati.hpp"

#include "rlq/errors.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <sstream>

namespace rlq {

double BlockSystem::m_tilde(int theta, int step, double t) const {
    const auto th = static_cast<std::size_t>(theta);
    const auto i = static_cast<std::size_t>(step);
    return std::exp(log_m_nodes[th][i] + E[th][i] * (t - grid.node(step)));
}

double BlockSystem::m_tilde_node(int theta, int node) const {
    return std::exp(log_m_nodes[static_cast<std::size_t>(theta)][static_cast<std::size_t>(node)]);
}

Matrix BlockSystem::L_tilde(int step, double t) const {
    Matrix out = Matrix::Zero(dim(), dim());
    for (int th = 0; th < K; ++th) {
        out.block(th * n, th * n, n, n) =
            m_tilde(th, step, t) * L[static_cast<std::size_t>(th)][static_cast<std::size_t>(step)];
    }
    return out;
}

Matrix BlockSystem::S_tilde(int step, double t) const {
    Matrix out(k, dim());
    for (int th = 0; th < K; ++th) {
        out.block(0, th * n, k, n) = m_tilde(th, step, t) * S[static_cast<std::size_t>(th)][static_cast<std::size_t>(step)];
    }
    return out;
}

Matrix BlockSystem::R_weighted(int step, double t) const {
    Matrix out = Matrix::Zero(k, k);
    for (int th = 0; th < K; ++th) {
        out += weights(th) * m_tilde(th, step, t) * R[static_cast<std::size_t>(th)][static_cast<std::size_t>(step)];
    }
    return out;
}

Matrix BlockSystem::G_tilde() const {
    Matrix out = Matrix::Zero(dim(), dim());
    for (int th = 0; th < K; ++th) {
        out.block(th * n, th * n, n, n) = m_tilde_node(th, grid.steps()) * G[static_cast<std::size_t>(th)];
    }
    return out;
}

Matrix BlockSystem::R_weighted_node(int node) const {
    const int step = std::min(node, grid.steps() - 1);
    Matrix out = Matrix::Zero(k, k);
    for (int th = 0; th < K; ++th) {
        out += weights(th) * m_tilde_node(th, node) * R[static_cast<std::size_t>(th)][static_cast<std::size_t>(step)];
    }
    return out;
}

namespace {

BlockSystem assemble(const ScenarioSet& set, const std::vector<int>& scenarios, const Vector& weights) {
    if (!set.is_lq()) throw UnsupportedError("the block system is defined for LQ scenarios");
    if (set.d != 1) throw StructuralError("d", -1, "LQ scenarios are driven by one-dimensional noise");
    const int N = set.grid.steps();
    const int n = set.n, k = set.k;
    const int K = static_cast<int>(scenarios.size());
    BlockSystem b;
    b.grid = set.grid;
    b.n = n;
    b.k = k;
    b.K = K;
    b.weights = weights;
    b.Lambda = Matrix::Zero(n * K, n * K);
    for (int th = 0; th < K; ++th) b.Lambda.block(th * n, th * n, n, n) = weights(th) * Matrix::Identity(n, n);
    b.F = set.F;
    if (static_cast<int>(b.F.size()) != N) throw StructuralError("F", -1, "F table does not match the grid");
    b.A_tilde.assign(static_cast<std::size_t>(N), Matrix::Zero(n * K, n * K));
    b.C_tilde.assign(static_cast<std::size_t>(N), Matrix::Zero(n * K, n * K));
    b.B.assign(static_cast<std::size_t>(N), Matrix::Zero(n * K, k));
    b.D.assign(static_cast<std::size_t>(N), Matrix::Zero(n * K, k));
    for (int th = 0; th < K; ++th) {
        const LQScenario& s = set.lq.at(static_cast<std::size_t>(scenarios[static_cast<std::size_t>(th)]));
        for (int i = 0; i < N; ++i) {
            const auto ui = static_cast<std::size_t>(i);
            b.A_tilde[ui].block(th * n, th * n, n, n) = s.A[ui];
            b.C_tilde[ui].block(th * n, th * n, n, n) = s.C[ui];
            b.B[ui].block(th * n, 0, n, k) = s.B[ui];
            b.D[ui].block(th * n, 0, n, k) = s.D[ui];
        }
        b.E.push_back(s.E);
        b.L.push_back(s.L);
        b.S.push_back(s.S);
        b.R.push_back(s.R);
        b.G.push_back(s.G);
        std::vector<double> logm(static_cast<std::size_t>(N + 1), 0.0);
        for (int i = 0; i < N; ++i) {
            logm[static_cast<std::size_t>(i + 1)] = logm[static_cast<std::size_t>(i)] + s.E[static_cast<std::size_t>(i)] * set.grid.dt();
        }
        b.log_m_nodes.push_back(std::move(logm));
    }
    return b;
}

}  // namespace

BlockSystem assemble_blocks(const ScenarioSet& set, double lambda) {
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw InputError("lambda must lie in [0, 1]");
    if (set.size() != 2) throw InputError("assemble_blocks needs exactly two scenarios");
    Vector w(2);
    w << lambda, 1.0 - lambda;
    return assemble(set, {0, 1}, w);
}

BlockSystem assemble_weighted(const ScenarioSet& set, const Vector& weights) {
    if (weights.size() != set.size()) throw InputError("one weight per scenario is required");
    if ((weights.array() < 0.0).any() || std::abs(weights.sum() - 1.0) > 1e-12) {
        throw InputError("weights must be non-negative and sum to one");
    }
    std::vector<int> all(static_cast<std::size_t>(set.size()));
    for (int th = 0; th < set.size(); ++th) all[static_cast<std::size_t>(th)] = th;
    return assemble(set, all, weights);
}

BlockSystem assemble_single(const ScenarioSet& set, int theta) {
    if (theta < 0 || theta >= set.size()) throw InputError("scenario index out of range");
    return assemble(set, {theta}, Vector::Ones(1));
}

MatrixTable RiccatiSolution::feedback_gain() const {
    MatrixTable out;
    out.reserve(static_cast<std::size_t>(grid.steps()));
    for (int i = 0; i < grid.steps(); ++i) out.push_back(-K[static_cast<std::size_t>(i)]);
    return out;
}

namespace {

struct Coefficients {
    Matrix Acal;      ///< A + F C
    Matrix C;
    Matrix BF;        ///< B + D F
    Matrix D;
    Matrix LLambda;   ///< L_tilde Lambda
    Matrix SLambda;   ///< S_tilde Lambda
    Matrix R;
};

Coefficients coefficients(const BlockSystem& b, int step, double t) {
    const auto i = static_cast<std::size_t>(step);
    const double f = b.F[i];
    Coefficients c;
    c.Acal = b.A_tilde[i] + f * b.C_tilde[i];
    c.C = b.C_tilde[i];
    c.BF = b.B[i] + f * b.D[i];
    c.D = b.D[i];
    c.LLambda = b.L_tilde(step, t) * b.Lambda;
    c.SLambda = b.S_tilde(step, t) * b.Lambda;
    c.R = b.R_weighted(step, t);
    return c;
}

struct Evaluation {
    Matrix rhs;   ///< -dP/dt
    Matrix gain;  ///< (R + D^T P D)^{-1} Q
    double min_eig_R = 0.0;
};

Evaluation evaluate(const Coefficients& c, const Matrix& P, double t, double floor) {
    const Matrix M = c.R + c.D.transpose() * P * c.D;
    const double me = min_eigenvalue(M);
    if (!(me >= floor)) {
        std::ostringstream msg;
        msg << "R + D^T P D lost positive definiteness at t = " << t << " (min eigenvalue " << me << ")";
        throw SingularityError(t, me, msg.str());
    }
    const Matrix Q = c.BF.transpose() * P + c.D.transpose() * P * c.C + c.SLambda;
    Evaluation e;
    e.gain = symmetrized(M).llt().solve(Q);
    e.rhs = P * c.Acal + c.Acal.transpose() * P + c.C.transpose() * P * c.C + c.LLambda - Q.transpose() * e.gain;
    e.min_eig_R = me;
    return e;
}

double asymmetry(const Matrix& m) { return (m - m.transpose()).cwiseAbs().maxCoeff(); }

}  // namespace

RiccatiSolution solve_riccati(const BlockSystem& b, const RiccatiOptions& options) {
    if (options.refine < 1) throw InputError("refinement factor must be at least 1");
    const int N = b.grid.steps();
    const int r = options.refine;
    const double h = b.grid.dt() / r;
    RiccatiSolution sol;
    sol.grid = b.grid;
    sol.weights = b.weights;
    sol.Lambda = b.Lambda;
    sol.refine = r;
    sol.P.resize(static_cast<std::size_t>(N + 1));
    sol.K.resize(static_cast<std::size_t>(N + 1));
    sol.min_eig_P.resize(static_cast<std::size_t>(N + 1));
    sol.min_eig_R.resize(static_cast<std::size_t>(N + 1));

    auto tidy = [&](Matrix m) {
        if (m.size() > 0) sol.max_asymmetry = std::max(sol.max_asymmetry, asymmetry(m));
        return options.symmetrize ? symmetrized(m) : m;
    };
    auto record_node = [&](int node, const Matrix& P) {
        const double t = b.grid.node(node);
        if (!P.allFinite() || max_norm(P) > options.blow_up) {
            std::ostringstream msg;
            msg << "Riccati solution exceeded " << options.blow_up << " in norm at t = " << t;
            throw BlowUpError(t, msg.str());
        }
        const int step = std::min(node, N - 1);
        const Evaluation e = evaluate(coefficients(b, step, t), P, t, options.singular_floor);
        const auto u = static_cast<std::size_t>(node);
        sol.P[u] = P;
        sol.K[u] = e.gain;
        sol.min_eig_P[u] = min_eigenvalue(P);
        sol.min_eig_R[u] = e.min_eig_R;
    };

    Matrix P = b.Lambda * b.G_tilde();
    record_node(N, P);
    for (int i = N - 1; i >= 0; --i) {
        const double t_hi = b.grid.node(i + 1);
        for (int j = 0; j < r; ++j) {
            const double t = t_hi - j * h;
            const double t_mid = t - 0.5 * h;
            const double t_lo = (j == r - 1) ? b.grid.node(i) : t - h;
            const Coefficients c_hi = coefficients(b, i, t);
            const Coefficients c_mid = coefficients(b, i, t_mid);
            const Coefficients c_lo = coefficients(b, i, t_lo);
            const Matrix k1 = tidy(evaluate(c_hi, P, t, options.singular_floor).rhs);
            const Matrix k2 = tidy(evaluate(c_mid, P + 0.5 * h * k1, t_mid, options.singular_floor).rhs);
            const Matrix k3 = tidy(evaluate(c_mid, P + 0.5 * h * k2, t_mid, options.singular_floor).rhs);
            const Matrix k4 = tidy(evaluate(c_lo, P + h * k3, t_lo, options.singular_floor).rhs);
            P = tidy(P + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
            if (!P.allFinite() || max_norm(P) > options.blow_up) {
                std::ostringstream msg;
                msg << "Riccati solution exceeded " << options.blow_up << " in norm at t = " << t_lo;
                throw BlowUpError(t_lo, msg.str());
            }
        }
        record_node(i, P);
    }
    return sol;
}

AggregateMargin check_aggregate_convexity(const BlockSystem& b) {
    AggregateMargin out;
    const int N = b.grid.steps();
    out.worst = std::numeric_limits<double>::infinity();
    for (int node = 0; node <= N; ++node) {
        const int step = std::min(node, N - 1);
        const double t = b.grid.node(node);
        const Matrix R = b.R_weighted(step, t);
        const Matrix SL = b.S_tilde(step, t) * b.Lambda;
        const Matrix X = symmetrized(b.L_tilde(step, t) * b.Lambda - SL.transpose() * symmetrized(R).ldlt().solve(SL));
        const double me = min_eigenvalue(X);
        out.min_eig.push_back(me);
        out.worst = std::min(out.worst, me);
        if (me < -tol_psd(X)) out.ok = false;
    }
    return out;
}

LipschitzProbe lambda_lipschitz_probe(const ScenarioSet& set, std::span<const double> lambdas,
                                      const RiccatiOptions& options) {
    if (lambdas.size() < 3) throw InputError("lambda_lipschitz_probe needs at least three lambda values");
    LipschitzProbe out;
    out.lambdas.assign(lambdas.begin(), lambdas.end());
    std::vector<RiccatiSolution> sols;
    sols.reserve(lambdas.size());
    for (double l : lambdas) sols.push_back(solve_riccati(assemble_blocks(set, l), options));
    for (std::size_t j = 1; j < lambdas.size(); ++j) {
        const double dl = std::abs(lambdas[j] - lambdas[j - 1]);
        if (dl == 0.0) throw InputError("lambda values must be distinct");
        double worst = 0.0;
        for (std::size_t i = 0; i < sols[j].P.size(); ++i) worst = std::max(worst, max_norm(sols[j].P[i] - sols[j - 1].P[i]));
        out.ratios.push_back(worst / dl);
        out.max_ratio = std::max(out.max_ratio, worst / dl);
    }
    return out;
}

void write_matrix_table_csv(const std::vector<Matrix>& table, std::ostream& out) {
    out << "step,row,col,value\n";
    char buf[64];
    for (std::size_t i = 0; i < table.size(); ++i) {
        const Matrix& m = table[i];
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            for (Eigen::Index c = 0; c < m.cols(); ++c) {
                std::snprintf(buf, sizeof buf, "%.17g", m(r, c));
                out << i << ',' << r << ',' << c << ',' << buf << '\n';
            }
        }
    }
}

}  // namespace rlq
