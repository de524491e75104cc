#include "rlq/robust_lq.hpp"

#include "rlq/errors.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>

namespace rlq {

double LambdaEvaluation::combined_std_error() const {
    double v = 0.0;
    for (const auto& c : costs) v += c.std_error * c.std_error;
    return std::sqrt(v);
}

LambdaEvaluation evaluate_at_lambda(const ScenarioSet& set, double lambda, const PathEnsemble& ens,
                                    const RiccatiOptions& options) {
    LambdaEvaluation out;
    out.lambda = lambda;
    out.riccati = solve_riccati(assemble_blocks(set, lambda), options);
    const auto samples =
        stacked_cost_samples(set, ControlPath::feedback(out.riccati.feedback_gain(), {}, "robust feedback"), ens);
    for (const auto& s : samples) out.costs.push_back(summarize(s));
    return out;
}

std::string_view to_string(Branch branch) noexcept {
    switch (branch) {
        case Branch::corner0: return "corner-0";
        case Branch::corner1: return "corner-1";
        case Branch::interior: return "interior";
    }
    return "unknown";
}

ControlPath RobustSolution::control() const {
    return ControlPath::feedback(riccati.feedback_gain(), {}, "robust feedback");
}

namespace {

void adopt(RobustSolution& sol, LambdaEvaluation e) {
    sol.lambda_star = e.lambda;
    sol.riccati = std::move(e.riccati);
    sol.costs = std::move(e.costs);
    sol.gap = sol.costs[0].y0 - sol.costs[1].y0;
    sol.robust_cost = robust_cost(sol.costs).J;
}

}  // namespace

RobustSolution solve_robust(const ScenarioSet& set, const PathEnsemble& ens, const SolveOptions& options) {
    if (set.size() != 2) throw InputError("solve_robust needs exactly two scenarios");
    if (options.tol_gap && !(*options.tol_gap > 0.0)) throw InputError("tol_gap must be positive");
    if (options.max_iter < 1) throw InputError("max_iter must be at least 1");
    RobustSolution sol;
    LambdaEvaluation e0 = evaluate_at_lambda(set, 0.0, ens, options.riccati);
    LambdaEvaluation e1 = evaluate_at_lambda(set, 1.0, ens, options.riccati);
    if (options.tol_gap) {
        sol.tol_gap = *options.tol_gap;
    } else {
        double scale = 1.0;
        for (const auto* e : {&e0, &e1}) {
            for (const auto& c : e->costs) scale = std::max(scale, 1.0 + std::abs(c.y0));
        }
        sol.tol_gap = std::max({3.0 * e0.combined_std_error(), 3.0 * e1.combined_std_error(), 1e-6 * scale});
    }
    sol.corners = {e0, e1};
    const double g0 = e0.gap();
    const double g1 = e1.gap();
    if (g0 <= sol.tol_gap) {
        sol.branch = Branch::corner0;
        sol.bracket_low = sol.bracket_high = 0.0;
        adopt(sol, std::move(e0));
        return sol;
    }
    if (g1 >= -sol.tol_gap) {
        sol.branch = Branch::corner1;
        sol.bracket_low = sol.bracket_high = 1.0;
        adopt(sol, std::move(e1));
        return sol;
    }
    if (!(g0 > 0.0 && g1 < 0.0)) {
        throw InternalError("corner gaps do not bracket a root after the corner checks");
    }
    double lo = 0.0, hi = 1.0;
    double g_lo = g0, g_hi = g1;
    std::optional<LambdaEvaluation> best;
    for (int it = 1; it <= options.max_iter; ++it) {
        const double mid = 0.5 * (lo + hi);
        LambdaEvaluation e = evaluate_at_lambda(set, mid, ens, options.riccati);
        const double g = e.gap();
        sol.iterations = it;
        if (std::abs(g) <= sol.tol_gap) {
            sol.branch = Branch::interior;
            sol.bracket_low = lo;
            sol.bracket_high = hi;
            adopt(sol, std::move(e));
            return sol;
        }
        if (g > 0.0) {
            lo = mid;
            g_lo = g;
        } else {
            hi = mid;
            g_hi = g;
        }
        if (hi - lo <= options.min_interval) {
            // Bracket exhausted: report the best midpoint; sol.gap exposes the residual.
            sol.branch = Branch::interior;
            sol.bracket_low = lo;
            sol.bracket_high = hi;
            if (!best || std::abs(g) < std::abs(best->gap())) best = std::move(e);
            adopt(sol, std::move(*best));
            return sol;
        }
        if (!best || std::abs(g) < std::abs(best->gap())) best = std::move(e);
    }
    std::ostringstream msg;
    msg << "bisection exhausted " << options.max_iter << " iterations; bracket [" << lo << ", " << hi << "]";
    throw ConvergenceError(lo, hi, std::min(std::abs(g_lo), std::abs(g_hi)), msg.str());
}

std::vector<SweepRow> lambda_sweep(const ScenarioSet& set, const PathEnsemble& ens, std::span<const double> lambdas,
                                   const RiccatiOptions& options) {
    std::vector<SweepRow> rows;
    rows.reserve(lambdas.size());
    for (double l : lambdas) {
        const LambdaEvaluation e = evaluate_at_lambda(set, l, ens, options);
        rows.push_back({l, e.costs[0].y0, e.costs[1].y0, e.costs[0].std_error, e.costs[1].std_error,
                        std::max(e.costs[0].y0, e.costs[1].y0)});
    }
    return rows;
}

std::vector<double> lambda_grid(double step) {
    if (!(step > 0.0 && step <= 1.0)) throw InputError("lambda grid step must lie in (0, 1]");
    const auto n = static_cast<int>(std::llround(1.0 / step));
    std::vector<double> out;
    if (std::abs(n * step - 1.0) < 1e-9) {
        for (int i = 0; i <= n; ++i) out.push_back(static_cast<double>(i) / n);
        return out;
    }
    for (int i = 0; i * step < 1.0; ++i) out.push_back(i * step);
    out.push_back(1.0);
    return out;
}

StatePaths closed_loop_paths(const ScenarioSet& set, const RiccatiSolution& riccati, const PathEnsemble& ens) {
    return simulate_stacked(set, ControlPath::feedback(riccati.feedback_gain(), {}, "robust feedback"), ens);
}

std::vector<double> lyapunov_costs(const ScenarioSet& set, const MatrixTable& gain, const std::vector<Vector>& offset,
                                   int refine) {
    if (!set.is_lq()) throw UnsupportedError("lyapunov_costs needs LQ scenarios");
    if (refine < 1) throw InputError("refinement factor must be at least 1");
    const int N = set.grid.steps();
    if (static_cast<int>(gain.size()) < N) throw StructuralError("gain", -1, "gain table is too short");
    if (!offset.empty() && static_cast<int>(offset.size()) < N) {
        throw StructuralError("offset", -1, "offset table is too short");
    }
    const Vector ones = Vector::Ones(set.size());
    const BlockSystem b = assemble_weighted(set, ones / set.size());
    const int dim = b.dim();
    const int n = set.n, k = set.k;
    Vector x0(dim);
    for (int th = 0; th < set.size(); ++th) x0.segment(th * n, n) = set.x0;
    const double h = set.grid.dt() / refine;

    std::vector<double> out;
    for (int th = 0; th < set.size(); ++th) {
        const LQScenario& s = set.lq[static_cast<std::size_t>(th)];
        Matrix J = Matrix::Zero(n, dim);
        J.block(0, th * n, n, n) = Matrix::Identity(n, n);
        Matrix V = b.m_tilde_node(th, N) * J.transpose() * s.G * J;
        Vector w = Vector::Zero(dim);
        double c0 = 0.0;
        for (int i = N - 1; i >= 0; --i) {
            const auto ui = static_cast<std::size_t>(i);
            const Matrix& Kg = gain[ui];
            if (Kg.rows() != k || Kg.cols() != dim) throw StructuralError("gain", i, "gain has the wrong shape");
            const Vector v = offset.empty() ? Vector::Zero(k) : offset[ui];
            const double f = set.F[ui];
            const Matrix Ccl = b.C_tilde[ui] + b.D[ui] * Kg;
            const Matrix Acal = b.A_tilde[ui] + b.B[ui] * Kg + f * Ccl;
            const Vector beta = (b.B[ui] + f * b.D[ui]) * v;
            const Vector gamma = b.D[ui] * v;
            const Matrix SJ = s.S[ui] * J;
            const Matrix W = J.transpose() * s.L[ui] * J + SJ.transpose() * Kg + Kg.transpose() * SJ +
                             Kg.transpose() * s.R[ui] * Kg;
            const Vector eta = SJ.transpose() * v + Kg.transpose() * s.R[ui] * v;
            const double kappa = 0.5 * v.dot(s.R[ui] * v);
            struct State {
                Matrix V;
                Vector w;
                double c;
            };
            // Returns -d/dt of (V, w, c) at time t.
            auto rhs = [&](const State& st, double t) {
                const double mt = b.m_tilde(th, i, t);
                State d;
                d.V = st.V * Acal + Acal.transpose() * st.V + Ccl.transpose() * st.V * Ccl + mt * W;
                d.w = Acal.transpose() * st.w + st.V * beta + Ccl.transpose() * st.V * gamma + mt * eta;
                d.c = st.w.dot(beta) + 0.5 * gamma.dot(st.V * gamma) + mt * kappa;
                return d;
            };
            auto axpy = [](const State& a, double s2, const State& d) {
                return State{a.V + s2 * d.V, a.w + s2 * d.w, a.c + s2 * d.c};
            };
            const double t_hi = set.grid.node(i + 1);
            for (int j = 0; j < refine; ++j) {
                const double t = t_hi - j * h;
                const State st{V, w, c0};
                const State k1 = rhs(st, t);
                const State k2 = rhs(axpy(st, 0.5 * h, k1), t - 0.5 * h);
                const State k3 = rhs(axpy(st, 0.5 * h, k2), t - 0.5 * h);
                const State k4 = rhs(axpy(st, h, k3), t - h);
                V = symmetrized(V + (h / 6.0) * (k1.V + 2.0 * k2.V + 2.0 * k3.V + k4.V));
                w = w + (h / 6.0) * (k1.w + 2.0 * k2.w + 2.0 * k3.w + k4.w);
                c0 = c0 + (h / 6.0) * (k1.c + 2.0 * k2.c + 2.0 * k3.c + k4.c);
            }
        }
        out.push_back(0.5 * x0.dot(V * x0) + w.dot(x0) + c0);
    }
    return out;
}

ScenarioSet swap_scenarios(const ScenarioSet& set) {
    if (set.size() != 2) throw InputError("swap_scenarios needs exactly two scenarios");
    ScenarioSet out = set;
    if (set.is_lq()) {
        std::swap(out.lq[0], out.lq[1]);
    } else {
        std::swap(out.general[0], out.general[1]);
    }
    return out;
}

}  // namespace rlq
