#include "rlq/scenario_model.hpp"

#include "rlq/errors.hpp"
#include "rlq/rng.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace rlq {

TimeGrid::TimeGrid(double horizon, int steps) : horizon_(horizon), steps_(steps), dt_(0.0) {
    if (!(horizon > 0.0) || !std::isfinite(horizon)) {
        throw InputError("time grid horizon must be positive and finite");
    }
    if (steps < 1) throw InputError("time grid needs at least one step");
    dt_ = horizon / steps;
}

double TimeGrid::node(int i) const noexcept {
    if (i >= steps_) return horizon_;
    return i * dt_;
}

int TimeGrid::step_of(double t) const noexcept {
    const int i = static_cast<int>(std::floor(t / dt_));
    return std::clamp(i, 0, steps_ - 1);
}

LQScenario constant_lq_scenario(int steps, const Matrix& A, const Matrix& B, const Matrix& C,
                                const Matrix& D, double E, const Matrix& L, const Matrix& S,
                                const Matrix& R, const Matrix& G) {
    const auto n = static_cast<std::size_t>(steps);
    LQScenario s;
    s.A.assign(n, A);
    s.B.assign(n, B);
    s.C.assign(n, C);
    s.D.assign(n, D);
    s.E.assign(n, E);
    s.L.assign(n, L);
    s.S.assign(n, S);
    s.R.assign(n, R);
    s.G = G;
    return s;
}

namespace {

double asymmetry(const Matrix& m) {
    if (m.rows() != m.cols() || m.size() == 0) return 0.0;
    return (m - m.transpose()).cwiseAbs().maxCoeff();
}

void symmetrize_in_place(Matrix& m, const std::string& what, std::vector<std::string>& warnings) {
    if (m.rows() != m.cols()) return;
    const double asym = asymmetry(m);
    if (asym > 1e-12) {
        std::ostringstream msg;
        msg << what << " was not symmetric (max |M - M^T| = " << asym << "); replaced by (M + M^T)/2";
        warnings.push_back(msg.str());
    }
    if (asym > 0.0) m = symmetrized(m);
}

}  // namespace

ScenarioSet make_lq_set(const TimeGrid& grid, const Vector& x0, std::vector<LQScenario> scenarios,
                        std::vector<double> F) {
    if (scenarios.empty()) throw InputError("scenario set needs at least one scenario");
    ScenarioSet set;
    set.grid = grid;
    set.x0 = x0;
    set.n = static_cast<int>(x0.size());
    set.k = scenarios.front().B.empty() ? 0 : static_cast<int>(scenarios.front().B.front().cols());
    set.d = 1;
    set.F = std::move(F);
    for (std::size_t th = 0; th < scenarios.size(); ++th) {
        auto& s = scenarios[th];
        const std::string prefix = "scenario " + std::to_string(th + 1) + " ";
        for (std::size_t i = 0; i < s.L.size(); ++i) {
            symmetrize_in_place(s.L[i], prefix + "L at step " + std::to_string(i), set.warnings);
        }
        for (std::size_t i = 0; i < s.R.size(); ++i) {
            symmetrize_in_place(s.R[i], prefix + "R at step " + std::to_string(i), set.warnings);
        }
        symmetrize_in_place(s.G, prefix + "G", set.warnings);
    }
    set.lq = std::move(scenarios);
    return set;
}

ScenarioSet make_general_set(const TimeGrid& grid, const Vector& x0, std::vector<GeneralScenario> scenarios) {
    if (scenarios.empty()) throw InputError("scenario set needs at least one scenario");
    ScenarioSet set;
    set.grid = grid;
    set.x0 = x0;
    set.n = scenarios.front().n;
    set.k = scenarios.front().k;
    set.d = scenarios.front().d;
    for (const auto& s : scenarios) {
        if (s.n != set.n || s.k != set.k || s.d != set.d) {
            throw StructuralError("dimensions", -1, "general scenarios must share n, k and d");
        }
    }
    if (x0.size() != set.n) throw StructuralError("x0", -1, "x0 has the wrong dimension");
    set.general = std::move(scenarios);
    return set;
}

GeneralScenario as_general(const ScenarioSet& set, int scenario) {
    if (!set.is_lq()) return set.general.at(static_cast<std::size_t>(scenario));
    const LQScenario* s = &set.lq.at(static_cast<std::size_t>(scenario));
    const std::vector<double>* F = &set.F;
    const TimeGrid grid = set.grid;
    GeneralScenario g;
    g.n = set.n;
    g.k = set.k;
    g.d = 1;
    g.drift = [s, grid](double t, const Vector& x, const Vector& u) -> Vector {
        const auto i = static_cast<std::size_t>(grid.step_of(t));
        return s->A[i] * x + s->B[i] * u;
    };
    g.drift_x = [s, grid](double t, const Vector&, const Vector&) -> Matrix {
        return s->A[static_cast<std::size_t>(grid.step_of(t))];
    };
    g.drift_u = [s, grid](double t, const Vector&, const Vector&) -> Matrix {
        return s->B[static_cast<std::size_t>(grid.step_of(t))];
    };
    g.diffusion = [s, grid](double t, const Vector& x, const Vector& u) -> Matrix {
        const auto i = static_cast<std::size_t>(grid.step_of(t));
        return s->C[i] * x + s->D[i] * u;
    };
    g.diffusion_x = [s, grid](double t, const Vector&, const Vector&) {
        return std::vector<Matrix>{s->C[static_cast<std::size_t>(grid.step_of(t))]};
    };
    g.diffusion_u = [s, grid](double t, const Vector&, const Vector&) {
        return std::vector<Matrix>{s->D[static_cast<std::size_t>(grid.step_of(t))]};
    };
    g.generator = [s, F, grid](double t, const Vector& x, double y, const Vector& z, const Vector& u) {
        const auto i = static_cast<std::size_t>(grid.step_of(t));
        const double quad = x.dot(s->L[i] * x) + 2.0 * (s->S[i] * x).dot(u) + u.dot(s->R[i] * u);
        return s->E[i] * y + (*F)[i] * z(0) + 0.5 * quad;
    };
    g.generator_x = [s, grid](double t, const Vector& x, double, const Vector&, const Vector& u) -> Vector {
        const auto i = static_cast<std::size_t>(grid.step_of(t));
        return s->L[i] * x + s->S[i].transpose() * u;
    };
    g.generator_y = [s, grid](double t, const Vector&, double, const Vector&, const Vector&) {
        return s->E[static_cast<std::size_t>(grid.step_of(t))];
    };
    g.generator_z = [F, grid](double t, const Vector&, double, const Vector&, const Vector&) -> Vector {
        return Vector::Constant(1, (*F)[static_cast<std::size_t>(grid.step_of(t))]);
    };
    g.generator_u = [s, grid](double t, const Vector& x, double, const Vector&, const Vector& u) -> Vector {
        const auto i = static_cast<std::size_t>(grid.step_of(t));
        return s->S[i] * x + s->R[i] * u;
    };
    g.terminal = [s](const Vector& x) { return 0.5 * x.dot(s->G * x); };
    g.terminal_x = [s](const Vector& x) -> Vector { return s->G * x; };
    return g;
}

namespace {

void expect_shape(const Matrix& m, Eigen::Index rows, Eigen::Index cols, const std::string& table, int scenario,
                  int step) {
    if (m.rows() != rows || m.cols() != cols) {
        std::ostringstream msg;
        msg << "scenario " << scenario + 1 << " table " << table;
        if (step >= 0) msg << " step " << step;
        msg << ": expected " << rows << "x" << cols << ", got " << m.rows() << "x" << m.cols();
        throw StructuralError(table, step, msg.str());
    }
}

void expect_table(const MatrixTable& t, int steps, Eigen::Index rows, Eigen::Index cols, const std::string& name,
                  int scenario) {
    if (static_cast<int>(t.size()) != steps) {
        std::ostringstream msg;
        msg << "scenario " << scenario + 1 << " table " << name << " has " << t.size() << " entries, expected "
            << steps;
        throw StructuralError(name, -1, msg.str());
    }
    for (int i = 0; i < steps; ++i) expect_shape(t[static_cast<std::size_t>(i)], rows, cols, name, scenario, i);
}

void check_finite(const MatrixTable& t, const std::string& name, int scenario, ValidationReport& report) {
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (!all_finite(t[i])) {
            report.fail({"finite", name, scenario, static_cast<int>(i), 0.0,
                         "scenario " + std::to_string(scenario + 1) + " table " + name + " step " +
                             std::to_string(i) + " has a non-finite entry"});
            return;
        }
    }
}

}  // namespace

ValidationReport validate_structure(const ScenarioSet& set) {
    if (!set.is_lq()) throw UnsupportedError("validate_structure applies to LQ scenario sets only");
    ValidationReport report;
    report.warnings = set.warnings;
    const int N = set.grid.steps();
    const int n = set.n;
    const int k = set.k;
    if (set.d != 1) throw StructuralError("d", -1, "LQ scenarios are driven by one-dimensional noise (d = 1)");
    if (set.x0.size() != n) throw StructuralError("x0", -1, "x0 must have n entries");
    if (static_cast<int>(set.F.size()) != N) {
        throw StructuralError("F", -1, "F has " + std::to_string(set.F.size()) + " entries, expected " +
                                           std::to_string(N));
    }
    if (!set.x0.allFinite()) report.fail({"finite", "x0", -1, -1, 0.0, "x0 has a non-finite entry"});
    for (int i = 0; i < N; ++i) {
        if (!std::isfinite(set.F[static_cast<std::size_t>(i)])) {
            report.fail({"finite", "F", -1, i, 0.0, "F step " + std::to_string(i) + " is not finite"});
            break;
        }
    }
    double worst_symmetry = 0.0;
    for (int th = 0; th < set.size(); ++th) {
        const auto& s = set.lq[static_cast<std::size_t>(th)];
        expect_table(s.A, N, n, n, "A", th);
        expect_table(s.B, N, n, k, "B", th);
        expect_table(s.C, N, n, n, "C", th);
        expect_table(s.D, N, n, k, "D", th);
        expect_table(s.L, N, n, n, "L", th);
        expect_table(s.S, N, k, n, "S", th);
        expect_table(s.R, N, k, k, "R", th);
        expect_shape(s.G, n, n, "G", th, -1);
        if (static_cast<int>(s.E.size()) != N) {
            throw StructuralError("E", -1, "scenario " + std::to_string(th + 1) + " table E has " +
                                               std::to_string(s.E.size()) + " entries, expected " +
                                               std::to_string(N));
        }
        check_finite(s.A, "A", th, report);
        check_finite(s.B, "B", th, report);
        check_finite(s.C, "C", th, report);
        check_finite(s.D, "D", th, report);
        check_finite(s.L, "L", th, report);
        check_finite(s.S, "S", th, report);
        check_finite(s.R, "R", th, report);
        if (!all_finite(s.G)) report.fail({"finite", "G", th, -1, 0.0, "G has a non-finite entry"});
        for (int i = 0; i < N; ++i) {
            if (!std::isfinite(s.E[static_cast<std::size_t>(i)])) {
                report.fail({"finite", "E", th, i, 0.0, "E step " + std::to_string(i) + " is not finite"});
                break;
            }
        }
        double sym = asymmetry(s.G);
        for (const auto& m : s.L) sym = std::max(sym, asymmetry(m));
        for (const auto& m : s.R) sym = std::max(sym, asymmetry(m));
        report.scenario_margins.push_back({{"symmetry_residual", sym}});
        if (sym > 1e-12) {
            report.fail({"symmetry", "L/R/G", th, -1, sym, "symmetric tables are not symmetric"});
        }
        worst_symmetry = std::max(worst_symmetry, sym);
    }
    report.margins["symmetry_residual"] = worst_symmetry;
    return report;
}

ValidationReport validate_convexity(const ScenarioSet& set, double delta) {
    if (!(delta > 0.0)) throw InputError("validate_convexity needs delta > 0");
    if (!set.is_lq()) throw UnsupportedError("validate_convexity applies to LQ scenario sets only");
    ValidationReport report;
    const double inf = std::numeric_limits<double>::infinity();
    double worst_g = inf, worst_r = inf, worst_schur = inf;
    for (int th = 0; th < set.size(); ++th) {
        const auto& s = set.lq[static_cast<std::size_t>(th)];
        const std::string who = "scenario " + std::to_string(th + 1);
        const double g_margin = min_eigenvalue(s.G);
        if (g_margin < -tol_psd(s.G)) {
            report.fail({"convexity", "G", th, -1, g_margin, who + ": G is not positive semidefinite"});
        }
        double r_margin = inf, schur_margin = inf;
        for (int i = 0; i < set.grid.steps(); ++i) {
            const auto ui = static_cast<std::size_t>(i);
            const Matrix& R = s.R[ui];
            const double rm = min_eigenvalue(R) - delta;
            r_margin = std::min(r_margin, rm);
            if (rm < -tol_psd(R)) {
                report.fail({"convexity", "R", th, i, rm,
                             who + " step " + std::to_string(i) + ": R - delta I is not positive semidefinite"});
            }
            Eigen::LLT<Matrix> llt(R);
            if (llt.info() != Eigen::Success || min_eigenvalue(R) <= 0.0) {
                schur_margin = -inf;
                report.fail({"convexity", "R", th, i, min_eigenvalue(R),
                             who + " step " + std::to_string(i) + ": R is singular or indefinite (R not >> 0)"});
                continue;
            }
            const Matrix schur = s.L[ui] - s.S[ui].transpose() * llt.solve(s.S[ui]);
            const double sm = min_eigenvalue(schur);
            schur_margin = std::min(schur_margin, sm);
            if (sm < -tol_psd(schur)) {
                report.fail({"convexity", "L", th, i, sm,
                             who + " step " + std::to_string(i) + ": L - S^T R^-1 S is not positive semidefinite"});
            }
        }
        report.scenario_margins.push_back({{"G", g_margin}, {"R_minus_delta", r_margin}, {"L_schur", schur_margin}});
        worst_g = std::min(worst_g, g_margin);
        worst_r = std::min(worst_r, r_margin);
        worst_schur = std::min(worst_schur, schur_margin);
    }
    report.margins = {{"G", worst_g}, {"R_minus_delta", worst_r}, {"L_schur", worst_schur}};
    return report;
}

namespace {

constexpr double kFdStep = 1e-5;
constexpr double kDerivativeTolerance = 1e-4;

double rel_error(double supplied, double fd) { return std::abs(supplied - fd) / std::max(std::abs(fd), 1.0); }

std::string describe(const ProbePoint& p) {
    std::ostringstream os;
    os << "t=" << p.t << " x=[" << p.x.transpose() << "] y=" << p.y << " z=[" << p.z.transpose() << "] u=["
       << p.u.transpose() << "]";
    return os.str();
}

// Central difference of a vector-valued function of one argument vector.
template <typename Fn>
Matrix jacobian_fd(Fn&& fn, const Vector& at) {
    Matrix jac;
    for (Eigen::Index j = 0; j < at.size(); ++j) {
        Vector plus = at, minus = at;
        plus(j) += kFdStep;
        minus(j) -= kFdStep;
        const Vector col = (fn(plus) - fn(minus)) / (2.0 * kFdStep);
        if (jac.size() == 0) jac.resize(col.size(), at.size());
        jac.col(j) = col;
    }
    return jac;
}

double compare(const Matrix& supplied, const Matrix& fd) {
    if (supplied.rows() != fd.rows() || supplied.cols() != fd.cols()) {
        return std::numeric_limits<double>::infinity();
    }
    double worst = 0.0;
    for (Eigen::Index i = 0; i < fd.rows(); ++i) {
        for (Eigen::Index j = 0; j < fd.cols(); ++j) worst = std::max(worst, rel_error(supplied(i, j), fd(i, j)));
    }
    return worst;
}

Vector as_vector(double v) { return Vector::Constant(1, v); }

}  // namespace

ValidationReport validate_derivatives_at(const GeneralScenario& s, const std::vector<ProbePoint>& points) {
    ValidationReport report;
    double worst = 0.0;
    auto record = [&](const std::string& name, double err, const ProbePoint& p) {
        worst = std::max(worst, err);
        if (!(err <= kDerivativeTolerance)) {
            report.fail({"derivative", name, -1, -1, err, name + " disagrees with central differences at " + describe(p)});
        }
    };
    for (const auto& p : points) {
        try {
            if (s.drift && s.drift_x) {
                record("drift_x", compare(s.drift_x(p.t, p.x, p.u),
                                          jacobian_fd([&](const Vector& x) { return s.drift(p.t, x, p.u); }, p.x)), p);
            }
            if (s.drift && s.drift_u) {
                record("drift_u", compare(s.drift_u(p.t, p.x, p.u),
                                          jacobian_fd([&](const Vector& u) { return s.drift(p.t, p.x, u); }, p.u)), p);
            }
            if (s.diffusion && s.diffusion_x) {
                const auto dx = s.diffusion_x(p.t, p.x, p.u);
                for (int j = 0; j < s.d; ++j) {
                    auto col = [&](const Vector& x) -> Vector { return s.diffusion(p.t, x, p.u).col(j); };
                    record("diffusion_x", compare(dx.at(static_cast<std::size_t>(j)), jacobian_fd(col, p.x)), p);
                }
            }
            if (s.diffusion && s.diffusion_u) {
                const auto du = s.diffusion_u(p.t, p.x, p.u);
                for (int j = 0; j < s.d; ++j) {
                    auto col = [&](const Vector& u) -> Vector { return s.diffusion(p.t, p.x, u).col(j); };
                    record("diffusion_u", compare(du.at(static_cast<std::size_t>(j)), jacobian_fd(col, p.u)), p);
                }
            }
            if (s.generator) {
                auto f_of_x = [&](const Vector& x) { return as_vector(s.generator(p.t, x, p.y, p.z, p.u)); };
                auto f_of_y = [&](const Vector& y) { return as_vector(s.generator(p.t, p.x, y(0), p.z, p.u)); };
                auto f_of_z = [&](const Vector& z) { return as_vector(s.generator(p.t, p.x, p.y, z, p.u)); };
                auto f_of_u = [&](const Vector& u) { return as_vector(s.generator(p.t, p.x, p.y, p.z, u)); };
                if (s.generator_x) {
                    record("generator_x", compare(s.generator_x(p.t, p.x, p.y, p.z, p.u).transpose(),
                                                  jacobian_fd(f_of_x, p.x)), p);
                }
                if (s.generator_y) {
                    record("generator_y", compare(as_vector(s.generator_y(p.t, p.x, p.y, p.z, p.u)),
                                                  jacobian_fd(f_of_y, as_vector(p.y))), p);
                }
                if (s.generator_z && p.z.size() > 0) {
                    record("generator_z", compare(s.generator_z(p.t, p.x, p.y, p.z, p.u).transpose(),
                                                  jacobian_fd(f_of_z, p.z)), p);
                }
                if (s.generator_u) {
                    record("generator_u", compare(s.generator_u(p.t, p.x, p.y, p.z, p.u).transpose(),
                                                  jacobian_fd(f_of_u, p.u)), p);
                }
            }
            if (s.terminal && s.terminal_x) {
                auto phi = [&](const Vector& x) { return as_vector(s.terminal(x)); };
                record("terminal_x", compare(s.terminal_x(p.x).transpose(), jacobian_fd(phi, p.x)), p);
            }
        } catch (const std::exception& e) {
            report.fail({"evaluator", "evaluation", -1, -1, 0.0,
                         std::string("evaluator failed at ") + describe(p) + ": " + e.what()});
        }
    }
    report.margins["max_relative_error"] = worst;
    return report;
}

ValidationReport validate_derivatives(const GeneralScenario& s, double horizon, int probes, std::uint64_t seed) {
    if (probes < 1) throw InputError("validate_derivatives needs at least one probe");
    std::vector<ProbePoint> points;
    points.reserve(static_cast<std::size_t>(probes));
    const int width = s.n + 1 + s.d + s.k;
    std::vector<double> draw(static_cast<std::size_t>(width));
    for (int p = 0; p < probes; ++p) {
        keyed_normals(seed, static_cast<std::uint64_t>(p), 0x7FFFFFFFu, draw);
        ProbePoint pt;
        pt.t = horizon * keyed_uniform(seed, static_cast<std::uint64_t>(p), 0);
        pt.x = Eigen::Map<const Vector>(draw.data(), s.n);
        pt.y = draw[static_cast<std::size_t>(s.n)];
        pt.z = Eigen::Map<const Vector>(draw.data() + s.n + 1, s.d);
        pt.u = Eigen::Map<const Vector>(draw.data() + s.n + 1 + s.d, s.k);
        points.push_back(std::move(pt));
    }
    return validate_derivatives_at(s, points);
}

}  // namespace rlq
