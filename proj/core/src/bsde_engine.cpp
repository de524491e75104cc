#include "rlq/bsde_engine.hpp"

#include "lq_kernel.hpp"
#include "rlq/errors.hpp"
#include "rlq/parallel.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>

namespace rlq {

std::string_view to_string(BsdeMethod method) noexcept {
    return method == BsdeMethod::representation ? "representation" : "regression";
}

BsdeValue summarize(std::span<const double> samples, BsdeMethod method) {
    const MeanEstimate est = mean_and_stderr(samples);
    BsdeValue v;
    v.y0 = est.mean;
    v.std_error = est.std_error;
    v.samples = static_cast<std::int64_t>(est.samples);
    v.method = method;
    return v;
}

namespace {

void check_tables(std::span<const double> E, std::span<const double> F, const PathEnsemble& ens) {
    const auto N = static_cast<std::size_t>(ens.grid().steps());
    if (E.size() != N) throw StructuralError("E", -1, "E table does not match the ensemble grid");
    if (F.size() != N) throw StructuralError("F", -1, "F table does not match the ensemble grid");
    if (ens.dim() != 1) throw StructuralError("ensemble", -1, "linear BSDE solver expects one-dimensional noise");
}

}  // namespace

ExponentialProcess exponential_process(std::span<const double> E, std::span<const double> F, const PathEnsemble& ens) {
    check_tables(E, F, ens);
    const int N = ens.grid().steps();
    const double dt = ens.grid().dt();
    ExponentialProcess out;
    out.grid = ens.grid();
    out.paths = ens.paths();
    out.deterministic.resize(static_cast<std::size_t>(N + 1));
    double log_det = 0.0;
    out.deterministic[0] = 1.0;
    for (int i = 0; i < N; ++i) {
        log_det += E[static_cast<std::size_t>(i)] * dt;
        out.deterministic[static_cast<std::size_t>(i + 1)] = std::exp(log_det);
    }
    out.m.resize(static_cast<std::size_t>(out.paths) * (N + 1));
    parallel_for(out.paths, [&](std::int64_t p) {
        std::vector<double> dW(static_cast<std::size_t>(N));
        ens.fill(p, dW);
        double* m = out.m.data() + static_cast<std::size_t>(p) * (N + 1);
        double logm = 0.0;
        m[0] = 1.0;
        for (int i = 0; i < N; ++i) {
            const double f = F[static_cast<std::size_t>(i)];
            logm += (E[static_cast<std::size_t>(i)] - 0.5 * f * f) * dt + f * dW[static_cast<std::size_t>(i)];
            m[i + 1] = std::exp(logm);
        }
    });
    return out;
}

std::vector<double> linear_bsde_samples(std::span<const double> xi, std::span<const double> c, std::span<const double> E,
                                        std::span<const double> F, const PathEnsemble& ens) {
    check_tables(E, F, ens);
    const auto M = static_cast<std::size_t>(ens.paths());
    const auto N = static_cast<std::size_t>(ens.grid().steps());
    if (xi.size() != M) throw StructuralError("xi", -1, "terminal values do not match the ensemble size");
    if (c.size() != M * N) throw StructuralError("c", -1, "running values do not match the ensemble shape");
    const double dt = ens.grid().dt();
    std::vector<double> out(M);
    parallel_for(ens.paths(), [&](std::int64_t p) {
        thread_local std::vector<double> dW;
        dW.resize(N);
        ens.fill(p, dW);
        detail::CostAccumulator acc;
        const double* cp = c.data() + static_cast<std::size_t>(p) * N;
        for (std::size_t i = 0; i < N; ++i) acc.step(cp[i], E[i], F[i], dW[i], dt);
        out[static_cast<std::size_t>(p)] = acc.finish(xi[static_cast<std::size_t>(p)]);
    });
    return out;
}

BsdeValue linear_bsde_value(std::span<const double> xi, std::span<const double> c, std::span<const double> E,
                            std::span<const double> F, const PathEnsemble& ens) {
    return summarize(linear_bsde_samples(xi, c, E, F, ens));
}

namespace {

int basis_size(int n, int cap) { return std::min(cap, 1 + n + n * (n + 1) / 2); }

void basis(const double* x, int n, int size, double* out) {
    int idx = 0;
    auto put = [&](double v) {
        if (idx < size) out[idx] = v;
        ++idx;
    };
    put(1.0);
    for (int j = 0; j < n; ++j) put(x[j]);
    for (int j = 0; j < n; ++j) {
        for (int l = j; l < n; ++l) put(x[j] * x[l]);
    }
}

}  // namespace

BsdeValue lsmc_bsde_value(const GeneralScenario& s, const StatePaths& xp, const PathEnsemble& ens,
                          const LsmcOptions& options) {
    if (!s.generator || !s.terminal) throw InputError("LSMC needs generator and terminal evaluators");
    if (xp.paths != ens.paths() || !(xp.grid == ens.grid()) || xp.n != s.n) {
        throw StructuralError("paths", -1, "state paths do not match the ensemble");
    }
    if (ens.dim() != s.d) throw StructuralError("ensemble", -1, "ensemble dimension does not match d");
    if (xp.u.empty()) throw InputError("state paths carry no realized control");
    const int N = ens.grid().steps();
    const int n = s.n, k = s.k, d = s.d;
    const auto M = static_cast<Eigen::Index>(ens.paths());
    const double dt = ens.grid().dt();
    const int nb = basis_size(n, std::max(1, options.max_basis));

    Matrix dW(M, static_cast<Eigen::Index>(N) * d);
    {
        std::vector<double> buf(static_cast<std::size_t>(N) * d);
        for (Eigen::Index p = 0; p < M; ++p) {
            ens.fill(p, buf);
            for (std::size_t j = 0; j < buf.size(); ++j) dW(p, static_cast<Eigen::Index>(j)) = buf[j];
        }
    }

    Vector y(M);
    for (Eigen::Index p = 0; p < M; ++p) y(p) = s.terminal(Eigen::Map<const Vector>(xp.state(p, N), n));

    BsdeValue result;
    result.method = BsdeMethod::regression;
    int ridge_steps = 0;

    auto driver_lipschitz = [&](double t, const Vector& x, double yv, const Vector& z, const Vector& u) {
        return s.generator_y ? std::abs(s.generator_y(t, x, yv, z, u)) : 0.0;
    };

    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rows(M, nb);
    Matrix phi(M, nb);
    Matrix targets(M, 1 + d);
    for (int i = N - 1; i >= 1; --i) {
        const double t = ens.grid().node(i);
        for (Eigen::Index p = 0; p < M; ++p) {
            basis(xp.state(p, i), n, nb, rows.row(p).data());
            targets(p, 0) = y(p);
            for (int j = 0; j < d; ++j) targets(p, 1 + j) = y(p) * dW(p, static_cast<Eigen::Index>(i) * d + j) / dt;
        }
        phi = rows;
        Eigen::ColPivHouseholderQR<Matrix> qr(phi);
        Matrix beta;
        if (qr.rank() < nb) {
            ++ridge_steps;
            const Matrix gram = phi.transpose() * phi + options.ridge * Matrix::Identity(nb, nb);
            beta = gram.ldlt().solve(phi.transpose() * targets);
        } else {
            beta = qr.solve(targets);
        }
        const Matrix fitted = phi * beta;
        Vector next(M);
        for (Eigen::Index p = 0; p < M; ++p) {
            const Vector x = Eigen::Map<const Vector>(xp.state(p, i), n);
            const Vector u = Eigen::Map<const Vector>(xp.control(p, i), k);
            const Vector z = fitted.row(p).segment(1, d).transpose();
            const double ey = fitted(p, 0);
            double yv = ey + s.generator(t, x, ey, z, u) * dt;
            if (dt * driver_lipschitz(t, x, ey, z, u) >= 1.0) {
                for (int it = 0; it < options.max_fixed_point; ++it) {
                    const double again = ey + s.generator(t, x, yv, z, u) * dt;
                    const bool done = std::abs(again - yv) <= 1e-12 * (1.0 + std::abs(again));
                    yv = again;
                    if (done) break;
                }
            }
            next(p) = yv;
        }
        y = next;
    }

    // Step 0: every path starts at x0, so conditional expectations are plain
    // cross-path averages.
    const double t0 = ens.grid().node(0);
    const double ey = y.mean();
    Vector z0 = Vector::Zero(d);
    for (int j = 0; j < d; ++j) z0(j) = (y.array() * dW.col(j).array()).mean() / dt;
    std::vector<double> samples(static_cast<std::size_t>(M));
    double y0 = ey;
    for (int it = 0; it < std::max(1, options.max_fixed_point); ++it) {
        for (Eigen::Index p = 0; p < M; ++p) {
            const Vector x = Eigen::Map<const Vector>(xp.state(p, 0), n);
            const Vector u = Eigen::Map<const Vector>(xp.control(p, 0), k);
            samples[static_cast<std::size_t>(p)] = y(p) + s.generator(t0, x, y0, z0, u) * dt;
        }
        const double again = pairwise_sum(samples) / static_cast<double>(M);
        const bool done = std::abs(again - y0) <= 1e-12 * (1.0 + std::abs(again));
        y0 = again;
        if (done) break;
    }
    const MeanEstimate est = mean_and_stderr(samples);
    result.y0 = est.mean;
    result.std_error = est.std_error;
    result.samples = static_cast<std::int64_t>(M);
    if (ridge_steps > 0) {
        result.warnings.push_back("rank-deficient regression at " + std::to_string(ridge_steps) +
                                  " step(s); used ridge penalty " + std::to_string(options.ridge));
    }
    return result;
}

std::vector<double> recursive_cost_samples(const ScenarioSet& set, int theta, const ControlPath& control,
                                           const PathEnsemble& ens, const std::optional<Vector>& x0) {
    if (!set.is_lq()) throw UnsupportedError("per-path cost samples are available for LQ scenarios");
    if (theta < 0 || theta >= set.size()) throw InputError("scenario index out of range");
    if (!(ens.grid() == set.grid)) throw StructuralError("ensemble", -1, "ensemble grid does not match");
    const detail::FlatLQ lq(set, {theta});
    std::vector<std::vector<double>> costs;
    detail::run_lq_paths(lq, control, ens, x0 ? *x0 : set.x0, {nullptr, &costs});
    return std::move(costs.front());
}

BsdeValue recursive_cost(const ScenarioSet& set, int theta, const ControlPath& control, const PathEnsemble& ens) {
    if (set.is_lq()) return summarize(recursive_cost_samples(set, theta, control, ens));
    const StatePaths xp = simulate_sde(set, theta, control, ens);
    return lsmc_bsde_value(set.general[static_cast<std::size_t>(theta)], xp, ens);
}

std::vector<std::vector<double>> stacked_cost_samples(const ScenarioSet& set, const ControlPath& control,
                                                      const PathEnsemble& ens) {
    if (!set.is_lq()) throw UnsupportedError("the stacked system is defined for LQ scenarios");
    if (!(ens.grid() == set.grid)) throw StructuralError("ensemble", -1, "ensemble grid does not match");
    std::vector<int> all(static_cast<std::size_t>(set.size()));
    for (int th = 0; th < set.size(); ++th) all[static_cast<std::size_t>(th)] = th;
    const detail::FlatLQ lq(set, all);
    Vector x0(set.n * set.size());
    for (int th = 0; th < set.size(); ++th) x0.segment(th * set.n, set.n) = set.x0;
    std::vector<std::vector<double>> costs;
    detail::run_lq_paths(lq, control, ens, x0, {nullptr, &costs});
    return costs;
}

RobustCost robust_cost(std::span<const BsdeValue> values, double tie_tolerance) {
    if (values.empty()) throw InputError("robust_cost needs at least one value");
    RobustCost out;
    out.J = values[0].y0;
    out.vertex = 0;
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (values[i].y0 > out.J + tie_tolerance) {
            out.J = values[i].y0;
            out.vertex = static_cast<int>(i);
        } else if (values[i].y0 > out.J) {
            out.J = values[i].y0;  // tied within tolerance: keep the lower index
        }
    }
    if (values.size() == 1) {
        out.lambda_low = out.lambda_high = 1.0;
    } else if (values.size() == 2) {
        const double diff = values[0].y0 - values[1].y0;
        if (std::abs(diff) <= tie_tolerance) {
            out.lambda_low = 0.0;
            out.lambda_high = 1.0;
        } else {
            out.lambda_low = out.lambda_high = diff > 0.0 ? 1.0 : 0.0;
        }
    }
    return out;
}

}  // namespace rlq
