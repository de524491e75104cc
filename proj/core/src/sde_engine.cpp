#include "rlq/sde_engine.hpp"

#include "lq_kernel.hpp"
#include "rlq/errors.hpp"
#include "rlq/parallel.hpp"
#include "rlq/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <sstream>

namespace rlq {

// ---------------------------------------------------------------- ensembles

PathEnsemble::PathEnsemble(TimeGrid grid, int dim, std::int64_t paths, std::uint64_t seed)
    : grid_(grid), dim_(dim), paths_(paths), seed_(seed) {
    if (dim < 1) throw InputError("ensemble dimension must be at least 1");
    if (paths < 1) throw InputError("ensemble needs at least one path");
}

void PathEnsemble::fill(std::int64_t path, std::span<double> out) const {
    const auto width = static_cast<std::size_t>(grid_.steps()) * static_cast<std::size_t>(dim_);
    if (out.size() != width) throw StructuralError("increments", -1, "increment buffer has the wrong size");
    if (data_) {
        const double* src = data_->data() + static_cast<std::size_t>(path) * width;
        std::copy(src, src + width, out.begin());
        return;
    }
    const double scale = std::sqrt(grid_.dt());
    const auto d = static_cast<std::size_t>(dim_);
    for (int i = 0; i < grid_.steps(); ++i) {
        auto slot = out.subspan(static_cast<std::size_t>(i) * d, d);
        keyed_normals(seed_, static_cast<std::uint64_t>(path), static_cast<std::uint32_t>(i), slot);
        for (double& v : slot) v *= scale;
    }
}

double PathEnsemble::increment(std::int64_t path, int step, int component) const {
    if (data_) {
        return (*data_)[(static_cast<std::size_t>(path) * grid_.steps() + static_cast<std::size_t>(step)) * dim_ +
                        static_cast<std::size_t>(component)];
    }
    std::vector<double> slot(static_cast<std::size_t>(dim_));
    keyed_normals(seed_, static_cast<std::uint64_t>(path), static_cast<std::uint32_t>(step), slot);
    return slot[static_cast<std::size_t>(component)] * std::sqrt(grid_.dt());
}

void PathEnsemble::materialize(std::uint64_t budget_bytes) {
    if (data_) return;
    const long double requested = static_cast<long double>(paths_) * grid_.steps() * dim_ * sizeof(double);
    if (requested > static_cast<long double>(budget_bytes)) {
        std::ostringstream msg;
        msg << "ensemble of " << paths_ << " paths x " << grid_.steps() << " steps x " << dim_ << " needs "
            << static_cast<double>(requested) << " bytes, budget is " << budget_bytes;
        const auto req = requested > static_cast<long double>(std::numeric_limits<std::uint64_t>::max())
                             ? std::numeric_limits<std::uint64_t>::max()
                             : static_cast<std::uint64_t>(requested);
        throw CapacityError(req, budget_bytes, msg.str());
    }
    const auto width = static_cast<std::size_t>(grid_.steps()) * static_cast<std::size_t>(dim_);
    auto data = std::make_shared<std::vector<double>>(width * static_cast<std::size_t>(paths_));
    parallel_for(paths_, [&](std::int64_t p) {
        fill(p, std::span<double>(data->data() + static_cast<std::size_t>(p) * width, width));
    });
    data_ = std::move(data);
}

bool PathEnsemble::operator==(const PathEnsemble& other) const {
    return grid_ == other.grid_ && dim_ == other.dim_ && paths_ == other.paths_ && seed_ == other.seed_;
}

PathEnsemble generate_paths(const TimeGrid& grid, int dim, std::int64_t paths, std::uint64_t seed,
                            std::uint64_t budget_bytes) {
    PathEnsemble ens(grid, dim, paths, seed);
    ens.materialize(budget_bytes);
    return ens;
}

// ------------------------------------------------------------------ controls

ControlPath ControlPath::zero(int steps, int k) { return constant(steps, Vector::Zero(k)); }

ControlPath ControlPath::constant(int steps, const Vector& value) {
    OpenLoop ol;
    ol.paths = 1;
    ol.steps = steps;
    ol.k = static_cast<int>(value.size());
    ol.values.resize(static_cast<std::size_t>(steps) * static_cast<std::size_t>(ol.k));
    for (int i = 0; i < steps; ++i) {
        for (int j = 0; j < ol.k; ++j) ol.values[static_cast<std::size_t>(i * ol.k + j)] = value(j);
    }
    return {std::move(ol), "constant"};
}

ControlPath ControlPath::feedback(MatrixTable gain, std::vector<Vector> offset, std::string label) {
    return {AffineFeedback{std::move(gain), std::move(offset)}, std::move(label)};
}

ControlPath ControlPath::open_loop(OpenLoop values, std::string label) {
    return {std::move(values), std::move(label)};
}

ControlPath ControlPath::function(FeedbackFn fn, std::string label) { return {std::move(fn), std::move(label)}; }

Vector StatePaths::state_vector(std::int64_t path, int node) const {
    return Eigen::Map<const Vector>(state(path, node), n);
}

StatePaths StatePaths::component(int offset, int width, int which) const {
    if (offset < 0 || width < 1 || offset + width > n) throw InputError("state component out of range");
    StatePaths out;
    out.grid = grid;
    out.n = width;
    out.k = k;
    out.paths = paths;
    out.scenario = which;
    out.label = label;
    const auto nodes = static_cast<std::size_t>(grid.steps() + 1);
    out.x.resize(static_cast<std::size_t>(paths) * nodes * static_cast<std::size_t>(width));
    for (std::size_t r = 0; r < static_cast<std::size_t>(paths) * nodes; ++r) {
        for (int j = 0; j < width; ++j) {
            out.x[r * static_cast<std::size_t>(width) + static_cast<std::size_t>(j)] =
                x[r * static_cast<std::size_t>(n) + static_cast<std::size_t>(offset + j)];
        }
    }
    out.u = u;
    return out;
}

OpenLoop StatePaths::realized_control() const {
    if (u.empty()) throw InputError("state paths carry no realized control");
    return OpenLoop{paths, grid.steps(), k, u};
}

namespace detail {

ControlEvaluator::ControlEvaluator(const ControlPath& control, const TimeGrid& grid, int state_dim, int k)
    : control_(control), grid_(grid), state_dim_(state_dim), k_(k) {
    const int N = grid.steps();
    if (const auto* aff = std::get_if<AffineFeedback>(&control.law)) {
        if (static_cast<int>(aff->gain.size()) < N) {
            throw StructuralError("gain", -1, "feedback gain table has " + std::to_string(aff->gain.size()) +
                                                  " entries, expected at least " + std::to_string(N));
        }
        gain_.resize(static_cast<std::size_t>(N) * k * state_dim);
        for (int i = 0; i < N; ++i) {
            const Matrix& g = aff->gain[static_cast<std::size_t>(i)];
            if (g.rows() != k || g.cols() != state_dim) {
                throw StructuralError("gain", i, "feedback gain must be " + std::to_string(k) + "x" +
                                                     std::to_string(state_dim));
            }
            for (int r = 0; r < k; ++r) {
                for (int c = 0; c < state_dim; ++c) {
                    gain_[(static_cast<std::size_t>(i) * k + r) * state_dim + c] = g(r, c);
                }
            }
        }
        if (!aff->offset.empty()) {
            if (static_cast<int>(aff->offset.size()) < N) {
                throw StructuralError("offset", -1, "feedback offset table is too short");
            }
            offset_.resize(static_cast<std::size_t>(N) * k);
            for (int i = 0; i < N; ++i) {
                const Vector& o = aff->offset[static_cast<std::size_t>(i)];
                if (o.size() != k) throw StructuralError("offset", i, "feedback offset has the wrong size");
                for (int r = 0; r < k; ++r) offset_[static_cast<std::size_t>(i) * k + r] = o(r);
            }
        }
    } else if (const auto* ol = std::get_if<OpenLoop>(&control.law)) {
        if (ol->steps != N || ol->k != k) {
            throw StructuralError("control", -1, "open-loop control must have " + std::to_string(N) + " steps and " +
                                                     std::to_string(k) + " components");
        }
        if (ol->values.size() != static_cast<std::size_t>(ol->paths) * N * k) {
            throw StructuralError("control", -1, "open-loop control has the wrong number of values");
        }
    } else if (!std::get<FeedbackFn>(control.law)) {
        throw InputError("feedback function is empty");
    }
}

void ControlEvaluator::operator()(std::int64_t path, int step, const double* x, double* u) const {
    if (!gain_.empty()) {
        const double* g = gain_.data() + static_cast<std::size_t>(step) * k_ * state_dim_;
        for (int r = 0; r < k_; ++r) {
            double v = offset_.empty() ? 0.0 : offset_[static_cast<std::size_t>(step) * k_ + r];
            for (int c = 0; c < state_dim_; ++c) v += g[r * state_dim_ + c] * x[c];
            u[r] = v;
        }
        return;
    }
    if (const auto* ol = std::get_if<OpenLoop>(&control_.law)) {
        if (ol->paths != 1 && path >= ol->paths) {
            throw StructuralError("control", step, "open-loop control has fewer paths than the ensemble");
        }
        const double* v = ol->at(path, step);
        std::copy(v, v + k_, u);
        return;
    }
    const auto& fn = std::get<FeedbackFn>(control_.law);
    const Vector value = fn(step, grid_.node(step), Eigen::Map<const Vector>(x, state_dim_));
    if (value.size() != k_) throw StructuralError("control", step, "feedback function returned the wrong size");
    std::copy(value.data(), value.data() + k_, u);
}

FlatLQ::FlatLQ(const ScenarioSet& set, const std::vector<int>& scenarios)
    : n(set.n), k(set.k), steps(set.grid.steps()), dt(set.grid.dt()), theta(scenarios), F(set.F) {
    if (!set.is_lq()) throw UnsupportedError("flat LQ kernel needs LQ scenarios");
    auto flatten = [](const MatrixTable& t) {
        std::vector<double> out;
        for (const auto& m : t) {
            for (Eigen::Index r = 0; r < m.rows(); ++r) {
                for (Eigen::Index c = 0; c < m.cols(); ++c) out.push_back(m(r, c));
            }
        }
        return out;
    };
    for (int th : scenarios) {
        const auto& s = set.lq.at(static_cast<std::size_t>(th));
        FlatScenario f;
        f.A = flatten(s.A);
        f.B = flatten(s.B);
        f.C = flatten(s.C);
        f.D = flatten(s.D);
        f.L = flatten(s.L);
        f.S = flatten(s.S);
        f.R = flatten(s.R);
        f.E = s.E;
        f.G = flatten(MatrixTable{s.G});
        const auto N = static_cast<std::size_t>(steps);
        const auto nn = static_cast<std::size_t>(n);
        const auto kk = static_cast<std::size_t>(k);
        if (f.A.size() != N * nn * nn || f.B.size() != N * nn * kk || f.C.size() != N * nn * nn ||
            f.D.size() != N * nn * kk || f.L.size() != N * nn * nn || f.S.size() != N * kk * nn ||
            f.R.size() != N * kk * kk || f.E.size() != N || f.G.size() != nn * nn) {
            throw StructuralError("scenario", -1, "scenario tables do not match the grid and dimensions");
        }
        blocks.push_back(std::move(f));
    }
    if (static_cast<int>(F.size()) != steps) throw StructuralError("F", -1, "F table does not match the grid");
}

void throw_overflow(std::int64_t path, int step) {
    throw SimulationError(path, step,
                          "state left the overflow guard (|x| > 1e12 or non-finite) on path " + std::to_string(path) +
                              " at step " + std::to_string(step));
}

void run_lq_paths(const FlatLQ& lq, const ControlPath& control, const PathEnsemble& ens, const Vector& x0,
                  KernelOutput out) {
    if (ens.dim() != 1) throw StructuralError("ensemble", -1, "LQ scenarios need a one-dimensional ensemble");
    if (ens.grid().steps() != lq.steps || std::abs(ens.grid().dt() - lq.dt) > 1e-15 * lq.dt) {
        throw StructuralError("ensemble", -1, "ensemble grid does not match the scenario grid");
    }
    const int dim = lq.state_dim();
    const int N = lq.steps;
    const int K = static_cast<int>(lq.blocks.size());
    if (x0.size() != dim) throw StructuralError("x0", -1, "initial state has the wrong dimension");
    const ControlEvaluator eval(control, ens.grid(), dim, lq.k);
    const std::int64_t M = ens.paths();
    if (out.paths) {
        StatePaths& p = *out.paths;
        p.grid = ens.grid();
        p.n = dim;
        p.k = lq.k;
        p.paths = M;
        p.label = control.label;
        p.x.assign(static_cast<std::size_t>(M) * (N + 1) * dim, 0.0);
        p.u.assign(static_cast<std::size_t>(M) * N * lq.k, 0.0);
    }
    if (out.costs) out.costs->assign(static_cast<std::size_t>(K), std::vector<double>(static_cast<std::size_t>(M)));

    parallel_for(M, [&](std::int64_t path) {
        thread_local std::vector<double> dW, x, next, u;
        dW.resize(static_cast<std::size_t>(N));
        x.assign(x0.data(), x0.data() + dim);
        next.resize(static_cast<std::size_t>(dim));
        u.resize(static_cast<std::size_t>(lq.k));
        ens.fill(path, dW);
        double* xs = out.paths ? out.paths->x.data() + static_cast<std::size_t>(path) * (N + 1) * dim : nullptr;
        double* us = out.paths ? out.paths->u.data() + static_cast<std::size_t>(path) * N * lq.k : nullptr;
        if (xs) std::copy(x.begin(), x.end(), xs);
        CostAccumulator acc[8];
        std::vector<CostAccumulator> acc_heap;
        CostAccumulator* accs = acc;
        if (K > 8) {
            acc_heap.resize(static_cast<std::size_t>(K));
            accs = acc_heap.data();
        }
        for (int i = 0; i < N; ++i) {
            const double dw = dW[static_cast<std::size_t>(i)];
            eval(path, i, x.data(), u.data());
            if (us) std::copy(u.begin(), u.end(), us + static_cast<std::size_t>(i) * lq.k);
            for (int b = 0; b < K; ++b) {
                const double* xb = x.data() + b * lq.n;
                if (out.costs) {
                    accs[b].step(lq.running(b, i, xb, u.data()), lq.E(b, i), lq.F[static_cast<std::size_t>(i)], dw,
                                 lq.dt);
                }
                lq.advance(b, i, xb, u.data(), dw, next.data() + b * lq.n);
            }
            for (double v : next) {
                if (!(std::abs(v) <= kOverflow)) throw_overflow(path, i);
            }
            x.swap(next);
            if (xs) std::copy(x.begin(), x.end(), xs + static_cast<std::size_t>(i + 1) * dim);
        }
        if (out.costs) {
            for (int b = 0; b < K; ++b) {
                (*out.costs)[static_cast<std::size_t>(b)][static_cast<std::size_t>(path)] =
                    accs[b].finish(lq.terminal(b, x.data() + b * lq.n));
            }
        }
    });
}

}  // namespace detail

OpenLoop realize(const ControlPath& law, const StatePaths& base) {
    const int N = base.grid.steps();
    if (const auto* ol = std::get_if<OpenLoop>(&law.law)) {
        if (ol->steps != N || ol->k != base.k) throw StructuralError("control", -1, "open-loop control shape mismatch");
        return *ol;
    }
    const detail::ControlEvaluator eval(law, base.grid, base.n, base.k);
    OpenLoop out{base.paths, N, base.k, {}};
    out.values.resize(static_cast<std::size_t>(base.paths) * N * base.k);
    parallel_for(base.paths, [&](std::int64_t p) {
        for (int i = 0; i < N; ++i) {
            eval(p, i, base.state(p, i), out.values.data() + (static_cast<std::size_t>(p) * N + i) * base.k);
        }
    });
    return out;
}

namespace {

void check_theta(const ScenarioSet& set, int theta) {
    if (theta < 0 || theta >= set.size()) throw InputError("scenario index out of range");
}

void check_ensemble(const ScenarioSet& set, const PathEnsemble& ens) {
    if (!(ens.grid() == set.grid)) throw StructuralError("ensemble", -1, "ensemble grid does not match the scenario grid");
    if (ens.dim() != set.d) throw StructuralError("ensemble", -1, "ensemble dimension does not match d");
}

StatePaths simulate_general(const GeneralScenario& s, int theta, const ControlPath& control, const PathEnsemble& ens,
                            const Vector& x0) {
    const int N = ens.grid().steps();
    const int n = s.n, k = s.k, d = s.d;
    const double dt = ens.grid().dt();
    const detail::ControlEvaluator eval(control, ens.grid(), n, k);
    StatePaths out;
    out.grid = ens.grid();
    out.n = n;
    out.k = k;
    out.paths = ens.paths();
    out.scenario = theta;
    out.label = control.label;
    out.x.assign(static_cast<std::size_t>(out.paths) * (N + 1) * n, 0.0);
    out.u.assign(static_cast<std::size_t>(out.paths) * N * k, 0.0);
    parallel_for(out.paths, [&](std::int64_t path) {
        std::vector<double> dW(static_cast<std::size_t>(N) * d);
        ens.fill(path, dW);
        Vector x = x0, u(k);
        double* xs = out.x.data() + static_cast<std::size_t>(path) * (N + 1) * n;
        std::copy(x.data(), x.data() + n, xs);
        for (int i = 0; i < N; ++i) {
            const double t = ens.grid().node(i);
            eval(path, i, x.data(), u.data());
            std::copy(u.data(), u.data() + k, out.u.data() + (static_cast<std::size_t>(path) * N + i) * k);
            const Eigen::Map<const Vector> w(dW.data() + static_cast<std::size_t>(i) * d, d);
            x = x + s.drift(t, x, u) * dt + s.diffusion(t, x, u) * w;
            if (!(x.cwiseAbs().maxCoeff() <= detail::kOverflow)) detail::throw_overflow(path, i);
            std::copy(x.data(), x.data() + n, xs + static_cast<std::size_t>(i + 1) * n);
        }
    });
    return out;
}

}  // namespace

StatePaths simulate_sde(const ScenarioSet& set, int theta, const ControlPath& control, const PathEnsemble& ens,
                        const std::optional<Vector>& x0) {
    check_theta(set, theta);
    check_ensemble(set, ens);
    const Vector start = x0 ? *x0 : set.x0;
    if (start.size() != set.n) throw StructuralError("x0", -1, "initial state has the wrong dimension");
    if (!set.is_lq()) return simulate_general(set.general[static_cast<std::size_t>(theta)], theta, control, ens, start);
    const detail::FlatLQ lq(set, {theta});
    StatePaths out;
    detail::run_lq_paths(lq, control, ens, start, {&out, nullptr});
    out.scenario = theta;
    return out;
}

StatePaths simulate_stacked(const ScenarioSet& set, const ControlPath& control, const PathEnsemble& ens) {
    if (!set.is_lq()) throw UnsupportedError("the stacked system is defined for LQ scenarios");
    check_ensemble(set, ens);
    std::vector<int> all(static_cast<std::size_t>(set.size()));
    for (int th = 0; th < set.size(); ++th) all[static_cast<std::size_t>(th)] = th;
    const detail::FlatLQ lq(set, all);
    Vector x0(set.n * set.size());
    for (int th = 0; th < set.size(); ++th) x0.segment(th * set.n, set.n) = set.x0;
    StatePaths out;
    detail::run_lq_paths(lq, control, ens, x0, {&out, nullptr});
    out.scenario = -1;
    return out;
}

StatePaths simulate_variational_sde(const ScenarioSet& set, int theta, const ControlPath& dir, const StatePaths& base,
                                    const PathEnsemble& ens) {
    check_theta(set, theta);
    check_ensemble(set, ens);
    if (base.n != set.n || base.paths != ens.paths() || !(base.grid == ens.grid())) {
        throw StructuralError("base", -1, "base paths do not match the scenario and ensemble");
    }
    if (base.u.empty()) throw InputError("base paths carry no realized control");
    const ControlPath v = ControlPath::open_loop(realize(dir, base), "direction");
    if (set.is_lq()) {
        // LQ dynamics are linear, so the variation is the state driven by the
        // direction alone from the origin.
        const detail::FlatLQ lq(set, {theta});
        StatePaths out;
        detail::run_lq_paths(lq, v, ens, Vector::Zero(set.n), {&out, nullptr});
        out.scenario = theta;
        out.label = "variation";
        return out;
    }
    const GeneralScenario& s = set.general[static_cast<std::size_t>(theta)];
    if (!s.drift_x || !s.drift_u || !s.diffusion_x || !s.diffusion_u) {
        throw UnsupportedError("variational dynamics need drift and diffusion derivatives");
    }
    const int N = ens.grid().steps();
    const int n = s.n, k = s.k, d = s.d;
    const double dt = ens.grid().dt();
    const auto& dirs = std::get<OpenLoop>(v.law);
    StatePaths out;
    out.grid = ens.grid();
    out.n = n;
    out.k = k;
    out.paths = ens.paths();
    out.scenario = theta;
    out.label = "variation";
    out.x.assign(static_cast<std::size_t>(out.paths) * (N + 1) * n, 0.0);
    out.u = dirs.values;
    parallel_for(out.paths, [&](std::int64_t path) {
        std::vector<double> dW(static_cast<std::size_t>(N) * d);
        ens.fill(path, dW);
        Vector xh = Vector::Zero(n);
        double* xs = out.x.data() + static_cast<std::size_t>(path) * (N + 1) * n;
        for (int i = 0; i < N; ++i) {
            const double t = ens.grid().node(i);
            const Vector xb = base.state_vector(path, i);
            const Vector ub = Eigen::Map<const Vector>(base.control(path, i), k);
            const Vector vi = Eigen::Map<const Vector>(dirs.at(path, i), k);
            const auto sx = s.diffusion_x(t, xb, ub);
            const auto su = s.diffusion_u(t, xb, ub);
            Vector next = xh + (s.drift_x(t, xb, ub) * xh + s.drift_u(t, xb, ub) * vi) * dt;
            for (int j = 0; j < d; ++j) {
                next += (sx[static_cast<std::size_t>(j)] * xh + su[static_cast<std::size_t>(j)] * vi) *
                        dW[static_cast<std::size_t>(i) * d + j];
            }
            xh = next;
            if (!(xh.cwiseAbs().maxCoeff() <= detail::kOverflow)) detail::throw_overflow(path, i);
            std::copy(xh.data(), xh.data() + n, xs + static_cast<std::size_t>(i + 1) * n);
        }
    });
    return out;
}

ConvergenceFit strong_convergence_order(const ScalarLinearSde& problem, std::span<const int> levels) {
    if (levels.size() < 3) throw InputError("strong_convergence_order needs at least three levels");
    const int finest = *std::max_element(levels.begin(), levels.end());
    for (int N : levels) {
        if (N < 1 || finest % N != 0) throw InputError("every level must divide the finest level");
    }
    const PathEnsemble ens(TimeGrid(problem.horizon, finest), 1, problem.paths, problem.seed);
    const std::size_t L = levels.size();
    std::vector<std::vector<double>> sq(L, std::vector<double>(static_cast<std::size_t>(problem.paths)));
    parallel_for(problem.paths, [&](std::int64_t p) {
        std::vector<double> dW(static_cast<std::size_t>(finest));
        ens.fill(p, dW);
        double W = 0.0;
        for (double w : dW) W += w;
        const double exact = problem.x0 * std::exp((problem.drift - 0.5 * problem.volatility * problem.volatility) *
                                                       problem.horizon +
                                                   problem.volatility * W);
        for (std::size_t l = 0; l < L; ++l) {
            const int N = levels[l];
            const int r = finest / N;
            const double h = problem.horizon / N;
            double x = problem.x0;
            for (int i = 0; i < N; ++i) {
                double inc = 0.0;
                for (int j = 0; j < r; ++j) inc += dW[static_cast<std::size_t>(i * r + j)];
                x += problem.drift * x * h + problem.volatility * x * inc;
            }
            sq[l][static_cast<std::size_t>(p)] = (x - exact) * (x - exact);
        }
    });
    ConvergenceFit fit;
    std::vector<double> lx, ly;
    bool exact = true;
    const double floor = 1e-13 * (1.0 + std::abs(problem.x0));
    for (std::size_t l = 0; l < L; ++l) {
        const double rms = std::sqrt(pairwise_sum(sq[l]) / static_cast<double>(problem.paths));
        fit.dts.push_back(problem.horizon / levels[l]);
        fit.errors.push_back(rms);
        if (rms > floor) exact = false;
        lx.push_back(std::log(fit.dts.back()));
        ly.push_back(std::log(std::max(rms, std::numeric_limits<double>::min())));
    }
    fit.exact = exact;
    fit.order = exact ? 0.0 : fit_slope(lx, ly);
    return fit;
}

MeanEstimate sup_moment(const StatePaths& paths, double q) {
    std::vector<double> sup(static_cast<std::size_t>(paths.paths));
    for (std::int64_t p = 0; p < paths.paths; ++p) {
        double best = 0.0;
        for (int i = 0; i <= paths.grid.steps(); ++i) {
            best = std::max(best, Eigen::Map<const Vector>(paths.state(p, i), paths.n).norm());
        }
        sup[static_cast<std::size_t>(p)] = std::pow(best, q);
    }
    return mean_and_stderr(sup);
}

void write_paths_csv(const StatePaths& paths, std::ostream& out) {
    out << "path,step,component,value\n";
    char buf[64];
    for (std::int64_t p = 0; p < paths.paths; ++p) {
        for (int i = 0; i <= paths.grid.steps(); ++i) {
            const double* x = paths.state(p, i);
            for (int j = 0; j < paths.n; ++j) {
                std::snprintf(buf, sizeof buf, "%.17g", x[j]);
                out << p << ',' << i << ',' << j << ',' << buf << '\n';
            }
        }
    }
}

}  // namespace rlq
