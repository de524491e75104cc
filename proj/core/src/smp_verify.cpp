#include "rlq/smp_verify.hpp"

#include "lq_kernel.hpp"
#include "rlq/errors.hpp"
#include "rlq/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace rlq {

namespace {

BlockSystem stacked_blocks(const ScenarioSet& set) {
    const Vector w = Vector::Ones(set.size()) / set.size();
    return assemble_weighted(set, w);
}

Matrix selector(int theta, int n, int K) {
    Matrix J = Matrix::Zero(n, n * K);
    J.block(0, theta * n, n, n) = Matrix::Identity(n, n);
    return J;
}

const AffineFeedback& affine_or_throw(const ControlPath& c) {
    const auto* aff = std::get_if<AffineFeedback>(&c.law);
    if (!aff) throw UnsupportedError("this check needs the base control as an affine feedback on the stacked state");
    return *aff;
}

}  // namespace

LinearAdjoint closed_loop_adjoint(const ScenarioSet& set, int theta, const MatrixTable& gain,
                                  const std::vector<Vector>& offset, int refine) {
    if (!set.is_lq()) throw UnsupportedError("closed_loop_adjoint needs LQ scenarios");
    if (theta < 0 || theta >= set.size()) throw InputError("scenario index out of range");
    if (refine < 1) throw InputError("refinement factor must be at least 1");
    const int N = set.grid.steps();
    if (static_cast<int>(gain.size()) < N) throw StructuralError("gain", -1, "gain table is too short");
    const BlockSystem b = stacked_blocks(set);
    const int n = set.n, k = set.k, dim = b.dim();
    const LQScenario& s = set.lq[static_cast<std::size_t>(theta)];
    const Matrix J = selector(theta, n, set.size());
    const double h = set.grid.dt() / refine;

    LinearAdjoint out;
    out.scenario = theta;
    out.Pi.resize(static_cast<std::size_t>(N + 1));
    out.phi.resize(static_cast<std::size_t>(N + 1));
    Matrix Pi = b.m_tilde_node(theta, N) * s.G * J;
    Vector phi = Vector::Zero(n);
    out.Pi[static_cast<std::size_t>(N)] = Pi / b.m_tilde_node(theta, N);
    out.phi[static_cast<std::size_t>(N)] = phi / b.m_tilde_node(theta, N);
    for (int i = N - 1; i >= 0; --i) {
        const auto ui = static_cast<std::size_t>(i);
        const Matrix& Gn = gain[ui];
        if (Gn.rows() != k || Gn.cols() != dim) throw StructuralError("gain", i, "gain has the wrong shape");
        const Vector w = offset.empty() ? Vector::Zero(k) : offset.at(ui);
        const double f = set.F[ui];
        const Matrix Acl = b.A_tilde[ui] + b.B[ui] * Gn;
        const Matrix Ccl = b.C_tilde[ui] + b.D[ui] * Gn;
        const Matrix At = (s.A[ui] + f * s.C[ui]).transpose();
        const Matrix Cf = f * Matrix::Identity(n, n) + s.C[ui].transpose();
        const Matrix LJ = s.L[ui] * J;
        const Matrix SG = s.S[ui].transpose() * Gn;
        const Vector Sw = s.S[ui].transpose() * w;
        const Vector Bw = b.B[ui] * w;
        const Vector Dw = b.D[ui] * w;
        // -d/dt of (Pi, phi)
        auto rhs = [&](const Matrix& P, const Vector& ph, double t, Matrix& dP, Vector& dph) {
            const double mt = b.m_tilde(theta, i, t);
            dP = P * Acl + mt * (LJ + SG) + At * P + Cf * P * Ccl;
            dph = P * Bw + mt * Sw + At * ph + Cf * (P * Dw);
        };
        const double t_hi = set.grid.node(i + 1);
        Matrix k1, k2, k3, k4;
        Vector l1, l2, l3, l4;
        for (int j = 0; j < refine; ++j) {
            const double t = t_hi - j * h;
            rhs(Pi, phi, t, k1, l1);
            rhs(Pi + 0.5 * h * k1, phi + 0.5 * h * l1, t - 0.5 * h, k2, l2);
            rhs(Pi + 0.5 * h * k2, phi + 0.5 * h * l2, t - 0.5 * h, k3, l3);
            rhs(Pi + h * k3, phi + h * l3, t - h, k4, l4);
            Pi += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            phi += (h / 6.0) * (l1 + 2.0 * l2 + 2.0 * l3 + l4);
        }
        out.Pi[ui] = Pi / b.m_tilde_node(theta, i);
        out.phi[ui] = phi / b.m_tilde_node(theta, i);
    }
    return out;
}

LinearAdjoint adjoint_from_riccati(const ScenarioSet& set, const RiccatiSolution& riccati, int theta) {
    if (theta < 0 || theta >= riccati.weights.size()) throw InputError("scenario index out of range");
    const double w = riccati.weights(theta);
    if (!(w > 0.0)) throw InputError("the Riccati ansatz determines p only for scenarios with positive weight");
    const int n = set.n;
    const Matrix J = selector(theta, n, static_cast<int>(riccati.weights.size()));
    const LQScenario& s = set.lq.at(static_cast<std::size_t>(theta));
    LinearAdjoint out;
    out.scenario = theta;
    double log_m = 0.0;
    for (std::size_t i = 0; i < riccati.P.size(); ++i) {
        out.Pi.push_back(J * riccati.P[i] / (w * std::exp(log_m)));
        out.phi.push_back(Vector::Zero(n));
        if (i < s.E.size()) log_m += s.E[i] * set.grid.dt();
    }
    return out;
}

LinearAdjoint discrete_adjoint(const ScenarioSet& set, int theta, const MatrixTable& gain,
                               const std::vector<Vector>& offset) {
    if (!set.is_lq()) throw UnsupportedError("discrete_adjoint needs LQ scenarios");
    if (theta < 0 || theta >= set.size()) throw InputError("scenario index out of range");
    const int N = set.grid.steps();
    if (static_cast<int>(gain.size()) < N) throw StructuralError("gain", -1, "gain table is too short");
    if (!offset.empty() && static_cast<int>(offset.size()) < N) {
        throw StructuralError("offset", -1, "offset table is too short");
    }
    const BlockSystem b = stacked_blocks(set);
    const int n = set.n, k = set.k, dim = b.dim();
    const LQScenario& s = set.lq[static_cast<std::size_t>(theta)];
    const Matrix J = selector(theta, n, set.size());
    const Matrix I = Matrix::Identity(n, n);
    const Matrix Id = Matrix::Identity(dim, dim);
    const double dt = set.grid.dt();

    LinearAdjoint out;
    out.scenario = theta;
    out.discrete = true;
    out.Pi.resize(static_cast<std::size_t>(N + 1));
    out.phi.resize(static_cast<std::size_t>(N + 1));
    out.Pi[static_cast<std::size_t>(N)] = s.G * J;
    out.phi[static_cast<std::size_t>(N)] = Vector::Zero(n);
    for (int i = N - 1; i >= 0; --i) {
        const auto ui = static_cast<std::size_t>(i);
        const Matrix& Gn = gain[ui];
        if (Gn.rows() != k || Gn.cols() != dim) throw StructuralError("gain", i, "gain has the wrong shape");
        const Vector w = offset.empty() ? Vector::Zero(k) : offset[ui];
        const double f = set.F[ui];
        const double mu = std::exp(s.E[ui] * dt);
        // x_{i+1} = (Aa x + alpha) + (Cc x + beta) dW
        const Matrix Aa = Id + (b.A_tilde[ui] + b.B[ui] * Gn) * dt;
        const Vector alpha = b.B[ui] * w * dt;
        const Matrix Cc = b.C_tilde[ui] + b.D[ui] * Gn;
        const Vector beta = b.D[ui] * w;
        // E[rho Phi^T (.)] splits into U (.)(mean part) + V (.)(dW part)
        const Matrix At = s.A[ui].transpose();
        const Matrix Ct = s.C[ui].transpose();
        const Matrix U = I + (At + f * Ct) * dt;
        const Matrix V = f * dt * (I + At * dt) + Ct * dt * (1.0 + f * f * dt);
        const Matrix& Pn = out.Pi[ui + 1];
        const Vector& phn = out.phi[ui + 1];
        out.Pi[ui] = mu * (U * Pn * Aa + V * Pn * Cc) + (s.L[ui] * J + s.S[ui].transpose() * Gn) * dt;
        out.phi[ui] = mu * (U * (Pn * alpha + phn) + V * (Pn * beta)) + s.S[ui].transpose() * w * dt;
    }
    return out;
}

AdjointPaths adjoint_paths(const ScenarioSet& set, const LinearAdjoint& adj, const StatePaths& stacked,
                           const PathEnsemble& ens) {
    if (!set.is_lq()) throw UnsupportedError("adjoint_paths needs LQ scenarios");
    const int N = set.grid.steps();
    const int n = set.n, k = set.k;
    const int dim = n * set.size();
    if (stacked.n != dim || stacked.paths != ens.paths() || stacked.u.empty()) {
        throw StructuralError("paths", -1, "stacked paths do not match the scenario set and ensemble");
    }
    if (static_cast<int>(adj.Pi.size()) != N + 1) throw StructuralError("adjoint", -1, "adjoint has the wrong length");
    const int th = adj.scenario;
    const LQScenario& s = set.lq[static_cast<std::size_t>(th)];
    const BlockSystem b = stacked_blocks(set);
    const double dt = set.grid.dt();

    AdjointPaths out;
    out.grid = set.grid;
    out.n = n;
    out.k = k;
    out.paths = stacked.paths;
    out.scenario = th;
    out.p.resize(static_cast<std::size_t>(out.paths) * (N + 1) * n);
    out.q.resize(static_cast<std::size_t>(out.paths) * N * n);
    out.hu.resize(static_cast<std::size_t>(out.paths) * N * k);
    out.m.resize(static_cast<std::size_t>(out.paths) * (N + 1));

    parallel_for(out.paths, [&](std::int64_t path) {
        std::vector<double> dW(static_cast<std::size_t>(N));
        ens.fill(path, dW);
        double logm = 0.0;
        for (int i = 0; i <= N; ++i) {
            const auto ui = static_cast<std::size_t>(i);
            out.m[static_cast<std::size_t>(path) * (N + 1) + ui] = std::exp(logm);
            const Eigen::Map<const Vector> x(stacked.state(path, i), dim);
            const Vector p = adj.Pi[ui] * x + adj.phi[ui];
            Eigen::Map<Vector>(out.p.data() + (static_cast<std::size_t>(path) * (N + 1) + ui) * n, n) = p;
            if (i == N) break;
            const Eigen::Map<const Vector> u(stacked.control(path, i), k);
            const double f = set.F[ui];
            const Vector diff = b.C_tilde[ui] * x + b.D[ui] * u;
            const Vector own = x.segment(th * n, n);
            Vector q, hu;
            if (adj.discrete) {
                const Vector mean = x + (b.A_tilde[ui] * x + b.B[ui] * u) * dt;
                const Vector pn = adj.Pi[ui + 1] * mean + adj.phi[ui + 1];
                q = adj.Pi[ui + 1] * diff;
                hu = std::exp(s.E[ui] * dt) * ((s.B[ui] + f * s.D[ui]).transpose() * pn +
                                               (f * dt * s.B[ui] + (1.0 + f * f * dt) * s.D[ui]).transpose() * q);
            } else {
                q = adj.Pi[ui] * diff;
                hu = (s.B[ui] + f * s.D[ui]).transpose() * p + s.D[ui].transpose() * q;
            }
            hu += s.S[ui] * own + s.R[ui] * u;
            Eigen::Map<Vector>(out.q.data() + (static_cast<std::size_t>(path) * N + ui) * n, n) = q;
            Eigen::Map<Vector>(out.hu.data() + (static_cast<std::size_t>(path) * N + ui) * k, k) = hu;
            logm += (s.E[ui] - 0.5 * f * f) * dt + f * dW[ui];
        }
    });
    return out;
}

double hamiltonian(const GeneralScenario& s, double t, const Vector& x, double y, const Vector& z, const Vector& u,
                   const Vector& u_prime, const Vector& p, const Matrix& q) {
    const Matrix sigma = s.diffusion(t, x, u);
    const Vector fz = s.generator_z(t, x, y, z, u_prime);
    Vector drift = s.drift(t, x, u);
    for (int i = 0; i < s.d; ++i) drift += fz(i) * sigma.col(i);
    double h = p.dot(drift) + s.generator(t, x, y, z, u);
    for (int i = 0; i < s.d; ++i) h += q.col(i).dot(sigma.col(i));
    return h;
}

Vector hamiltonian_u(const GeneralScenario& s, double t, const Vector& x, double y, const Vector& z, const Vector& u,
                     const Vector& p, const Matrix& q) {
    const Vector fz = s.generator_z(t, x, y, z, u);
    const auto su = s.diffusion_u(t, x, u);
    Vector g = s.drift_u(t, x, u).transpose() * p + s.generator_u(t, x, y, z, u);
    for (int i = 0; i < s.d; ++i) {
        const Matrix& Si = su[static_cast<std::size_t>(i)];
        g += fz(i) * Si.transpose() * p + Si.transpose() * q.col(i);
    }
    return g;
}

VariationalPaths variational_value(const ScenarioSet& set, int theta, const StatePaths& base, const ControlPath& dir,
                                   const PathEnsemble& ens) {
    VariationalPaths out;
    const OpenLoop v = realize(dir, base);
    out.xhat = simulate_variational_sde(set, theta, ControlPath::open_loop(v, "direction"), base, ens);
    const int N = set.grid.steps();
    const int n = set.n, k = set.k;
    const auto M = static_cast<std::size_t>(ens.paths());
    const double dt = set.grid.dt();
    if (set.is_lq()) {
        const LQScenario& s = set.lq[static_cast<std::size_t>(theta)];
        std::vector<double> xi(M), c(M * static_cast<std::size_t>(N));
        parallel_for(ens.paths(), [&](std::int64_t p) {
            for (int i = 0; i < N; ++i) {
                const auto ui = static_cast<std::size_t>(i);
                const Eigen::Map<const Vector> xb(base.state(p, i), n);
                const Eigen::Map<const Vector> ub(base.control(p, i), k);
                const Eigen::Map<const Vector> xh(out.xhat.state(p, i), n);
                const Eigen::Map<const Vector> vi(v.at(p, i), k);
                c[static_cast<std::size_t>(p) * N + ui] = (s.L[ui] * xb + s.S[ui].transpose() * ub).dot(xh) +
                                                           (s.S[ui] * xb + s.R[ui] * ub).dot(vi);
            }
            const Eigen::Map<const Vector> xT(base.state(p, N), n);
            const Eigen::Map<const Vector> xhT(out.xhat.state(p, N), n);
            xi[static_cast<std::size_t>(p)] = (s.G * xT).dot(xhT);
        });
        out.samples = linear_bsde_samples(xi, c, s.E, set.F, ens);
        out.y = summarize(out.samples);
        return out;
    }
    const GeneralScenario& s = set.general[static_cast<std::size_t>(theta)];
    if (!s.generator_x || !s.generator_y || !s.generator_z || !s.generator_u || !s.terminal_x) {
        throw UnsupportedError("variational cost needs every generator derivative and terminal_x");
    }
    const int d = s.d;
    out.samples.resize(M);
    parallel_for(ens.paths(), [&](std::int64_t p) {
        std::vector<double> dW(static_cast<std::size_t>(N) * d);
        ens.fill(p, dW);
        const Vector z0 = Vector::Zero(d);
        double logm = 0.0, acc = 0.0;
        for (int i = 0; i < N; ++i) {
            const double t = set.grid.node(i);
            const Vector xb = base.state_vector(p, i);
            const Vector ub = Eigen::Map<const Vector>(base.control(p, i), k);
            const Vector xh = out.xhat.state_vector(p, i);
            const Vector vi = Eigen::Map<const Vector>(v.at(p, i), k);
            const double ci = s.generator_x(t, xb, 0.0, z0, ub).dot(xh) + s.generator_u(t, xb, 0.0, z0, ub).dot(vi);
            const double Ei = s.generator_y(t, xb, 0.0, z0, ub);
            const Vector Fi = s.generator_z(t, xb, 0.0, z0, ub);
            acc += std::exp(logm) * ci * dt;
            const Eigen::Map<const Vector> w(dW.data() + static_cast<std::size_t>(i) * d, d);
            logm += (Ei - 0.5 * Fi.squaredNorm()) * dt + Fi.dot(w);
        }
        const double xiv = s.terminal_x(base.state_vector(p, N)).dot(out.xhat.state_vector(p, N));
        out.samples[static_cast<std::size_t>(p)] = acc + std::exp(logm) * xiv;
    });
    out.y = summarize(out.samples);
    return out;
}

DualityResult duality_gap(const ScenarioSet& set, int theta, const ControlPath& ubar, const ControlPath& dir,
                          const PathEnsemble& ens, AdjointScheme scheme, int refine) {
    if (!set.is_lq()) throw UnsupportedError("duality_gap supports LQ scenario sets");
    if (theta < 0 || theta >= set.size()) throw InputError("scenario index out of range");
    const AffineFeedback& aff = affine_or_throw(ubar);
    const int N = set.grid.steps();
    const int n = set.n, k = set.k;
    const auto M = static_cast<std::size_t>(ens.paths());
    const LQScenario& s = set.lq[static_cast<std::size_t>(theta)];

    const StatePaths stacked = simulate_stacked(set, ubar, ens);
    const StatePaths base = stacked.component(theta * n, n, theta);
    const OpenLoop v = realize(dir, stacked);
    const VariationalPaths var = variational_value(set, theta, base, ControlPath::open_loop(v), ens);

    const LinearAdjoint adj = scheme == AdjointScheme::discrete
                                  ? discrete_adjoint(set, theta, aff.gain, aff.offset)
                                  : closed_loop_adjoint(set, theta, aff.gain, aff.offset, refine);
    const AdjointPaths ap = adjoint_paths(set, adj, stacked, ens);

    std::vector<double> xi(M, 0.0), c(M * static_cast<std::size_t>(N));
    parallel_for(ens.paths(), [&](std::int64_t p) {
        for (int i = 0; i < N; ++i) {
            const Eigen::Map<const Vector> hu(ap.hu_at(p, i), k);
            const Eigen::Map<const Vector> vi(v.at(p, i), k);
            c[static_cast<std::size_t>(p) * N + static_cast<std::size_t>(i)] = hu.dot(vi);
        }
    });
    const std::vector<double> rhs = linear_bsde_samples(xi, c, s.E, set.F, ens);
    std::vector<double> diff(M);
    for (std::size_t p = 0; p < M; ++p) diff[p] = rhs[p] - var.samples[p];
    const BsdeValue r = summarize(rhs);
    DualityResult out;
    out.lhs = var.y.y0;
    out.lhs_std_error = var.y.std_error;
    out.rhs = r.y0;
    out.rhs_std_error = r.std_error;
    out.gap = std::abs(out.rhs - out.lhs);
    out.combined_std_error = std::hypot(out.lhs_std_error, out.rhs_std_error);
    out.difference_std_error = mean_and_stderr(diff).std_error;
    return out;
}

StationarityResidual stationarity_residual(const ScenarioSet& set, const RiccatiSolution& riccati,
                                           const StatePaths& stacked, const std::vector<Matrix>* gain) {
    const BlockSystem b = assemble_weighted(set, riccati.weights);
    const int N = set.grid.steps();
    const int dim = b.dim();
    if (stacked.n != dim) throw StructuralError("paths", -1, "stacked paths do not match the block system");
    if (gain && gain->size() < static_cast<std::size_t>(N)) throw StructuralError("gain", -1, "gain table is too short");
    std::vector<Matrix> Q(static_cast<std::size_t>(N + 1)), Mm(static_cast<std::size_t>(N + 1)),
        Kg(static_cast<std::size_t>(N + 1));
    for (int i = 0; i <= N; ++i) {
        const auto ui = static_cast<std::size_t>(i);
        const int step = std::min(i, N - 1);
        const auto us = static_cast<std::size_t>(step);
        const double t = set.grid.node(i);
        const Matrix& P = riccati.P[ui];
        const Matrix BF = b.B[us] + b.F[us] * b.D[us];
        Q[ui] = BF.transpose() * P + b.D[us].transpose() * P * b.C_tilde[us] + b.S_tilde(step, t) * b.Lambda;
        Mm[ui] = b.R_weighted(step, t) + b.D[us].transpose() * P * b.D[us];
        Kg[ui] = gain ? (*gain)[std::min(ui, gain->size() - 1)] : riccati.K[ui];
    }
    const std::int64_t paths = stacked.paths;
    std::vector<double> worst(static_cast<std::size_t>(paths)), sq(static_cast<std::size_t>(paths)),
        absx(static_cast<std::size_t>(paths));
    parallel_for(paths, [&](std::int64_t p) {
        double w = 0.0, s2 = 0.0, ax = 0.0;
        for (int i = 0; i <= N; ++i) {
            const auto ui = static_cast<std::size_t>(i);
            const Eigen::Map<const Vector> x(stacked.state(p, i), dim);
            const Vector u = -Kg[ui] * x;
            const double r = (Q[ui] * x + Mm[ui] * u).norm() / (1.0 + x.norm());
            w = std::max(w, r);
            s2 += r * r;
            ax += x.norm();
        }
        worst[static_cast<std::size_t>(p)] = w;
        sq[static_cast<std::size_t>(p)] = s2;
        absx[static_cast<std::size_t>(p)] = ax;
    });
    StationarityResidual out;
    out.max = *std::max_element(worst.begin(), worst.end());
    const double count = static_cast<double>(paths) * (N + 1);
    out.rms = std::sqrt(pairwise_sum(sq) / count);
    out.mean_abs_state = pairwise_sum(absx) / count;
    return out;
}

namespace {

OpenLoop shifted(const OpenLoop& base, const OpenLoop& dir, double rho) {
    OpenLoop out = base;
    if (dir.paths != base.paths && dir.paths != 1) throw StructuralError("direction", -1, "direction path count mismatch");
    for (std::int64_t p = 0; p < base.paths; ++p) {
        for (int i = 0; i < base.steps; ++i) {
            double* o = out.values.data() + (p * base.steps + i) * base.k;
            const double* dv = dir.at(p, i);
            for (int j = 0; j < base.k; ++j) o[j] += rho * dv[j];
        }
    }
    return out;
}

double mean_of(const std::vector<double>& v) { return pairwise_sum(v) / static_cast<double>(v.size()); }

}  // namespace

DirectionalDerivative robust_directional_derivative(const ScenarioSet& set, const RobustSolution& sol,
                                                    const ControlPath& dir, std::span<const double> rhos,
                                                    const PathEnsemble& ens) {
    if (!set.is_lq() || set.size() != 2) throw UnsupportedError("robust_directional_derivative needs two LQ scenarios");
    if (rhos.empty()) throw InputError("at least one rho is required");
    const int n = set.n;
    const StatePaths stacked = closed_loop_paths(set, sol.riccati, ens);
    const OpenLoop ubar = stacked.realized_control();
    const OpenLoop v = realize(dir, stacked);
    const auto base_samples = stacked_cost_samples(set, ControlPath::open_loop(ubar), ens);
    const double J0 = std::max(mean_of(base_samples[0]), mean_of(base_samples[1]));

    DirectionalDerivative out;
    out.rhos.assign(rhos.begin(), rhos.end());
    for (double rho : rhos) {
        const auto samples = stacked_cost_samples(set, ControlPath::open_loop(shifted(ubar, v, rho)), ens);
        const double J = std::max(mean_of(samples[0]), mean_of(samples[1]));
        out.quotients.push_back((J - J0) / rho);
        double se = 0.0;
        for (int th = 0; th < 2; ++th) {
            std::vector<double> diff(samples[static_cast<std::size_t>(th)].size());
            for (std::size_t p = 0; p < diff.size(); ++p) {
                diff[p] = (samples[static_cast<std::size_t>(th)][p] - base_samples[static_cast<std::size_t>(th)][p]) / rho;
            }
            se = std::max(se, mean_and_stderr(diff).std_error);
        }
        out.quotient_std_errors.push_back(se);
    }
    for (int th = 0; th < 2; ++th) {
        const StatePaths base = stacked.component(th * n, n, th);
        out.yhat.push_back(variational_value(set, th, base, ControlPath::open_loop(v), ens).y);
    }
    const double y1 = mean_of(base_samples[0]);
    const double y2 = mean_of(base_samples[1]);
    out.tie = std::abs(y1 - y2) <= sol.tol_gap;
    if (out.tie) {
        out.prediction = std::max(out.yhat[0].y0, out.yhat[1].y0);
    } else {
        out.prediction = y1 > y2 ? out.yhat[0].y0 : out.yhat[1].y0;
    }
    const double l = sol.lambda_star;
    out.mixture = l * out.yhat[0].y0 + (1.0 - l) * out.yhat[1].y0;
    std::size_t smallest = 0;
    for (std::size_t j = 1; j < out.rhos.size(); ++j) {
        if (out.rhos[j] < out.rhos[smallest]) smallest = j;
    }
    out.gap = std::abs(out.quotients[smallest] - out.prediction);
    return out;
}

namespace {

/// Per-path cost samples for a general scenario along stored paths, exact
/// for generators affine in (y, z).
std::vector<double> general_cost_samples(const GeneralScenario& s, const StatePaths& xp, const PathEnsemble& ens) {
    const int N = ens.grid().steps();
    const int d = s.d, k = s.k;
    const double dt = ens.grid().dt();
    std::vector<double> out(static_cast<std::size_t>(ens.paths()));
    parallel_for(ens.paths(), [&](std::int64_t p) {
        std::vector<double> dW(static_cast<std::size_t>(N) * d);
        ens.fill(p, dW);
        const Vector z0 = Vector::Zero(d);
        double logm = 0.0, acc = 0.0;
        for (int i = 0; i < N; ++i) {
            const double t = ens.grid().node(i);
            const Vector x = xp.state_vector(p, i);
            const Vector u = Eigen::Map<const Vector>(xp.control(p, i), k);
            const double c = s.generator(t, x, 0.0, z0, u);
            const double Ei = s.generator_y(t, x, 0.0, z0, u);
            const Vector Fi = s.generator_z(t, x, 0.0, z0, u);
            acc += std::exp(logm) * c * dt;
            const Eigen::Map<const Vector> w(dW.data() + static_cast<std::size_t>(i) * d, d);
            logm += (Ei - 0.5 * Fi.squaredNorm()) * dt + Fi.dot(w);
        }
        out[static_cast<std::size_t>(p)] = acc + std::exp(logm) * s.terminal(xp.state_vector(p, N));
    });
    return out;
}

double sup_deviation(const StatePaths& xr, const StatePaths& xb, const StatePaths& xh, double rho) {
    const int N = xr.grid.steps();
    const int n = xr.n;
    std::vector<double> sup(static_cast<std::size_t>(xr.paths));
    for (std::int64_t p = 0; p < xr.paths; ++p) {
        double best = 0.0;
        for (int i = 0; i <= N; ++i) {
            double s2 = 0.0;
            for (int j = 0; j < n; ++j) {
                const double e = xr.state(p, i)[j] - xb.state(p, i)[j] - rho * xh.state(p, i)[j];
                s2 += e * e;
            }
            best = std::max(best, std::sqrt(s2));
        }
        sup[static_cast<std::size_t>(p)] = best;
    }
    return pairwise_sum(sup) / static_cast<double>(sup.size());
}

}  // namespace

ExpansionResult first_order_expansion(const ScenarioSet& set, const ControlPath& base_control, const ControlPath& dir,
                                      std::span<const double> rhos, const PathEnsemble& ens) {
    if (rhos.size() < 2) throw InputError("first_order_expansion needs at least two rho values");
    const int n = set.n;
    ExpansionResult out;
    out.rhos.assign(rhos.begin(), rhos.end());
    out.state_errors.assign(rhos.size(), 0.0);
    out.cost_errors.assign(rhos.size(), 0.0);
    double state_scale = 0.0, cost_scale = 0.0;

    std::optional<StatePaths> stacked;
    if (set.is_lq()) stacked = simulate_stacked(set, base_control, ens);
    for (int th = 0; th < set.size(); ++th) {
        StatePaths base = stacked ? stacked->component(th * n, n, th) : simulate_sde(set, th, base_control, ens);
        const OpenLoop ubar = base.realized_control();
        const OpenLoop v = stacked ? realize(dir, *stacked) : realize(dir, base);
        const VariationalPaths var = variational_value(set, th, base, ControlPath::open_loop(v), ens);
        const GeneralScenario* gs = set.is_lq() ? nullptr : &set.general[static_cast<std::size_t>(th)];
        auto costs = [&](const OpenLoop& u, const StatePaths& xp) {
            if (gs) return general_cost_samples(*gs, xp, ens);
            return recursive_cost_samples(set, th, ControlPath::open_loop(u), ens);
        };
        const std::vector<double> ybar = costs(ubar, base);
        state_scale = std::max(state_scale, sup_deviation(var.xhat, base, base, 0.0) + 1.0);
        cost_scale = std::max(cost_scale, 1.0 + std::abs(mean_of(ybar)) + std::abs(var.y.y0));
        for (std::size_t j = 0; j < rhos.size(); ++j) {
            const double rho = rhos[j];
            const OpenLoop ur = shifted(ubar, v, rho);
            const StatePaths xr = simulate_sde(set, th, ControlPath::open_loop(ur), ens);
            const std::vector<double> yr = costs(ur, xr);
            std::vector<double> diff(yr.size());
            for (std::size_t p = 0; p < diff.size(); ++p) diff[p] = yr[p] - ybar[p] - rho * var.samples[p];
            out.state_errors[j] = std::max(out.state_errors[j], sup_deviation(xr, base, var.xhat, rho) / rho);
            out.cost_errors[j] = std::max(out.cost_errors[j], std::abs(mean_of(diff)) / rho);
        }
    }
    auto fit = [&](const std::vector<double>& errs, double scale, bool& exact) {
        const double floor = 1e-9 * scale;
        exact = std::all_of(errs.begin(), errs.end(), [&](double e) { return e <= floor; });
        if (exact) return 0.0;
        std::vector<double> lx, ly;
        for (std::size_t j = 0; j < errs.size(); ++j) {
            lx.push_back(std::log(out.rhos[j]));
            ly.push_back(std::log(std::max(errs[j], std::numeric_limits<double>::min())));
        }
        return fit_slope(lx, ly);
    };
    out.state_slope = fit(out.state_errors, state_scale, out.state_exact);
    out.cost_slope = fit(out.cost_errors, cost_scale, out.cost_exact);
    return out;
}

ValidationReport check_sufficient_condition(const ScenarioSet& set) {
    if (!set.is_lq()) throw UnsupportedError("check_sufficient_condition is LQ-specialized");
    ValidationReport report;
    const int n = set.n, k = set.k;
    double worst_h = std::numeric_limits<double>::infinity(), worst_g = worst_h;
    for (int th = 0; th < set.size(); ++th) {
        const LQScenario& s = set.lq[static_cast<std::size_t>(th)];
        double hm = std::numeric_limits<double>::infinity();
        for (int i = 0; i < set.grid.steps(); ++i) {
            const auto ui = static_cast<std::size_t>(i);
            Matrix H(n + k, n + k);
            H << s.L[ui], s.S[ui].transpose(), s.S[ui], s.R[ui];
            const double me = min_eigenvalue(H);
            hm = std::min(hm, me);
            if (me < -tol_psd(H)) {
                report.fail({"convexity", "hessian", th, i, me,
                             "scenario " + std::to_string(th + 1) + " step " + std::to_string(i) +
                                 ": [[L, S^T], [S, R]] is not positive semidefinite"});
            }
        }
        const double gm = min_eigenvalue(s.G);
        if (gm < -tol_psd(s.G)) {
            report.fail({"convexity", "G", th, -1, gm, "scenario " + std::to_string(th + 1) + ": G is not convex"});
        }
        report.scenario_margins.push_back({{"hessian", hm}, {"G", gm}});
        worst_h = std::min(worst_h, hm);
        worst_g = std::min(worst_g, gm);
    }
    report.margins = {{"hessian", worst_h}, {"G", worst_g}};
    return report;
}

}  // namespace rlq
