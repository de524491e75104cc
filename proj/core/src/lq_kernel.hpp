#pragma once

// Flat, allocation-free path kernels shared by the SDE and BSDE engines. The
// same per-path arithmetic backs simulate_*, recursive_cost and the stacked
// closed loop, which is what makes their outputs agree bit-for-bit.

#include "rlq/errors.hpp"
#include "rlq/scenario_model.hpp"
#include "rlq/sde_engine.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace rlq::detail {

inline constexpr double kOverflow = 1e12;

/// Discounted cost accumulator: acc = sum_i m(t_i) c_i dt + m(T) xi with
/// log-Euler updates of m.
struct CostAccumulator {
    double logm = 0.0;
    double acc = 0.0;

    void step(double c, double E, double F, double dW, double dt) noexcept {
        acc += std::exp(logm) * c * dt;
        logm += (E - 0.5 * F * F) * dt + F * dW;
    }
    [[nodiscard]] double finish(double xi) const noexcept { return acc + std::exp(logm) * xi; }
};

/// Row-major copy of one LQ scenario's tables.
struct FlatScenario {
    std::vector<double> A, B, C, D, L, S, R, E, G;
};

struct FlatLQ {
    int n = 0;
    int k = 0;
    int steps = 0;
    double dt = 0.0;
    std::vector<FlatScenario> blocks;
    std::vector<int> theta;  ///< scenario index of each block
    std::vector<double> F;

    FlatLQ(const ScenarioSet& set, const std::vector<int>& scenarios);

    [[nodiscard]] int state_dim() const noexcept { return n * static_cast<int>(blocks.size()); }

    /// x_next = x + (A x + B u) dt + (C x + D u) dW for block b.
    void advance(int b, int i, const double* x, const double* u, double dW, double* x_next) const noexcept {
        const FlatScenario& s = blocks[static_cast<std::size_t>(b)];
        const double* A = s.A.data() + static_cast<std::size_t>(i) * n * n;
        const double* C = s.C.data() + static_cast<std::size_t>(i) * n * n;
        const double* B = s.B.data() + static_cast<std::size_t>(i) * n * k;
        const double* D = s.D.data() + static_cast<std::size_t>(i) * n * k;
        for (int r = 0; r < n; ++r) {
            double drift = 0.0, vol = 0.0;
            for (int c = 0; c < n; ++c) {
                drift += A[r * n + c] * x[c];
                vol += C[r * n + c] * x[c];
            }
            for (int c = 0; c < k; ++c) {
                drift += B[r * k + c] * u[c];
                vol += D[r * k + c] * u[c];
            }
            x_next[r] = x[r] + drift * dt + vol * dW;
        }
    }

    /// 1/2 [<Lx,x> + 2<Sx,u> + <Ru,u>].
    [[nodiscard]] double running(int b, int i, const double* x, const double* u) const noexcept {
        const FlatScenario& s = blocks[static_cast<std::size_t>(b)];
        const double* L = s.L.data() + static_cast<std::size_t>(i) * n * n;
        const double* S = s.S.data() + static_cast<std::size_t>(i) * k * n;
        const double* R = s.R.data() + static_cast<std::size_t>(i) * k * k;
        double q = 0.0;
        for (int r = 0; r < n; ++r) {
            double row = 0.0;
            for (int c = 0; c < n; ++c) row += L[r * n + c] * x[c];
            q += row * x[r];
        }
        for (int r = 0; r < k; ++r) {
            double sx = 0.0, ru = 0.0;
            for (int c = 0; c < n; ++c) sx += S[r * n + c] * x[c];
            for (int c = 0; c < k; ++c) ru += R[r * k + c] * u[c];
            q += 2.0 * sx * u[r] + ru * u[r];
        }
        return 0.5 * q;
    }

    [[nodiscard]] double terminal(int b, const double* x) const noexcept {
        const double* G = blocks[static_cast<std::size_t>(b)].G.data();
        double q = 0.0;
        for (int r = 0; r < n; ++r) {
            double row = 0.0;
            for (int c = 0; c < n; ++c) row += G[r * n + c] * x[c];
            q += row * x[r];
        }
        return 0.5 * q;
    }

    [[nodiscard]] double E(int b, int i) const noexcept {
        return blocks[static_cast<std::size_t>(b)].E[static_cast<std::size_t>(i)];
    }
};

/// Evaluates a ControlPath on a flat state without allocating in the affine
/// and open-loop cases.
class ControlEvaluator {
public:
    ControlEvaluator(const ControlPath& control, const TimeGrid& grid, int state_dim, int k);

    void operator()(std::int64_t path, int step, const double* x, double* u) const;

private:
    const ControlPath& control_;
    const TimeGrid& grid_;
    int state_dim_;
    int k_;
    std::vector<double> gain_;    ///< steps * k * state_dim
    std::vector<double> offset_;  ///< steps * k, or empty
};

struct KernelOutput {
    StatePaths* paths = nullptr;                 ///< states and controls, if wanted
    std::vector<std::vector<double>>* costs = nullptr;  ///< [block][path], if wanted
};

/// Runs every path of the block system, from x0 (state_dim entries).
void run_lq_paths(const FlatLQ& lq, const ControlPath& control, const PathEnsemble& ens, const Vector& x0,
                  KernelOutput out);

[[noreturn]] void throw_overflow(std::int64_t path, int step);

}  // namespace rlq::detail
