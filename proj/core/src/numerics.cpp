#include "rlq/numerics.hpp"

#include "rlq/errors.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

namespace rlq {

std::string_view to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::input: return "input";
        case ErrorKind::parse: return "parse";
        case ErrorKind::structural: return "structural";
        case ErrorKind::capacity: return "capacity";
        case ErrorKind::simulation: return "simulation";
        case ErrorKind::singularity: return "singularity";
        case ErrorKind::blow_up: return "blow_up";
        case ErrorKind::convergence: return "convergence";
        case ErrorKind::unsupported: return "unsupported";
        case ErrorKind::internal: return "internal";
    }
    return "unknown";
}

double pairwise_sum(std::span<const double> values) noexcept {
    constexpr std::size_t kBlock = 8;
    if (values.size() <= kBlock) {
        double s = 0.0;
        for (double v : values) s += v;
        return s;
    }
    const std::size_t half = values.size() / 2;
    return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

MeanEstimate mean_and_stderr(std::span<const double> values) {
    MeanEstimate out;
    out.samples = values.size();
    if (values.empty()) return out;
    const double n = static_cast<double>(values.size());
    out.mean = pairwise_sum(values) / n;
    if (values.size() < 2) return out;
    std::vector<double> sq(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double d = values[i] - out.mean;
        sq[i] = d * d;
    }
    const double var = pairwise_sum(sq) / (n - 1.0);
    out.std_error = std::sqrt(var / n);
    return out;
}

double max_norm(const Matrix& m) noexcept {
    return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

double tol_psd(const Matrix& m) noexcept { return 1e-10 * (1.0 + max_norm(m)); }

double min_eigenvalue(const Matrix& m) {
    if (m.size() == 0) return 0.0;
    if (m.rows() == 1) return m(0, 0);
    Eigen::SelfAdjointEigenSolver<Matrix> solver(symmetrized(m), Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success) {
        throw InternalError("eigenvalue decomposition failed");
    }
    return solver.eigenvalues().minCoeff();
}

Matrix symmetrized(const Matrix& m) { return 0.5 * (m + m.transpose()); }

double fit_slope(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) {
        throw InputError("fit_slope needs at least two (x, y) pairs of equal length");
    }
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    return sxy / sxx;
}

bool all_finite(const Matrix& m) noexcept { return m.allFinite(); }

}  // namespace rlq
