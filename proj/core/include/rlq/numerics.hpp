#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <span>
#include <vector>

namespace rlq {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Step-indexed matrices; entry i holds the value on [t_i, t_{i+1}).
using MatrixTable = std::vector<Matrix>;

/// Pairwise (cascade) summation. The result depends only on the input order,
/// never on how the values were produced, which is what makes Monte Carlo
/// reductions independent of the worker count.
double pairwise_sum(std::span<const double> values) noexcept;

struct MeanEstimate {
    double mean = 0.0;
    double std_error = 0.0;  ///< sample standard deviation / sqrt(M)
    std::size_t samples = 0;
};

MeanEstimate mean_and_stderr(std::span<const double> values);

/// Largest absolute entry.
double max_norm(const Matrix& m) noexcept;

/// Semidefiniteness tolerance scaled with the magnitude of `m`:
/// 1e-10 * (1 + max_norm(m)).
double tol_psd(const Matrix& m) noexcept;

/// Smallest eigenvalue of the symmetric part of `m`.
double min_eigenvalue(const Matrix& m);

Matrix symmetrized(const Matrix& m);

/// Least-squares slope of y against x.
double fit_slope(std::span<const double> x, std::span<const double> y);

bool all_finite(const Matrix& m) noexcept;

}  // namespace rlq
