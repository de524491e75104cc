#include "rlq/numerics.hpp"
#include "rlq/parallel.hpp"
#include "rlq/rng.hpp"

#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

using namespace rlq;

namespace {

using Counter = Philox4x32::Counter;
using Key = Philox4x32::Key;

// Known-answer vectors published with the Random123 reference implementation.
TEST(Philox, KnownAnswerZero) {
    const Counter out = Philox4x32::generate({0, 0, 0, 0}, {0, 0});
    EXPECT_EQ(out, (Counter{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u}));
}

TEST(Philox, KnownAnswerAllOnes) {
    const Counter out = Philox4x32::generate({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
                                             {0xffffffffu, 0xffffffffu});
    EXPECT_EQ(out, (Counter{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu}));
}

TEST(Philox, KnownAnswerPi) {
    const Counter out = Philox4x32::generate({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
                                             {0xa4093822u, 0x299f31d0u});
    EXPECT_EQ(out, (Counter{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u}));
}

TEST(KeyedNormals, PureFunctionOfKey) {
    std::vector<double> a(7), b(7), c(7);
    keyed_normals(42, 3, 11, a);
    keyed_normals(42, 3, 11, b);
    keyed_normals(42, 3, 12, c);
    EXPECT_EQ(a, b);
    EXPECT_NE(a, c);
}

TEST(KeyedNormals, PrefixStable) {
    std::vector<double> shortv(3), longv(9);
    keyed_normals(7, 0, 0, shortv);
    keyed_normals(7, 0, 0, longv);
    for (int i = 0; i < 3; ++i) EXPECT_EQ(shortv[i], longv[i]);
}

TEST(KeyedNormals, Moments) {
    constexpr int M = 200000;
    std::vector<double> x(M);
    for (int p = 0; p < M; ++p) keyed_normals(1, p, 0, std::span<double>(&x[p], 1));
    const MeanEstimate m = mean_and_stderr(x);
    EXPECT_NEAR(m.mean, 0.0, 4.0 * m.std_error);
    double var = 0.0, kurt = 0.0;
    for (double v : x) {
        var += v * v;
        kurt += v * v * v * v;
    }
    var /= M;
    kurt /= M;
    EXPECT_NEAR(var, 1.0, 0.01);
    EXPECT_NEAR(kurt, 3.0, 0.06);
}

TEST(KeyedUniform, OpenInterval) {
    for (std::uint32_t i = 0; i < 10000; ++i) {
        const double u = keyed_uniform(9, 1, i);
        ASSERT_GT(u, 0.0);
        ASSERT_LT(u, 1.0);
    }
}

TEST(Numerics, PairwiseSumMatchesExactIntegers) {
    std::vector<double> v(1001);
    std::iota(v.begin(), v.end(), 0.0);
    EXPECT_EQ(pairwise_sum(v), 500500.0);
    EXPECT_EQ(pairwise_sum(std::span<const double>{}), 0.0);
}

TEST(Numerics, MeanAndStdError) {
    const std::vector<double> v{1.0, 2.0, 3.0, 4.0};
    const MeanEstimate m = mean_and_stderr(v);
    EXPECT_DOUBLE_EQ(m.mean, 2.5);
    // sample sd = sqrt(5/3)
    EXPECT_NEAR(m.std_error, std::sqrt(5.0 / 3.0) / 2.0, 1e-15);
    EXPECT_EQ(m.samples, 4u);
}

TEST(Numerics, FitSlope) {
    const std::vector<double> x{0.0, 1.0, 2.0, 3.0};
    const std::vector<double> y{1.0, 3.0, 5.0, 7.0};
    EXPECT_NEAR(fit_slope(x, y), 2.0, 1e-14);
}

TEST(Numerics, MinEigenvalueUsesSymmetricPart) {
    Matrix m(2, 2);
    m << 2.0, 2.0, 0.0, 2.0;  // symmetric part [[2,1],[1,2]]
    EXPECT_NEAR(min_eigenvalue(m), 1.0, 1e-14);
    EXPECT_TRUE(symmetrized(m).isApprox(symmetrized(m).transpose()));
}

TEST(Numerics, TolPsdScales) {
    EXPECT_DOUBLE_EQ(tol_psd(Matrix::Zero(2, 2)), 1e-10);
    EXPECT_DOUBLE_EQ(tol_psd(Matrix::Constant(2, 2, -9.0)), 1e-9);
}

TEST(Parallel, CoversEveryIndexOnce) {
    std::vector<std::atomic<int>> hits(1000);
    parallel_for(1000, [&](std::int64_t i) { hits[i]++; }, 4);
    for (auto& h : hits) EXPECT_EQ(h.load(), 1);
}

TEST(Parallel, RethrowsWorkerException) {
    EXPECT_THROW(parallel_for(
                     100, [](std::int64_t i) {
                         if (i == 57) throw std::runtime_error("boom");
                     },
                     3),
                 std::runtime_error);
}

}  // namespace
