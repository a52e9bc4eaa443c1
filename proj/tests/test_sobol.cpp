#include <bit>
#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "nse/sobol.hpp"

using namespace nse;

namespace {

// Reference rows of the unscrambled Joe-Kuo sequence (Gray-code order), as
// produced by scipy.stats.qmc.Sobol(16, scramble=False).
struct RefRow {
    int index;
    std::array<double, 16> x;
};

const std::vector<RefRow> kReference = {
    {0, {0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0}},
    {1, {0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5}},
    {2, {0.75, 0.25, 0.25, 0.25, 0.75, 0.75, 0.25, 0.75, 0.75, 0.75, 0.75, 0.75, 0.25, 0.25, 0.75, 0.25}},
    {3, {0.25, 0.75, 0.75, 0.75, 0.25, 0.25, 0.75, 0.25, 0.25, 0.25, 0.25, 0.25, 0.75, 0.75, 0.25, 0.75}},
    {4, {0.375, 0.375, 0.625, 0.875, 0.375, 0.125, 0.375, 0.875, 0.875, 0.625, 0.875, 0.375, 0.375, 0.625, 0.375, 0.875}},
    {5, {0.875, 0.875, 0.125, 0.375, 0.875, 0.625, 0.875, 0.375, 0.375, 0.125, 0.375, 0.875, 0.875, 0.125, 0.875, 0.375}},
    {6, {0.625, 0.125, 0.875, 0.625, 0.625, 0.875, 0.125, 0.125, 0.125, 0.375, 0.125, 0.625, 0.125, 0.875, 0.625, 0.625}},
    {7, {0.125, 0.625, 0.375, 0.125, 0.125, 0.375, 0.625, 0.625, 0.625, 0.875, 0.625, 0.125, 0.625, 0.375, 0.125, 0.125}},
    {100, {0.4140625, 0.2578125, 0.7734375, 0.7265625, 0.8828125, 0.7421875, 0.0234375, 0.4765625, 0.6328125,
           0.6953125, 0.4609375, 0.6796875, 0.4765625, 0.8515625, 0.3203125, 0.4921875}},
    {511, {0.001953125, 0.501953125, 0.408203125, 0.845703125, 0.353515625, 0.876953125, 0.744140625, 0.462890625,
           0.220703125, 0.201171875, 0.341796875, 0.830078125, 0.060546875, 0.943359375, 0.119140625, 0.646484375}},
    {1023, {0.0009765625, 0.7529296875, 0.6123046875, 0.1455078125, 0.1865234375, 0.4384765625, 0.1396484375,
            0.6181640625, 0.3447265625, 0.8505859375, 0.6787109375, 0.0361328125, 0.1298828125, 0.6650390625,
            0.3623046875, 0.4638671875}},
};

// L2-star discrepancy by Warnock's closed form.
double l2_star_discrepancy(const RowMatrix& x) {
    const auto n = static_cast<double>(x.rows());
    const auto d = static_cast<int>(x.cols());
    double a = 0.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        double p = 1.0;
        for (int k = 0; k < d; ++k) p *= 1.0 - x(i, k) * x(i, k);
        a += p;
    }
    double b = 0.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i)
        for (Eigen::Index j = 0; j < x.rows(); ++j) {
            double p = 1.0;
            for (int k = 0; k < d; ++k) p *= 1.0 - std::max(x(i, k), x(j, k));
            b += p;
        }
    return std::sqrt(std::pow(3.0, -d) - std::pow(2.0, 1 - d) / n * a + b / (n * n));
}

} // namespace

TEST(Sobol, MatchesPublishedReferenceRows) {
    const RowMatrix pts = sobol_points(16, 1024);
    for (const auto& row : kReference)
        for (int d = 0; d < 16; ++d) EXPECT_EQ(pts(row.index, d), row.x[d]) << "point " << row.index << " dim " << d;
}

TEST(Sobol, FirstDimensionIsBitReversedGrayCode) {
    SobolSequence seq(1);
    double x = 0.0;
    for (std::uint32_t n = 0; n < 5000; ++n) {
        seq.next(std::span<double>(&x, 1));
        std::uint32_t g = n ^ (n >> 1), r = 0;
        for (int b = 0; b < 32; ++b) r |= ((g >> b) & 1u) << (31 - b);
        ASSERT_EQ(x, r / 4294967296.0) << n;
    }
}

TEST(Sobol, FirstTwoDimensionsFormZeroNets) {
    const RowMatrix pts = sobol_points(2, 1024);
    for (int m = 1; m <= 10; ++m) {
        const int n = 1 << m;
        for (int a = 0; a <= m; ++a) {
            const int b = m - a;
            std::vector<int> hits(static_cast<std::size_t>(n), 0);
            for (int r = 0; r < n; ++r) {
                const int ix = static_cast<int>(pts(r, 0) * (1 << a));
                const int iy = static_cast<int>(pts(r, 1) * (1 << b));
                ++hits[static_cast<std::size_t>(ix * (1 << b) + iy)];
            }
            for (int h : hits) ASSERT_EQ(h, 1) << "m=" << m << " a=" << a;
        }
    }
}

TEST(Sobol, SkipAndRangeAndDimensionLimits) {
    const RowMatrix all = sobol_points(5, 64);
    const RowMatrix tail = sobol_points(5, 32, 32);
    EXPECT_EQ(tail, all.bottomRows(32));
    EXPECT_GE(all.minCoeff(), 0.0);
    EXPECT_LT(all.maxCoeff(), 1.0);
    EXPECT_THROW(SobolSequence(0), DimTooLarge);
    EXPECT_THROW(SobolSequence(17), DimTooLarge);
    EXPECT_NO_THROW(SobolSequence(16));
    EXPECT_THROW(sobol_points(3, 0), ConfigError);
}

TEST(Sobol, LowerDiscrepancyThanIidUniform) {
    const RowMatrix sob = sobol_points(5, 1024, 1);
    const double d_sobol = l2_star_discrepancy(sob);
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    int beaten = 0;
    for (int trial = 0; trial < 100; ++trial) {
        RowMatrix iid(1024, 5);
        for (Eigen::Index k = 0; k < iid.size(); ++k) iid.data()[k] = u(rng);
        if (d_sobol < l2_star_discrepancy(iid)) ++beaten;
    }
    EXPECT_GE(beaten, 95);
}
