#include <cmath>
#include <random>

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include "nse/pca.hpp"

using namespace nse;

namespace {

StencilDataset dataset_of(const std::vector<Stencil>& inputs) {
    StencilDataset ds;
    for (const Stencil& s : inputs) ds.samples.push_back({s, 0.0, {}});
    return ds;
}

StencilMat random_symmetric(std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    StencilMat a;
    for (int r = 0; r < 5; ++r)
        for (int c = 0; c < 5; ++c) a(r, c) = n(rng);
    return a * a.transpose();
}

} // namespace

TEST(JacobiEigen, AgreesWithEigenSolver) {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 200; ++trial) {
        const StencilMat a = random_symmetric(rng);
        const SymmetricEigen mine = jacobi_eigen(a);
        Eigen::SelfAdjointEigenSolver<StencilMat> ref(a);
        const double scale = a.norm();
        for (int k = 0; k < 5; ++k) {
            EXPECT_NEAR(mine.values[k], ref.eigenvalues()[4 - k], 1e-12 * scale);
            // Eigenvectors up to sign.
            const double dot = std::abs(mine.vectors.col(k).dot(ref.eigenvectors().col(4 - k)));
            EXPECT_NEAR(dot, 1.0, 1e-9);
        }
        EXPECT_LE((mine.vectors.transpose() * mine.vectors - StencilMat::Identity()).cwiseAbs().maxCoeff(), 1e-13);
        const StencilMat rebuilt = mine.vectors * mine.values.asDiagonal() * mine.vectors.transpose();
        EXPECT_LE((rebuilt - a).cwiseAbs().maxCoeff(), 1e-12 * scale);
    }
}

TEST(JacobiEigen, SignConventionAndOrder) {
    std::mt19937_64 rng(3);
    const SymmetricEigen e = jacobi_eigen(random_symmetric(rng));
    for (int k = 0; k < 5; ++k) {
        Eigen::Index arg = 0;
        e.vectors.col(k).cwiseAbs().maxCoeff(&arg);
        EXPECT_GT(e.vectors(arg, k), 0.0);
        if (k > 0) {
            EXPECT_GE(e.values[k - 1], e.values[k]);
        }
    }
}

TEST(FitPca, AllEqualSamples) {
    const Stencil s{0.3, -1.0, 2.0, 0.0, 5.0};
    const PCABasis b = fit_pca(dataset_of({s, s, s, s, s, s, s}));
    EXPECT_EQ(to_stencil(b.mean), s);
    EXPECT_TRUE(b.rank_deficient());
    for (int k = 0; k < 5; ++k) {
        EXPECT_EQ(b.score_lo[k], 0.0);
        EXPECT_EQ(b.score_hi[k], 0.0);
    }
}

TEST(FitPca, TwoSampleDiagonalGivesUniformFirstComponent) {
    const PCABasis b = fit_pca(dataset_of({{0, 0, 0, 0, 0}, {1, 1, 1, 1, 1}}));
    for (int k = 0; k < 5; ++k) EXPECT_NEAR(b.loadings(k, 0), 1.0 / std::sqrt(5.0), 1e-12);
    // Sample covariance (divisor Z - 1 = 1) of the pair: 0.5 * ones, top eigenvalue 2.5.
    EXPECT_NEAR(b.variances[0], 2.5, 1e-12);
    for (int k = 1; k < 5; ++k) {
        EXPECT_NEAR(b.variances[k], 0.0, 1e-12);
        EXPECT_TRUE(b.deficient[k]);
    }
    EXPECT_FALSE(b.deficient[0]);
    EXPECT_NEAR(b.score_hi[0] - b.score_lo[0], std::sqrt(5.0), 1e-12);
}

TEST(FitPca, IsotropicGaussianHasEqualEigenvalues) {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<Stencil> xs(100000);
    for (Stencil& s : xs)
        for (double& v : s) v = n(rng);
    const PCABasis b = fit_pca(dataset_of(xs));
    EXPECT_LE(b.variances[0] / b.variances[4], 1.1);
    EXPECT_FALSE(b.rank_deficient());
}

TEST(FitPca, FullRankRoundTripAndScoreHull) {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<Stencil> xs(500);
    for (Stencil& s : xs) {
        const double common = n(rng);
        for (double& v : s) v = 3.0 * common + 0.2 * n(rng) + 1.0;
    }
    const PCABasis b = fit_pca(dataset_of(xs));
    for (const Stencil& s : xs) {
        const StencilVec z = b.scores(to_vec(s));
        EXPECT_LE((b.back_project(z) - to_vec(s)).cwiseAbs().maxCoeff(), 1e-10);
        for (int k = 0; k < 5; ++k) {
            EXPECT_GE(z[k], b.score_lo[k]);
            EXPECT_LE(z[k], b.score_hi[k]);
        }
    }
    // Arbitrary stencils, far from the data, also round-trip.
    std::uniform_real_distribution<double> u(-100.0, 100.0);
    for (int t = 0; t < 100; ++t) {
        StencilVec s;
        for (int k = 0; k < 5; ++k) s[k] = u(rng);
        EXPECT_LE((b.back_project(b.scores(s)) - s).cwiseAbs().maxCoeff(), 1e-10);
    }
    EXPECT_THROW(fit_pca(StencilDataset{}), ConfigError);
}
