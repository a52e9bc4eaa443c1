#include <algorithm>
#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "nse/sampling.hpp"

using namespace nse;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Two-sided one-sample Kolmogorov-Smirnov statistic against U(lo, hi).
double ks_uniform(std::vector<double> x, double lo, double hi) {
    std::sort(x.begin(), x.end());
    const double n = static_cast<double>(x.size());
    double d = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double f = (x[k] - lo) / (hi - lo);
        d = std::max({d, (k + 1) / n - f, f - k / n});
    }
    return d;
}

// Largest deviation of any per-axis bin count from its expectation.
double bin_deviation(const std::vector<Stencil>& pts, int bins) {
    double worst = 0.0;
    for (std::size_t axis = 0; axis < kStencilSize; ++axis) {
        std::vector<int> counts(static_cast<std::size_t>(bins), 0);
        for (const Stencil& s : pts) ++counts[std::min(bins - 1, static_cast<int>(s[axis] * bins))];
        for (int c : counts) worst = std::max(worst, std::abs(c - static_cast<double>(pts.size()) / bins));
    }
    return worst;
}

PCABasis correlated_basis(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    StencilDataset ds;
    for (int k = 0; k < 2000; ++k) {
        const double common = n(rng);
        Stencil s;
        for (double& v : s) v = 0.3 * common + 0.05 * n(rng);
        ds.samples.push_back({s, 0.0, {}});
    }
    return fit_pca(ds);
}

DesignContext ad_context(std::uint64_t seed) {
    DesignContext ctx;
    ctx.system = PdeSystem::make(PdeKind::AdvectionDiffusion, 1e-3);
    ctx.grid = GridSpec(32);
    ctx.gp.seed = 11;
    ctx.seed = seed;
    return ctx;
}

} // namespace

TEST(RandomStencils, UnitRangeIsIdentity) {
    const auto pts = random_stencils({0.0, 1.0}, 64, Sequence::Sobol, 0);
    const RowMatrix ref = sobol_points(5, 64, 1);
    for (std::size_t r = 0; r < pts.size(); ++r)
        for (int d = 0; d < 5; ++d) EXPECT_EQ(pts[r][d], ref(static_cast<Eigen::Index>(r), d));
    EXPECT_THROW(random_stencils({1.0, 1.0}, 4, Sequence::Uniform, 0), ConfigError);
}

TEST(RandomStencils, RangeAndMean) {
    for (Sequence seq : {Sequence::Uniform, Sequence::Sobol}) {
        const auto pts = random_stencils({-1.0, 3.0}, 10240, seq, 5);
        std::array<double, 5> mean{};
        for (const Stencil& s : pts)
            for (int d = 0; d < 5; ++d) {
                EXPECT_GE(s[d], -1.0);
                EXPECT_LE(s[d], 3.0);
                mean[d] += s[d] / 10240.0;
            }
        for (double m : mean) EXPECT_NEAR(m, 1.0, 0.01 * 4.0);
    }
}

TEST(RandomStencils, UniformDeterministicInSeedSobolIgnoresIt) {
    EXPECT_EQ(random_stencils({0, 1}, 10, Sequence::Uniform, 1), random_stencils({0, 1}, 10, Sequence::Uniform, 1));
    EXPECT_NE(random_stencils({0, 1}, 10, Sequence::Uniform, 1), random_stencils({0, 1}, 10, Sequence::Uniform, 2));
    EXPECT_EQ(random_stencils({0, 1}, 10, Sequence::Sobol, 1), random_stencils({0, 1}, 10, Sequence::Sobol, 2));
}

TEST(RandomStencils, SobolBinDeviationBeatsIid) {
    const double sobol = bin_deviation(random_stencils({0, 1}, 10240, Sequence::Sobol, 0), 32);
    int beaten = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed)
        if (sobol < bin_deviation(random_stencils({0, 1}, 10240, Sequence::Uniform, 1000 + seed), 32)) ++beaten;
    EXPECT_GE(beaten, 95);
}

TEST(PcaStencils, DegenerateBoxReturnsMean) {
    PCABasis b;
    b.mean << 0.1, 0.2, 0.3, 0.4, 0.5;
    const auto pts = pca_stencils(b, {0.0, 1.0}, 20, Sequence::Uniform, 3, 20);
    for (const Stencil& s : pts) EXPECT_EQ(s, to_stencil(b.mean));
    EXPECT_THROW(pca_stencils(b, {0.35, 1.0}, 20, Sequence::Uniform, 3, 2000), AcceptanceTooLow);
}

TEST(PcaStencils, UnboundedRangeAcceptsEveryDraw) {
    const PCABasis b = correlated_basis(1);
    EXPECT_EQ(pca_stencils(b, {-kInf, kInf}, 500, Sequence::Sobol, 0, 500).size(), 500u);
    EXPECT_EQ(pca_stencils(b, {-kInf, kInf}, 500, Sequence::Uniform, 4, 500).size(), 500u);
}

TEST(PcaStencils, AcceptedScoresStayInBoxAndInRange) {
    const PCABasis b = correlated_basis(2);
    const DataRange range{-0.5, 0.5};
    for (Sequence seq : {Sequence::Uniform, Sequence::Sobol}) {
        const auto pts = pca_stencils(b, range, 2000, seq, 6, 200000);
        ASSERT_EQ(pts.size(), 2000u);
        for (const Stencil& s : pts) {
            for (double v : s) EXPECT_TRUE(range.contains(v));
            const StencilVec z = b.scores(to_vec(s));
            for (int k = 0; k < 5; ++k) {
                EXPECT_GE(z[k], b.score_lo[k] - 1e-10);
                EXPECT_LE(z[k], b.score_hi[k] + 1e-10);
            }
        }
        EXPECT_EQ(pca_stencils(b, range, 50, seq, 6, 5000), pca_stencils(b, range, 50, seq, 6, 5000));
    }
}

TEST(PcaStencils, UnfilteredScoresAreUniformPerComponent) {
    const PCABasis b = correlated_basis(3);
    const auto pts = pca_stencils(b, {-kInf, kInf}, 10240, Sequence::Uniform, 12, 10240);
    const double critical = 1.628 / std::sqrt(10240.0);  // alpha = 0.01
    for (int k = 0; k < 5; ++k) {
        std::vector<double> z;
        for (const Stencil& s : pts) z.push_back(b.scores(to_vec(s))[k]);
        EXPECT_LT(ks_uniform(z, b.score_lo[k], b.score_hi[k]), critical) << "component " << k;
    }
}

TEST(PcaStencils, Preconditions) {
    const PCABasis b = correlated_basis(4);
    EXPECT_THROW(pca_stencils(b, {0, 1}, 0, Sequence::Uniform, 0, 10), ConfigError);
    EXPECT_THROW(pca_stencils(b, {0, 1}, 10, Sequence::Uniform, 0, 9), ConfigError);
}

TEST(Strategy, IdsRoundTrip) {
    for (Strategy s : kAllStrategies) EXPECT_EQ(strategy_from_string(to_string(s)), s);
    EXPECT_THROW(strategy_from_string("pca"), ConfigError);
    EXPECT_EQ(std::count_if(kAllStrategies.begin(), kAllStrategies.end(), is_mixed), 6);
}

TEST(BuildPure, CountsAndRanges) {
    const DesignContext ctx = ad_context(1);
    const StencilDataset st = build_pure(Strategy::ShortTraj, ctx, 10240);
    ASSERT_EQ(st.count(), 10240u);
    for (Strategy s : {Strategy::RandomUniform, Strategy::RandomSobol, Strategy::PcaUniform, Strategy::PcaSobol}) {
        const StencilDataset ds = build_pure(s, ctx, 10240);
        ASSERT_EQ(ds.count(), 10240u) << to_string(s);
        EXPECT_EQ(ds.range, st.range);
        EXPECT_EQ(ds.provenance_histogram().at(augment_origin(s)), 10240u);
        for (const auto& sample : ds.samples) {
            for (double v : sample.input) ASSERT_TRUE(st.range->contains(v));
            ASSERT_EQ(sample.label, rhs_stencil(ctx.system, sample.input, ctx.grid.spacing()));
        }
    }
    EXPECT_THROW(build_pure(Strategy::ShortTraj, ctx, 10000), ConfigError);
    EXPECT_THROW(build_pure(Strategy::DsExtend, ctx, 10240), ConfigError);
}

TEST(BuildPure, DeterministicGivenSeed) {
    const DesignContext ctx = ad_context(5);
    EXPECT_EQ(build_pure(Strategy::PcaUniform, ctx, 1000).samples, build_pure(Strategy::PcaUniform, ctx, 1000).samples);
}

TEST(BuildPure, ConstantShortRunTakesDegeneratePcaPath) {
    const DesignContext ctx = ad_context(2);
    const Trajectory flat = simulate(Field2D(ctx.grid, Boundary::Periodic, 0.7), ctx.system, {1e-3, 10, 0.0});
    const StencilDataset ds = build_pure(Strategy::PcaUniform, flat, ctx, 500);
    ASSERT_EQ(ds.count(), 500u);
    for (const auto& s : ds.samples) EXPECT_EQ(s.input, (Stencil{0.7, 0.7, 0.7, 0.7, 0.7}));
}

TEST(BuildMixed, CountsSplitAndContinuation) {
    const DesignContext ctx = ad_context(3);
    const Field2D u0 = initial_condition(ctx.system, ctx.gp, ctx.grid);
    const Trajectory full = simulate(u0, ctx.system, {1e-3, 1000, 0.0});
    for (Strategy s : kAllStrategies) {
        if (!is_mixed(s)) continue;
        const StencilDataset ds = build_mixed(s, full, ctx, 10240);
        ASSERT_EQ(ds.count(), 20480u) << to_string(s);
        const auto h = ds.provenance_histogram();
        EXPECT_EQ(h.at(Origin::Trajectory), 10240u);
        EXPECT_EQ(h.at(augment_origin(s)), 10240u);
        if (s == Strategy::DsExtend) {
            // The burst starts at the terminal snapshot; its step-0 samples are its stencils.
            for (std::size_t k = 10240; k < ds.count(); ++k) {
                const auto& p = ds.samples[k].provenance;
                if (p.step == 0) {
                    ASSERT_EQ(ds.samples[k].input, stencil_extract(full.back(), p.i, p.j));
                }
            }
        }
    }
}

TEST(BuildMixed, FullRunScoreBoxContainsShortPrefixBox) {
    const DesignContext ctx = ad_context(4);
    const Field2D u0 = initial_condition(ctx.system, ctx.gp, ctx.grid);
    const Trajectory full = simulate(u0, ctx.system, {1e-3, 1000, 0.0});
    const StencilDataset all = harvest(full, 1e-3);
    const PCABasis basis = fit_pca(all);
    StencilDataset prefix;
    prefix.samples.assign(all.samples.begin(), all.samples.begin() + 10240);
    // Score ranges of the prefix projected onto the full basis are nested.
    for (const auto& s : prefix.samples) {
        const StencilVec z = basis.scores(to_vec(s.input));
        for (int k = 0; k < 5; ++k) {
            ASSERT_GE(z[k], basis.score_lo[k]);
            ASSERT_LE(z[k], basis.score_hi[k]);
        }
    }
}
