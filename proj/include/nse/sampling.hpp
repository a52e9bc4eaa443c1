#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nse/errors.hpp"
#include "nse/gaussian_field.hpp"
#include "nse/pca.hpp"
#include "nse/pde.hpp"
#include "nse/seeds.hpp"
#include "nse/sobol.hpp"
#include "nse/stencil_dataset.hpp"

namespace nse {

enum class Sequence { Uniform, Sobol };

inline std::string_view to_string(Sequence s) { return s == Sequence::Sobol ? "sobol" : "uniform"; }

/// Unit-cube point source for designed stencils: seeded i.i.d. uniform draws,
/// or the unscrambled Sobol' stream starting after its origin point.
class UnitCubeSampler {
public:
    UnitCubeSampler(Sequence seq, std::uint64_t seed, int dim = static_cast<int>(kStencilSize))
        : seq_(seq), rng_(seed), sobol_(dim) {
        if (seq_ == Sequence::Sobol) sobol_.skip(1);
    }

    void next(std::span<double> out) {
        if (seq_ == Sequence::Sobol) {
            sobol_.next(out);
            return;
        }
        for (double& v : out) v = unit_(rng_);
    }

private:
    Sequence seq_;
    std::mt19937_64 rng_;
    std::uniform_real_distribution<double> unit_{0.0, 1.0};
    SobolSequence sobol_;
};

/// Space-filling stencils affinely mapped from [0,1]^5 into [lo, hi]^5.
inline std::vector<Stencil> random_stencils(DataRange range, std::size_t count, Sequence seq, std::uint64_t seed) {
    if (!(range.lo < range.hi)) throw ConfigError("random_stencils needs lo < hi");
    UnitCubeSampler sampler(seq, seed);
    std::vector<Stencil> out(count);
    const double width = range.hi - range.lo;
    for (Stencil& s : out) {
        sampler.next(s);
        for (double& v : s) v = range.lo + v * width;
    }
    return out;
}

/// PCA-guided design: draw z~ in [0,1]^5, map to the score box
/// z_k = L_k + z~_k (U_k - L_k), back-project S = mu + P z, and keep S only if
/// every component lies in `range`. Repeats until `count` stencils are accepted.
inline std::vector<Stencil> pca_stencils(const PCABasis& basis, DataRange range, std::size_t count, Sequence seq,
                                         std::uint64_t seed, std::size_t max_attempts) {
    if (count < 1) throw ConfigError("pca_stencils needs count >= 1");
    if (max_attempts < count) throw ConfigError("pca_stencils needs max_attempts >= count");
    UnitCubeSampler sampler(seq, seed);
    std::vector<Stencil> out;
    out.reserve(count);
    const StencilVec width = basis.score_hi - basis.score_lo;
    std::array<double, kStencilSize> unit{};
    std::size_t attempts = 0;
    while (out.size() < count) {
        if (attempts == max_attempts) {
            const double rate = static_cast<double>(out.size()) / static_cast<double>(attempts);
            throw AcceptanceTooLow("PCA design accepted " + std::to_string(out.size()) + " of " +
                                       std::to_string(attempts) + " draws (rate " + std::to_string(rate) + ")",
                                   rate);
        }
        ++attempts;
        sampler.next(unit);
        const StencilVec z = basis.score_lo + width.cwiseProduct(Eigen::Map<const StencilVec>(unit.data()));
        const StencilVec s = basis.back_project(z);
        bool inside = true;
        for (Eigen::Index k = 0; k < s.size(); ++k) inside = inside && range.contains(s[k]);
        if (inside) out.push_back(to_stencil(s));
    }
    return out;
}

enum class Strategy {
    ShortTraj,
    RandomUniform,
    RandomSobol,
    PcaUniform,
    PcaSobol,
    DsDiffInit,
    DsExtend,
    DsRandomUniform,
    DsRandomSobol,
    DsPcaUniform,
    DsPcaSobol,
};

inline constexpr std::array<Strategy, 11> kAllStrategies{
    Strategy::ShortTraj,     Strategy::RandomUniform,   Strategy::RandomSobol, Strategy::PcaUniform,
    Strategy::PcaSobol,      Strategy::DsDiffInit,      Strategy::DsExtend,    Strategy::DsRandomUniform,
    Strategy::DsRandomSobol, Strategy::DsPcaUniform,    Strategy::DsPcaSobol,
};

inline std::string_view to_string(Strategy s) {
    switch (s) {
    case Strategy::ShortTraj: return "short-traj";
    case Strategy::RandomUniform: return "random-uniform";
    case Strategy::RandomSobol: return "random-sobol";
    case Strategy::PcaUniform: return "pca-uniform";
    case Strategy::PcaSobol: return "pca-sobol";
    case Strategy::DsDiffInit: return "ds+diff-init";
    case Strategy::DsExtend: return "ds+extend";
    case Strategy::DsRandomUniform: return "ds+random-uniform";
    case Strategy::DsRandomSobol: return "ds+random-sobol";
    case Strategy::DsPcaUniform: return "ds+pca-uniform";
    case Strategy::DsPcaSobol: return "ds+pca-sobol";
    }
    return "?";
}

inline Strategy strategy_from_string(std::string_view s) {
    for (Strategy k : kAllStrategies)
        if (to_string(k) == s) return k;
    throw ConfigError("unknown strategy '" + std::string(s) + "'");
}

inline bool is_mixed(Strategy s) { return static_cast<int>(s) >= static_cast<int>(Strategy::DsDiffInit); }

inline Sequence sequence_of(Strategy s) {
    switch (s) {
    case Strategy::RandomSobol:
    case Strategy::PcaSobol:
    case Strategy::DsRandomSobol:
    case Strategy::DsPcaSobol: return Sequence::Sobol;
    default: return Sequence::Uniform;
    }
}

/// Origin tag of the samples a strategy synthesizes or harvests (the augment
/// half for mixed strategies).
inline Origin augment_origin(Strategy s) {
    switch (s) {
    case Strategy::ShortTraj: return Origin::Trajectory;
    case Strategy::RandomUniform:
    case Strategy::DsRandomUniform: return Origin::RandomUniform;
    case Strategy::RandomSobol:
    case Strategy::DsRandomSobol: return Origin::RandomSobol;
    case Strategy::PcaUniform:
    case Strategy::DsPcaUniform: return Origin::PcaUniform;
    case Strategy::PcaSobol:
    case Strategy::DsPcaSobol: return Origin::PcaSobol;
    case Strategy::DsDiffInit: return Origin::DiffInit;
    case Strategy::DsExtend: return Origin::Extend;
    }
    return Origin::Trajectory;
}

inline bool is_random(Strategy s) {
    const Origin o = augment_origin(s);
    return o == Origin::RandomUniform || o == Origin::RandomSobol;
}

inline bool is_pca(Strategy s) {
    const Origin o = augment_origin(s);
    return o == Origin::PcaUniform || o == Origin::PcaSobol;
}

/// Everything a strategy builder needs besides the strategy itself.
struct DesignContext {
    PdeSystem system;
    GridSpec grid;
    double dt = 1e-3;
    int short_steps = 10;
    GpSpec gp;                                   // training initial condition
    std::optional<DataRange> admissible_range;   // overrides the observed range for Random designs
    double lambda = 0.5;                         // augment share of a mixed dataset
    std::size_t max_attempts_factor = 100;
    std::uint64_t seed = 0;
};

namespace detail {
inline Trajectory short_run(const Field2D& initial, const DesignContext& ctx) {
    return simulate(initial, ctx.system, TimeSpec{ctx.dt, ctx.short_steps, initial.time});
}

inline StencilDataset synthesize(Strategy s, const StencilDataset& source, const DesignContext& ctx,
                                 std::size_t count) {
    const DataRange observed = source.range.value();
    std::vector<Stencil> stencils;
    const std::uint64_t draw_seed = derive_seed(ctx.seed, "design-draws");
    if (is_random(s)) {
        stencils = random_stencils(ctx.admissible_range.value_or(observed), count, sequence_of(s), draw_seed);
    } else {
        const PCABasis basis = fit_pca(source);
        stencils = pca_stencils(basis, observed, count, sequence_of(s), draw_seed, ctx.max_attempts_factor * count);
    }
    StencilDataset ds = label_synthetic(stencils, ctx.system, ctx.grid.spacing(), augment_origin(s));
    ds.range = observed;
    return ds;
}
} // namespace detail

/// Pure strategies built from an existing short run (`short_run.steps()`
/// transitions). Random and PCA designs use the short run's observed range.
inline StencilDataset build_pure(Strategy s, const Trajectory& short_run, const DesignContext& ctx,
                                 std::size_t budget) {
    if (is_mixed(s)) throw ConfigError(std::string(to_string(s)) + " is not a pure strategy");
    const StencilDataset source = harvest(short_run, ctx.dt);
    if (s == Strategy::ShortTraj) {
        if (budget != source.count())
            throw ConfigError("short-traj budget must equal steps * N^2 = " + std::to_string(source.count()));
        return source;
    }
    return detail::synthesize(s, source, ctx, budget);
}

/// Pure strategies: everything is derived from one short run of
/// `ctx.short_steps` steps from the GP initial condition.
inline StencilDataset build_pure(Strategy s, const DesignContext& ctx, std::size_t budget) {
    const Field2D u0 = initial_condition(ctx.system, ctx.gp, ctx.grid);
    return build_pure(s, detail::short_run(u0, ctx), ctx, budget);
}

/// Mixed strategies: a uniformly downsampled full run combined with an
/// augment batch. With lambda = 0.5 both halves hold `budget_each` samples.
inline StencilDataset build_mixed(Strategy s, const Trajectory& full_run, const DesignContext& ctx,
                                  std::size_t budget_each) {
    if (!is_mixed(s)) throw ConfigError(std::string(to_string(s)) + " is not a mixed strategy");
    if (!(ctx.lambda > 0.0 && ctx.lambda < 1.0)) throw ConfigError("mixture lambda must lie in (0, 1)");
    const std::size_t total = 2 * budget_each;
    const auto augment_count = static_cast<std::size_t>(std::llround(ctx.lambda * static_cast<double>(total)));
    const std::size_t base_count = total - augment_count;

    const StencilDataset full = harvest(full_run, ctx.dt);
    const StencilDataset base = downsample_uniform(full, base_count, derive_seed(ctx.seed, "downsample"));

    StencilDataset augment;
    if (s == Strategy::DsDiffInit || s == Strategy::DsExtend) {
        Field2D start;
        if (s == Strategy::DsDiffInit) {
            GpSpec fresh = ctx.gp;
            fresh.seed = derive_seed(ctx.seed, "diff-init-gp");
            start = initial_condition(ctx.system, fresh, ctx.grid);
        } else {
            start = full_run.back();
        }
        const StencilDataset burst = harvest(detail::short_run(start, ctx), ctx.dt, augment_origin(s));
        augment = downsample_uniform(burst, augment_count, derive_seed(ctx.seed, "augment-downsample"));
    } else {
        augment = detail::synthesize(s, full, ctx, augment_count);
    }
    StencilDataset out = concat(base, augment);
    // Base and augment share the full run's range for synthetic augments.
    if (!is_on_trajectory(augment_origin(s))) out.range = full.range;
    return out;
}

inline StencilDataset build_dataset(Strategy s, const DesignContext& ctx, std::size_t budget,
                                    const Trajectory* full_run) {
    if (!is_mixed(s)) return build_pure(s, ctx, budget);
    if (full_run == nullptr) throw ConfigError("mixed strategies need a full-run trajectory");
    return build_mixed(s, *full_run, ctx, budget);
}

} // namespace nse
