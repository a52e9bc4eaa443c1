#pragma once

#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nse/emulator.hpp"
#include "nse/errors.hpp"
#include "nse/gaussian_field.hpp"
#include "nse/pde.hpp"

namespace nse {

/// Anything that maps a batch of stencils to time derivatives.
template <class Op>
concept StencilOperator = requires(const Op& op, std::span<const Stencil> s, std::span<double> out) {
    op.evaluate(s, out);
};

/// The solver's own operator behind the StencilOperator interface.
struct ExactStencilOperator {
    PdeSystem system;
    double cell_spacing = 1.0;

    void evaluate(std::span<const Stencil> stencils, std::span<double> out) const {
        for (std::size_t k = 0; k < stencils.size(); ++k) out[k] = rhs_stencil(system, stencils[k], cell_spacing);
    }
};

struct ZeroStencilOperator {
    void evaluate(std::span<const Stencil>, std::span<double> out) const {
        for (double& v : out) v = 0.0;
    }
};

static_assert(StencilOperator<TrainedEmulator>);
static_assert(StencilOperator<ExactStencilOperator>);

struct RolloutResult {
    Trajectory trajectory;
    std::optional<long> diverged_at;  // first step whose output was non-finite
};

/// Explicit-Euler rollout with `op` as the stencil operator. A non-finite state
/// truncates the rollout; the remaining snapshots are filled with NaN.
template <StencilOperator Op>
RolloutResult nse_rollout(const Op& op, const Field2D& initial, const TimeSpec& time, Boundary boundary) {
    RolloutResult res;
    res.trajectory.dt = time.dt;
    res.trajectory.snapshots.reserve(static_cast<std::size_t>(time.n_steps) + 1);
    Field2D u = initial;
    u.boundary = boundary;
    u.time = time.t0;
    res.trajectory.snapshots.push_back(u);
    std::vector<double> rate(u.grid.cells());
    for (int k = 0; k < time.n_steps; ++k) {
        const Field2D& now = res.trajectory.snapshots.back();
        Field2D next = now;
        next.time = now.time + time.dt;
        if (!res.diverged_at) {
            const std::vector<Stencil> stencils = stencil_extract_all(now);
            op.evaluate(stencils, rate);
            for (std::size_t c = 0; c < rate.size(); ++c) next.values[c] += time.dt * rate[c];
            if (!next.all_finite()) res.diverged_at = k;
        }
        if (res.diverged_at) std::fill(next.values.begin(), next.values.end(), std::numeric_limits<double>::quiet_NaN());
        res.trajectory.snapshots.push_back(std::move(next));
    }
    return res;
}

inline constexpr double kLogRmseFloor = -16.0;

/// log10 RMSE per step k >= 1. Zero error is clamped to -16; a non-finite
/// prediction yields +inf.
inline std::vector<double> log_rmse_curve(const Trajectory& reference, const Trajectory& predicted) {
    if (reference.size() != predicted.size()) throw ShapeMismatch("trajectories differ in length");
    std::vector<double> out;
    out.reserve(reference.steps());
    for (std::size_t k = 1; k < reference.size(); ++k) {
        const Field2D& r = reference[k];
        const Field2D& p = predicted[k];
        if (!(r.grid == p.grid)) throw ShapeMismatch("trajectories differ in grid");
        double sse = 0.0;
        for (std::size_t c = 0; c < r.values.size(); ++c) {
            const double d = r.values[c] - p.values[c];
            sse += d * d;
        }
        const double rmse = std::sqrt(sse / static_cast<double>(r.values.size()));
        if (!std::isfinite(rmse))
            out.push_back(std::numeric_limits<double>::infinity());
        else if (rmse == 0.0)
            out.push_back(kLogRmseFloor);
        else
            out.push_back(std::max(std::log10(rmse), kLogRmseFloor));
    }
    return out;
}

/// Per-IC log-RMSE curves with their mean and 2-sigma band.
struct RolloutReport {
    std::vector<std::vector<double>> per_ic_log_rmse;  // n_ics x n_steps
    std::vector<double> mean_curve;
    std::vector<double> band_halfwidth;                 // 2 x sample standard deviation
    std::vector<std::size_t> excluded;                  // diverged ICs per step
    std::vector<std::uint64_t> ic_seeds;
    std::vector<long> diverged_at;                      // -1 when the rollout stayed finite
    std::string strategy;
    std::string system;
    double diffusion = 0.0;
    std::uint64_t train_seed = 0;

    std::size_t n_ics() const { return per_ic_log_rmse.size(); }
    std::size_t n_steps() const { return mean_curve.size(); }
    double final_mean() const {
        return mean_curve.empty() ? std::numeric_limits<double>::quiet_NaN() : mean_curve.back();
    }
};

/// Recomputes mean/band/exclusions from per-IC rows; +inf entries are excluded.
inline void aggregate(RolloutReport& rep) {
    const std::size_t steps = rep.per_ic_log_rmse.empty() ? 0 : rep.per_ic_log_rmse.front().size();
    rep.mean_curve.assign(steps, 0.0);
    rep.band_halfwidth.assign(steps, 0.0);
    rep.excluded.assign(steps, 0);
    for (std::size_t k = 0; k < steps; ++k) {
        double sum = 0.0;
        std::size_t used = 0;
        for (const auto& row : rep.per_ic_log_rmse) {
            if (row.size() != steps) throw ShapeMismatch("per-IC curves differ in length");
            if (std::isfinite(row[k])) {
                sum += row[k];
                ++used;
            }
        }
        rep.excluded[k] = rep.per_ic_log_rmse.size() - used;
        if (used == 0) {
            rep.mean_curve[k] = std::numeric_limits<double>::infinity();
            rep.band_halfwidth[k] = 0.0;
            continue;
        }
        const double mean = sum / static_cast<double>(used);
        double ss = 0.0;
        for (const auto& row : rep.per_ic_log_rmse)
            if (std::isfinite(row[k])) ss += (row[k] - mean) * (row[k] - mean);
        rep.mean_curve[k] = mean;
        rep.band_halfwidth[k] = used > 1 ? 2.0 * std::sqrt(ss / static_cast<double>(used - 1)) : 0.0;
    }
}

/// Stacks the IC rows of two reports and re-aggregates.
inline RolloutReport concat_reports(const RolloutReport& a, const RolloutReport& b) {
    RolloutReport out = a;
    out.per_ic_log_rmse.insert(out.per_ic_log_rmse.end(), b.per_ic_log_rmse.begin(), b.per_ic_log_rmse.end());
    out.ic_seeds.insert(out.ic_seeds.end(), b.ic_seeds.begin(), b.ic_seeds.end());
    out.diverged_at.insert(out.diverged_at.end(), b.diverged_at.begin(), b.diverged_at.end());
    aggregate(out);
    return out;
}

/// Rolls `op` out from one GP initial condition per seed and scores it against
/// the full-order solver over the whole horizon.
template <StencilOperator Op>
RolloutReport evaluate_strategy(const Op& op, const PdeSystem& sys, const GridSpec& grid, const GpSpec& gp,
                                std::span<const std::uint64_t> eval_seeds, const TimeSpec& time) {
    RolloutReport rep;
    rep.system = std::string(to_string(sys.kind));
    rep.diffusion = sys.diffusion;
    for (std::uint64_t seed : eval_seeds) {
        GpSpec spec = gp;
        spec.seed = seed;
        const Field2D u0 = initial_condition(sys, spec, grid, time.t0);
        const Trajectory reference = simulate(u0, sys, time);
        const RolloutResult pred = nse_rollout(op, u0, time, sys.boundary);
        rep.per_ic_log_rmse.push_back(log_rmse_curve(reference, pred.trajectory));
        rep.ic_seeds.push_back(seed);
        rep.diverged_at.push_back(pred.diverged_at.value_or(-1));
    }
    aggregate(rep);
    return rep;
}

} // namespace nse
