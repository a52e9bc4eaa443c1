#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nse/errors.hpp"
#include "nse/pde.hpp"
#include "nse/seeds.hpp"

namespace nse {

/// Where a training pair came from. The first three are harvested from
/// simulated trajectories; the rest are one-step labels of designed stencils.
enum class Origin : std::uint8_t {
    Trajectory,
    DiffInit,
    Extend,
    RandomUniform,
    RandomSobol,
    PcaUniform,
    PcaSobol,
};

inline constexpr bool is_on_trajectory(Origin o) {
    return o == Origin::Trajectory || o == Origin::DiffInit || o == Origin::Extend;
}

inline std::string_view to_string(Origin o) {
    switch (o) {
    case Origin::Trajectory: return "trajectory";
    case Origin::DiffInit: return "diff-init";
    case Origin::Extend: return "extend";
    case Origin::RandomUniform: return "random-uniform";
    case Origin::RandomSobol: return "random-sobol";
    case Origin::PcaUniform: return "pca-uniform";
    case Origin::PcaSobol: return "pca-sobol";
    }
    return "?";
}

inline Origin origin_from_string(std::string_view s) {
    for (int k = 0; k <= static_cast<int>(Origin::PcaSobol); ++k)
        if (to_string(static_cast<Origin>(k)) == s) return static_cast<Origin>(k);
    throw ConfigError("unknown sample origin '" + std::string(s) + "'");
}

struct Provenance {
    Origin origin = Origin::Trajectory;
    std::int32_t step = -1;  // on-trajectory samples only
    std::int32_t i = -1;
    std::int32_t j = -1;

    bool operator==(const Provenance&) const = default;
};

struct StencilSample {
    Stencil input{};
    double label = 0.0;
    Provenance provenance;

    bool operator==(const StencilSample&) const = default;
};

/// Scalar state range [lo, hi] shared by all stencil components.
struct DataRange {
    double lo = 0.0;
    double hi = 0.0;

    bool contains(double v) const { return v >= lo && v <= hi; }
    bool operator==(const DataRange&) const = default;
};

inline DataRange hull(const DataRange& a, const DataRange& b) {
    return {std::min(a.lo, b.lo), std::max(a.hi, b.hi)};
}

inline std::optional<DataRange> hull(const std::optional<DataRange>& a, const std::optional<DataRange>& b) {
    if (!a) return b;
    if (!b) return a;
    return hull(*a, *b);
}

/// Ordered labeled stencils. `range` is the center-state hull of the
/// on-trajectory source it was built from; synthetic samples never widen it.
struct StencilDataset {
    std::vector<StencilSample> samples;
    std::optional<DataRange> range;
    std::size_t dropped = 0;  // synthetic stencils rejected for non-finite labels

    std::size_t count() const noexcept { return samples.size(); }
    bool empty() const noexcept { return samples.empty(); }

    std::map<Origin, std::size_t> provenance_histogram() const {
        std::map<Origin, std::size_t> h;
        for (const auto& s : samples) ++h[s.provenance.origin];
        return h;
    }
};

namespace detail {
inline void require_finite(const StencilSample& s) {
    for (double v : s.input)
        if (!std::isfinite(v)) throw NonFinite("stencil input is not finite", s.provenance.step);
    if (!std::isfinite(s.label)) throw NonFinite("stencil label is not finite", s.provenance.step);
}
} // namespace detail

/// One sample per (transition, cell): input S(u^k) and label (u^{k+1} - u^k) / dt.
inline StencilDataset harvest(const Trajectory& traj, double dt, Origin origin = Origin::Trajectory) {
    if (traj.size() < 2) throw ConfigError("harvest needs a trajectory with at least one transition");
    if (!(dt > 0.0)) throw ConfigError("harvest needs a positive time step");
    if (!is_on_trajectory(origin)) throw ConfigError("harvest origin must be an on-trajectory kind");
    const int n = traj.front().n();
    StencilDataset ds;
    ds.samples.reserve(traj.steps() * traj.front().grid.cells());
    DataRange range{traj.front().values.front(), traj.front().values.front()};
    for (std::size_t k = 0; k + 1 < traj.size(); ++k) {
        const Field2D& now = traj[k];
        const Field2D& next = traj[k + 1];
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                StencilSample s;
                s.input = stencil_extract(now, i, j);
                s.label = (next.at(i, j) - now.at(i, j)) / dt;
                s.provenance = {origin, static_cast<std::int32_t>(k), i, j};
                detail::require_finite(s);
                range.lo = std::min(range.lo, s.input[kCenter]);
                range.hi = std::max(range.hi, s.input[kCenter]);
                ds.samples.push_back(s);
            }
    }
    ds.range = range;
    return ds;
}

/// Labels designed stencils with the exact operator. Stencils whose label is
/// not finite are dropped and counted in `dropped`.
inline StencilDataset label_synthetic(std::span<const Stencil> stencils, const PdeSystem& sys, double dx,
                                      Origin origin) {
    if (is_on_trajectory(origin)) throw ConfigError("synthetic labels need a synthetic origin");
    StencilDataset ds;
    ds.samples.reserve(stencils.size());
    for (const Stencil& st : stencils) {
        bool finite = true;
        for (double v : st) finite = finite && std::isfinite(v);
        if (!finite) throw NonFinite("synthetic stencil input is not finite");
        StencilSample s;
        s.input = st;
        s.provenance.origin = origin;
        try {
            s.label = rhs_stencil(sys, st, dx);
        } catch (const NonFinite&) {
            ++ds.dropped;
            continue;
        }
        ds.samples.push_back(s);
    }
    return ds;
}

/// Stride of the space-time lattice used by downsample_uniform.
inline std::size_t downsample_stride(std::size_t count, std::size_t target) {
    return target == 0 ? 0 : count / target;
}

/// Keeps `target` samples at indices phase + k * stride (stride = count / target)
/// over the harvest's (step, cell) ordering. The phase is seeded in [0, stride).
inline StencilDataset downsample_uniform(const StencilDataset& ds, std::size_t target, std::uint64_t seed) {
    if (target > ds.count())
        throw TargetTooLarge("downsample target " + std::to_string(target) + " exceeds dataset size " +
                             std::to_string(ds.count()));
    StencilDataset out;
    out.range = ds.range;
    out.dropped = ds.dropped;
    if (target == 0) return out;
    const std::size_t stride = downsample_stride(ds.count(), target);
    const std::size_t phase = splitmix64(seed) % stride;
    out.samples.reserve(target);
    for (std::size_t k = 0; k < target; ++k) out.samples.push_back(ds.samples[phase + k * stride]);
    return out;
}

inline StencilDataset concat(const StencilDataset& a, const StencilDataset& b) {
    StencilDataset out;
    out.samples.reserve(a.count() + b.count());
    out.samples.insert(out.samples.end(), a.samples.begin(), a.samples.end());
    out.samples.insert(out.samples.end(), b.samples.begin(), b.samples.end());
    out.range = hull(a.range, b.range);
    out.dropped = a.dropped + b.dropped;
    return out;
}

} // namespace nse
