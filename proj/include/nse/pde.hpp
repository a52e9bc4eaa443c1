#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "nse/errors.hpp"

namespace nse {

enum class Boundary { ZeroGradient, Periodic };

inline std::string_view to_string(Boundary b) {
    return b == Boundary::Periodic ? "periodic" : "zero-gradient";
}

/// Square N x N grid on [0, L]^2.
class GridSpec {
public:
    explicit GridSpec(int n_cells_per_side = 32, double domain_length = 1.0)
        : n_(n_cells_per_side), length_(domain_length), spacing_(domain_length / n_cells_per_side) {
        if (n_ < 3) throw ConfigError("grid needs at least 3 cells per side for a 5-point stencil");
        if (!(length_ > 0.0) || !std::isfinite(length_)) throw ConfigError("domain length must be positive");
    }

    int n() const noexcept { return n_; }
    double length() const noexcept { return length_; }
    double spacing() const noexcept { return spacing_; }
    std::size_t cells() const noexcept { return static_cast<std::size_t>(n_) * n_; }

    bool operator==(const GridSpec&) const = default;

private:
    int n_;
    double length_;
    double spacing_;
};

/// Scalar snapshot u_{i,j} stored row-major: values[i * N + j].
struct Field2D {
    GridSpec grid;
    Boundary boundary = Boundary::Periodic;
    std::vector<double> values;
    double time = 0.0;

    Field2D() = default;
    Field2D(GridSpec g, Boundary bc, double fill = 0.0, double t = 0.0)
        : grid(g), boundary(bc), values(g.cells(), fill), time(t) {}
    Field2D(GridSpec g, Boundary bc, std::vector<double> v, double t)
        : grid(g), boundary(bc), values(std::move(v)), time(t) {
        if (values.size() != grid.cells()) throw ShapeMismatch("field values do not match grid size");
    }

    int n() const noexcept { return grid.n(); }
    double& at(int i, int j) { return values[static_cast<std::size_t>(i) * grid.n() + j]; }
    double at(int i, int j) const { return values[static_cast<std::size_t>(i) * grid.n() + j]; }

    bool all_finite() const {
        for (double v : values)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

/// Canonical 5-point stencil: (center, i-1, i+1, j-1, j+1).
inline constexpr std::size_t kStencilSize = 5;
using Stencil = std::array<double, kStencilSize>;

enum StencilSlot : std::size_t { kCenter = 0, kWest = 1, kEast = 2, kSouth = 3, kNorth = 4 };

namespace detail {
inline int neighbor(int k, int offset, int n, Boundary bc) {
    int m = k + offset;
    if (m >= 0 && m < n) return m;
    if (bc == Boundary::Periodic) return (m + n) % n;
    return k;  // mirror ghost: ghost value equals the boundary cell
}
} // namespace detail

inline Stencil stencil_extract(const Field2D& f, int i, int j) {
    const int n = f.n();
    const Boundary bc = f.boundary;
    return {f.at(i, j),
            f.at(detail::neighbor(i, -1, n, bc), j),
            f.at(detail::neighbor(i, +1, n, bc), j),
            f.at(i, detail::neighbor(j, -1, n, bc)),
            f.at(i, detail::neighbor(j, +1, n, bc))};
}

/// All N^2 stencils of a field, in row-major cell order.
inline std::vector<Stencil> stencil_extract_all(const Field2D& f) {
    std::vector<Stencil> out;
    out.reserve(f.grid.cells());
    for (int i = 0; i < f.n(); ++i)
        for (int j = 0; j < f.n(); ++j) out.push_back(stencil_extract(f, i, j));
    return out;
}

inline constexpr double kAllenCahnRate = 5.0;

enum class PdeKind { AllenCahn, AdvectionDiffusion, Burgers, BurgersLinear };
enum class AdvectionScheme { Upwind, Central };

inline std::string_view to_string(PdeKind k) {
    switch (k) {
    case PdeKind::AllenCahn: return "allen-cahn";
    case PdeKind::AdvectionDiffusion: return "advection-diffusion";
    case PdeKind::Burgers: return "burgers";
    case PdeKind::BurgersLinear: return "burgers-linear";
    }
    return "?";
}

inline PdeKind pde_kind_from_string(std::string_view s) {
    for (PdeKind k : {PdeKind::AllenCahn, PdeKind::AdvectionDiffusion, PdeKind::Burgers, PdeKind::BurgersLinear})
        if (to_string(k) == s) return k;
    throw ConfigError("unknown PDE system '" + std::string(s) + "'");
}

inline Boundary natural_boundary(PdeKind k) {
    return k == PdeKind::AllenCahn ? Boundary::ZeroGradient : Boundary::Periodic;
}

/// One of the three PDE right-hand sides plus its boundary condition.
///
/// `velocity` is the advection velocity a for AdvectionDiffusion, the constant
/// transport speed eta for BurgersLinear, and a per-axis scale on the local
/// state u_c for the nonlinear Burgers transport. Allen-Cahn ignores it.
struct PdeSystem {
    PdeKind kind = PdeKind::AllenCahn;
    double diffusion = 1e-3;
    std::array<double, 2> velocity{1.0, 1.0};
    Boundary boundary = Boundary::ZeroGradient;
    AdvectionScheme scheme = AdvectionScheme::Upwind;

    PdeSystem() = default;
    PdeSystem(PdeKind k, double d, std::array<double, 2> v, Boundary bc,
              AdvectionScheme s = AdvectionScheme::Upwind)
        : kind(k), diffusion(d), velocity(v), boundary(bc), scheme(s) {
        validate();
    }

    static PdeSystem make(PdeKind k, double d, std::array<double, 2> v = {1.0, 1.0},
                          AdvectionScheme s = AdvectionScheme::Upwind) {
        return PdeSystem(k, d, v, natural_boundary(k), s);
    }

    void validate() const {
        if (!(diffusion > 0.0) || !std::isfinite(diffusion))
            throw ConfigError("diffusion coefficient must be positive");
        if (boundary != natural_boundary(kind))
            throw ConfigError(std::string(to_string(kind)) + " requires a " +
                              std::string(to_string(natural_boundary(kind))) + " boundary");
    }
};

namespace detail {
inline double laplacian5(const Stencil& s, double dx) {
    return (s[kWest] + s[kEast] + s[kSouth] + s[kNorth] - 4.0 * s[kCenter]) / (dx * dx);
}

// v * du/dx along one axis; `lo`/`hi` are the i-1 / i+1 neighbors.
inline double transport(double v, double lo, double c, double hi, double dx, AdvectionScheme scheme) {
    if (scheme == AdvectionScheme::Central) return v * (hi - lo) / (2.0 * dx);
    return v > 0.0 ? v * (c - lo) / dx : v * (hi - c) / dx;
}
} // namespace detail

/// Discrete time derivative F(S) of the center cell.
inline double rhs_stencil(const PdeSystem& sys, const Stencil& s, double dx) {
    const double c = s[kCenter];
    const double lap = detail::laplacian5(s, dx);
    double r = 0.0;
    switch (sys.kind) {
    case PdeKind::AllenCahn:
        r = sys.diffusion * lap + kAllenCahnRate * (c - c * c * c);
        break;
    case PdeKind::AdvectionDiffusion:
    case PdeKind::BurgersLinear:
        r = -detail::transport(sys.velocity[0], s[kWest], c, s[kEast], dx, sys.scheme)
            - detail::transport(sys.velocity[1], s[kSouth], c, s[kNorth], dx, sys.scheme)
            + sys.diffusion * lap;
        break;
    case PdeKind::Burgers:
        r = -detail::transport(sys.velocity[0] * c, s[kWest], c, s[kEast], dx, sys.scheme)
            - detail::transport(sys.velocity[1] * c, s[kSouth], c, s[kNorth], dx, sys.scheme)
            + sys.diffusion * lap;
        break;
    }
    if (!std::isfinite(r)) throw NonFinite("rhs_stencil produced a non-finite value");
    return r;
}

/// Full-field right-hand side, cell order matching Field2D::values.
inline std::vector<double> field_rhs(const Field2D& f, const PdeSystem& sys) {
    std::vector<double> out(f.grid.cells());
    const double dx = f.grid.spacing();
    for (int i = 0; i < f.n(); ++i)
        for (int j = 0; j < f.n(); ++j)
            out[static_cast<std::size_t>(i) * f.n() + j] = rhs_stencil(sys, stencil_extract(f, i, j), dx);
    return out;
}

struct TimeSpec {
    double dt = 1e-3;
    int n_steps = 1000;
    double t0 = 0.0;

    double t_end() const { return t0 + dt * n_steps; }
};

struct StabilityReport {
    double diffusion_number = 0.0;  // D dt / dx^2, explicit limit 1/4
    double cfl = 0.0;               // (|a_x| + |a_y|) dt / dx, limit 1
    double reaction_number = 0.0;   // dt max|f'(u)|, limit 2
    bool stable() const { return diffusion_number <= 0.25 && cfl <= 1.0 && reaction_number <= 2.0; }
    std::string message() const {
        std::ostringstream os;
        os << "D*dt/dx^2 = " << diffusion_number << " (limit 0.25), CFL = " << cfl
           << " (limit 1), dt*max|f'| = " << reaction_number << " (limit 2)";
        return os.str();
    }
};

/// Explicit-Euler stability numbers. `state_scale` bounds |u| for the
/// nonlinear Burgers speed and the Allen-Cahn reaction slope.
inline StabilityReport stability(const PdeSystem& sys, const GridSpec& grid, double dt,
                                 double state_scale = 1.0) {
    const double dx = grid.spacing();
    StabilityReport r;
    r.diffusion_number = sys.diffusion * dt / (dx * dx);
    double speed = 0.0;
    if (sys.kind == PdeKind::AdvectionDiffusion || sys.kind == PdeKind::BurgersLinear)
        speed = std::abs(sys.velocity[0]) + std::abs(sys.velocity[1]);
    else if (sys.kind == PdeKind::Burgers)
        speed = (std::abs(sys.velocity[0]) + std::abs(sys.velocity[1])) * state_scale;
    r.cfl = speed * dt / dx;
    if (sys.kind == PdeKind::AllenCahn) {
        const double s = std::max(1.0, state_scale);
        r.reaction_number = dt * std::max(kAllenCahnRate, kAllenCahnRate * std::abs(1.0 - 3.0 * s * s));
    }
    return r;
}

/// u <- u + dt * F(u), evaluated from the pre-step snapshot.
inline Field2D euler_step(const Field2D& f, const PdeSystem& sys, double dt, long step_index = -1) {
    if (dt < 0.0) throw ConfigError("time step must be non-negative");
    const std::vector<double> rhs = field_rhs(f, sys);
    Field2D next(f.grid, f.boundary, f.values, f.time + dt);
    for (std::size_t k = 0; k < next.values.size(); ++k) {
        next.values[k] += dt * rhs[k];
        if (!std::isfinite(next.values[k])) {
            const long i = static_cast<long>(k / f.n());
            const long j = static_cast<long>(k % f.n());
            std::ostringstream os;
            os << "euler step " << step_index << " blew up at cell (" << i << ", " << j << ")";
            throw NonFinite(os.str(), step_index, i, j);
        }
    }
    return next;
}

/// Ordered snapshots u^(0..K) with a shared time step.
struct Trajectory {
    std::vector<Field2D> snapshots;
    double dt = 0.0;

    std::size_t size() const noexcept { return snapshots.size(); }
    std::size_t steps() const noexcept { return snapshots.empty() ? 0 : snapshots.size() - 1; }
    const Field2D& front() const { return snapshots.front(); }
    const Field2D& back() const { return snapshots.back(); }
    const Field2D& operator[](std::size_t k) const { return snapshots[k]; }
};

inline Trajectory simulate(const Field2D& initial, const PdeSystem& sys, const TimeSpec& time) {
    if (initial.boundary != sys.boundary)
        throw ConfigError("initial field boundary does not match the PDE system");
    if (!initial.all_finite()) throw NonFinite("initial field is not finite", 0);
    Trajectory traj;
    traj.dt = time.dt;
    traj.snapshots.reserve(static_cast<std::size_t>(time.n_steps) + 1);
    traj.snapshots.push_back(initial);
    traj.snapshots.back().time = time.t0;
    for (int k = 0; k < time.n_steps; ++k)
        traj.snapshots.push_back(euler_step(traj.snapshots.back(), sys, time.dt, k));
    return traj;
}

/// Periodic roll: out(i, j) = f(i - di, j - dj).
inline Field2D shift(const Field2D& f, int di, int dj) {
    const int n = f.n();
    Field2D out(f.grid, f.boundary, 0.0, f.time);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            out.at(((i + di) % n + n) % n, ((j + dj) % n + n) % n) = f.at(i, j);
    return out;
}

} // namespace nse
