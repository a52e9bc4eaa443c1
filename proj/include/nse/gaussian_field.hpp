#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include "nse/errors.hpp"
#include "nse/pde.hpp"

namespace nse {

/// Stationary squared-exponential Gaussian process
/// k(x, x') = variance * exp(-|x - x'|^2 / (2 (length_scale L)^2)) with constant mean.
struct GpSpec {
    double mean_value = 0.0;
    double length_scale = 0.1;  // fraction of the domain length
    double variance = 0.25;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(length_scale > 0.0 && length_scale <= 1.0))
            throw ConfigError("GP length scale must lie in (0, 1]");
        if (!(variance > 0.0)) throw ConfigError("GP variance must be positive");
    }
};

namespace detail {
// Minimum-image distance (in index units) on a ring of n cells.
inline int wrap_distance(int a, int n) {
    a = ((a % n) + n) % n;
    return std::min(a, n - a);
}

inline double periodic_kernel(const GpSpec& spec, const GridSpec& grid, int da, int db) {
    const double h = grid.spacing();
    const double ell = spec.length_scale * grid.length();
    const double dx = wrap_distance(da, grid.n()) * h;
    const double dy = wrap_distance(db, grid.n()) * h;
    return spec.variance * std::exp(-(dx * dx + dy * dy) / (2.0 * ell * ell));
}
} // namespace detail

/// Circulant-embedding sampler for the periodized kernel on the N x N torus.
///
/// The covariance is block circulant, so its eigenvalues are the 2D DFT of the
/// first kernel row. A draw is Re( sum_pq sqrt(lambda_pq / N^2) xi_pq e^{+2 pi i (pa + qb)/N} )
/// with xi_pq standard complex Gaussians; the DFTs are evaluated directly.
class SpectralGpSampler {
public:
    SpectralGpSampler(const GpSpec& spec, const GridSpec& grid) : spec_(spec), grid_(grid) {
        spec_.validate();
        const int n = grid_.n();
        twiddle_.resize(n);
        for (int k = 0; k < n; ++k) {
            const double ang = 2.0 * std::numbers::pi * k / n;
            twiddle_[k] = {std::cos(ang), std::sin(ang)};
        }
        // lambda_pq = sum_ab c(a,b) e^{-2 pi i (pa + qb)/N}; real for a symmetric row.
        std::vector<std::complex<double>> partial(static_cast<std::size_t>(n) * n);
        for (int a = 0; a < n; ++a)
            for (int q = 0; q < n; ++q) {
                std::complex<double> acc = 0.0;
                for (int b = 0; b < n; ++b)
                    acc += detail::periodic_kernel(spec_, grid_, a, b) * std::conj(twiddle_[(q * b) % n]);
                partial[static_cast<std::size_t>(a) * n + q] = acc;
            }
        eigenvalues_.assign(static_cast<std::size_t>(n) * n, 0.0);
        amplitude_.assign(eigenvalues_.size(), 0.0);
        const double cells = static_cast<double>(n) * n;
        bool any_positive = false;
        for (int p = 0; p < n; ++p)
            for (int q = 0; q < n; ++q) {
                std::complex<double> acc = 0.0;
                for (int a = 0; a < n; ++a)
                    acc += partial[static_cast<std::size_t>(a) * n + q] * std::conj(twiddle_[(p * a) % n]);
                const std::size_t idx = static_cast<std::size_t>(p) * n + q;
                eigenvalues_[idx] = acc.real();
                // Truncation of the periodized SE kernel can leave tiny negative modes.
                const double lam = std::max(acc.real(), 0.0);
                amplitude_[idx] = std::sqrt(lam / cells);
                any_positive = any_positive || amplitude_[idx] > 0.0;
            }
        if (!any_positive) throw DegenerateKernel("GP spectral density underflowed to zero");
    }

    const std::vector<double>& eigenvalues() const noexcept { return eigenvalues_; }

    std::vector<double> draw(std::uint64_t seed) const {
        const int n = grid_.n();
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> normal(0.0, 1.0);
        std::vector<std::complex<double>> coeff(static_cast<std::size_t>(n) * n);
        for (std::size_t k = 0; k < coeff.size(); ++k) {
            const double re = normal(rng);
            const double im = normal(rng);
            coeff[k] = amplitude_[k] * std::complex<double>(re, im);
        }
        // Y(a, b) = sum_p e^{2 pi i pa/N} sum_q coeff(p, q) e^{2 pi i qb/N}
        std::vector<std::complex<double>> rows(coeff.size());
        for (int p = 0; p < n; ++p)
            for (int b = 0; b < n; ++b) {
                std::complex<double> acc = 0.0;
                for (int q = 0; q < n; ++q)
                    acc += coeff[static_cast<std::size_t>(p) * n + q] * twiddle_[(q * b) % n];
                rows[static_cast<std::size_t>(p) * n + b] = acc;
            }
        std::vector<double> out(coeff.size());
        for (int a = 0; a < n; ++a)
            for (int b = 0; b < n; ++b) {
                std::complex<double> acc = 0.0;
                for (int p = 0; p < n; ++p)
                    acc += rows[static_cast<std::size_t>(p) * n + b] * twiddle_[(p * a) % n];
                out[static_cast<std::size_t>(a) * n + b] = spec_.mean_value + acc.real();
            }
        return out;
    }

private:
    GpSpec spec_;
    GridSpec grid_;
    std::vector<std::complex<double>> twiddle_;
    std::vector<double> eigenvalues_;
    std::vector<double> amplitude_;
};

/// One GP draw on the grid, deterministic in `spec.seed`. Both boundary kinds
/// use the periodic spectral draw; `periodic` only selects the field's tag.
inline Field2D sample_field(const GpSpec& spec, const GridSpec& grid, bool periodic) {
    SpectralGpSampler sampler(spec, grid);
    return Field2D(grid, periodic ? Boundary::Periodic : Boundary::ZeroGradient, sampler.draw(spec.seed), 0.0);
}

/// Initial condition for a given system; Allen-Cahn fields are clamped to [-1, 1].
inline Field2D initial_condition(const PdeSystem& sys, const GpSpec& spec, const GridSpec& grid, double t0 = 0.0) {
    Field2D f = sample_field(spec, grid, sys.boundary == Boundary::Periodic);
    f.time = t0;
    if (sys.kind == PdeKind::AllenCahn)
        for (double& v : f.values) v = std::clamp(v, -1.0, 1.0);
    return f;
}

/// Dense periodized covariance matrix, (a, b) flattened row-major.
inline Eigen::MatrixXd periodic_covariance(const GpSpec& spec, const GridSpec& grid) {
    const int n = grid.n();
    const int cells = n * n;
    Eigen::MatrixXd cov(cells, cells);
    for (int r = 0; r < cells; ++r)
        for (int c = 0; c < cells; ++c)
            cov(r, c) = detail::periodic_kernel(spec, grid, r / n - c / n, r % n - c % n);
    return cov;
}

/// Reference sampler by dense factorization; intended for N <= 16 cross-checks.
/// Uses Cholesky when the jittered covariance is positive definite, otherwise a
/// symmetric eigendecomposition with negative eigenvalues clipped to zero.
inline Field2D sample_field_dense(const GpSpec& spec, const GridSpec& grid, bool periodic,
                                  double jitter = 1e-10) {
    spec.validate();
    if (grid.n() > 16) throw ConfigError("dense GP reference path is limited to N <= 16");
    Eigen::MatrixXd cov = periodic_covariance(spec, grid);
    cov.diagonal().array() += jitter * spec.variance;
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd z(cov.rows());
    for (Eigen::Index k = 0; k < z.size(); ++k) z[k] = normal(rng);
    Eigen::VectorXd u;
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() == Eigen::Success) {
        u = llt.matrixL() * z;
    } else {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
        if (es.info() != Eigen::Success || !(es.eigenvalues().maxCoeff() > 0.0))
            throw DegenerateKernel("dense GP covariance has no positive eigenvalues");
        u = es.eigenvectors() * (es.eigenvalues().cwiseMax(0.0).cwiseSqrt().cwiseProduct(z));
    }
    std::vector<double> values(u.data(), u.data() + u.size());
    for (double& v : values) v += spec.mean_value;
    return Field2D(grid, periodic ? Boundary::Periodic : Boundary::ZeroGradient, std::move(values), 0.0);
}

} // namespace nse
