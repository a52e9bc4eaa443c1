#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Core>

#include "nse/errors.hpp"
#include "nse/stencil_dataset.hpp"

namespace nse {

using StencilVec = Eigen::Matrix<double, kStencilSize, 1>;
using StencilMat = Eigen::Matrix<double, kStencilSize, kStencilSize>;

inline StencilVec to_vec(const Stencil& s) { return Eigen::Map<const StencilVec>(s.data()); }

inline Stencil to_stencil(const StencilVec& v) {
    Stencil s;
    for (std::size_t k = 0; k < kStencilSize; ++k) s[k] = v[static_cast<Eigen::Index>(k)];
    return s;
}

struct SymmetricEigen {
    StencilVec values;   // descending
    StencilMat vectors;  // columns, largest-magnitude entry positive
};

/// Cyclic Jacobi eigensolver for a symmetric 5 x 5 matrix.
inline SymmetricEigen jacobi_eigen(StencilMat a, int max_sweeps = 100) {
    constexpr int n = static_cast<int>(kStencilSize);
    StencilMat v = StencilMat::Identity();
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
        if (off <= std::numeric_limits<double>::min() ||
            off <= 1e-32 * a.squaredNorm())
            break;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) {
                if (a(p, q) == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
                const double t = std::copysign(1.0, theta) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (int k = 0; k < n; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
    }
    std::array<int, n> order;
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int x, int y) { return a(x, x) > a(y, y); });
    SymmetricEigen out;
    for (int k = 0; k < n; ++k) {
        out.values[k] = a(order[k], order[k]);
        StencilVec col = v.col(order[k]);
        Eigen::Index arg = 0;
        col.cwiseAbs().maxCoeff(&arg);
        if (col[arg] < 0.0) col = -col;
        out.vectors.col(k) = col;
    }
    return out;
}

/// Full-rank PCA of 5-point stencils with the per-component score hull.
struct PCABasis {
    StencilVec mean = StencilVec::Zero();
    StencilMat loadings = StencilMat::Identity();  // columns are components
    StencilVec variances = StencilVec::Zero();     // eigenvalues, descending
    StencilVec score_lo = StencilVec::Zero();
    StencilVec score_hi = StencilVec::Zero();
    std::array<bool, kStencilSize> deficient{};    // numerically zero variance
    int rank = static_cast<int>(kStencilSize);

    bool rank_deficient() const { return std::any_of(deficient.begin(), deficient.end(), [](bool b) { return b; }); }

    StencilVec scores(const StencilVec& s) const { return loadings.transpose() * (s - mean); }
    StencilVec back_project(const StencilVec& z) const { return mean + loadings * z; }
};

inline PCABasis fit_pca(const StencilDataset& ds, double rank_tol = 1e-12) {
    if (ds.empty()) throw ConfigError("fit_pca needs a non-empty dataset");
    const double z = static_cast<double>(ds.count());
    PCABasis basis;
    for (const auto& s : ds.samples) basis.mean += to_vec(s.input);
    basis.mean /= z;
    StencilMat cov = StencilMat::Zero();
    for (const auto& s : ds.samples) {
        const StencilVec d = to_vec(s.input) - basis.mean;
        cov.noalias() += d * d.transpose();
    }
    cov /= std::max(z - 1.0, 1.0);
    const SymmetricEigen eig = jacobi_eigen(cov);
    basis.loadings = eig.vectors;
    basis.variances = eig.values;
    const double top = std::max(eig.values[0], 0.0);
    for (std::size_t k = 0; k < kStencilSize; ++k)
        basis.deficient[k] = !(eig.values[static_cast<Eigen::Index>(k)] > rank_tol * top) || top <= 0.0;
    basis.score_lo.setConstant(std::numeric_limits<double>::infinity());
    basis.score_hi.setConstant(-std::numeric_limits<double>::infinity());
    for (const auto& s : ds.samples) {
        const StencilVec sc = basis.scores(to_vec(s.input));
        basis.score_lo = basis.score_lo.cwiseMin(sc);
        basis.score_hi = basis.score_hi.cwiseMax(sc);
    }
    return basis;
}

} // namespace nse
