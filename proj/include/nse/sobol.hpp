#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "nse/errors.hpp"

namespace nse {

inline constexpr int kSobolMaxDim = 16;

namespace detail {
struct SobolPoly {
    int degree;
    std::uint32_t coeffs;
    std::array<std::uint32_t, 6> m;
};

// Joe & Kuo (new-joe-kuo-6.21201) primitive polynomials and initial direction
// numbers for dimensions 2..16. Dimension 1 uses m_k = 1 throughout.
inline constexpr std::array<SobolPoly, kSobolMaxDim - 1> kJoeKuo{{
    {1, 0, {1}},
    {2, 1, {1, 3}},
    {3, 1, {1, 3, 1}},
    {3, 2, {1, 1, 1}},
    {4, 1, {1, 1, 3, 3}},
    {4, 4, {1, 3, 5, 13}},
    {5, 2, {1, 1, 5, 5, 17}},
    {5, 4, {1, 1, 5, 5, 5}},
    {5, 7, {1, 1, 7, 11, 19}},
    {5, 11, {1, 1, 5, 1, 1}},
    {5, 13, {1, 1, 1, 3, 11}},
    {5, 14, {1, 3, 5, 5, 31}},
    {6, 1, {1, 3, 3, 9, 7, 49}},
    {6, 13, {1, 1, 1, 15, 21, 21}},
    {6, 16, {1, 3, 1, 13, 27, 49}},
}};
} // namespace detail

/// Unscrambled Sobol' sequence in Gray-code order (Antonov-Saleev), 32-bit.
/// Point 0 is the origin.
class SobolSequence {
public:
    static constexpr int kBits = 32;

    explicit SobolSequence(int dim) : dim_(dim) {
        if (dim < 1 || dim > kSobolMaxDim)
            throw DimTooLarge("Sobol' dimension must lie in [1, " + std::to_string(kSobolMaxDim) + "]");
        directions_.resize(static_cast<std::size_t>(dim) * kBits);
        for (int d = 0; d < dim; ++d) {
            std::array<std::uint64_t, kBits> m{};
            if (d == 0) {
                m.fill(1);
            } else {
                const auto& poly = detail::kJoeKuo[d - 1];
                const int s = poly.degree;
                for (int k = 0; k < s; ++k) m[k] = poly.m[k];
                for (int k = s; k < kBits; ++k) {
                    std::uint64_t v = m[k - s] ^ (m[k - s] << s);
                    for (int r = 1; r < s; ++r)
                        if ((poly.coeffs >> (s - 1 - r)) & 1u) v ^= m[k - r] << r;
                    m[k] = v;
                }
            }
            for (int k = 0; k < kBits; ++k)
                directions_[static_cast<std::size_t>(d) * kBits + k] =
                    static_cast<std::uint32_t>(m[k] << (kBits - 1 - k));
        }
        state_.assign(dim, 0);
    }

    int dim() const noexcept { return dim_; }
    std::uint64_t index() const noexcept { return index_; }

    /// Writes the current point and advances.
    void next(std::span<double> out) {
        constexpr double scale = 1.0 / 4294967296.0;
        for (int d = 0; d < dim_; ++d) out[d] = state_[d] * scale;
        // Gray-code update: flip the direction of the lowest zero bit of index.
        int c = 0;
        for (std::uint64_t v = index_; v & 1u; v >>= 1) ++c;
        if (c >= kBits) throw Error("Sobol' sequence exhausted");
        for (int d = 0; d < dim_; ++d) state_[d] ^= directions_[static_cast<std::size_t>(d) * kBits + c];
        ++index_;
    }

    void skip(std::uint64_t count) {
        std::vector<double> scratch(dim_);
        for (std::uint64_t k = 0; k < count; ++k) next(scratch);
    }

private:
    int dim_;
    std::vector<std::uint32_t> directions_;
    std::vector<std::uint32_t> state_;
    std::uint64_t index_ = 0;
};

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// count x dim block of the sequence after dropping the first `skip` points.
inline RowMatrix sobol_points(int dim, std::size_t count, std::uint64_t skip = 0) {
    if (count < 1) throw ConfigError("sobol_points needs count >= 1");
    SobolSequence seq(dim);
    seq.skip(skip);
    RowMatrix out(static_cast<Eigen::Index>(count), dim);
    for (std::size_t r = 0; r < count; ++r)
        seq.next(std::span<double>(out.row(static_cast<Eigen::Index>(r)).data(), static_cast<std::size_t>(dim)));
    return out;
}

} // namespace nse
