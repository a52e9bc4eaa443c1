#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include <Eigen/Core>
#include <unsupported/Eigen/SpecialFunctions>

#include "nse/errors.hpp"
#include "nse/pde.hpp"
#include "nse/stencil_dataset.hpp"

namespace nse {

enum class Activation { Tanh, Gelu };

inline std::string_view to_string(Activation a) { return a == Activation::Gelu ? "gelu" : "tanh"; }

inline Activation activation_from_string(std::string_view s) {
    if (s == "tanh") return Activation::Tanh;
    if (s == "gelu") return Activation::Gelu;
    throw ConfigError("unknown activation '" + std::string(s) + "'");
}

/// Residual MLP: linear input projection (input_dim -> width), then
/// `n_residual_blocks` blocks h <- h + act(W2 act(W1 h + b1) + b2), then a
/// linear output projection (width -> 1).
struct EmulatorArchitecture {
    int input_dim = static_cast<int>(kStencilSize);
    int hidden_width = 64;
    int n_residual_blocks = 2;
    Activation activation = Activation::Tanh;

    std::size_t layer_count() const { return 2 + 2 * static_cast<std::size_t>(n_residual_blocks); }

    /// (fan_out, fan_in) of layer k in canonical order.
    std::pair<int, int> layer_shape(std::size_t k) const {
        if (k == 0) return {hidden_width, input_dim};
        if (k + 1 == layer_count()) return {1, hidden_width};
        return {hidden_width, hidden_width};
    }

    /// Offset of layer k's weights in the flat parameter vector; its bias follows them.
    std::size_t layer_offset(std::size_t k) const {
        std::size_t off = 0;
        for (std::size_t l = 0; l < k; ++l) {
            const auto [o, i] = layer_shape(l);
            off += static_cast<std::size_t>(o) * i + o;
        }
        return off;
    }

    std::size_t parameter_count() const { return layer_offset(layer_count()); }

    bool operator==(const EmulatorArchitecture&) const = default;
};

using Matrix = Eigen::MatrixXd;
using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

namespace detail {

inline constexpr double kInvSqrt2 = 0.70710678118654752440;

inline void activate(Activation act, const Matrix& pre, Matrix& out) {
    if (act == Activation::Tanh) {
        // tanh(x) = 1 - 2 / (exp(2x) + 1); Eigen vectorizes exp for doubles.
        out = 1.0 - 2.0 / ((2.0 * pre.array()).exp() + 1.0);
    } else {
        out = 0.5 * pre.array() * (1.0 + (pre.array() * kInvSqrt2).erf());
    }
}

// d act / d pre, given both the pre-activation and the activation value.
inline void activate_grad(Activation act, const Matrix& pre, const Matrix& post, Matrix& out) {
    if (act == Activation::Tanh) {
        out = 1.0 - post.array().square();
    } else {
        const double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
        out = 0.5 * (1.0 + (pre.array() * kInvSqrt2).erf()) +
              pre.array() * inv_sqrt_2pi * (-0.5 * pre.array().square()).exp();
    }
}

} // namespace detail

/// Views of one dense layer inside a flat parameter vector.
template <class Scalar>
struct LayerView {
    using Plain = std::remove_const_t<Scalar>;
    template <class M>
    using MaybeConst = std::conditional_t<std::is_const_v<Scalar>, const M, M>;

    Eigen::Map<MaybeConst<Eigen::Matrix<Plain, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>> w;
    Eigen::Map<MaybeConst<Eigen::Matrix<Plain, Eigen::Dynamic, 1>>> b;
};

template <class Scalar>
LayerView<Scalar> layer_view(const EmulatorArchitecture& arch, std::span<Scalar> params, std::size_t k) {
    const auto [out, in] = arch.layer_shape(k);
    Scalar* base = params.data() + arch.layer_offset(k);
    return {{base, out, in}, {base + static_cast<std::ptrdiff_t>(out) * in, out}};
}

/// Forward/backward engine for a batch laid out as columns (input_dim x B).
/// Holds the activations of the last forward pass for the backward pass.
///
/// Parameters and gradients are staged in Eigen-owned (SIMD-aligned) buffers:
/// Eigen's kernels pick their summation order from pointer alignment, so
/// computing on caller memory would make results depend on where it lives.
class ResidualMlp {
public:
    explicit ResidualMlp(EmulatorArchitecture arch) : arch_(arch) {}

    const EmulatorArchitecture& arch() const noexcept { return arch_; }

    /// Returns the 1 x B output row.
    const Matrix& forward(std::span<const double> caller_params, const Matrix& x) {
        check(caller_params);
        const std::span<const double> params = stage(caller_params);
        const auto n_blocks = static_cast<std::size_t>(arch_.n_residual_blocks);
        x_ = &x;
        hidden_.resize(n_blocks + 1);
        pre1_.resize(n_blocks);
        post1_.resize(n_blocks);
        pre2_.resize(n_blocks);
        post2_.resize(n_blocks);
        auto in = layer(params, 0);
        hidden_[0].noalias() = in.w * x;
        hidden_[0].colwise() += in.b;
        for (std::size_t blk = 0; blk < n_blocks; ++blk) {
            auto l1 = layer(params, 1 + 2 * blk);
            auto l2 = layer(params, 2 + 2 * blk);
            pre1_[blk].noalias() = l1.w * hidden_[blk];
            pre1_[blk].colwise() += l1.b;
            detail::activate(arch_.activation, pre1_[blk], post1_[blk]);
            pre2_[blk].noalias() = l2.w * post1_[blk];
            pre2_[blk].colwise() += l2.b;
            detail::activate(arch_.activation, pre2_[blk], post2_[blk]);
            hidden_[blk + 1] = hidden_[blk] + post2_[blk];
        }
        auto outl = layer(params, arch_.layer_count() - 1);
        output_.noalias() = outl.w * hidden_[n_blocks];
        output_.array() += outl.b[0];
        return output_;
    }

    /// Accumulates d(loss)/d(params) into `grad` given d(loss)/d(output) (1 x B)
    /// for the most recent forward pass.
    void backward(std::span<const double> caller_params, const Matrix& d_output, std::span<double> caller_grad) {
        check(caller_params);
        if (caller_grad.size() != caller_params.size()) throw ShapeMismatch("gradient buffer has the wrong size");
        const std::span<const double> params = stage(caller_params);
        grad_.setZero(static_cast<Eigen::Index>(caller_params.size()));
        const std::span<double> grad(grad_.data(), caller_grad.size());
        const auto n_blocks = static_cast<std::size_t>(arch_.n_residual_blocks);
        auto outl = layer(params, arch_.layer_count() - 1);
        auto g_out = layer_view<double>(arch_, grad, arch_.layer_count() - 1);
        g_out.w.noalias() += d_output * hidden_[n_blocks].transpose();
        g_out.b[0] += d_output.sum();
        d_hidden_.noalias() = outl.w.transpose() * d_output;
        for (std::size_t blk = n_blocks; blk-- > 0;) {
            auto l1 = layer(params, 1 + 2 * blk);
            auto l2 = layer(params, 2 + 2 * blk);
            auto g1 = layer_view<double>(arch_, grad, 1 + 2 * blk);
            auto g2 = layer_view<double>(arch_, grad, 2 + 2 * blk);
            detail::activate_grad(arch_.activation, pre2_[blk], post2_[blk], scratch_);
            d_pre_ = d_hidden_.cwiseProduct(scratch_);
            g2.w.noalias() += d_pre_ * post1_[blk].transpose();
            g2.b += d_pre_.rowwise().sum();
            d_post_.noalias() = l2.w.transpose() * d_pre_;
            detail::activate_grad(arch_.activation, pre1_[blk], post1_[blk], scratch_);
            d_pre_ = d_post_.cwiseProduct(scratch_);
            g1.w.noalias() += d_pre_ * hidden_[blk].transpose();
            g1.b += d_pre_.rowwise().sum();
            d_hidden_.noalias() += l1.w.transpose() * d_pre_;
        }
        auto g_in = layer_view<double>(arch_, grad, 0);
        g_in.w.noalias() += d_hidden_ * x_->transpose();
        g_in.b += d_hidden_.rowwise().sum();
        for (std::size_t k = 0; k < caller_grad.size(); ++k) caller_grad[k] += grad[k];
    }

    /// Copies `params` into the internal aligned buffer and returns a view of it;
    /// passing that view back to forward/backward skips the copy.
    std::span<const double> stage(std::span<const double> params) {
        if (params.data() != params_.data())
            params_ = Eigen::Map<const Eigen::VectorXd>(params.data(), static_cast<Eigen::Index>(params.size()));
        return {params_.data(), params.size()};
    }

    /// Hidden state after block `blk` (0 = input projection) of the last forward pass.
    const Matrix& hidden(std::size_t blk) const { return hidden_.at(blk); }

private:
    void check(std::span<const double> params) const {
        if (params.size() != arch_.parameter_count())
            throw ShapeMismatch("parameter vector has " + std::to_string(params.size()) + " entries, expected " +
                                std::to_string(arch_.parameter_count()));
    }

    LayerView<const double> layer(std::span<const double> params, std::size_t k) const {
        return layer_view<const double>(arch_, params, k);
    }

    EmulatorArchitecture arch_;
    Eigen::VectorXd params_;
    Eigen::VectorXd grad_;
    const Matrix* x_ = nullptr;
    std::vector<Matrix> hidden_, pre1_, post1_, pre2_, post2_;
    Matrix output_, d_hidden_, d_pre_, d_post_, scratch_;
};

/// Glorot-uniform weights, zero biases.
inline std::vector<double> init_params(const EmulatorArchitecture& arch, std::uint64_t seed) {
    std::vector<double> params(arch.parameter_count(), 0.0);
    std::mt19937_64 rng(seed);
    for (std::size_t k = 0; k < arch.layer_count(); ++k) {
        const auto [out, in] = arch.layer_shape(k);
        const double limit = std::sqrt(6.0 / (in + out));
        std::uniform_real_distribution<double> dist(-limit, limit);
        auto view = layer_view<double>(arch, params, k);
        for (Eigen::Index r = 0; r < view.w.rows(); ++r)
            for (Eigen::Index c = 0; c < view.w.cols(); ++c) view.w(r, c) = dist(rng);
    }
    return params;
}

/// Standardization statistics; degenerate components use std = 1.
struct Normalization {
    std::array<double, kStencilSize> input_mean{};
    std::array<double, kStencilSize> input_std{1.0, 1.0, 1.0, 1.0, 1.0};
    double label_mean = 0.0;
    double label_std = 1.0;
    std::array<bool, kStencilSize> input_degenerate{};
    bool label_degenerate = false;

    bool operator==(const Normalization&) const = default;
};

inline Normalization compute_normalization(const StencilDataset& ds, double degenerate_tol = 1e-12) {
    if (ds.empty()) throw ConfigError("normalization needs a non-empty dataset");
    Normalization norm;
    const double z = static_cast<double>(ds.count());
    for (std::size_t k = 0; k < kStencilSize; ++k) {
        double mean = 0.0;
        for (const auto& s : ds.samples) mean += s.input[k];
        mean /= z;
        double var = 0.0;
        for (const auto& s : ds.samples) var += (s.input[k] - mean) * (s.input[k] - mean);
        const double sd = std::sqrt(var / z);
        norm.input_mean[k] = mean;
        norm.input_degenerate[k] = !(sd > degenerate_tol * std::max(1.0, std::abs(mean)));
        norm.input_std[k] = norm.input_degenerate[k] ? 1.0 : sd;
    }
    double mean = 0.0;
    for (const auto& s : ds.samples) mean += s.label;
    mean /= z;
    double var = 0.0;
    for (const auto& s : ds.samples) var += (s.label - mean) * (s.label - mean);
    const double sd = std::sqrt(var / z);
    norm.label_mean = mean;
    norm.label_degenerate = !(sd > degenerate_tol * std::max(1.0, std::abs(mean)));
    norm.label_std = norm.label_degenerate ? 1.0 : sd;
    return norm;
}

/// Normalized inputs as columns.
inline Matrix normalized_inputs(std::span<const Stencil> stencils, const Normalization& norm) {
    Matrix x(static_cast<Eigen::Index>(kStencilSize), static_cast<Eigen::Index>(stencils.size()));
    for (std::size_t c = 0; c < stencils.size(); ++c)
        for (std::size_t k = 0; k < kStencilSize; ++k)
            x(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(c)) =
                (stencils[c][k] - norm.input_mean[k]) / norm.input_std[k];
    return x;
}

inline Matrix normalized_inputs(const StencilDataset& ds, const Normalization& norm) {
    Matrix x(static_cast<Eigen::Index>(kStencilSize), static_cast<Eigen::Index>(ds.count()));
    for (std::size_t c = 0; c < ds.count(); ++c)
        for (std::size_t k = 0; k < kStencilSize; ++k)
            x(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(c)) =
                (ds.samples[c].input[k] - norm.input_mean[k]) / norm.input_std[k];
    return x;
}

inline Matrix normalized_labels(const StencilDataset& ds, const Normalization& norm) {
    Matrix y(1, static_cast<Eigen::Index>(ds.count()));
    for (std::size_t c = 0; c < ds.count(); ++c)
        y(0, static_cast<Eigen::Index>(c)) = (ds.samples[c].label - norm.label_mean) / norm.label_std;
    return y;
}

/// Mean squared error over normalized labels and its exact parameter gradient.
/// The batch is processed in fixed column chunks for cache locality; the
/// summation order depends only on the batch size, so results are reproducible.
inline double loss_and_grad(ResidualMlp& mlp, std::span<const double> params, const Matrix& x, const Matrix& y,
                            std::span<double> grad, Eigen::Index chunk = 128) {
    if (x.cols() == 0) throw ConfigError("loss_and_grad needs a non-empty batch");
    const double b = static_cast<double>(x.cols());
    const std::span<const double> staged = mlp.stage(params);
    std::fill(grad.begin(), grad.end(), 0.0);
    double sse = 0.0;
    Matrix xc, residual;
    for (Eigen::Index start = 0; start < x.cols(); start += chunk) {
        const Eigen::Index len = std::min(chunk, x.cols() - start);
        xc = x.middleCols(start, len);
        residual = mlp.forward(staged, xc) - y.middleCols(start, len);
        sse += residual.squaredNorm();
        residual *= 2.0 / b;
        mlp.backward(staged, residual, grad);
    }
    return sse / b;
}

struct LossGrad {
    double loss = 0.0;
    std::vector<double> grad;
};

/// Convenience overload on a dataset subset.
inline LossGrad loss_and_grad(std::span<const double> params, const StencilDataset& batch,
                              const EmulatorArchitecture& arch, const Normalization& norm) {
    ResidualMlp mlp(arch);
    const Matrix x = normalized_inputs(batch, norm);
    const Matrix y = normalized_labels(batch, norm);
    LossGrad out;
    out.grad.assign(params.size(), 0.0);
    out.loss = loss_and_grad(mlp, params, x, y, out.grad);
    return out;
}

/// A trained stencil operator in original state/label units.
struct TrainedEmulator {
    EmulatorArchitecture arch;
    std::vector<double> params;
    Normalization norm;

    /// Batched forward: out[c] = F_theta(stencils[c]).
    void evaluate(std::span<const Stencil> stencils, std::span<double> out) const {
        if (out.size() != stencils.size()) throw ShapeMismatch("output span size mismatch");
        if (stencils.empty()) return;
        ResidualMlp mlp(arch);
        const Matrix x = normalized_inputs(stencils, norm);
        const Matrix& y = mlp.forward(params, x);
        for (std::size_t c = 0; c < stencils.size(); ++c)
            out[c] = norm.label_mean + norm.label_std * y(0, static_cast<Eigen::Index>(c));
    }

    double forward(const Stencil& s) const {
        double out = 0.0;
        evaluate(std::span<const Stencil>(&s, 1), std::span<double>(&out, 1));
        return out;
    }
};

} // namespace nse
