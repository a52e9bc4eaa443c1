#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "nse/emulator.hpp"
#include "nse/errors.hpp"
#include "nse/stencil_dataset.hpp"

namespace nse {

/// lr(epoch) = 0.5 lr0 (1 + cos(pi epoch / total)).
inline double cosine_lr(double initial_lr, long epoch, long total) {
    if (total <= 0 || epoch < 0 || epoch > total) throw ConfigError("cosine_lr needs 0 <= epoch <= total, total > 0");
    return 0.5 * initial_lr * (1.0 + std::cos(std::numbers::pi * static_cast<double>(epoch) / static_cast<double>(total)));
}

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    long step = 0;

    AdamState() = default;
    explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

struct AdamHyper {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// One bias-corrected Adam update of `params` in place.
inline void adam_step(std::span<double> params, AdamState& state, std::span<const double> grad, double lr,
                      const AdamHyper& hp = {}) {
    if (params.size() != grad.size() || state.m.size() != params.size() || state.v.size() != params.size())
        throw ShapeMismatch("adam_step shape mismatch");
    ++state.step;
    const double c1 = 1.0 - std::pow(hp.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(hp.beta2, static_cast<double>(state.step));
    for (std::size_t k = 0; k < params.size(); ++k) {
        state.m[k] = hp.beta1 * state.m[k] + (1.0 - hp.beta1) * grad[k];
        state.v[k] = hp.beta2 * state.v[k] + (1.0 - hp.beta2) * grad[k] * grad[k];
        const double m_hat = state.m[k] / c1;
        const double v_hat = state.v[k] / c2;
        params[k] -= lr * m_hat / (std::sqrt(v_hat) + hp.eps);
    }
}

struct TrainConfig {
    double initial_lr = 0.01;
    long epochs = 5000;
    std::size_t batch_size = 0;  // 0 = full batch
    AdamHyper adam;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(initial_lr > 0.0)) throw ConfigError("initial learning rate must be positive");
        if (epochs < 1) throw ConfigError("epochs must be >= 1");
    }
};

struct EpochRecord {
    long epoch = 0;
    double lr = 0.0;
    double mse_normalized = 0.0;
    double mse_original = 0.0;
};

struct TrainingLog {
    std::vector<EpochRecord> epochs;
    double final_mse_normalized = 0.0;
    double final_mse_original = 0.0;
};

struct TrainResult {
    TrainedEmulator emulator;
    TrainingLog log;
};

/// Raised when the loss stops being finite; carries the last finite checkpoint.
class NonFiniteLoss : public Error {
public:
    NonFiniteLoss(const std::string& what, long epoch, TrainResult checkpoint)
        : Error(what), epoch_(epoch), checkpoint_(std::move(checkpoint)) {}

    long epoch() const noexcept { return epoch_; }
    const TrainResult& checkpoint() const noexcept { return checkpoint_; }

private:
    long epoch_;
    TrainResult checkpoint_;
};

/// Mean squared error of an emulator on a dataset, in normalized label units.
inline double evaluate_mse_normalized(const TrainedEmulator& emu, const StencilDataset& ds) {
    ResidualMlp mlp(emu.arch);
    const Matrix x = normalized_inputs(ds, emu.norm);
    const Matrix y = normalized_labels(ds, emu.norm);
    return (mlp.forward(emu.params, x) - y).squaredNorm() / static_cast<double>(ds.count());
}

/// Adam with cosine learning-rate decay on the standardized MSE. Deterministic
/// given (ds, arch, config): initialization and any minibatch shuffling draw
/// from `config.seed`. The per-epoch loss is the mean batch loss before each update.
inline TrainResult train(const StencilDataset& ds, const EmulatorArchitecture& arch, const TrainConfig& config,
                         std::optional<Normalization> norm_override = std::nullopt) {
    config.validate();
    if (ds.empty()) throw ConfigError("cannot train on an empty dataset");
    TrainResult result;
    result.emulator.arch = arch;
    result.emulator.norm = norm_override.value_or(compute_normalization(ds));
    result.emulator.params = init_params(arch, config.seed);
    std::vector<double>& params = result.emulator.params;
    const double label_var = result.emulator.norm.label_std * result.emulator.norm.label_std;

    const Matrix x_all = normalized_inputs(ds, result.emulator.norm);
    const Matrix y_all = normalized_labels(ds, result.emulator.norm);
    const std::size_t n = ds.count();
    const std::size_t batch = (config.batch_size == 0 || config.batch_size >= n) ? n : config.batch_size;

    ResidualMlp mlp(arch);
    AdamState adam(params.size());
    std::vector<double> grad(params.size(), 0.0);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 shuffle_rng(config.seed ^ 0x5DEECE66Dull);
    Matrix xb, yb;
    std::vector<double> last_finite = params;
    result.log.epochs.reserve(static_cast<std::size_t>(config.epochs));

    for (long epoch = 0; epoch < config.epochs; ++epoch) {
        const double lr = cosine_lr(config.initial_lr, epoch, config.epochs);
        double loss_sum = 0.0;
        std::size_t seen = 0;
        if (batch < n) std::shuffle(order.begin(), order.end(), shuffle_rng);
        for (std::size_t start = 0; start < n; start += batch) {
            const std::size_t len = std::min(batch, n - start);
            double loss = 0.0;
            if (len == n) {
                loss = loss_and_grad(mlp, params, x_all, y_all, grad);
            } else {
                xb.resize(x_all.rows(), static_cast<Eigen::Index>(len));
                yb.resize(1, static_cast<Eigen::Index>(len));
                for (std::size_t c = 0; c < len; ++c) {
                    xb.col(static_cast<Eigen::Index>(c)) = x_all.col(static_cast<Eigen::Index>(order[start + c]));
                    yb(0, static_cast<Eigen::Index>(c)) = y_all(0, static_cast<Eigen::Index>(order[start + c]));
                }
                loss = loss_and_grad(mlp, params, xb, yb, grad);
            }
            if (!std::isfinite(loss)) {
                TrainResult checkpoint = result;
                checkpoint.emulator.params = last_finite;
                throw NonFiniteLoss("training loss became non-finite at epoch " + std::to_string(epoch), epoch,
                                    std::move(checkpoint));
            }
            last_finite = params;
            adam_step(params, adam, grad, lr, config.adam);
            loss_sum += loss * static_cast<double>(len);
            seen += len;
        }
        const double mse = loss_sum / static_cast<double>(seen);
        result.log.epochs.push_back({epoch, lr, mse, mse * label_var});
    }
    result.log.final_mse_normalized = evaluate_mse_normalized(result.emulator, ds);
    result.log.final_mse_original = result.log.final_mse_normalized * label_var;
    if (!std::isfinite(result.log.final_mse_normalized)) {
        TrainResult checkpoint = result;
        checkpoint.emulator.params = last_finite;
        throw NonFiniteLoss("training diverged on the final update", config.epochs, std::move(checkpoint));
    }
    return result;
}

} // namespace nse
