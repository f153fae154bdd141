#pragma once

#include <filesystem>
#include <random>

#include "pan/data.hpp"
#include "pan/nn.hpp"

namespace pan {

struct TrainConfig {
    double max_lr = 1e-3;
    double min_lr = 1e-7;
    std::int64_t cosine_period = 250000;
    int batch = 32;
    int hr_patch = 256;
    std::int64_t total_iters = 0;
    std::uint64_t seed = 0;
    std::int64_t eval_every = 0;  // 0 = evaluate only at the end
    bool augment = true;
    bool single_decay = false;  // one half-cosine instead of periodic restarts
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;

    void validate() const {
        check_supported(min_lr < max_lr, "train: min_lr must be below max_lr");
        check_supported(cosine_period > 0, "train: cosine_period must be positive");
        check_supported(batch > 0 && hr_patch > 0, "train: batch and hr_patch must be positive");
        check_supported(total_iters >= 0, "train: total_iters must be >= 0");
    }
};

/// Periodic cosine annealing: max_lr at the start of each period, min_lr at
/// the end, restarting every `cosine_period` iterations (or clamping to the
/// floor in single-decay mode).
inline double cosine_lr(std::int64_t iter, const TrainConfig& cfg) {
    const std::int64_t T = cfg.cosine_period;
    const std::int64_t pos = cfg.single_decay ? std::min(iter, T) : iter % T;
    const double phase = double(pos) / double(T);
    return cfg.min_lr + 0.5 * (cfg.max_lr - cfg.min_lr) * (1.0 + std::cos(phase * 3.14159265358979323846));
}

/// First/second moment buffers aligned with a flattened list of parameter
/// tensors (weight, then bias when present, in model order).
template <typename T>
struct AdamStateT {
    std::vector<std::vector<T>> m;
    std::vector<std::vector<T>> v;
    std::int64_t t = 0;

    template <typename M>
    static AdamStateT zeros_like(const M& model) {
        AdamStateT st;
        for (const auto& p : model.params()) {
            st.m.emplace_back(p.weight->data.size(), T(0));
            st.v.emplace_back(p.weight->data.size(), T(0));
            if (p.bias) {
                st.m.emplace_back(p.bias->data.size(), T(0));
                st.v.emplace_back(p.bias->data.size(), T(0));
            }
        }
        return st;
    }
};

using AdamState = AdamStateT<float>;

namespace detail {

template <typename T>
void adam_update(const std::string& name, TensorT<T>& param, std::vector<T>& m, std::vector<T>& v,
                 std::int64_t t, double lr, const TrainConfig& cfg) {
    const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
    const double bc1 = 1.0 - std::pow(b1, double(t));
    const double bc2 = 1.0 - std::pow(b2, double(t));
    param.ensure_grad();
    for (std::size_t i = 0; i < param.data.size(); ++i) {
        const double g = double(param.grad[i]);
        if (!std::isfinite(g))
            throw NumericError("adam: non-finite gradient in parameter '" + name + "'");
        const double mi = b1 * double(m[i]) + (1.0 - b1) * g;
        const double vi = b2 * double(v[i]) + (1.0 - b2) * g * g;
        m[i] = T(mi);
        v[i] = T(vi);
        const double mhat = mi / bc1;
        const double vhat = vi / bc2;
        param.data[i] = T(double(param.data[i]) - lr * mhat / (std::sqrt(vhat) + cfg.adam_eps));
    }
}

}  // namespace detail

/// Standard bias-corrected Adam over every model parameter.
template <typename T>
void adam_step(PanModelT<T>& model, AdamStateT<T>& state, double lr, const TrainConfig& cfg) {
    state.t += 1;
    std::size_t slot = 0;
    for (auto& p : model.params()) {
        detail::adam_update(p.name + ".weight", *p.weight, state.m[slot], state.v[slot], state.t,
                            lr, cfg);
        ++slot;
        if (p.bias) {
            detail::adam_update(p.name + ".bias", *p.bias, state.m[slot], state.v[slot], state.t,
                                lr, cfg);
            ++slot;
        }
    }
}

struct NamedTensorView {
    std::string name;
    Shape4 shape;
    std::vector<float> data;
};

struct Checkpoint {
    std::uint64_t iteration = 0;
    std::string rng_state;
    std::string config_echo;
    std::vector<NamedTensorView> tensors;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& path);

Checkpoint snapshot(const PanModel& model, const AdamState& adam, std::uint64_t iteration,
                    const std::string& rng_state, const std::string& config_echo);
/// Restores parameters and optimizer state; any name or shape mismatch
/// raises a DataError listing every difference.
void restore(const Checkpoint& ck, PanModel& model, AdamState& adam);

std::string config_echo_text(const ModelConfig& mc, const TrainConfig& tc);
void parse_config_echo(const std::string& text, ModelConfig& mc, TrainConfig& tc);

struct TrainResult {
    std::int64_t iterations = 0;
    double final_loss = 0.0;
    double eval_psnr = 0.0;
    std::filesystem::path final_checkpoint;
};

/// Optimization loop: sample -> forward -> L1 -> backward -> Adam at the
/// cosine rate. Writes loss.csv and checkpoints under out_dir; optionally
/// resumes bitwise from a checkpoint.
TrainResult train(PanModel& model, const DatasetManifest& manifest,
                  const std::filesystem::path& data_dir, const TrainConfig& cfg,
                  const std::filesystem::path& out_dir,
                  const std::filesystem::path& resume = {});

/// PSNR of the model output against a manifest entry's HR image (Y channel,
/// borders shaved by the scale).
double eval_entry_psnr(const PanModel& model, const DatasetManifest& manifest,
                       const std::filesystem::path& data_dir, std::size_t index);

}  // namespace pan
