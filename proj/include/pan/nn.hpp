#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "pan/ops.hpp"

namespace pan {

enum class BlockType { SCPA, RB, RB_CA, RB_SA, RB_PA };

std::string to_string(BlockType t);
BlockType block_type_from_string(const std::string& s);

/// Architecture descriptor for the PAN family. Defaults reproduce the
/// published parameter totals exactly (16 SC-PA blocks, nf=40, unf=24, with
/// bias-free convs inside blocks and biased attention/outer convs).
struct ModelConfig {
    int scale = 4;
    BlockType block_type = BlockType::SCPA;
    int num_blocks = 16;
    int nf = 40;
    int unf = 24;
    int in_channels = 3;
    int out_channels = 3;
    bool pa_in_scpa = true;
    bool pa_in_upa = true;
    int ca_reduction = 4;
    int sa_kernel = 7;
    float act_slope = 0.2f;
    bool block_conv_bias = false;
    bool attention_bias = true;
    bool outer_conv_bias = true;

    static ModelConfig pan(int scale);
    static ModelConfig ablation(BlockType block, int scale);
    void validate() const;
    int upsample_stages() const { return scale == 4 ? 2 : 1; }
    int stage_factor(int stage) const { return scale == 4 ? 2 : (stage == 0 ? scale : 1); }
};

/// One convolution in the execution graph. up_factor is the execution grid
/// relative to the LR input (the reconstruction stages run on progressively
/// upsampled grids); per_image marks squeeze convs that run on a 1x1 grid.
struct ConvSpec {
    std::string name;
    int in_c = 0;
    int out_c = 0;
    int k = 1;
    bool bias = false;
    int up_factor = 1;
    bool per_image = false;

    std::int64_t param_count() const {
        return std::int64_t(out_c) * in_c * k * k + (bias ? out_c : 0);
    }
};

struct ModelStructure {
    ModelConfig config;
    std::vector<ConvSpec> convs;
};

ModelStructure build_structure(const ModelConfig& cfg);
std::int64_t structure_param_count(const ModelStructure& st);

/// One line per layer: name, weight shape, parameter count.
std::string model_summary(const ModelStructure& st);

/// Per-layer multiply-accumulate tally filled in by an instrumented forward
/// pass. Used to cross-check the analytic accounting.
struct CostTally {
    std::int64_t mult_adds = 0;
    std::unordered_map<std::string, std::int64_t> per_layer;

    void add(const std::string& name, std::int64_t macs) {
        mult_adds += macs;
        per_layer[name] += macs;
    }
};

template <typename T>
struct ParamT {
    std::string name;
    TensorPtrT<T> weight;
    TensorPtrT<T> bias;  // null when the layer is bias-free
};

template <typename T>
class PanModelT {
  public:
    PanModelT() = default;
    PanModelT(ModelStructure st, std::vector<ParamT<T>> params)
        : structure_(std::move(st)), params_(std::move(params)) {
        for (std::size_t i = 0; i < params_.size(); ++i) index_[params_[i].name] = i;
    }

    const ModelConfig& config() const { return structure_.config; }
    const ModelStructure& structure() const { return structure_; }
    std::vector<ParamT<T>>& params() { return params_; }
    const std::vector<ParamT<T>>& params() const { return params_; }

    const ParamT<T>& param(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw ShapeError("model has no layer named '" + name + "'");
        return params_[it->second];
    }
    ParamT<T>& param_mut(const std::string& name) {
        return const_cast<ParamT<T>&>(std::as_const(*this).param(name));
    }

    std::int64_t param_count() const {
        std::int64_t total = 0;
        for (const auto& p : params_) {
            total += p.weight->numel();
            if (p.bias) total += p.bias->numel();
        }
        return total;
    }

    void zero_layer(const std::string& name) {
        auto& p = param_mut(name);
        std::fill(p.weight->data.begin(), p.weight->data.end(), T(0));
        if (p.bias) std::fill(p.bias->data.begin(), p.bias->data.end(), T(0));
    }

    void zero_all_params() {
        for (auto& p : params_) {
            std::fill(p.weight->data.begin(), p.weight->data.end(), T(0));
            if (p.bias) std::fill(p.bias->data.begin(), p.bias->data.end(), T(0));
        }
    }

    TensorPtrT<T> forward(TapeT<T>& tape, const TensorPtrT<T>& input,
                          CostTally* tally = nullptr) const;

    TensorPtrT<T> scpa_block(TapeT<T>& tape, const std::string& prefix, const TensorPtrT<T>& x,
                             CostTally* tally = nullptr) const;
    TensorPtrT<T> rb_block(TapeT<T>& tape, const std::string& prefix, const TensorPtrT<T>& x,
                           CostTally* tally = nullptr) const;

    // sigmoid(1x1 conv(x)) * y
    TensorPtrT<T> pa_gate(TapeT<T>& tape, const std::string& name, const TensorPtrT<T>& x,
                          const TensorPtrT<T>& y, CostTally* tally = nullptr) const {
        auto att = sigmoid<T>(tape, conv(tape, name, x, tally));
        return mul<T>(tape, att, y);
    }

  private:
    TensorPtrT<T> conv(TapeT<T>& tape, const std::string& name, const TensorPtrT<T>& x,
                       CostTally* tally) const {
        const auto& p = param(name);
        auto out = conv2d<T>(tape, x, p.weight, p.bias);
        if (tally) {
            const Shape4 ws = p.weight->shape;
            tally->add(name, std::int64_t(ws.n) * ws.c * ws.h * ws.w * out->shape.h *
                                 out->shape.w * out->shape.n);
        }
        return out;
    }

    TensorPtrT<T> act(TapeT<T>& tape, const TensorPtrT<T>& x) const {
        return leaky_relu<T>(tape, x, T(structure_.config.act_slope));
    }

    ModelStructure structure_;
    std::vector<ParamT<T>> params_;
    std::unordered_map<std::string, std::size_t> index_;
};

using PanModel = PanModelT<float>;

/// Allocates and initializes parameters for the given architecture.
/// Weights use fan-in scaled normal init; the tail conv is damped by 0.1 so
/// the bilinear skip dominates early training. Biases start at zero.
template <typename T>
PanModelT<T> build_pan(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    ModelStructure st = build_structure(cfg);
    std::mt19937_64 rng(seed);
    const double gain = std::sqrt(2.0 / (1.0 + double(cfg.act_slope) * cfg.act_slope));
    std::vector<ParamT<T>> params;
    params.reserve(st.convs.size());
    for (const auto& spec : st.convs) {
        ParamT<T> p;
        p.name = spec.name;
        p.weight = make_param<T>({spec.out_c, spec.in_c, spec.k, spec.k});
        double stddev = gain / std::sqrt(double(spec.in_c) * spec.k * spec.k);
        if (spec.name == "tail.conv") stddev *= 0.1;
        fill_normal(*p.weight, rng, stddev);
        if (spec.bias) p.bias = make_param<T>({spec.out_c, 1, 1, 1});
        params.push_back(std::move(p));
    }
    return PanModelT<T>(std::move(st), std::move(params));
}

template <typename T>
TensorPtrT<T> PanModelT<T>::scpa_block(TapeT<T>& tape, const std::string& prefix,
                                       const TensorPtrT<T>& x, CostTally* tally) const {
    auto a = act(tape, conv(tape, prefix + "split_a", x, tally));
    auto b = act(tape, conv(tape, prefix + "split_b", x, tally));
    // Calibrated branch: first 3x3 gated by pixel attention, then second 3x3.
    auto ua = conv(tape, prefix + "conv_a1", a, tally);
    if (structure_.config.pa_in_scpa) ua = pa_gate(tape, prefix + "att", a, ua, tally);
    ua = act(tape, conv(tape, prefix + "conv_a2", ua, tally));
    // Plain branch keeps the original information.
    auto lb = act(tape, conv(tape, prefix + "conv_b", b, tally));
    auto fused = conv(tape, prefix + "fuse", concat_channels<T>(tape, lb, ua), tally);
    return add<T>(tape, fused, x);
}

template <typename T>
TensorPtrT<T> PanModelT<T>::rb_block(TapeT<T>& tape, const std::string& prefix,
                                     const TensorPtrT<T>& x, CostTally* tally) const {
    auto y = conv(tape, prefix + "conv2", act(tape, conv(tape, prefix + "conv1", x, tally)), tally);
    switch (structure_.config.block_type) {
        case BlockType::RB:
            break;
        case BlockType::RB_CA: {
            auto s = global_avg_pool<T>(tape, y);
            s = act(tape, conv(tape, prefix + "att.down", s, tally));
            s = sigmoid<T>(tape, conv(tape, prefix + "att.up", s, tally));
            y = scale_channels<T>(tape, y, s);
            break;
        }
        case BlockType::RB_SA: {
            auto stats = channel_stat_pool<T>(tape, y);
            auto m = sigmoid<T>(tape, conv(tape, prefix + "att.conv", stats, tally));
            y = scale_spatial<T>(tape, y, m);
            break;
        }
        case BlockType::RB_PA:
            y = pa_gate(tape, prefix + "att", y, y, tally);
            break;
        case BlockType::SCPA:
            throw ShapeError("rb_block called for SC-PA config");
    }
    return add<T>(tape, y, x);
}

template <typename T>
TensorPtrT<T> PanModelT<T>::forward(TapeT<T>& tape, const TensorPtrT<T>& input,
                                    CostTally* tally) const {
    const ModelConfig& cfg = structure_.config;
    check_shape(input->shape.c == cfg.in_channels,
                "forward: expected " + std::to_string(cfg.in_channels) + " input channels, got " +
                    std::to_string(input->shape.c));

    auto fea = act(tape, conv(tape, "fe.conv", input, tally));
    for (int i = 0; i < cfg.num_blocks; ++i) {
        const std::string prefix = "body." + std::to_string(i) + ".";
        fea = cfg.block_type == BlockType::SCPA ? scpa_block(tape, prefix, fea, tally)
                                                : rb_block(tape, prefix, fea, tally);
    }
    fea = conv(tape, "trunk.conv", fea, tally);

    for (int stage = 0; stage < cfg.upsample_stages(); ++stage) {
        const std::string prefix = "up." + std::to_string(stage) + ".";
        fea = resize_nearest<T>(tape, fea, cfg.stage_factor(stage));
        fea = conv(tape, prefix + "conv1", fea, tally);
        if (cfg.pa_in_upa) fea = pa_gate(tape, prefix + "att", fea, fea, tally);
        fea = act(tape, fea);
        fea = act(tape, conv(tape, prefix + "conv2", fea, tally));
    }
    auto out = conv(tape, "tail.conv", fea, tally);
    auto skip = resize_bilinear<T>(tape, input, cfg.scale);
    return add<T>(tape, out, skip);
}

}  // namespace pan
