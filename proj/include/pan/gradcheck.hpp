#pragma once

#include <random>
#include <string>

#include "pan/nn.hpp"

namespace pan {

struct GradCheckResult {
    double max_rel_error = 0.0;
    int checked = 0;
    std::string worst_param;
};

/// Central-difference sweep over up to `max_params` randomly sampled
/// parameter scalars of a freshly built model. The L1 target sits a fixed
/// offset away from the initial prediction, so the loss is locally smooth
/// around every probe. Relative error is measured against
/// max(|analytic|, |numeric|, rms of sampled analytic grads) so near-zero
/// gradients do not dominate the report.
template <typename T>
GradCheckResult gradcheck_model(const ModelConfig& cfg, std::uint64_t seed, int max_params,
                                double step) {
    auto model = build_pan<T>(cfg, seed);
    std::mt19937_64 rng(seed + 1);

    auto input = make_tensor<T>({1, cfg.in_channels, 6, 6});
    fill_uniform(*input, rng, T(0), T(1));

    // Target offset by +-[0.5, 1.0] per element keeps |pred - target| far
    // from the kink of |x| for the tiny probe steps used below.
    TensorPtrT<T> target;
    {
        TapeT<T> tape;
        tape.set_recording(false);
        auto pred0 = model.forward(tape, input);
        target = make_tensor<T>(pred0->shape);
        std::uniform_real_distribution<double> mag(0.5, 1.0);
        std::bernoulli_distribution sign(0.5);
        for (std::size_t i = 0; i < target->data.size(); ++i)
            target->data[i] = pred0->data[i] + T(sign(rng) ? mag(rng) : -mag(rng));
    }

    auto loss_value = [&]() {
        TapeT<T> tape;
        tape.set_recording(false);
        auto pred = model.forward(tape, input);
        T acc = T(0);
        for (std::size_t i = 0; i < pred->data.size(); ++i)
            acc += std::abs(pred->data[i] - target->data[i]);
        return double(acc) / double(pred->data.size());
    };

    // One analytic backward pass.
    {
        TapeT<T> tape;
        auto pred = model.forward(tape, input);
        auto loss = l1_loss<T>(tape, pred, target);
        for (auto& p : model.params()) {
            p.weight->zero_grad();
            if (p.bias) p.bias->zero_grad();
        }
        tape.backward(loss);
    }

    // Flatten (tensor, element) slots and sample without replacement.
    std::vector<std::pair<TensorPtrT<T>, std::string>> tensors;
    for (auto& p : model.params()) {
        tensors.emplace_back(p.weight, p.name + ".weight");
        if (p.bias) tensors.emplace_back(p.bias, p.name + ".bias");
    }
    std::vector<std::pair<std::size_t, std::size_t>> slots;
    for (std::size_t ti = 0; ti < tensors.size(); ++ti)
        for (std::size_t ei = 0; ei < tensors[ti].first->data.size(); ++ei)
            slots.emplace_back(ti, ei);
    std::shuffle(slots.begin(), slots.end(), rng);
    if (int(slots.size()) > max_params) slots.resize(std::size_t(max_params));

    double rms = 0.0;
    for (const auto& [ti, ei] : slots) {
        const double a = double(tensors[ti].first->grad[ei]);
        rms += a * a;
    }
    rms = std::sqrt(rms / double(slots.size()));
    const double floor = std::max(rms, 1e-6);

    GradCheckResult result;
    result.checked = int(slots.size());
    for (const auto& [ti, ei] : slots) {
        auto& tensor = *tensors[ti].first;
        const double analytic = double(tensor.grad[ei]);
        const T saved = tensor.data[ei];
        const double h = step * std::max(1.0, std::abs(double(saved)));
        tensor.data[ei] = T(double(saved) + h);
        const double lp = loss_value();
        tensor.data[ei] = T(double(saved) - h);
        const double lm = loss_value();
        tensor.data[ei] = saved;
        const double numeric = (lp - lm) / (2.0 * h);
        const double rel =
            std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
        if (rel > result.max_rel_error) {
            result.max_rel_error = rel;
            result.worst_param = tensors[ti].second + "[" + std::to_string(ei) + "]";
        }
    }
    return result;
}

}  // namespace pan
