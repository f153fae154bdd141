#pragma once

#include <algorithm>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "pan/errors.hpp"

namespace pan {

struct Shape4 {
    int n = 0;
    int c = 0;
    int h = 0;
    int w = 0;

    std::int64_t numel() const { return std::int64_t(n) * c * h * w; }
    bool operator==(const Shape4&) const = default;
};

inline std::string to_string(const Shape4& s) {
    return "(" + std::to_string(s.n) + "," + std::to_string(s.c) + "," + std::to_string(s.h) +
           "," + std::to_string(s.w) + ")";
}

/// Dense NCHW tensor. Storage is row-major; `grad` stays empty until a
/// backward pass (or ensure_grad) touches it.
template <typename T>
struct TensorT {
    Shape4 shape;
    std::vector<T> data;
    std::vector<T> grad;
    bool requires_grad = false;

    TensorT() = default;
    explicit TensorT(Shape4 s, T fill = T(0)) : shape(s), data(static_cast<std::size_t>(s.numel()), fill) {}

    std::int64_t numel() const { return shape.numel(); }

    std::int64_t index(int ni, int ci, int hi, int wi) const {
        return ((std::int64_t(ni) * shape.c + ci) * shape.h + hi) * shape.w + wi;
    }
    T& at(int ni, int ci, int hi, int wi) { return data[static_cast<std::size_t>(index(ni, ci, hi, wi))]; }
    T at(int ni, int ci, int hi, int wi) const { return data[static_cast<std::size_t>(index(ni, ci, hi, wi))]; }

    std::int64_t plane_size() const { return std::int64_t(shape.h) * shape.w; }
    T* plane(int ni, int ci) { return data.data() + (std::int64_t(ni) * shape.c + ci) * plane_size(); }
    const T* plane(int ni, int ci) const { return data.data() + (std::int64_t(ni) * shape.c + ci) * plane_size(); }
    T* grad_plane(int ni, int ci) { return grad.data() + (std::int64_t(ni) * shape.c + ci) * plane_size(); }
    const T* grad_plane(int ni, int ci) const { return grad.data() + (std::int64_t(ni) * shape.c + ci) * plane_size(); }

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    }
    void zero_grad() {
        if (grad.size() != data.size())
            grad.assign(data.size(), T(0));
        else
            std::fill(grad.begin(), grad.end(), T(0));
    }
};

template <typename T>
using TensorPtrT = std::shared_ptr<TensorT<T>>;

using Tensor = TensorT<float>;
using TensorPtr = TensorPtrT<float>;

template <typename T>
TensorPtrT<T> make_tensor(Shape4 s, T fill = T(0)) {
    return std::make_shared<TensorT<T>>(s, fill);
}

template <typename T>
TensorPtrT<T> make_param(Shape4 s, T fill = T(0)) {
    auto t = std::make_shared<TensorT<T>>(s, fill);
    t->requires_grad = true;
    return t;
}

template <typename T, typename Rng>
void fill_uniform(TensorT<T>& t, Rng& rng, T lo, T hi) {
    std::uniform_real_distribution<double> d{double(lo), double(hi)};
    for (auto& v : t.data) v = T(d(rng));
}

template <typename T, typename Rng>
void fill_normal(TensorT<T>& t, Rng& rng, double stddev) {
    std::normal_distribution<double> d(0.0, stddev);
    for (auto& v : t.data) v = T(d(rng));
}

}  // namespace pan
