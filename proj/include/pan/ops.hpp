#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>

#include "pan/autograd.hpp"

namespace pan {

namespace detail {

#ifndef NDEBUG
template <typename T>
inline void check_finite(const TensorT<T>& t, const char* op) {
    for (const T v : t.data) assert(std::isfinite(double(v)) && op);
}
#else
template <typename T>
inline void check_finite(const TensorT<T>&, const char*) {}
#endif

// Direct same-padding cross-correlation. Per output cell the accumulation
// order is bias first, then (ic, kh, kw) ascending, which keeps results
// bitwise reproducible.
template <typename T>
void conv2d_forward(const T* in, const T* w, const T* bias, T* out, int n, int in_c, int h,
                    int wd, int out_c, int k, int pad) {
    const std::int64_t plane = std::int64_t(h) * wd;
    for (int ni = 0; ni < n; ++ni) {
        for (int oc = 0; oc < out_c; ++oc) {
            T* op = out + (std::int64_t(ni) * out_c + oc) * plane;
            std::fill(op, op + plane, bias ? bias[oc] : T(0));
            const T* woc = w + std::int64_t(oc) * in_c * k * k;
            for (int ic = 0; ic < in_c; ++ic) {
                const T* ip = in + (std::int64_t(ni) * in_c + ic) * plane;
                const T* wp = woc + std::int64_t(ic) * k * k;
                for (int kh = 0; kh < k; ++kh) {
                    for (int kw = 0; kw < k; ++kw) {
                        const T wv = wp[kh * k + kw];
                        const int oh_lo = std::max(0, pad - kh);
                        const int oh_hi = std::min(h, h + pad - kh);
                        const int ow_lo = std::max(0, pad - kw);
                        const int ow_hi = std::min(wd, wd + pad - kw);
                        const int len = ow_hi - ow_lo;
                        for (int oh = oh_lo; oh < oh_hi; ++oh) {
                            const T* irow = ip + std::int64_t(oh - pad + kh) * wd + (ow_lo - pad + kw);
                            T* orow = op + std::int64_t(oh) * wd + ow_lo;
                            for (int i = 0; i < len; ++i) orow[i] += wv * irow[i];
                        }
                    }
                }
            }
        }
    }
}

template <typename T>
void conv2d_backward_input(const T* dout, const T* w, T* din, int n, int in_c, int h, int wd,
                           int out_c, int k, int pad) {
    const std::int64_t plane = std::int64_t(h) * wd;
    for (int ni = 0; ni < n; ++ni) {
        for (int ic = 0; ic < in_c; ++ic) {
            T* dip = din + (std::int64_t(ni) * in_c + ic) * plane;
            for (int oc = 0; oc < out_c; ++oc) {
                const T* dop = dout + (std::int64_t(ni) * out_c + oc) * plane;
                const T* wp = w + (std::int64_t(oc) * in_c + ic) * k * k;
                for (int kh = 0; kh < k; ++kh) {
                    for (int kw = 0; kw < k; ++kw) {
                        const T wv = wp[kh * k + kw];
                        // oh = ih + pad - kh must stay in [0, h)
                        const int ih_lo = std::max(0, kh - pad);
                        const int ih_hi = std::min(h, h + kh - pad);
                        const int iw_lo = std::max(0, kw - pad);
                        const int iw_hi = std::min(wd, wd + kw - pad);
                        const int len = iw_hi - iw_lo;
                        for (int ih = ih_lo; ih < ih_hi; ++ih) {
                            const T* drow = dop + std::int64_t(ih + pad - kh) * wd + (iw_lo + pad - kw);
                            T* irow = dip + std::int64_t(ih) * wd + iw_lo;
                            for (int i = 0; i < len; ++i) irow[i] += wv * drow[i];
                        }
                    }
                }
            }
        }
    }
}

template <typename T>
void conv2d_backward_weight(const T* in, const T* dout, T* dw, int n, int in_c, int h, int wd,
                            int out_c, int k, int pad) {
    const std::int64_t plane = std::int64_t(h) * wd;
    for (int oc = 0; oc < out_c; ++oc) {
        for (int ic = 0; ic < in_c; ++ic) {
            T* dwp = dw + (std::int64_t(oc) * in_c + ic) * k * k;
            for (int kh = 0; kh < k; ++kh) {
                for (int kw = 0; kw < k; ++kw) {
                    T acc = T(0);
                    const int oh_lo = std::max(0, pad - kh);
                    const int oh_hi = std::min(h, h + pad - kh);
                    const int ow_lo = std::max(0, pad - kw);
                    const int ow_hi = std::min(wd, wd + pad - kw);
                    const int len = ow_hi - ow_lo;
                    for (int ni = 0; ni < n; ++ni) {
                        const T* ip = in + (std::int64_t(ni) * in_c + ic) * plane;
                        const T* dop = dout + (std::int64_t(ni) * out_c + oc) * plane;
                        for (int oh = oh_lo; oh < oh_hi; ++oh) {
                            const T* irow = ip + std::int64_t(oh - pad + kh) * wd + (ow_lo - pad + kw);
                            const T* drow = dop + std::int64_t(oh) * wd + ow_lo;
                            for (int i = 0; i < len; ++i) acc += irow[i] * drow[i];
                        }
                    }
                    dwp[kh * k + kw] += acc;
                }
            }
        }
    }
}

}  // namespace detail

/// Same-padding cross-correlation, stride 1, odd k up to 7 (1x1 and 3x3
/// everywhere except the 7x7 spatial-attention conv). Bias has shape
/// (out_c,1,1,1) when present.
template <typename T>
TensorPtrT<T> conv2d(TapeT<T>& tape, const TensorPtrT<T>& input, const TensorPtrT<T>& weight,
                     const TensorPtrT<T>& bias, int stride = 1, int padding = -1) {
    const Shape4 ws = weight->shape;
    const Shape4 is = input->shape;
    check_supported(ws.h == ws.w && ws.h % 2 == 1 && ws.h >= 1 && ws.h <= 7,
                    "conv2d: kernel must be odd and at most 7x7, got " + to_string(ws));
    check_supported(stride == 1, "conv2d: only stride 1 is supported");
    const int k = ws.h;
    if (padding < 0) padding = (k - 1) / 2;
    check_supported(padding == (k - 1) / 2, "conv2d: padding must preserve spatial size");
    check_shape(is.c == ws.c, "conv2d: input channels " + std::to_string(is.c) +
                                  " do not match weight " + to_string(ws));
    if (bias)
        check_shape(bias->shape == Shape4{ws.n, 1, 1, 1},
                    "conv2d: bias shape " + to_string(bias->shape) + " does not match out_c " +
                        std::to_string(ws.n));

    auto out = make_tensor<T>({is.n, ws.n, is.h, is.w});
    detail::conv2d_forward(input->data.data(), weight->data.data(),
                           bias ? bias->data.data() : nullptr, out->data.data(), is.n, is.c, is.h,
                           is.w, ws.n, k, padding);
    detail::check_finite(*out, "conv2d");

    tape.track("conv2d", {input, weight, bias}, out, [input, weight, bias, out, k, padding]() {
        const Shape4 is2 = input->shape;
        const T* g = out->grad.data();
        if (input->requires_grad)
            detail::conv2d_backward_input(g, weight->data.data(), input->grad.data(), is2.n, is2.c,
                                          is2.h, is2.w, weight->shape.n, k, padding);
        if (weight->requires_grad)
            detail::conv2d_backward_weight(input->data.data(), g, weight->grad.data(), is2.n, is2.c,
                                           is2.h, is2.w, weight->shape.n, k, padding);
        if (bias && bias->requires_grad) {
            const std::int64_t plane = out->plane_size();
            for (int ni = 0; ni < out->shape.n; ++ni)
                for (int oc = 0; oc < out->shape.c; ++oc) {
                    const T* gp = out->grad_plane(ni, oc);
                    T acc = T(0);
                    for (std::int64_t i = 0; i < plane; ++i) acc += gp[i];
                    bias->grad[oc] += acc;
                }
        }
    });
    return out;
}

template <typename T>
TensorPtrT<T> sigmoid(TapeT<T>& tape, const TensorPtrT<T>& x) {
    auto out = make_tensor<T>(x->shape);
    const std::size_t n = x->data.size();
    for (std::size_t i = 0; i < n; ++i) {
        const T v = x->data[i];
        if (v >= T(0)) {
            out->data[i] = T(1) / (T(1) + std::exp(-v));
        } else {
            const T e = std::exp(v);
            out->data[i] = e / (T(1) + e);
        }
    }
    tape.track("sigmoid", {x}, out, [x, out]() {
        if (!x->requires_grad) return;
        for (std::size_t i = 0; i < out->data.size(); ++i) {
            const T s = out->data[i];
            x->grad[i] += out->grad[i] * s * (T(1) - s);
        }
    });
    return out;
}

template <typename T>
TensorPtrT<T> leaky_relu(TapeT<T>& tape, const TensorPtrT<T>& x, T slope) {
    auto out = make_tensor<T>(x->shape);
    for (std::size_t i = 0; i < x->data.size(); ++i) {
        const T v = x->data[i];
        out->data[i] = v > T(0) ? v : slope * v;
    }
    tape.track("leaky_relu", {x}, out, [x, out, slope]() {
        if (!x->requires_grad) return;
        for (std::size_t i = 0; i < out->data.size(); ++i)
            x->grad[i] += out->grad[i] * (x->data[i] > T(0) ? T(1) : slope);
    });
    return out;
}

template <typename T>
TensorPtrT<T> add(TapeT<T>& tape, const TensorPtrT<T>& a, const TensorPtrT<T>& b) {
    check_shape(a->shape == b->shape,
                "add: shape mismatch " + to_string(a->shape) + " vs " + to_string(b->shape));
    auto out = make_tensor<T>(a->shape);
    for (std::size_t i = 0; i < a->data.size(); ++i) out->data[i] = a->data[i] + b->data[i];
    tape.track("add", {a, b}, out, [a, b, out]() {
        if (a->requires_grad)
            for (std::size_t i = 0; i < out->grad.size(); ++i) a->grad[i] += out->grad[i];
        if (b->requires_grad)
            for (std::size_t i = 0; i < out->grad.size(); ++i) b->grad[i] += out->grad[i];
    });
    return out;
}

template <typename T>
TensorPtrT<T> mul(TapeT<T>& tape, const TensorPtrT<T>& a, const TensorPtrT<T>& b) {
    check_shape(a->shape == b->shape,
                "mul: shape mismatch " + to_string(a->shape) + " vs " + to_string(b->shape));
    auto out = make_tensor<T>(a->shape);
    for (std::size_t i = 0; i < a->data.size(); ++i) out->data[i] = a->data[i] * b->data[i];
    tape.track("mul", {a, b}, out, [a, b, out]() {
        if (a->requires_grad)
            for (std::size_t i = 0; i < out->grad.size(); ++i) a->grad[i] += out->grad[i] * b->data[i];
        if (b->requires_grad)
            for (std::size_t i = 0; i < out->grad.size(); ++i) b->grad[i] += out->grad[i] * a->data[i];
    });
    return out;
}

template <typename T>
TensorPtrT<T> concat_channels(TapeT<T>& tape, const TensorPtrT<T>& a, const TensorPtrT<T>& b) {
    const Shape4 sa = a->shape, sb = b->shape;
    check_shape(sa.n == sb.n && sa.h == sb.h && sa.w == sb.w,
                "concat_channels: batch/spatial mismatch " + to_string(sa) + " vs " + to_string(sb));
    auto out = make_tensor<T>({sa.n, sa.c + sb.c, sa.h, sa.w});
    const std::int64_t plane = out->plane_size();
    for (int ni = 0; ni < sa.n; ++ni) {
        for (int ci = 0; ci < sa.c; ++ci)
            std::copy_n(a->plane(ni, ci), plane, out->plane(ni, ci));
        for (int ci = 0; ci < sb.c; ++ci)
            std::copy_n(b->plane(ni, ci), plane, out->plane(ni, sa.c + ci));
    }
    tape.track("concat_channels", {a, b}, out, [a, b, out]() {
        const Shape4 sa2 = a->shape, sb2 = b->shape;
        const std::int64_t plane2 = out->plane_size();
        for (int ni = 0; ni < sa2.n; ++ni) {
            if (a->requires_grad)
                for (int ci = 0; ci < sa2.c; ++ci) {
                    const T* g = out->grad_plane(ni, ci);
                    T* ga = a->grad_plane(ni, ci);
                    for (std::int64_t i = 0; i < plane2; ++i) ga[i] += g[i];
                }
            if (b->requires_grad)
                for (int ci = 0; ci < sb2.c; ++ci) {
                    const T* g = out->grad_plane(ni, sa2.c + ci);
                    T* gb = b->grad_plane(ni, ci);
                    for (std::int64_t i = 0; i < plane2; ++i) gb[i] += g[i];
                }
        }
    });
    return out;
}

/// Replicates each source pixel into a factor x factor block.
template <typename T>
TensorPtrT<T> resize_nearest(TapeT<T>& tape, const TensorPtrT<T>& x, int factor) {
    check_supported(factor == 2 || factor == 3, "resize_nearest: factor must be 2 or 3");
    const Shape4 s = x->shape;
    auto out = make_tensor<T>({s.n, s.c, s.h * factor, s.w * factor});
    for (int ni = 0; ni < s.n; ++ni)
        for (int ci = 0; ci < s.c; ++ci) {
            const T* ip = x->plane(ni, ci);
            T* op = out->plane(ni, ci);
            for (int oy = 0; oy < s.h * factor; ++oy) {
                const T* irow = ip + std::int64_t(oy / factor) * s.w;
                T* orow = op + std::int64_t(oy) * s.w * factor;
                for (int ox = 0; ox < s.w * factor; ++ox) orow[ox] = irow[ox / factor];
            }
        }
    tape.track("resize_nearest", {x}, out, [x, out, factor]() {
        if (!x->requires_grad) return;
        const Shape4 s2 = x->shape;
        for (int ni = 0; ni < s2.n; ++ni)
            for (int ci = 0; ci < s2.c; ++ci) {
                const T* gp = out->grad_plane(ni, ci);
                T* gx = x->grad_plane(ni, ci);
                for (int oy = 0; oy < s2.h * factor; ++oy) {
                    const T* grow = gp + std::int64_t(oy) * s2.w * factor;
                    T* xrow = gx + std::int64_t(oy / factor) * s2.w;
                    for (int ox = 0; ox < s2.w * factor; ++ox) xrow[ox / factor] += grow[ox];
                }
            }
    });
    return out;
}

namespace detail {

// Half-pixel-center sampling grid (align_corners = false). Source indices
// are clamped to the border; weights are untouched so output stays a convex
// combination of the four neighbors.
struct BilinearAxis {
    std::vector<int> i0, i1;
    std::vector<double> w1;  // weight of i1; i0 gets 1 - w1
};

inline BilinearAxis bilinear_axis(int in_size, int factor) {
    BilinearAxis ax;
    const int out_size = in_size * factor;
    ax.i0.resize(out_size);
    ax.i1.resize(out_size);
    ax.w1.resize(out_size);
    for (int o = 0; o < out_size; ++o) {
        const double src = (o + 0.5) / factor - 0.5;
        const double f = std::floor(src);
        int lo = int(f);
        double w = src - f;
        int hi = lo + 1;
        lo = std::clamp(lo, 0, in_size - 1);
        hi = std::clamp(hi, 0, in_size - 1);
        ax.i0[o] = lo;
        ax.i1[o] = hi;
        ax.w1[o] = w;
    }
    return ax;
}

}  // namespace detail

template <typename T>
TensorPtrT<T> resize_bilinear(TapeT<T>& tape, const TensorPtrT<T>& x, int factor) {
    check_supported(factor == 2 || factor == 3 || factor == 4,
                    "resize_bilinear: factor must be 2, 3 or 4");
    const Shape4 s = x->shape;
    auto out = make_tensor<T>({s.n, s.c, s.h * factor, s.w * factor});
    const auto ay = detail::bilinear_axis(s.h, factor);
    const auto axx = detail::bilinear_axis(s.w, factor);
    for (int ni = 0; ni < s.n; ++ni)
        for (int ci = 0; ci < s.c; ++ci) {
            const T* ip = x->plane(ni, ci);
            T* op = out->plane(ni, ci);
            for (int oy = 0; oy < s.h * factor; ++oy) {
                const T* r0 = ip + std::int64_t(ay.i0[oy]) * s.w;
                const T* r1 = ip + std::int64_t(ay.i1[oy]) * s.w;
                const double wy = ay.w1[oy];
                T* orow = op + std::int64_t(oy) * s.w * factor;
                for (int ox = 0; ox < s.w * factor; ++ox) {
                    const double wx = axx.w1[ox];
                    const double top = (1.0 - wx) * double(r0[axx.i0[ox]]) + wx * double(r0[axx.i1[ox]]);
                    const double bot = (1.0 - wx) * double(r1[axx.i0[ox]]) + wx * double(r1[axx.i1[ox]]);
                    orow[ox] = T((1.0 - wy) * top + wy * bot);
                }
            }
        }
    tape.track("resize_bilinear", {x}, out, [x, out, factor]() {
        if (!x->requires_grad) return;
        const Shape4 s2 = x->shape;
        const auto ay2 = detail::bilinear_axis(s2.h, factor);
        const auto ax2 = detail::bilinear_axis(s2.w, factor);
        for (int ni = 0; ni < s2.n; ++ni)
            for (int ci = 0; ci < s2.c; ++ci) {
                const T* gp = out->grad_plane(ni, ci);
                T* gx = x->grad_plane(ni, ci);
                for (int oy = 0; oy < s2.h * factor; ++oy) {
                    const double wy = ay2.w1[oy];
                    for (int ox = 0; ox < s2.w * factor; ++ox) {
                        const double wx = ax2.w1[ox];
                        const T g = gp[std::int64_t(oy) * s2.w * factor + ox];
                        gx[std::int64_t(ay2.i0[oy]) * s2.w + ax2.i0[ox]] += T((1.0 - wy) * (1.0 - wx)) * g;
                        gx[std::int64_t(ay2.i0[oy]) * s2.w + ax2.i1[ox]] += T((1.0 - wy) * wx) * g;
                        gx[std::int64_t(ay2.i1[oy]) * s2.w + ax2.i0[ox]] += T(wy * (1.0 - wx)) * g;
                        gx[std::int64_t(ay2.i1[oy]) * s2.w + ax2.i1[ox]] += T(wy * wx) * g;
                    }
                }
            }
    });
    return out;
}

/// Spatial mean per channel -> (n, c, 1, 1).
template <typename T>
TensorPtrT<T> global_avg_pool(TapeT<T>& tape, const TensorPtrT<T>& x) {
    const Shape4 s = x->shape;
    check_shape(s.h >= 1 && s.w >= 1, "global_avg_pool: empty spatial dims");
    auto out = make_tensor<T>({s.n, s.c, 1, 1});
    const std::int64_t plane = x->plane_size();
    for (int ni = 0; ni < s.n; ++ni)
        for (int ci = 0; ci < s.c; ++ci) {
            const T* ip = x->plane(ni, ci);
            T acc = T(0);
            for (std::int64_t i = 0; i < plane; ++i) acc += ip[i];
            out->data[std::int64_t(ni) * s.c + ci] = acc / T(plane);
        }
    tape.track("global_avg_pool", {x}, out, [x, out]() {
        if (!x->requires_grad) return;
        const Shape4 s2 = x->shape;
        const std::int64_t plane2 = x->plane_size();
        for (int ni = 0; ni < s2.n; ++ni)
            for (int ci = 0; ci < s2.c; ++ci) {
                const T g = out->grad[std::int64_t(ni) * s2.c + ci] / T(plane2);
                T* gx = x->grad_plane(ni, ci);
                for (std::int64_t i = 0; i < plane2; ++i) gx[i] += g;
            }
    });
    return out;
}

/// Per-pixel channel statistics -> (n, 2, h, w): channel 0 mean, channel 1 max.
/// Max ties resolve to the lowest channel index.
template <typename T>
TensorPtrT<T> channel_stat_pool(TapeT<T>& tape, const TensorPtrT<T>& x) {
    const Shape4 s = x->shape;
    check_shape(s.c >= 1, "channel_stat_pool: need at least one channel");
    auto out = make_tensor<T>({s.n, 2, s.h, s.w});
    const std::int64_t plane = x->plane_size();
    auto argmax = std::make_shared<std::vector<std::int32_t>>(std::size_t(s.n) * plane);
    for (int ni = 0; ni < s.n; ++ni) {
        T* mean_p = out->plane(ni, 0);
        T* max_p = out->plane(ni, 1);
        std::int32_t* am = argmax->data() + std::int64_t(ni) * plane;
        for (std::int64_t i = 0; i < plane; ++i) {
            T acc = T(0);
            T best = x->plane(ni, 0)[i];
            std::int32_t best_c = 0;
            for (int ci = 0; ci < s.c; ++ci) {
                const T v = x->plane(ni, ci)[i];
                acc += v;
                if (v > best) {
                    best = v;
                    best_c = ci;
                }
            }
            mean_p[i] = acc / T(s.c);
            max_p[i] = best;
            am[i] = best_c;
        }
    }
    tape.track("channel_stat_pool", {x}, out, [x, out, argmax]() {
        if (!x->requires_grad) return;
        const Shape4 s2 = x->shape;
        const std::int64_t plane2 = x->plane_size();
        for (int ni = 0; ni < s2.n; ++ni) {
            const T* gmean = out->grad_plane(ni, 0);
            const T* gmax = out->grad_plane(ni, 1);
            const std::int32_t* am = argmax->data() + std::int64_t(ni) * plane2;
            for (int ci = 0; ci < s2.c; ++ci) {
                T* gx = x->grad_plane(ni, ci);
                for (std::int64_t i = 0; i < plane2; ++i) {
                    gx[i] += gmean[i] / T(s2.c);
                    if (am[i] == ci) gx[i] += gmax[i];
                }
            }
        }
    });
    return out;
}

/// x (n,c,h,w) scaled per channel by s (n,c,1,1).
template <typename T>
TensorPtrT<T> scale_channels(TapeT<T>& tape, const TensorPtrT<T>& x, const TensorPtrT<T>& s) {
    const Shape4 xs = x->shape, ss = s->shape;
    check_shape(ss == Shape4{xs.n, xs.c, 1, 1},
                "scale_channels: scale must be (n,c,1,1), got " + to_string(ss));
    auto out = make_tensor<T>(xs);
    const std::int64_t plane = x->plane_size();
    for (int ni = 0; ni < xs.n; ++ni)
        for (int ci = 0; ci < xs.c; ++ci) {
            const T sv = s->data[std::int64_t(ni) * xs.c + ci];
            const T* ip = x->plane(ni, ci);
            T* op = out->plane(ni, ci);
            for (std::int64_t i = 0; i < plane; ++i) op[i] = ip[i] * sv;
        }
    tape.track("scale_channels", {x, s}, out, [x, s, out]() {
        const Shape4 xs2 = x->shape;
        const std::int64_t plane2 = x->plane_size();
        for (int ni = 0; ni < xs2.n; ++ni)
            for (int ci = 0; ci < xs2.c; ++ci) {
                const T sv = s->data[std::int64_t(ni) * xs2.c + ci];
                const T* gp = out->grad_plane(ni, ci);
                if (x->requires_grad) {
                    T* gx = x->grad_plane(ni, ci);
                    for (std::int64_t i = 0; i < plane2; ++i) gx[i] += gp[i] * sv;
                }
                if (s->requires_grad) {
                    const T* ip = x->plane(ni, ci);
                    T acc = T(0);
                    for (std::int64_t i = 0; i < plane2; ++i) acc += gp[i] * ip[i];
                    s->grad[std::int64_t(ni) * xs2.c + ci] += acc;
                }
            }
    });
    return out;
}

/// x (n,c,h,w) scaled per pixel by m (n,1,h,w).
template <typename T>
TensorPtrT<T> scale_spatial(TapeT<T>& tape, const TensorPtrT<T>& x, const TensorPtrT<T>& m) {
    const Shape4 xs = x->shape, ms = m->shape;
    check_shape(ms == Shape4{xs.n, 1, xs.h, xs.w},
                "scale_spatial: map must be (n,1,h,w), got " + to_string(ms));
    auto out = make_tensor<T>(xs);
    const std::int64_t plane = x->plane_size();
    for (int ni = 0; ni < xs.n; ++ni) {
        const T* mp = m->plane(ni, 0);
        for (int ci = 0; ci < xs.c; ++ci) {
            const T* ip = x->plane(ni, ci);
            T* op = out->plane(ni, ci);
            for (std::int64_t i = 0; i < plane; ++i) op[i] = ip[i] * mp[i];
        }
    }
    tape.track("scale_spatial", {x, m}, out, [x, m, out]() {
        const Shape4 xs2 = x->shape;
        const std::int64_t plane2 = x->plane_size();
        for (int ni = 0; ni < xs2.n; ++ni) {
            const T* mp = m->plane(ni, 0);
            for (int ci = 0; ci < xs2.c; ++ci) {
                const T* gp = out->grad_plane(ni, ci);
                if (x->requires_grad) {
                    T* gx = x->grad_plane(ni, ci);
                    for (std::int64_t i = 0; i < plane2; ++i) gx[i] += gp[i] * mp[i];
                }
                if (m->requires_grad) {
                    const T* ip = x->plane(ni, ci);
                    T* gm = m->grad_plane(ni, 0);
                    for (std::int64_t i = 0; i < plane2; ++i) gm[i] += gp[i] * ip[i];
                }
            }
        }
    });
    return out;
}

template <typename T>
TensorPtrT<T> reduce_sum(TapeT<T>& tape, const TensorPtrT<T>& x) {
    auto out = make_tensor<T>({1, 1, 1, 1});
    T acc = T(0);
    for (const T v : x->data) acc += v;
    out->data[0] = acc;
    tape.track("reduce_sum", {x}, out, [x, out]() {
        if (!x->requires_grad) return;
        const T g = out->grad[0];
        for (auto& gv : x->grad) gv += g;
    });
    return out;
}

template <typename T>
TensorPtrT<T> reduce_mean(TapeT<T>& tape, const TensorPtrT<T>& x) {
    auto out = make_tensor<T>({1, 1, 1, 1});
    T acc = T(0);
    for (const T v : x->data) acc += v;
    const T inv = T(1) / T(x->data.size());
    out->data[0] = acc * inv;
    tape.track("reduce_mean", {x}, out, [x, out, inv]() {
        if (!x->requires_grad) return;
        const T g = out->grad[0] * inv;
        for (auto& gv : x->grad) gv += g;
    });
    return out;
}

/// Mean absolute error. Subgradient at exact ties is 0.
template <typename T>
TensorPtrT<T> l1_loss(TapeT<T>& tape, const TensorPtrT<T>& pred, const TensorPtrT<T>& target) {
    check_shape(pred->shape == target->shape, "l1_loss: shape mismatch " + to_string(pred->shape) +
                                                  " vs " + to_string(target->shape));
    auto out = make_tensor<T>({1, 1, 1, 1});
    T acc = T(0);
    for (std::size_t i = 0; i < pred->data.size(); ++i)
        acc += std::abs(pred->data[i] - target->data[i]);
    const T inv = T(1) / T(pred->data.size());
    out->data[0] = acc * inv;
    tape.track("l1_loss", {pred, target}, out, [pred, target, out, inv]() {
        const T g = out->grad[0] * inv;
        for (std::size_t i = 0; i < pred->data.size(); ++i) {
            const T d = pred->data[i] - target->data[i];
            const T s = d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0));
            if (pred->requires_grad) pred->grad[i] += g * s;
            if (target->requires_grad) target->grad[i] -= g * s;
        }
    });
    return out;
}

}  // namespace pan
