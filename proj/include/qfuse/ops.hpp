#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "qfuse/tensor.hpp"

namespace qfuse {

enum class Act { Relu, Tanh, Sigmoid };

namespace detail {

inline bool record(bool any_input_requires_grad) {
    return any_input_requires_grad && grad_mode();
}


// Dispatch on the handful of plane widths the networks use so the inner
// loops get compile-time trip counts.
template <class T>
inline void stencil3x3_plane(T* dst, const T* src, int h, int w, const T* wv) {
    switch (w) {
        case 14: return stencil3x3_plane_impl<T, 14>(dst, src, h, w, wv);
        case 16: return stencil3x3_plane_impl<T, 16>(dst, src, h, w, wv);
        case 28: return stencil3x3_plane_impl<T, 28>(dst, src, h, w, wv);
        case 32: return stencil3x3_plane_impl<T, 32>(dst, src, h, w, wv);
        case 56: return stencil3x3_plane_impl<T, 56>(dst, src, h, w, wv);
        case 64: return stencil3x3_plane_impl<T, 64>(dst, src, h, w, wv);
        default: return stencil3x3_plane_impl<T, 0>(dst, src, h, w, wv);
    }
}

template <class T>
inline void stencil3x3_plane2(T* da, T* db, const T* src, int h, int w, const T* wva, const T* wvb) {
    switch (w) {
        case 14: return stencil3x3_plane2_impl<T, 14>(da, db, src, h, w, wva, wvb);
        case 16: return stencil3x3_plane2_impl<T, 16>(da, db, src, h, w, wva, wvb);
        case 28: return stencil3x3_plane2_impl<T, 28>(da, db, src, h, w, wva, wvb);
        case 32: return stencil3x3_plane2_impl<T, 32>(da, db, src, h, w, wva, wvb);
        case 56: return stencil3x3_plane2_impl<T, 56>(da, db, src, h, w, wva, wvb);
        case 64: return stencil3x3_plane2_impl<T, 64>(da, db, src, h, w, wva, wvb);
        default: return stencil3x3_plane2_impl<T, 0>(da, db, src, h, w, wva, wvb);
    }
}

template <class T>
inline void stencil3x3_wgrad_plane(const T* g, const T* src, int h, int w, T* acc) {
    switch (w) {
        case 14: return stencil3x3_wgrad_plane_impl<T, 14>(g, src, h, w, acc);
        case 16: return stencil3x3_wgrad_plane_impl<T, 16>(g, src, h, w, acc);
        case 28: return stencil3x3_wgrad_plane_impl<T, 28>(g, src, h, w, acc);
        case 32: return stencil3x3_wgrad_plane_impl<T, 32>(g, src, h, w, acc);
        case 56: return stencil3x3_wgrad_plane_impl<T, 56>(g, src, h, w, acc);
        case 64: return stencil3x3_wgrad_plane_impl<T, 64>(g, src, h, w, acc);
        default: return stencil3x3_wgrad_plane_impl<T, 0>(g, src, h, w, acc);
    }
}

/// Interpolation stencil for one output coordinate, pixel-center convention
/// (src = (dst + 0.5) * in/out - 0.5, clamped to the image).
struct LerpTap {
    int lo, hi;
    double w_hi;  // weight of `hi`; weight of `lo` is 1 - w_hi
};

inline std::vector<LerpTap> lerp_taps(int in_size, int out_size) {
    std::vector<LerpTap> taps(static_cast<std::size_t>(out_size));
    const double scale = static_cast<double>(in_size) / out_size;
    for (int o = 0; o < out_size; ++o) {
        double src = (o + 0.5) * scale - 0.5;
        if (src < 0) src = 0;
        double fl = std::floor(src);
        int lo = static_cast<int>(fl);
        if (lo > in_size - 1) lo = in_size - 1;
        int hi = (lo + 1 < in_size) ? lo + 1 : lo;
        taps[static_cast<std::size_t>(o)] = {lo, hi, src - fl};
    }
    return taps;
}

/// dst (h x w) += 3x3 stride-1 pad-1 stencil of src (h x w) with weights
/// wv[9]. Row loop lives inside so the weights stay in registers.
template <class T, int KW>
inline void stencil3x3_plane_impl(T* __restrict dst, const T* __restrict src, int h, int w_rt, const T* wv) {
    const int w = KW ? KW : w_rt;
    const T w00 = wv[0], w01 = wv[1], w02 = wv[2];
    const T w10 = wv[3], w11 = wv[4], w12 = wv[5];
    const T w20 = wv[6], w21 = wv[7], w22 = wv[8];
    for (int y = 0; y < h; ++y) {
        const T* __restrict b = src + static_cast<std::size_t>(y) * w;
        T* __restrict d = dst + static_cast<std::size_t>(y) * w;
        if (y > 0 && y < h - 1) {
            const T* __restrict a = b - w;
            const T* __restrict c = b + w;
            for (int i = 1; i < w - 1; ++i) {
                d[i] += w00 * a[i - 1] + w01 * a[i] + w02 * a[i + 1] + w10 * b[i - 1] + w11 * b[i] +
                        w12 * b[i + 1] + w20 * c[i - 1] + w21 * c[i] + w22 * c[i + 1];
            }
            d[0] += w01 * a[0] + w02 * a[1] + w11 * b[0] + w12 * b[1] + w21 * c[0] + w22 * c[1];
            d[w - 1] += w00 * a[w - 2] + w01 * a[w - 1] + w10 * b[w - 2] + w11 * b[w - 1] +
                        w20 * c[w - 2] + w21 * c[w - 1];
        } else if (y == 0) {
            const T* __restrict c = b + w;
            for (int i = 1; i < w - 1; ++i) {
                d[i] += w10 * b[i - 1] + w11 * b[i] + w12 * b[i + 1] + w20 * c[i - 1] + w21 * c[i] +
                        w22 * c[i + 1];
            }
            d[0] += w11 * b[0] + w12 * b[1] + w21 * c[0] + w22 * c[1];
            d[w - 1] += w10 * b[w - 2] + w11 * b[w - 1] + w20 * c[w - 2] + w21 * c[w - 1];
        } else {
            const T* __restrict a = b - w;
            for (int i = 1; i < w - 1; ++i) {
                d[i] += w00 * a[i - 1] + w01 * a[i] + w02 * a[i + 1] + w10 * b[i - 1] + w11 * b[i] +
                        w12 * b[i + 1];
            }
            d[0] += w01 * a[0] + w02 * a[1] + w11 * b[0] + w12 * b[1];
            d[w - 1] += w00 * a[w - 2] + w01 * a[w - 1] + w10 * b[w - 2] + w11 * b[w - 1];
        }
    }
}

/// Two-destination plane stencil: amortizes the three source-row loads over
/// two weight sets (two output channels forward, two input planes backward).
template <class T, int KW>
inline void stencil3x3_plane2_impl(T* __restrict da, T* __restrict db, const T* __restrict src, int h,
                                   int w_rt, const T* wva, const T* wvb) {
    const int w = KW ? KW : w_rt;
    const T a00 = wva[0], a01 = wva[1], a02 = wva[2], a10 = wva[3], a11 = wva[4], a12 = wva[5],
            a20 = wva[6], a21 = wva[7], a22 = wva[8];
    const T b00 = wvb[0], b01 = wvb[1], b02 = wvb[2], b10 = wvb[3], b11 = wvb[4], b12 = wvb[5],
            b20 = wvb[6], b21 = wvb[7], b22 = wvb[8];
    for (int y = 0; y < h; ++y) {
        const T* __restrict q = src + static_cast<std::size_t>(y) * w;
        T* __restrict ra = da + static_cast<std::size_t>(y) * w;
        T* __restrict rb = db + static_cast<std::size_t>(y) * w;
        if (y > 0 && y < h - 1) {
            const T* __restrict p = q - w;
            const T* __restrict r = q + w;
            for (int i = 1; i < w - 1; ++i) {
                const T pm = p[i - 1], pz = p[i], pp = p[i + 1];
                const T qm = q[i - 1], qz = q[i], qp = q[i + 1];
                const T rm = r[i - 1], rz = r[i], rp = r[i + 1];
                ra[i] += a00 * pm + a01 * pz + a02 * pp + a10 * qm + a11 * qz + a12 * qp + a20 * rm +
                         a21 * rz + a22 * rp;
                rb[i] += b00 * pm + b01 * pz + b02 * pp + b10 * qm + b11 * qz + b12 * qp + b20 * rm +
                         b21 * rz + b22 * rp;
            }
            ra[0] += a01 * p[0] + a02 * p[1] + a11 * q[0] + a12 * q[1] + a21 * r[0] + a22 * r[1];
            rb[0] += b01 * p[0] + b02 * p[1] + b11 * q[0] + b12 * q[1] + b21 * r[0] + b22 * r[1];
            ra[w - 1] += a00 * p[w - 2] + a01 * p[w - 1] + a10 * q[w - 2] + a11 * q[w - 1] +
                         a20 * r[w - 2] + a21 * r[w - 1];
            rb[w - 1] += b00 * p[w - 2] + b01 * p[w - 1] + b10 * q[w - 2] + b11 * q[w - 1] +
                         b20 * r[w - 2] + b21 * r[w - 1];
        } else if (y == 0) {
            const T* __restrict r = q + w;
            for (int i = 1; i < w - 1; ++i) {
                const T qm = q[i - 1], qz = q[i], qp = q[i + 1];
                const T rm = r[i - 1], rz = r[i], rp = r[i + 1];
                ra[i] += a10 * qm + a11 * qz + a12 * qp + a20 * rm + a21 * rz + a22 * rp;
                rb[i] += b10 * qm + b11 * qz + b12 * qp + b20 * rm + b21 * rz + b22 * rp;
            }
            ra[0] += a11 * q[0] + a12 * q[1] + a21 * r[0] + a22 * r[1];
            rb[0] += b11 * q[0] + b12 * q[1] + b21 * r[0] + b22 * r[1];
            ra[w - 1] += a10 * q[w - 2] + a11 * q[w - 1] + a20 * r[w - 2] + a21 * r[w - 1];
            rb[w - 1] += b10 * q[w - 2] + b11 * q[w - 1] + b20 * r[w - 2] + b21 * r[w - 1];
        } else {
            const T* __restrict p = q - w;
            for (int i = 1; i < w - 1; ++i) {
                const T pm = p[i - 1], pz = p[i], pp = p[i + 1];
                const T qm = q[i - 1], qz = q[i], qp = q[i + 1];
                ra[i] += a00 * pm + a01 * pz + a02 * pp + a10 * qm + a11 * qz + a12 * qp;
                rb[i] += b00 * pm + b01 * pz + b02 * pp + b10 * qm + b11 * qz + b12 * qp;
            }
            ra[0] += a01 * p[0] + a02 * p[1] + a11 * q[0] + a12 * q[1];
            rb[0] += b01 * p[0] + b02 * p[1] + b11 * q[0] + b12 * q[1];
            ra[w - 1] += a00 * p[w - 2] + a01 * p[w - 1] + a10 * q[w - 2] + a11 * q[w - 1];
            rb[w - 1] += b00 * p[w - 2] + b01 * p[w - 1] + b10 * q[w - 2] + b11 * q[w - 1];
        }
    }
}

/// acc[9] += per-tap correlation of the output grad g (h x w) against src.
template <class T, int KW>
inline void stencil3x3_wgrad_plane_impl(const T* __restrict g, const T* __restrict src, int h, int w_rt,
                                        T* acc) {
    const int w = KW ? KW : w_rt;
    T a00 = 0, a01 = 0, a02 = 0, a10 = 0, a11 = 0, a12 = 0, a20 = 0, a21 = 0, a22 = 0;
    for (int y = 0; y < h; ++y) {
        const T* __restrict grow = g + static_cast<std::size_t>(y) * w;
        const T* __restrict x1 = src + static_cast<std::size_t>(y) * w;
        {
            T s0 = 0, s1 = 0, s2 = 0;
            for (int i = 1; i < w - 1; ++i) {
                const T gv = grow[i];
                s0 += gv * x1[i - 1];
                s1 += gv * x1[i];
                s2 += gv * x1[i + 1];
            }
            s1 += grow[0] * x1[0] + grow[w - 1] * x1[w - 1];
            s2 += grow[0] * x1[1];
            s0 += grow[w - 1] * x1[w - 2];
            a10 += s0;
            a11 += s1;
            a12 += s2;
        }
        if (y > 0) {
            const T* __restrict x0 = x1 - w;
            T s0 = 0, s1 = 0, s2 = 0;
            for (int i = 1; i < w - 1; ++i) {
                const T gv = grow[i];
                s0 += gv * x0[i - 1];
                s1 += gv * x0[i];
                s2 += gv * x0[i + 1];
            }
            s1 += grow[0] * x0[0] + grow[w - 1] * x0[w - 1];
            s2 += grow[0] * x0[1];
            s0 += grow[w - 1] * x0[w - 2];
            a00 += s0;
            a01 += s1;
            a02 += s2;
        }
        if (y < h - 1) {
            const T* __restrict x2 = x1 + w;
            T s0 = 0, s1 = 0, s2 = 0;
            for (int i = 1; i < w - 1; ++i) {
                const T gv = grow[i];
                s0 += gv * x2[i - 1];
                s1 += gv * x2[i];
                s2 += gv * x2[i + 1];
            }
            s1 += grow[0] * x2[0] + grow[w - 1] * x2[w - 1];
            s2 += grow[0] * x2[1];
            s0 += grow[w - 1] * x2[w - 2];
            a20 += s0;
            a21 += s1;
            a22 += s2;
        }
    }
    acc[0] += a00;
    acc[1] += a01;
    acc[2] += a02;
    acc[3] += a10;
    acc[4] += a11;
    acc[5] += a12;
    acc[6] += a20;
    acc[7] += a21;
    acc[8] += a22;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and reduction ops
// ---------------------------------------------------------------------------

template <class T>
TensorPtr<T> add(const TensorPtr<T>& a, const TensorPtr<T>& b) {
    if (a->shape != b->shape) {
        throw DimensionError("add: shape mismatch " + shape_str(a->shape) + " vs " + shape_str(b->shape));
    }
    std::vector<T> out(a->data.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->data[i] + b->data[i];
    auto r = make_tensor<T>(a->shape, std::move(out),
                            detail::record(a->requires_grad || b->requires_grad));
    if (r->requires_grad) {
        r->parents = {a, b};
        Tensor<T>* op = r.get();
        r->backward_fn = [op, a, b]() {
            if (a->requires_grad) a->accumulate_grad(op->grad.data(), op->grad.size());
            if (b->requires_grad) b->accumulate_grad(op->grad.data(), op->grad.size());
        };
    }
    return r;
}

template <class T>
TensorPtr<T> sub(const TensorPtr<T>& a, const TensorPtr<T>& b) {
    if (a->shape != b->shape) {
        throw DimensionError("sub: shape mismatch " + shape_str(a->shape) + " vs " + shape_str(b->shape));
    }
    std::vector<T> out(a->data.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->data[i] - b->data[i];
    auto r = make_tensor<T>(a->shape, std::move(out),
                            detail::record(a->requires_grad || b->requires_grad));
    if (r->requires_grad) {
        r->parents = {a, b};
        Tensor<T>* op = r.get();
        r->backward_fn = [op, a, b]() {
            if (a->requires_grad) a->accumulate_grad(op->grad.data(), op->grad.size());
            if (b->requires_grad) {
                if (b->grad.size() != b->data.size()) b->grad.assign(b->data.size(), T(0));
                for (std::size_t i = 0; i < op->grad.size(); ++i) b->grad[i] -= op->grad[i];
            }
        };
    }
    return r;
}

template <class T>
TensorPtr<T> mul(const TensorPtr<T>& a, const TensorPtr<T>& b) {
    if (a->shape != b->shape) {
        throw DimensionError("mul: shape mismatch " + shape_str(a->shape) + " vs " + shape_str(b->shape));
    }
    std::vector<T> out(a->data.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->data[i] * b->data[i];
    auto r = make_tensor<T>(a->shape, std::move(out),
                            detail::record(a->requires_grad || b->requires_grad));
    if (r->requires_grad) {
        r->parents = {a, b};
        Tensor<T>* op = r.get();
        r->backward_fn = [op, a, b]() {
            if (a->requires_grad) {
                if (a->grad.size() != a->data.size()) a->grad.assign(a->data.size(), T(0));
                for (std::size_t i = 0; i < op->grad.size(); ++i) a->grad[i] += op->grad[i] * b->data[i];
            }
            if (b->requires_grad) {
                if (b->grad.size() != b->data.size()) b->grad.assign(b->data.size(), T(0));
                for (std::size_t i = 0; i < op->grad.size(); ++i) b->grad[i] += op->grad[i] * a->data[i];
            }
        };
    }
    return r;
}

/// out = scale * x + shift, elementwise.
template <class T>
TensorPtr<T> affine(const TensorPtr<T>& x, T scale, T shift) {
    std::vector<T> out(x->data.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = scale * x->data[i] + shift;
    auto r = make_tensor<T>(x->shape, std::move(out), detail::record(x->requires_grad));
    if (r->requires_grad) {
        r->parents = {x};
        Tensor<T>* op = r.get();
        r->backward_fn = [op, x, scale]() {
            if (x->grad.size() != x->data.size()) x->grad.assign(x->data.size(), T(0));
            for (std::size_t i = 0; i < op->grad.size(); ++i) x->grad[i] += scale * op->grad[i];
        };
    }
    return r;
}

/// Hard clamp. Gradient is zero outside (lo, hi); used to keep probabilities
/// away from 0/1 before logs.
template <class T>
TensorPtr<T> clamp(const TensorPtr<T>& x, T lo, T hi) {
    std::vector<T> out(x->data.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::min(std::max(x->data[i], lo), hi);
    auto r = make_tensor<T>(x->shape, std::move(out), detail::record(x->requires_grad));
    if (r->requires_grad) {
        r->parents = {x};
        Tensor<T>* op = r.get();
        r->backward_fn = [op, x, lo, hi]() {
            if (x->grad.size() != x->data.size()) x->grad.assign(x->data.size(), T(0));
            for (std::size_t i = 0; i < op->grad.size(); ++i) {
                if (x->data[i] > lo && x->data[i] < hi) x->grad[i] += op->grad[i];
            }
        };
    }
    return r;
}

template <class T>
TensorPtr<T> log_(const TensorPtr<T>& x) {
    std::vector<T> out(x->data.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(x->data[i]);
    auto r = make_tensor<T>(x->shape, std::move(out), detail::record(x->requires_grad));
    if (r->requires_grad) {
        r->parents = {x};
        Tensor<T>* op = r.get();
        r->backward_fn = [op, x]() {
            if (x->grad.size() != x->data.size()) x->grad.assign(x->data.size(), T(0));
            for (std::size_t i = 0; i < op->grad.size(); ++i) x->grad[i] += op->grad[i] / x->data[i];
        };
    }
    return r;
}

template <class T>
TensorPtr<T> sum(const TensorPtr<T>& x) {
    T s = 0;
    for (T v : x->data) s += v;
    auto r = make_tensor<T>({1}, std::vector<T>{s}, detail::record(x->requires_grad));
    if (r->requires_grad) {
        r->parents = {x};
        Tensor<T>* op = r.get();
        r->backward_fn = [op, x]() {
            if (x->grad.size() != x->data.size()) x->grad.assign(x->data.size(), T(0));
            const T g = op->grad[0];
            for (std::size_t i = 0; i < x->grad.size(); ++i) x->grad[i] += g;
        };
    }
    return r;
}

template <class T>
TensorPtr<T> mean(const TensorPtr<T>& x) {
    return affine(sum(x), T(1) / static_cast<T>(x->numel()), T(0));
}

template <class T>
TensorPtr<T> activation(const TensorPtr<T>& x, Act kind) {
    std::vector<T> out(x->data.size());
    switch (kind) {
        case Act::Relu:
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = x->data[i] > T(0) ? x->data[i] : T(0);
            break;
        case Act::Tanh:
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(x->data[i]);
            break;
        case Act::Sigmoid:
            for (std::size_t i = 0; i < out.size(); ++i) {
                const T v = x->data[i];
                if (v >= T(0)) {
                    out[i] = T(1) / (T(1) + std::exp(-v));
                } else {
                    const T e = std::exp(v);
                    out[i] = e / (T(1) + e);
                }
            }
            break;
    }
    auto r = make_tensor<T>(x->shape, std::move(out), detail::record(x->requires_grad));
    if (r->requires_grad) {
        r->parents = {x};
        Tensor<T>* op = r.get();
        r->backward_fn = [op, x, kind]() {
            if (x->grad.size() != x->data.size()) x->grad.assign(x->data.size(), T(0));
            switch (kind) {
                case Act::Relu:
                    for (std::size_t i = 0; i < op->grad.size(); ++i) {
                        if (x->data[i] > T(0)) x->grad[i] += op->grad[i];
                    }
                    break;
                case Act::Tanh:
                    for (std::size_t i = 0; i < op->grad.size(); ++i) {
                        const T y = op->data[i];
                        x->grad[i] += op->grad[i] * (T(1) - y * y);
                    }
                    break;
                case Act::Sigmoid:
                    for (std::size_t i = 0; i < op->grad.size(); ++i) {
                        const T y = op->data[i];
                        x->grad[i] += op->grad[i] * y * (T(1) - y);
                    }
                    break;
            }
        };
    }
    return r;
}

template <class T>
TensorPtr<T> relu(const TensorPtr<T>& x) { return activation(x, Act::Relu); }
template <class T>
TensorPtr<T> tanh_(const TensorPtr<T>& x) { return activation(x, Act::Tanh); }
template <class T>
TensorPtr<T> sigmoid_(const TensorPtr<T>& x) { return activation(x, Act::Sigmoid); }

// ---------------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------------

template <class T>
TensorPtr<T> reshape(const TensorPtr<T>& x, std::vector<int> new_shape) {
    if (shape_numel(new_shape) != x->numel()) {
        throw DimensionError("reshape: cannot view " + shape_str(x->shape) + " as " + shape_str(new_shape));
    }
    auto r = make_tensor<T>(std::move(new_shape), x->data, detail::record(x->requires_grad));
    if (r->requires_grad) {
        r->parents = {x};
        Tensor<T>* op = r.get();
        r->backward_fn = [op, x]() { x->accumulate_grad(op->grad.data(), op->grad.size()); };
    }
    return r;
}

/// Channel concatenation of two [N,C,H,W] tensors.
template <class T>
TensorPtr<T> concat_ch(const TensorPtr<T>& a, const TensorPtr<T>& b) {
    if (a->shape.size() != 4 || b->shape.size() != 4) throw DimensionError("concat_ch expects rank-4 tensors");
    if (a->shape[0] != b->shape[0] || a->shape[2] != b->shape[2] || a->shape[3] != b->shape[3]) {
        throw DimensionError("concat_ch: incompatible shapes " + shape_str(a->shape) + " vs " + shape_str(b->shape));
    }
    const int n = a->shape[0], ca = a->shape[1], cb = b->shape[1];
    const std::size_t plane = static_cast<std::size_t>(a->shape[2]) * a->shape[3];
    std::vector<T> out(static_cast<std::size_t>(n) * (ca + cb) * plane);
    for (int i = 0; i < n; ++i) {
        std::copy_n(a->data.data() + static_cast<std::size_t>(i) * ca * plane, ca * plane,
                    out.data() + static_cast<std::size_t>(i) * (ca + cb) * plane);
        std::copy_n(b->data.data() + static_cast<std::size_t>(i) * cb * plane, cb * plane,
                    out.data() + static_cast<std::size_t>(i) * (ca + cb) * plane + ca * plane);
    }
    auto r = make_tensor<T>({n, ca + cb, a->shape[2], a->shape[3]}, std::move(out),
                            detail::record(a->requires_grad || b->requires_grad));
    if (r->requires_grad) {
        r->parents = {a, b};
        Tensor<T>* op = r.get();
        r->backward_fn = [op, a, b, n, ca, cb, plane]() {
            for (int i = 0; i < n; ++i) {
                const T* g = op->grad.data() + static_cast<std::size_t>(i) * (ca + cb) * plane;
                if (a->requires_grad) {
                    if (a->grad.size() != a->data.size()) a->grad.assign(a->data.size(), T(0));
                    T* ga = a->grad.data() + static_cast<std::size_t>(i) * ca * plane;
                    for (std::size_t j = 0; j < ca * plane; ++j) ga[j] += g[j];
                }
                if (b->requires_grad) {
                    if (b->grad.size() != b->data.size()) b->grad.assign(b->data.size(), T(0));
                    T* gb = b->grad.data() + static_cast<std::size_t>(i) * cb * plane;
                    for (std::size_t j = 0; j < cb * plane; ++j) gb[j] += g[ca * plane + j];
                }
            }
        };
    }
    return r;
}

/// out[i] = x[i, idx[i]] for a [N,M] tensor; backward scatters into the
/// selected column only.
template <class T>
TensorPtr<T> gather_cols(const TensorPtr<T>& x, const std::vector<int>& idx) {
    if (x->shape.size() != 2) throw DimensionError("gather_cols expects a rank-2 tensor");
    const int n = x->shape[0], m = x->shape[1];
    if (static_cast<int>(idx.size()) != n) throw ContractError("gather_cols: index count mismatch");
    std::vector<T> out(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        if (idx[i] < 0 || idx[i] >= m) throw ContractError("gather_cols: index out of range");
        out[static_cast<std::size_t>(i)] = x->data[static_cast<std::size_t>(i) * m + idx[i]];
    }
    auto r = make_tensor<T>({n}, std::move(out), detail::record(x->requires_grad));
    if (r->requires_grad) {
        r->parents = {x};
        Tensor<T>* op = r.get();
        auto indices = idx;
        r->backward_fn = [op, x, indices, m]() {
            if (x->grad.size() != x->data.size()) x->grad.assign(x->data.size(), T(0));
            for (std::size_t i = 0; i < indices.size(); ++i) {
                x->grad[i * m + indices[i]] += op->grad[i];
            }
        };
    }
    return r;
}

// ---------------------------------------------------------------------------
// Structured layers
// ---------------------------------------------------------------------------

/// 2-D convolution, NCHW input, [K,C,kh,kw] weights, zero padding.
/// H' = floor((H + 2*pad - kh)/stride) + 1 and analogously W'.
template <class T>
TensorPtr<T> conv2d(const TensorPtr<T>& x, const TensorPtr<T>& w, const TensorPtr<T>& b,
                    int stride, int pad) {
    if (x->shape.size() != 4) throw DimensionError("conv2d: input must be [N,C,H,W]");
    if (w->shape.size() != 4) throw DimensionError("conv2d: weights must be [K,C,kh,kw]");
    if (stride < 1) throw ContractError("conv2d: stride must be >= 1");
    if (pad < 0) throw ContractError("conv2d: pad must be >= 0");
    const int n = x->shape[0], c = x->shape[1], h = x->shape[2], wd = x->shape[3];
    const int k = w->shape[0], kh = w->shape[2], kw = w->shape[3];
    if (w->shape[1] != c) {
        throw DimensionError("conv2d: input channels " + std::to_string(c) + " != weight channels " +
                             std::to_string(w->shape[1]));
    }
    if (b->numel() != k) throw DimensionError("conv2d: bias length must equal output channels");
    if (kh > h + 2 * pad || kw > wd + 2 * pad) throw DimensionError("conv2d: kernel larger than padded input");
    const int oh = (h + 2 * pad - kh) / stride + 1;
    const int ow = (wd + 2 * pad - kw) / stride + 1;

    // All convs in this artifact are 3x3/stride1/pad1 or 1x1; the 3x3 case
    // gets a fused 9-tap stencil kernel, everything else the generic loops.
    const bool fast3 = (kh == 3 && kw == 3 && stride == 1 && pad == 1 && wd >= 2 && h >= 2);

    std::vector<T> out(static_cast<std::size_t>(n) * k * oh * ow);
    const T* __restrict xd = x->data.data();
    const T* __restrict wdt = w->data.data();
    const std::size_t oplane = static_cast<std::size_t>(oh) * ow;
    if (fast3) {
        for (int in = 0; in < n; ++in) {
            const T* xbase = xd + static_cast<std::size_t>(in) * c * h * wd;
            T* obase = out.data() + static_cast<std::size_t>(in) * k * oplane;
            for (int ik = 0; ik < k; ++ik) {
                T* op_ = obase + static_cast<std::size_t>(ik) * oplane;
                const T bias = b->data[static_cast<std::size_t>(ik)];
                for (std::size_t i = 0; i < oplane; ++i) op_[i] = bias;
            }
            int ik = 0;
            for (; ik + 1 < k; ik += 2) {
                T* pa = obase + static_cast<std::size_t>(ik) * oplane;
                T* pb = obase + static_cast<std::size_t>(ik + 1) * oplane;
                for (int ic = 0; ic < c; ++ic) {
                    const T* xp = xbase + static_cast<std::size_t>(ic) * h * wd;
                    const T* wva = wdt + (static_cast<std::size_t>(ik) * c + ic) * 9;
                    const T* wvb = wdt + (static_cast<std::size_t>(ik + 1) * c + ic) * 9;
                    detail::stencil3x3_plane2(pa, pb, xp, h, wd, wva, wvb);
                }
            }
            for (; ik < k; ++ik) {
                T* pa = obase + static_cast<std::size_t>(ik) * oplane;
                for (int ic = 0; ic < c; ++ic) {
                    const T* xp = xbase + static_cast<std::size_t>(ic) * h * wd;
                    const T* wv = wdt + (static_cast<std::size_t>(ik) * c + ic) * 9;
                    detail::stencil3x3_plane(pa, xp, h, wd, wv);
                }
            }
        }
    } else
    for (int in = 0; in < n; ++in) {
        for (int ik = 0; ik < k; ++ik) {
            T* __restrict op_ = out.data() + ((static_cast<std::size_t>(in) * k + ik) * oh) * ow;
            const T bias = b->data[static_cast<std::size_t>(ik)];
            for (std::size_t i = 0; i < static_cast<std::size_t>(oh) * ow; ++i) op_[i] = bias;
            for (int ic = 0; ic < c; ++ic) {
                const T* __restrict xp = xd + ((static_cast<std::size_t>(in) * c + ic) * h) * wd;
                for (int r = 0; r < kh; ++r) {
                    for (int s = 0; s < kw; ++s) {
                        const T wv = wdt[((static_cast<std::size_t>(ik) * c + ic) * kh + r) * kw + s];
                        const int dy = r - pad, dx = s - pad;
                        // valid output rows: 0 <= oy*stride + dy < h
                        int oy_lo = dy < 0 ? (-dy + stride - 1) / stride : 0;
                        int oy_hi = (h - 1 - dy) / stride;
                        if (oy_hi > oh - 1) oy_hi = oh - 1;
                        int ox_lo = dx < 0 ? (-dx + stride - 1) / stride : 0;
                        int ox_hi = (wd - 1 - dx) / stride;
                        if (ox_hi > ow - 1) ox_hi = ow - 1;
                        for (int oy = oy_lo; oy <= oy_hi; ++oy) {
                            const T* __restrict xrow = xp + static_cast<std::size_t>(oy * stride + dy) * wd + dx;
                            T* __restrict orow = op_ + static_cast<std::size_t>(oy) * ow;
                            if (stride == 1) {
                                for (int ox = ox_lo; ox <= ox_hi; ++ox) orow[ox] += wv * xrow[ox];
                            } else {
                                for (int ox = ox_lo; ox <= ox_hi; ++ox) orow[ox] += wv * xrow[ox * stride];
                            }
                        }
                    }
                }
            }
        }
    }

    auto r = make_tensor<T>({n, k, oh, ow}, std::move(out),
                            detail::record(x->requires_grad || w->requires_grad || b->requires_grad));
    if (r->requires_grad) {
        r->parents = {x, w, b};
        Tensor<T>* op = r.get();
        r->backward_fn = [op, x, w, b, stride, pad, n, c, h, wd, k, kh, kw, oh, ow]() {
            const T* g = op->grad.data();
            if (b->requires_grad) {
                if (b->grad.size() != b->data.size()) b->grad.assign(b->data.size(), T(0));
                for (int in = 0; in < n; ++in) {
                    for (int ik = 0; ik < k; ++ik) {
                        const T* gp = g + ((static_cast<std::size_t>(in) * k + ik) * oh) * ow;
                        T s = 0;
                        for (std::size_t i = 0; i < static_cast<std::size_t>(oh) * ow; ++i) s += gp[i];
                        b->grad[static_cast<std::size_t>(ik)] += s;
                    }
                }
            }
            if (w->requires_grad && w->grad.size() != w->data.size()) w->grad.assign(w->data.size(), T(0));
            if (x->requires_grad && x->grad.size() != x->data.size()) x->grad.assign(x->data.size(), T(0));
            const bool fast3 = (kh == 3 && kw == 3 && stride == 1 && pad == 1 && wd >= 2 && h >= 2);
            if (fast3) {
                const std::size_t gplane = static_cast<std::size_t>(oh) * ow;
                const std::size_t xplane = static_cast<std::size_t>(h) * wd;
                for (int in = 0; in < n; ++in) {
                    const T* xbase = x->data.data() + static_cast<std::size_t>(in) * c * xplane;
                    T* xgbase =
                        x->requires_grad ? x->grad.data() + static_cast<std::size_t>(in) * c * xplane : nullptr;
                    for (int ik = 0; ik < k; ++ik) {
                        const T* gp = g + (static_cast<std::size_t>(in) * k + ik) * gplane;
                        if (w->requires_grad) {
                            for (int ic = 0; ic < c; ++ic) {
                                const T* xp = xbase + static_cast<std::size_t>(ic) * xplane;
                                T acc[9] = {0, 0, 0, 0, 0, 0, 0, 0, 0};
                                detail::stencil3x3_wgrad_plane(gp, xp, oh, ow, acc);
                                const std::size_t wbase = (static_cast<std::size_t>(ik) * c + ic) * 9;
                                for (int t = 0; t < 9; ++t) w->grad[wbase + t] += acc[t];
                            }
                        }
                        if (xgbase) {
                            // dx is the same stencil over the output grad with a
                            // 180-degree flipped kernel; input planes in pairs
                            int ic = 0;
                            for (; ic + 1 < c; ic += 2) {
                                T fa[9], fb[9];
                                const std::size_t wa = (static_cast<std::size_t>(ik) * c + ic) * 9;
                                const std::size_t wb = (static_cast<std::size_t>(ik) * c + ic + 1) * 9;
                                for (int t = 0; t < 9; ++t) {
                                    fa[t] = w->data[wa + 8 - t];
                                    fb[t] = w->data[wb + 8 - t];
                                }
                                T* xga = xgbase + static_cast<std::size_t>(ic) * xplane;
                                T* xgb = xgbase + static_cast<std::size_t>(ic + 1) * xplane;
                                detail::stencil3x3_plane2(xga, xgb, gp, h, wd, fa, fb);
                            }
                            for (; ic < c; ++ic) {
                                T wflip[9];
                                const std::size_t wbase = (static_cast<std::size_t>(ik) * c + ic) * 9;
                                for (int t = 0; t < 9; ++t) wflip[t] = w->data[wbase + 8 - t];
                                T* xg = xgbase + static_cast<std::size_t>(ic) * xplane;
                                detail::stencil3x3_plane(xg, gp, h, wd, wflip);
                            }
                        }
                    }
                }
                return;
            }
            // weight and input passes kept separate so each inner loop stays
            // a plain dot / saxpy the compiler can vectorize
            for (int in = 0; in < n; ++in) {
                for (int ik = 0; ik < k; ++ik) {
                    const T* __restrict gp = g + ((static_cast<std::size_t>(in) * k + ik) * oh) * ow;
                    for (int ic = 0; ic < c; ++ic) {
                        const T* __restrict xp =
                            x->data.data() + ((static_cast<std::size_t>(in) * c + ic) * h) * wd;
                        T* __restrict xg = x->requires_grad
                                               ? x->grad.data() + ((static_cast<std::size_t>(in) * c + ic) * h) * wd
                                               : nullptr;
                        for (int r_ = 0; r_ < kh; ++r_) {
                            for (int s_ = 0; s_ < kw; ++s_) {
                                const std::size_t widx =
                                    ((static_cast<std::size_t>(ik) * c + ic) * kh + r_) * kw + s_;
                                const int dy = r_ - pad, dx = s_ - pad;
                                int oy_lo = dy < 0 ? (-dy + stride - 1) / stride : 0;
                                int oy_hi = (h - 1 - dy) / stride;
                                if (oy_hi > oh - 1) oy_hi = oh - 1;
                                int ox_lo = dx < 0 ? (-dx + stride - 1) / stride : 0;
                                int ox_hi = (wd - 1 - dx) / stride;
                                if (ox_hi > ow - 1) ox_hi = ow - 1;
                                if (w->requires_grad) {
                                    T wgrad = 0;
                                    for (int oy = oy_lo; oy <= oy_hi; ++oy) {
                                        const T* __restrict grow = gp + static_cast<std::size_t>(oy) * ow;
                                        const T* __restrict xrow =
                                            xp + static_cast<std::size_t>(oy * stride + dy) * wd + dx;
                                        if (stride == 1) {
                                            for (int ox = ox_lo; ox <= ox_hi; ++ox) wgrad += grow[ox] * xrow[ox];
                                        } else {
                                            for (int ox = ox_lo; ox <= ox_hi; ++ox)
                                                wgrad += grow[ox] * xrow[ox * stride];
                                        }
                                    }
                                    w->grad[widx] += wgrad;
                                }
                                if (xg) {
                                    const T wv = w->data[widx];
                                    for (int oy = oy_lo; oy <= oy_hi; ++oy) {
                                        const T* __restrict grow = gp + static_cast<std::size_t>(oy) * ow;
                                        T* __restrict xgrow =
                                            xg + static_cast<std::size_t>(oy * stride + dy) * wd + dx;
                                        if (stride == 1) {
                                            for (int ox = ox_lo; ox <= ox_hi; ++ox) xgrow[ox] += wv * grow[ox];
                                        } else {
                                            for (int ox = ox_lo; ox <= ox_hi; ++ox)
                                                xgrow[ox * stride] += wv * grow[ox];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        };
    }
    return r;
}

/// 2x2 max pooling with stride 2; gradient flows to the argmax cell only
/// (first cell in scan order on ties).
template <class T>
TensorPtr<T> max_pool2d(const TensorPtr<T>& x) {
    if (x->shape.size() != 4) throw DimensionError("max_pool2d: input must be [N,C,H,W]");
    const int n = x->shape[0], c = x->shape[1], h = x->shape[2], w = x->shape[3];
    if (h % 2 != 0 || w % 2 != 0) {
        throw DimensionError("max_pool2d: spatial extents must be even, got " + shape_str(x->shape));
    }
    const int oh = h / 2, ow = w / 2;
    std::vector<T> out(static_cast<std::size_t>(n) * c * oh * ow);
    std::vector<std::int32_t> argmax(out.size());
    const T* xd = x->data.data();
    std::size_t oi = 0;
    for (int plane = 0; plane < n * c; ++plane) {
        const T* xp = xd + static_cast<std::size_t>(plane) * h * w;
        const std::size_t base = static_cast<std::size_t>(plane) * h * w;
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox, ++oi) {
                const int iy = 2 * oy, ix = 2 * ox;
                T best = xp[iy * w + ix];
                int bidx = iy * w + ix;
                const int cand[3] = {iy * w + ix + 1, (iy + 1) * w + ix, (iy + 1) * w + ix + 1};
                for (int cc : cand) {
                    if (xp[cc] > best) {
                        best = xp[cc];
                        bidx = cc;
                    }
                }
                out[oi] = best;
                argmax[oi] = static_cast<std::int32_t>(base + bidx);
            }
        }
    }
    auto r = make_tensor<T>({n, c, oh, ow}, std::move(out), detail::record(x->requires_grad));
    if (r->requires_grad) {
        r->parents = {x};
        Tensor<T>* op = r.get();
        auto arg = std::move(argmax);
        r->backward_fn = [op, x, arg]() {
            if (x->grad.size() != x->data.size()) x->grad.assign(x->data.size(), T(0));
            for (std::size_t i = 0; i < arg.size(); ++i) x->grad[arg[i]] += op->grad[i];
        };
    }
    return r;
}

/// Nearest-neighbour 2x upsampling; each input cell fills a 2x2 block and the
/// backward pass sums the four block gradients.
template <class T>
TensorPtr<T> upsample2x(const TensorPtr<T>& x) {
    if (x->shape.size() != 4) throw DimensionError("upsample2x: input must be [N,C,H,W]");
    const int n = x->shape[0], c = x->shape[1], h = x->shape[2], w = x->shape[3];
    const int oh = 2 * h, ow = 2 * w;
    std::vector<T> out(static_cast<std::size_t>(n) * c * oh * ow);
    for (int plane = 0; plane < n * c; ++plane) {
        const T* xp = x->data.data() + static_cast<std::size_t>(plane) * h * w;
        T* op_ = out.data() + static_cast<std::size_t>(plane) * oh * ow;
        for (int y = 0; y < h; ++y) {
            for (int xx = 0; xx < w; ++xx) {
                const T v = xp[y * w + xx];
                T* o0 = op_ + static_cast<std::size_t>(2 * y) * ow + 2 * xx;
                o0[0] = v;
                o0[1] = v;
                o0[ow] = v;
                o0[ow + 1] = v;
            }
        }
    }
    auto r = make_tensor<T>({n, c, oh, ow}, std::move(out), detail::record(x->requires_grad));
    if (r->requires_grad) {
        r->parents = {x};
        Tensor<T>* op = r.get();
        r->backward_fn = [op, x, n, c, h, w, oh, ow]() {
            if (x->grad.size() != x->data.size()) x->grad.assign(x->data.size(), T(0));
            for (int plane = 0; plane < n * c; ++plane) {
                T* xg = x->grad.data() + static_cast<std::size_t>(plane) * h * w;
                const T* gp = op->grad.data() + static_cast<std::size_t>(plane) * oh * ow;
                for (int y = 0; y < h; ++y) {
                    for (int xx = 0; xx < w; ++xx) {
                        const T* g0 = gp + static_cast<std::size_t>(2 * y) * ow + 2 * xx;
                        xg[y * w + xx] += g0[0] + g0[1] + g0[ow] + g0[ow + 1];
                    }
                }
            }
        };
    }
    return r;
}

/// Fully connected layer: [N,D] x [D,M] + [M] -> [N,M].
template <class T>
TensorPtr<T> dense(const TensorPtr<T>& x, const TensorPtr<T>& w, const TensorPtr<T>& b) {
    if (x->shape.size() != 2 || w->shape.size() != 2) throw DimensionError("dense: expects rank-2 input and weights");
    const int n = x->shape[0], d = x->shape[1], m = w->shape[1];
    if (w->shape[0] != d) {
        throw DimensionError("dense: inner dimensions disagree, input " + shape_str(x->shape) + " weights " +
                             shape_str(w->shape));
    }
    if (b->numel() != m) throw DimensionError("dense: bias length must equal output width");
    std::vector<T> out(static_cast<std::size_t>(n) * m);
    for (int i = 0; i < n; ++i) {
        T* __restrict orow = out.data() + static_cast<std::size_t>(i) * m;
        for (int j = 0; j < m; ++j) orow[j] = b->data[static_cast<std::size_t>(j)];
        const T* __restrict xrow = x->data.data() + static_cast<std::size_t>(i) * d;
        for (int kk = 0; kk < d; ++kk) {
            const T xv = xrow[kk];
            const T* __restrict wrow = w->data.data() + static_cast<std::size_t>(kk) * m;
            for (int j = 0; j < m; ++j) orow[j] += xv * wrow[j];
        }
    }
    auto r = make_tensor<T>({n, m}, std::move(out),
                            detail::record(x->requires_grad || w->requires_grad || b->requires_grad));
    if (r->requires_grad) {
        r->parents = {x, w, b};
        Tensor<T>* op = r.get();
        r->backward_fn = [op, x, w, b, n, d, m]() {
            const T* g = op->grad.data();
            if (b->requires_grad) {
                if (b->grad.size() != b->data.size()) b->grad.assign(b->data.size(), T(0));
                for (int i = 0; i < n; ++i) {
                    const T* grow = g + static_cast<std::size_t>(i) * m;
                    for (int j = 0; j < m; ++j) b->grad[static_cast<std::size_t>(j)] += grow[j];
                }
            }
            if (w->requires_grad) {
                if (w->grad.size() != w->data.size()) w->grad.assign(w->data.size(), T(0));
                for (int i = 0; i < n; ++i) {
                    const T* __restrict xrow = x->data.data() + static_cast<std::size_t>(i) * d;
                    const T* __restrict grow = g + static_cast<std::size_t>(i) * m;
                    for (int kk = 0; kk < d; ++kk) {
                        const T xv = xrow[kk];
                        T* __restrict wgrow = w->grad.data() + static_cast<std::size_t>(kk) * m;
                        for (int j = 0; j < m; ++j) wgrow[j] += xv * grow[j];
                    }
                }
            }
            if (x->requires_grad) {
                if (x->grad.size() != x->data.size()) x->grad.assign(x->data.size(), T(0));
                for (int i = 0; i < n; ++i) {
                    T* __restrict xgrow = x->grad.data() + static_cast<std::size_t>(i) * d;
                    const T* __restrict grow = g + static_cast<std::size_t>(i) * m;
                    for (int kk = 0; kk < d; ++kk) {
                        const T* __restrict wrow = w->data.data() + static_cast<std::size_t>(kk) * m;
                        T s = 0;
                        for (int j = 0; j < m; ++j) s += wrow[j] * grow[j];
                        xgrow[kk] += s;
                    }
                }
            }
        };
    }
    return r;
}

/// Bilinear resize over the spatial dims of [N,C,H,W], pixel-center sampling.
/// Identity (bit-exact pass-through) when the size is unchanged.
template <class T>
TensorPtr<T> resize_bilinear(const TensorPtr<T>& x, int out_h, int out_w) {
    if (x->shape.size() != 4) throw DimensionError("resize_bilinear: input must be [N,C,H,W]");
    if (out_h < 1 || out_w < 1) throw DimensionError("resize_bilinear: output extents must be positive");
    const int n = x->shape[0], c = x->shape[1], h = x->shape[2], w = x->shape[3];
    const auto ty = detail::lerp_taps(h, out_h);
    const auto tx = detail::lerp_taps(w, out_w);
    std::vector<T> out(static_cast<std::size_t>(n) * c * out_h * out_w);
    for (int plane = 0; plane < n * c; ++plane) {
        const T* xp = x->data.data() + static_cast<std::size_t>(plane) * h * w;
        T* op_ = out.data() + static_cast<std::size_t>(plane) * out_h * out_w;
        for (int oy = 0; oy < out_h; ++oy) {
            const auto& yt = ty[static_cast<std::size_t>(oy)];
            const T wy1 = static_cast<T>(yt.w_hi), wy0 = T(1) - wy1;
            const T* r0 = xp + static_cast<std::size_t>(yt.lo) * w;
            const T* r1 = xp + static_cast<std::size_t>(yt.hi) * w;
            T* orow = op_ + static_cast<std::size_t>(oy) * out_w;
            for (int ox = 0; ox < out_w; ++ox) {
                const auto& xt = tx[static_cast<std::size_t>(ox)];
                const T wx1 = static_cast<T>(xt.w_hi), wx0 = T(1) - wx1;
                orow[ox] = wy0 * (wx0 * r0[xt.lo] + wx1 * r0[xt.hi]) +
                           wy1 * (wx0 * r1[xt.lo] + wx1 * r1[xt.hi]);
            }
        }
    }
    auto r = make_tensor<T>({n, c, out_h, out_w}, std::move(out), detail::record(x->requires_grad));
    if (r->requires_grad) {
        r->parents = {x};
        Tensor<T>* op = r.get();
        r->backward_fn = [op, x, n, c, h, w, out_h, out_w, ty, tx]() {
            if (x->grad.size() != x->data.size()) x->grad.assign(x->data.size(), T(0));
            for (int plane = 0; plane < n * c; ++plane) {
                T* xg = x->grad.data() + static_cast<std::size_t>(plane) * h * w;
                const T* gp = op->grad.data() + static_cast<std::size_t>(plane) * out_h * out_w;
                for (int oy = 0; oy < out_h; ++oy) {
                    const auto& yt = ty[static_cast<std::size_t>(oy)];
                    const T wy1 = static_cast<T>(yt.w_hi), wy0 = T(1) - wy1;
                    const T* grow = gp + static_cast<std::size_t>(oy) * out_w;
                    for (int ox = 0; ox < out_w; ++ox) {
                        const auto& xt = tx[static_cast<std::size_t>(ox)];
                        const T wx1 = static_cast<T>(xt.w_hi), wx0 = T(1) - wx1;
                        const T g = grow[ox];
                        xg[static_cast<std::size_t>(yt.lo) * w + xt.lo] += wy0 * wx0 * g;
                        xg[static_cast<std::size_t>(yt.lo) * w + xt.hi] += wy0 * wx1 * g;
                        xg[static_cast<std::size_t>(yt.hi) * w + xt.lo] += wy1 * wx0 * g;
                        xg[static_cast<std::size_t>(yt.hi) * w + xt.hi] += wy1 * wx1 * g;
                    }
                }
            }
        };
    }
    return r;
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

/// (1/N) * sum((target - pred)^2).
template <class T>
TensorPtr<T> mse_loss(const TensorPtr<T>& pred, const TensorPtr<T>& target) {
    if (pred->shape != target->shape) {
        throw DimensionError("mse_loss: shape mismatch " + shape_str(pred->shape) + " vs " +
                             shape_str(target->shape));
    }
    const std::size_t n = pred->data.size();
    T acc = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const T d = target->data[i] - pred->data[i];
        acc += d * d;
    }
    auto r = make_tensor<T>({1}, std::vector<T>{acc / static_cast<T>(n)},
                            detail::record(pred->requires_grad || target->requires_grad));
    if (r->requires_grad) {
        r->parents = {pred, target};
        Tensor<T>* op = r.get();
        r->backward_fn = [op, pred, target, n]() {
            const T g = op->grad[0] * T(2) / static_cast<T>(n);
            if (pred->requires_grad) {
                if (pred->grad.size() != n) pred->grad.assign(n, T(0));
                for (std::size_t i = 0; i < n; ++i) pred->grad[i] += g * (pred->data[i] - target->data[i]);
            }
            if (target->requires_grad) {
                if (target->grad.size() != n) target->grad.assign(n, T(0));
                for (std::size_t i = 0; i < n; ++i) target->grad[i] += g * (target->data[i] - pred->data[i]);
            }
        };
    }
    return r;
}

constexpr double kProbClampLo = 1e-7;
constexpr double kProbClampHi = 1.0 - 1e-7;

/// Binary cross-entropy on a scalar probability: label 1 -> -ln(p),
/// label 0 -> -ln(1-p). The probability is clamped to [1e-7, 1-1e-7] first.
template <class T>
TensorPtr<T> bce_loss(const TensorPtr<T>& prob, int label) {
    if (!prob->is_scalar()) throw ContractError("bce_loss expects a scalar probability");
    if (label != 0 && label != 1) throw ContractError("bce_loss label must be 0 or 1");
    auto p = clamp(prob, static_cast<T>(kProbClampLo), static_cast<T>(kProbClampHi));
    if (label == 1) return affine(log_(p), T(-1), T(0));
    return affine(log_(affine(p, T(-1), T(1))), T(-1), T(0));
}

}  // namespace qfuse
