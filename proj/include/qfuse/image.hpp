#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "qfuse/errors.hpp"
#include "qfuse/ops.hpp"

namespace qfuse {

/// Single-channel float map, row-major, values nominally in [0,1].
struct Image {
    int h = 0, w = 0;
    std::vector<float> v;

    Image() = default;
    Image(int h_, int w_, float fill = 0.f) : h(h_), w(w_), v(static_cast<std::size_t>(h_) * w_, fill) {}

    float& at(int y, int x) { return v[static_cast<std::size_t>(y) * w + x]; }
    float at(int y, int x) const { return v[static_cast<std::size_t>(y) * w + x]; }
    std::size_t size() const { return v.size(); }
    bool same_shape(const Image& o) const { return h == o.h && w == o.w; }
};

/// Bilinear resize with the same pixel-center convention as the tensor op
/// (bit-identical results; pass-through when the size is unchanged).
inline Image resize_bilinear(const Image& in, int oh, int ow) {
    if (in.h < 1 || in.w < 1) throw DimensionError("resize_bilinear: empty image");
    Image out(oh, ow);
    const auto ty = detail::lerp_taps(in.h, oh);
    const auto tx = detail::lerp_taps(in.w, ow);
    for (int y = 0; y < oh; ++y) {
        const auto& yt = ty[static_cast<std::size_t>(y)];
        const float wy1 = static_cast<float>(yt.w_hi), wy0 = 1.f - wy1;
        const float* r0 = in.v.data() + static_cast<std::size_t>(yt.lo) * in.w;
        const float* r1 = in.v.data() + static_cast<std::size_t>(yt.hi) * in.w;
        float* orow = out.v.data() + static_cast<std::size_t>(y) * ow;
        for (int x = 0; x < ow; ++x) {
            const auto& xt = tx[static_cast<std::size_t>(x)];
            const float wx1 = static_cast<float>(xt.w_hi), wx0 = 1.f - wx1;
            orow[x] = wy0 * (wx0 * r0[xt.lo] + wx1 * r0[xt.hi]) + wy1 * (wx0 * r1[xt.lo] + wx1 * r1[xt.hi]);
        }
    }
    return out;
}

/// Box blur with replicated borders; window (2r+1)^2, exact for binary input.
inline Image box_blur(const Image& in, int radius) {
    if (radius < 0) throw ContractError("box_blur: radius must be >= 0");
    if (radius == 0) return in;
    Image out(in.h, in.w);
    const float norm = 1.f / ((2 * radius + 1) * (2 * radius + 1));
    for (int y = 0; y < in.h; ++y) {
        for (int x = 0; x < in.w; ++x) {
            float s = 0.f;
            for (int dy = -radius; dy <= radius; ++dy) {
                int yy = y + dy;
                yy = yy < 0 ? 0 : (yy >= in.h ? in.h - 1 : yy);
                for (int dx = -radius; dx <= radius; ++dx) {
                    int xx = x + dx;
                    xx = xx < 0 ? 0 : (xx >= in.w ? in.w - 1 : xx);
                    s += in.at(yy, xx);
                }
            }
            out.at(y, x) = s * norm;
        }
    }
    return out;
}

/// Packs images as one [N,C,H,W] tensor, N = images.size() / channels.
inline TensorPtr<float> to_tensor(const std::vector<const Image*>& planes, int n, int c) {
    if (planes.empty() || static_cast<int>(planes.size()) != n * c) {
        throw ContractError("to_tensor: plane count must equal n*c");
    }
    const int h = planes[0]->h, w = planes[0]->w;
    std::vector<float> data;
    data.reserve(static_cast<std::size_t>(n) * c * h * w);
    for (const Image* im : planes) {
        if (im->h != h || im->w != w) throw DimensionError("to_tensor: images must share extents");
        data.insert(data.end(), im->v.begin(), im->v.end());
    }
    return make_tensor<float>({n, c, h, w}, std::move(data));
}

inline TensorPtr<float> to_tensor(const Image& im) { return to_tensor({&im}, 1, 1); }

/// Extracts channel `ch` of sample `n` from a [N,C,H,W] tensor.
inline Image from_tensor(const TensorPtr<float>& t, int n = 0, int ch = 0) {
    if (t->shape.size() != 4) throw DimensionError("from_tensor: expected [N,C,H,W]");
    Image im(t->shape[2], t->shape[3]);
    const std::size_t plane = im.size();
    const float* src = t->data.data() + (static_cast<std::size_t>(n) * t->shape[1] + ch) * plane;
    std::copy_n(src, plane, im.v.data());
    return im;
}

// image_io.cpp — 8-bit grayscale PGM (P5) and PNG
Image read_image(const std::string& path);
void write_pgm(const std::string& path, const Image& im);
void write_png(const std::string& path, const Image& im);

}  // namespace qfuse
