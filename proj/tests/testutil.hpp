#pragma once

#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "qfuse/image.hpp"
#include "qfuse/optim.hpp"

namespace testutil {

/// Scratch directory under the system temp root, removed on destruction.
struct TempDir {
    std::filesystem::path path;

    explicit TempDir(const std::string& tag) {
        auto base = std::filesystem::temp_directory_path();
        for (int i = 0; i < 10000; ++i) {
            auto candidate = base / (tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(i));
            std::error_code ec;
            if (std::filesystem::create_directory(candidate, ec)) {
                path = candidate;
                return;
            }
        }
        throw std::runtime_error("TempDir: could not create scratch directory");
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    std::string str() const { return path.string(); }
    std::string sub(const std::string& name) const { return (path / name).string(); }
};

/// Plain nested-loop convolution, the independent oracle for conv2d.
inline std::vector<double> conv2d_reference(const std::vector<double>& x, int n, int c, int h, int w,
                                            const std::vector<double>& k, int kn, int kh, int kw,
                                            const std::vector<double>& bias, int stride, int pad, int& oh,
                                            int& ow) {
    oh = (h + 2 * pad - kh) / stride + 1;
    ow = (w + 2 * pad - kw) / stride + 1;
    std::vector<double> out(static_cast<std::size_t>(n) * kn * oh * ow, 0.0);
    for (int in = 0; in < n; ++in)
        for (int ik = 0; ik < kn; ++ik)
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) {
                    double acc = bias[static_cast<std::size_t>(ik)];
                    for (int ic = 0; ic < c; ++ic)
                        for (int r = 0; r < kh; ++r)
                            for (int s = 0; s < kw; ++s) {
                                const int iy = oy * stride + r - pad;
                                const int ix = ox * stride + s - pad;
                                if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                                acc += k[((static_cast<std::size_t>(ik) * c + ic) * kh + r) * kw + s] *
                                       x[((static_cast<std::size_t>(in) * c + ic) * h + iy) * w + ix];
                            }
                    out[((static_cast<std::size_t>(in) * kn + ik) * oh + oy) * ow + ox] = acc;
                }
    return out;
}

/// Central finite differences on every listed parameter (optionally capped
/// per parameter), against the analytic grads from one backward call.
/// Returns the worst guarded relative error.
inline double gradcheck(const std::vector<qfuse::Parameter<double>*>& params,
                        const std::function<qfuse::TensorPtr<double>()>& loss_fn, double h = 1e-3,
                        std::size_t max_per_param = SIZE_MAX) {
    for (auto* p : params) p->value->zero_grad();
    auto loss = loss_fn();
    qfuse::backward(loss);
    std::vector<std::vector<double>> grads;
    for (auto* p : params) grads.push_back(p->value->grad);

    double worst = 0.0;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto& data = params[pi]->value->data;
        const std::size_t count = std::min(max_per_param, data.size());
        for (std::size_t i = 0; i < count; ++i) {
            const double keep = data[i];
            double fp, fm;
            {
                qfuse::NoGradGuard ng;
                data[i] = keep + h;
                fp = loss_fn()->item();
                data[i] = keep - h;
                fm = loss_fn()->item();
            }
            data[i] = keep;
            const double num = (fp - fm) / (2 * h);
            const double an = grads[pi][i];
            const double rel = std::abs(an - num) / std::max({std::abs(an), std::abs(num), 0.1});
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

/// Nudges every parameter off its exact initialization; biases start at
/// exactly zero, which parks ReLU pre-activations on the kink where finite
/// differences are invalid.
inline void jitter_params(const std::vector<qfuse::Parameter<double>*>& params, std::mt19937_64& rng,
                          double scale = 0.05) {
    std::uniform_real_distribution<double> d(-scale, scale);
    for (auto* p : params)
        for (auto& v : p->value->data) v += d(rng);
}

inline qfuse::Image random_image(int h, int w, std::mt19937_64& rng) {
    std::uniform_real_distribution<float> d(0.f, 1.f);
    qfuse::Image im(h, w);
    for (auto& v : im.v) v = d(rng);
    return im;
}

inline qfuse::Image random_mask(int h, int w, std::mt19937_64& rng, float p_on = 0.3f) {
    std::uniform_real_distribution<float> d(0.f, 1.f);
    qfuse::Image im(h, w);
    for (auto& v : im.v) v = d(rng) < p_on ? 1.f : 0.f;
    return im;
}

inline double pearson(const std::vector<float>& a, const std::vector<float>& b) {
    const std::size_t n = a.size();
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < n; ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double num = 0, va = 0, vb = 0;
    for (std::size_t i = 0; i < n; ++i) {
        num += (a[i] - ma) * (b[i] - mb);
        va += (a[i] - ma) * (a[i] - ma);
        vb += (b[i] - mb) * (b[i] - mb);
    }
    if (va == 0 || vb == 0) return 0.0;
    return num / std::sqrt(va * vb);
}

}  // namespace testutil
