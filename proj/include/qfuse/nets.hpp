#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "qfuse/ops.hpp"
#include "qfuse/optim.hpp"

namespace qfuse {

/// splitmix64 mix of a base seed with stream tags, for independent
/// deterministic RNG streams.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag) {
    std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (tag + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

template <class T>
struct Conv2dLayer {
    Parameter<T> w, b;
    int stride, pad;

    Conv2dLayer(const std::string& name, int in_ch, int out_ch, int k, int pad_, std::mt19937_64& rng,
                int stride_ = 1)
        : w(name + ".weight", {out_ch, in_ch, k, k}),
          b(name + ".bias", {out_ch}),
          stride(stride_),
          pad(pad_) {
        init_he_uniform(w, in_ch * k * k, rng);
    }

    TensorPtr<T> operator()(const TensorPtr<T>& x) const { return conv2d(x, w.value, b.value, stride, pad); }

    void collect(std::vector<Parameter<T>*>& out) {
        out.push_back(&w);
        out.push_back(&b);
    }
};

template <class T>
struct DenseLayer {
    Parameter<T> w, b;

    DenseLayer(const std::string& name, int in_dim, int out_dim, std::mt19937_64& rng)
        : w(name + ".weight", {in_dim, out_dim}), b(name + ".bias", {out_dim}) {
        init_he_uniform(w, in_dim, rng);
    }

    TensorPtr<T> operator()(const TensorPtr<T>& x) const { return dense(x, w.value, b.value); }

    void collect(std::vector<Parameter<T>*>& out) {
        out.push_back(&w);
        out.push_back(&b);
    }
};

/// Encoder-decoder saliency generator: three conv/conv/pool encoder blocks,
/// a mirrored upsample/conv/conv decoder, and a 1x1 sigmoid head. Spatial
/// size is preserved end to end (input extents must be divisible by 8).
template <class T>
class GeneratorNet {
public:
    explicit GeneratorNet(std::uint64_t seed, int in_ch = 1, std::array<int, 3> widths = {16, 32, 64})
        : in_ch_(in_ch), widths_(widths) {
        std::mt19937_64 rng(seed);
        const auto [w1, w2, w3] = widths;
        enc_.emplace_back("enc1.conv1", in_ch, w1, 3, 1, rng);
        enc_.emplace_back("enc1.conv2", w1, w1, 3, 1, rng);
        enc_.emplace_back("enc2.conv1", w1, w2, 3, 1, rng);
        enc_.emplace_back("enc2.conv2", w2, w2, 3, 1, rng);
        enc_.emplace_back("enc3.conv1", w2, w3, 3, 1, rng);
        enc_.emplace_back("enc3.conv2", w3, w3, 3, 1, rng);
        dec_.emplace_back("dec1.conv1", w3, w3, 3, 1, rng);
        dec_.emplace_back("dec1.conv2", w3, w3, 3, 1, rng);
        dec_.emplace_back("dec2.conv1", w3, w2, 3, 1, rng);
        dec_.emplace_back("dec2.conv2", w2, w2, 3, 1, rng);
        dec_.emplace_back("dec3.conv1", w2, w1, 3, 1, rng);
        dec_.emplace_back("dec3.conv2", w1, w1, 3, 1, rng);
        head_.emplace_back("head.conv", w1, 1, 1, 0, rng);
    }

    TensorPtr<T> forward(const TensorPtr<T>& x) {
        if (x->shape.size() != 4 || x->shape[1] != in_ch_) {
            throw DimensionError("generator: input must be [N," + std::to_string(in_ch_) + ",H,W], got " +
                                 shape_str(x->shape));
        }
        if (x->shape[2] % 8 != 0 || x->shape[3] % 8 != 0) {
            throw DimensionError("generator: spatial extents must be divisible by 8, got " + shape_str(x->shape));
        }
        auto t = x;
        for (int blk = 0; blk < 3; ++blk) {
            t = relu(enc_[2 * blk](t));
            t = relu(enc_[2 * blk + 1](t));
            t = max_pool2d(t);
        }
        for (int blk = 0; blk < 3; ++blk) {
            t = upsample2x(t);
            t = relu(dec_[2 * blk](t));
            t = relu(dec_[2 * blk + 1](t));
        }
        return sigmoid_(head_[0](t));
    }

    std::vector<Parameter<T>*> params() {
        std::vector<Parameter<T>*> out;
        for (auto& l : enc_) l.collect(out);
        for (auto& l : dec_) l.collect(out);
        for (auto& l : head_) l.collect(out);
        return out;
    }

    int in_channels() const { return in_ch_; }
    std::array<int, 3> widths() const { return widths_; }

private:
    int in_ch_;
    std::array<int, 3> widths_;
    std::vector<Conv2dLayer<T>> enc_, dec_, head_;
};

/// Saliency discriminator: conv1-1 (1x1, depth 3) through pool3, then
/// fc 100 (tanh), fc 2 (tanh), fc 1 (sigmoid). Judges an image/saliency
/// pair, concatenated channelwise, at a fixed spatial size.
template <class T>
class DiscriminatorNet {
public:
    explicit DiscriminatorNet(std::uint64_t seed, int image_ch = 1, int input_size = 56,
                              std::array<int, 6> conv_widths = {3, 32, 64, 64, 64, 64},
                              std::array<int, 2> fc_widths = {100, 2})
        : image_ch_(image_ch), input_size_(input_size), conv_widths_(conv_widths), fc_widths_(fc_widths) {
        if (input_size % 8 != 0) {
            throw DimensionError("discriminator: input size must be divisible by 8 for the three pools");
        }
        std::mt19937_64 rng(seed);
        const int in_ch = image_ch + 1;
        // Table layout: 1x1 convs keep spatial size with pad 0, 3x3 with pad 1.
        convs_.emplace_back("conv1_1", in_ch, conv_widths[0], 1, 0, rng);
        convs_.emplace_back("conv1_2", conv_widths[0], conv_widths[1], 3, 1, rng);
        convs_.emplace_back("conv2_1", conv_widths[1], conv_widths[2], 3, 1, rng);
        convs_.emplace_back("conv2_2", conv_widths[2], conv_widths[3], 3, 1, rng);
        convs_.emplace_back("conv3_1", conv_widths[3], conv_widths[4], 3, 1, rng);
        convs_.emplace_back("conv3_2", conv_widths[4], conv_widths[5], 3, 1, rng);
        const int side = input_size / 8;
        flatten_ = side * side * conv_widths[5];
        fcs_.emplace_back("fc4", flatten_, fc_widths[0], rng);
        fcs_.emplace_back("fc5", fc_widths[0], fc_widths[1], rng);
        fcs_.emplace_back("fc6", fc_widths[1], 1, rng);
    }

    /// image: [N,image_ch,S,S]; saliency: [N,1,S,S]; returns [N,1] in (0,1).
    TensorPtr<T> forward(const TensorPtr<T>& image, const TensorPtr<T>& saliency) {
        check_input(image, image_ch_, "image");
        check_input(saliency, 1, "saliency");
        if (image->shape[0] != saliency->shape[0]) throw DimensionError("discriminator: batch sizes disagree");
        auto t = concat_ch(image, saliency);
        t = relu(convs_[0](t));
        t = relu(convs_[1](t));
        t = max_pool2d(t);
        t = relu(convs_[2](t));
        t = relu(convs_[3](t));
        t = max_pool2d(t);
        t = relu(convs_[4](t));
        t = relu(convs_[5](t));
        t = max_pool2d(t);
        t = reshape(t, {t->shape[0], flatten_});
        t = tanh_(fcs_[0](t));
        t = tanh_(fcs_[1](t));
        return sigmoid_(fcs_[2](t));
    }

    std::vector<Parameter<T>*> params() {
        std::vector<Parameter<T>*> out;
        for (auto& l : convs_) l.collect(out);
        for (auto& l : fcs_) l.collect(out);
        return out;
    }

    int input_size() const { return input_size_; }
    int image_channels() const { return image_ch_; }
    int flatten_elems() const { return flatten_; }

private:
    void check_input(const TensorPtr<T>& t, int ch, const char* what) const {
        if (t->shape.size() != 4 || t->shape[1] != ch || t->shape[2] != input_size_ ||
            t->shape[3] != input_size_) {
            throw DimensionError(std::string("discriminator: ") + what + " must be [N," + std::to_string(ch) +
                                 "," + std::to_string(input_size_) + "," + std::to_string(input_size_) +
                                 "], got " + shape_str(t->shape));
        }
    }

    int image_ch_, input_size_;
    std::array<int, 6> conv_widths_;
    std::array<int, 2> fc_widths_;
    int flatten_ = 0;
    std::vector<Conv2dLayer<T>> convs_;
    std::vector<DenseLayer<T>> fcs_;
};

/// Action-value head over the stacked fusion state: flatten -> fc (relu)
/// -> fc 3, one Q-value per action.
template <class T>
class QNetwork {
public:
    static constexpr int kActions = 3;

    explicit QNetwork(std::uint64_t seed, int state_size = 56, int hidden = 256, int channels = 3)
        : state_size_(state_size), hidden_(hidden), channels_(channels) {
        std::mt19937_64 rng(seed);
        input_ = state_size * state_size * channels;
        fcs_.emplace_back("fc1", input_, hidden, rng);
        fcs_.emplace_back("fc2", hidden, kActions, rng);
    }

    /// state: [N,channels,S,S] or [N,input]; returns [N,3].
    TensorPtr<T> forward(const TensorPtr<T>& state) {
        TensorPtr<T> t = state;
        if (t->shape.size() == 4) {
            if (t->shape[1] != channels_ || t->shape[2] != state_size_ || t->shape[3] != state_size_) {
                throw DimensionError("q-network: state must be [N," + std::to_string(channels_) + "," +
                                     std::to_string(state_size_) + "," + std::to_string(state_size_) + "], got " +
                                     shape_str(t->shape));
            }
            t = reshape(t, {t->shape[0], input_});
        } else if (t->shape.size() != 2 || t->shape[1] != input_) {
            throw DimensionError("q-network: flat state must be [N," + std::to_string(input_) + "], got " +
                                 shape_str(t->shape));
        }
        t = relu(fcs_[0](t));
        return fcs_[1](t);
    }

    std::vector<Parameter<T>*> params() {
        std::vector<Parameter<T>*> out;
        for (auto& l : fcs_) l.collect(out);
        return out;
    }

    int state_size() const { return state_size_; }
    int hidden() const { return hidden_; }
    int channels() const { return channels_; }
    int input_elems() const { return input_; }

private:
    int state_size_, hidden_, channels_, input_ = 0;
    std::vector<DenseLayer<T>> fcs_;
};

/// Copies parameter values of `src` into `dst` bit-identically.
template <class Net>
void copy_params(Net& src, Net& dst) {
    auto sp = src.params();
    auto dp = dst.params();
    if (sp.size() != dp.size()) throw ContractError("copy_params: parameter counts differ");
    for (std::size_t i = 0; i < sp.size(); ++i) {
        if (sp[i]->value->shape != dp[i]->value->shape) {
            throw ContractError("copy_params: shape mismatch for '" + sp[i]->name + "'");
        }
        dp[i]->value->data = sp[i]->value->data;
    }
}

}  // namespace qfuse
