#include "qfuse/gan.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace qfuse {

namespace {

constexpr float kLo = static_cast<float>(kProbClampLo);
constexpr float kHi = static_cast<float>(kProbClampHi);

double clamp_prob(double p) { return std::min(std::max(p, kProbClampLo), kProbClampHi); }

/// Temporarily drops requires_grad on a parameter set, e.g. the
/// discriminator while the generator's loss is backpropagated through it.
struct FreezeParams {
    std::vector<Parameter<float>*> params;
    explicit FreezeParams(std::vector<Parameter<float>*> ps) : params(std::move(ps)) {
        for (auto* p : params) p->value->requires_grad = false;
    }
    ~FreezeParams() {
        for (auto* p : params) p->value->requires_grad = true;
    }
};

/// mean over the batch of -ln(clamp(d))
TensorPtr<float> adversarial_term(const TensorPtr<float>& d_out) {
    return mean(affine(log_(clamp(d_out, kLo, kHi)), -1.f, 0.f));
}

/// mean over the batch of -ln(clamp(d_real)) - ln(clamp(1 - d_fake))
TensorPtr<float> discriminator_term(const TensorPtr<float>& d_real, const TensorPtr<float>& d_fake) {
    auto real = log_(clamp(d_real, kLo, kHi));
    auto fake = log_(clamp(affine(d_fake, -1.f, 1.f), kLo, kHi));
    return mean(affine(add(real, fake), -1.f, 0.f));
}

struct PreparedSample {
    Image img64, gt64, img56, gt56;
};

}  // namespace

double generator_loss(double mse, double d_out, double lambda) {
    return mse + lambda * (-std::log(clamp_prob(d_out)));
}

double discriminator_loss(double d_real, double d_fake) {
    return -std::log(clamp_prob(d_real)) - std::log(clamp_prob(1.0 - d_fake));
}

std::uint64_t stage1_gen_seed(std::uint64_t seed, int modality) {
    return derive_seed(seed, 0x100 + static_cast<std::uint64_t>(modality));
}

std::uint64_t stage1_disc_seed(std::uint64_t seed, int modality) {
    return derive_seed(seed, 0x200 + static_cast<std::uint64_t>(modality));
}

Stage1Result stage1_train(const std::vector<SaliencySample>& dataset, const Stage1Config& cfg) {
    if (dataset.empty()) throw ConfigError("stage1_train: empty dataset");
    if (cfg.batch < 1 || cfg.iterations < 1) throw ConfigError("stage1_train: batch and iterations must be positive");
    const int size = dataset[0].gt.h;
    for (const auto& s : dataset) {
        if (s.gt.h != size || s.gt.w != size) throw DimensionError("stage1_train: samples must share extents");
    }
    if (size % 8 != 0) throw DimensionError("stage1_train: image size must be divisible by 8");

    Stage1Result result;
    for (int m = 0; m < 2; ++m) {
        ModalityRun run;
        run.gen = std::make_unique<GeneratorNet<float>>(stage1_gen_seed(cfg.seed, m));
        run.disc = std::make_unique<DiscriminatorNet<float>>(stage1_disc_seed(cfg.seed, m), 1, cfg.state_size);
        auto g_params = run.gen->params();
        auto d_params = run.disc->params();

        std::vector<PreparedSample> prep(dataset.size());
        for (std::size_t i = 0; i < dataset.size(); ++i) {
            prep[i].img64 = dataset[i].mod[static_cast<std::size_t>(m)];
            prep[i].gt64 = dataset[i].gt;
            prep[i].img56 = resize_bilinear(prep[i].img64, cfg.state_size, cfg.state_size);
            prep[i].gt56 = resize_bilinear(prep[i].gt64, cfg.state_size, cfg.state_size);
        }

        std::mt19937_64 rng(derive_seed(cfg.seed, 0x300 + static_cast<std::uint64_t>(m)));
        std::uniform_int_distribution<std::size_t> pick(0, dataset.size() - 1);

        for (int it = 0; it < cfg.iterations; ++it) {
            std::vector<const Image*> xs, gts, img56s, gt56s;
            for (int bi = 0; bi < cfg.batch; ++bi) {
                const auto& p = prep[pick(rng)];
                xs.push_back(&p.img64);
                gts.push_back(&p.gt64);
                img56s.push_back(&p.img56);
                gt56s.push_back(&p.gt56);
            }
            auto x = to_tensor(xs, cfg.batch, 1);
            auto gt = to_tensor(gts, cfg.batch, 1);
            auto img56 = to_tensor(img56s, cfg.batch, 1);
            auto gt56 = to_tensor(gt56s, cfg.batch, 1);

            auto pred = run.gen->forward(x);
            auto pred56 = resize_bilinear(pred, cfg.state_size, cfg.state_size);

            // discriminator step on (real = GT, fake = current generator)
            auto d_real = run.disc->forward(img56, gt56);
            auto d_fake_det = run.disc->forward(img56, detach(pred56));
            auto d_loss = discriminator_term(d_real, d_fake_det);
            backward(d_loss);
            adagrad_step(d_params, cfg.lr, cfg.weight_decay);
            run.d_steps++;

            // generator step; discriminator participates frozen (the freeze
            // must span the backward pass, which tests requires_grad live)
            auto mse = mse_loss(pred, gt);
            TensorPtr<float> g_loss;
            {
                FreezeParams freeze(d_params);
                if (cfg.lambda_adv != 0.f) {
                    auto d_fake = run.disc->forward(img56, pred56);
                    g_loss = add(mse, affine(adversarial_term(d_fake), cfg.lambda_adv, 0.f));
                } else {
                    g_loss = mse;  // pure content-loss regression
                }
                backward(g_loss);
            }
            adagrad_step(g_params, cfg.lr, cfg.weight_decay);
            run.g_steps++;

            const LossRow row{it, g_loss->item(), d_loss->item(), mse->item()};
            if (!std::isfinite(row.g_loss) || !std::isfinite(row.d_loss) || !std::isfinite(row.mse)) {
                throw ContractError("stage1_train: non-finite loss at iteration " + std::to_string(it));
            }
            run.history.push_back(row);
        }
        result.modalities.push_back(std::move(run));
    }
    return result;
}

Image coarse_inference(GeneratorNet<float>& gen, const Image& image) {
    NoGradGuard ng;
    auto out = gen.forward(to_tensor(image));
    return from_tensor(out);
}

double generator_dataset_mse(GeneratorNet<float>& gen, const std::vector<SaliencySample>& dataset,
                             int modality) {
    if (dataset.empty()) throw ConfigError("generator_dataset_mse: empty dataset");
    double acc = 0.0;
    for (const auto& s : dataset) {
        const Image pred = coarse_inference(gen, s.mod[static_cast<std::size_t>(modality)]);
        double se = 0.0;
        for (std::size_t i = 0; i < pred.size(); ++i) {
            const double d = static_cast<double>(s.gt.v[i]) - pred.v[i];
            se += d * d;
        }
        acc += se / static_cast<double>(pred.size());
    }
    return acc / static_cast<double>(dataset.size());
}

}  // namespace qfuse
