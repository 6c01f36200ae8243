#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "qfuse/checkpoint.hpp"
#include "qfuse/gan.hpp"
#include "testutil.hpp"

using namespace qfuse;

namespace {

std::vector<SaliencySample> tiny_dataset(int n, std::array<double, 2> quality, std::uint64_t seed,
                                         int size = 32) {
    SynthConfig cfg;
    cfg.image_size = size;
    cfg.n_samples = n;
    cfg.quality = quality;
    cfg.seed = seed;
    std::vector<SaliencySample> out;
    for (int i = 0; i < n; ++i) out.push_back(generate_sample(cfg, i).sample);
    return out;
}

Stage1Config tiny_config(int iterations, float lambda = 0.33f) {
    Stage1Config cfg;
    cfg.iterations = iterations;
    cfg.batch = 4;
    cfg.lambda_adv = lambda;
    cfg.seed = 5;
    return cfg;
}

}  // namespace

TEST_CASE("scalar generator loss matches the combined-objective arithmetic") {
    CHECK(generator_loss(0.1, 0.5, 0.33) == doctest::Approx(0.328739).epsilon(1e-5));
    CHECK(generator_loss(0.42, 1.0, 0.33) == doctest::Approx(0.42).epsilon(1e-5));
    CHECK(generator_loss(0.2, 0.5, 0.0) == doctest::Approx(0.2));
}

TEST_CASE("scalar discriminator loss examples and symmetry") {
    CHECK(discriminator_loss(0.5, 0.5) == doctest::Approx(1.386294).epsilon(1e-5));
    CHECK(discriminator_loss(0.999, 0.001) == doctest::Approx(0.002).epsilon(1e-2));
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> d(0.01, 0.99);
    for (int i = 0; i < 50; ++i) {
        const double a = d(rng), b = d(rng);
        CHECK(discriminator_loss(a, b) == doctest::Approx(discriminator_loss(1.0 - b, 1.0 - a)));
    }
}

TEST_CASE("stage1_train: alternation, determinism, empty-dataset rejection") {
    const auto data = tiny_dataset(6, {0.9, 0.9}, 3);
    auto cfg = tiny_config(7);

    auto r1 = stage1_train(data, cfg);
    for (const auto& run : r1.modalities) {
        CHECK(run.g_steps == 7);
        CHECK(run.d_steps == 7);
        CHECK(run.history.size() == 7);
    }

    auto r2 = stage1_train(data, cfg);
    for (int m = 0; m < 2; ++m) {
        for (std::size_t i = 0; i < r1.modalities[m].history.size(); ++i) {
            CHECK(r1.modalities[m].history[i].g_loss == r2.modalities[m].history[i].g_loss);
            CHECK(r1.modalities[m].history[i].d_loss == r2.modalities[m].history[i].d_loss);
        }
    }
    const auto p1 = r1.modalities[0].gen->params();
    const auto p2 = r2.modalities[0].gen->params();
    for (std::size_t i = 0; i < p1.size(); ++i) CHECK(p1[i]->value->data == p2[i]->value->data);

    CHECK_THROWS_AS(stage1_train({}, cfg), ConfigError);
}

TEST_CASE("lambda = 0 reduces the generator objective to plain MSE at every step") {
    const auto data = tiny_dataset(4, {0.8, 0.8}, 7);
    auto cfg = tiny_config(6, 0.f);
    const auto result = stage1_train(data, cfg);
    for (const auto& run : result.modalities) {
        for (const auto& row : run.history) CHECK(row.g_loss == row.mse);
    }
}

TEST_CASE("with adversarial loss enabled g_loss exceeds mse by the weighted term") {
    const auto data = tiny_dataset(4, {0.8, 0.8}, 7);
    const auto result = stage1_train(data, tiny_config(4));
    for (const auto& run : result.modalities) {
        for (const auto& row : run.history) CHECK(row.g_loss > row.mse);
    }
}

TEST_CASE("discriminator training on a frozen untrained generator reduces its loss over 50 iterations") {
    const auto data = tiny_dataset(8, {0.9, 0.9}, 9);
    Stage1Config cfg = tiny_config(1);

    GeneratorNet<float> gen(stage1_gen_seed(cfg.seed, 0));
    DiscriminatorNet<float> disc(stage1_disc_seed(cfg.seed, 0), 1, cfg.state_size);
    auto d_params = disc.params();

    std::mt19937_64 rng(4);
    std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
    std::vector<float> losses;
    for (int it = 0; it < 50; ++it) {
        std::vector<const Image*> img56s, gt56s;
        std::vector<Image> storage;
        storage.reserve(8);
        std::vector<std::size_t> idx;
        for (int b = 0; b < 4; ++b) idx.push_back(pick(rng));
        for (std::size_t i : idx) storage.push_back(resize_bilinear(data[i].mod[0], 56, 56));
        for (std::size_t i : idx) storage.push_back(resize_bilinear(data[i].gt, 56, 56));
        for (int b = 0; b < 4; ++b) img56s.push_back(&storage[static_cast<std::size_t>(b)]);
        for (int b = 0; b < 4; ++b) gt56s.push_back(&storage[static_cast<std::size_t>(4 + b)]);
        auto img = to_tensor(img56s, 4, 1);
        auto gt = to_tensor(gt56s, 4, 1);

        Image fake_storage[4];
        std::vector<const Image*> fakes;
        for (int b = 0; b < 4; ++b) {
            fake_storage[b] = resize_bilinear(coarse_inference(gen, data[idx[static_cast<std::size_t>(b)]].mod[0]), 56, 56);
            fakes.push_back(&fake_storage[b]);
        }
        auto fake = to_tensor(fakes, 4, 1);

        auto d_real = disc.forward(img, gt);
        auto d_fake = disc.forward(img, fake);
        auto lr_ = log_(clamp(d_real, 1e-7f, 1.f - 1e-7f));
        auto lf = log_(clamp(affine(d_fake, -1.f, 1.f), 1e-7f, 1.f - 1e-7f));
        auto loss = mean(affine(add(lr_, lf), -1.f, 0.f));
        losses.push_back(loss->item());
        backward(loss);
        adagrad_step(d_params, cfg.lr, cfg.weight_decay);
    }
    CHECK(losses.back() < losses.front());
}

TEST_CASE("coarse inference is deterministic, in (0,1), and checkpoint-stable") {
    const auto data = tiny_dataset(2, {0.9, 0.9}, 13);
    GeneratorNet<float> gen(99);
    const Image a = coarse_inference(gen, data[0].mod[0]);
    const Image b = coarse_inference(gen, data[0].mod[0]);
    CHECK(a.v == b.v);
    CHECK(a.h == data[0].mod[0].h);
    for (float v : a.v) {
        CHECK(v > 0.f);
        CHECK(v < 1.f);
    }

    testutil::TempDir dir("gan_ckpt");
    save_checkpoint(dir.sub("g"), gen.params());
    GeneratorNet<float> reloaded(123);
    load_checkpoint(dir.sub("g"), reloaded.params());
    CHECK(coarse_inference(reloaded, data[0].mod[0]).v == a.v);
}

TEST_CASE("short training run drives the batch MSE down") {
    const auto data = tiny_dataset(8, {0.95, 0.95}, 21);
    const auto result = stage1_train(data, tiny_config(40));
    const auto& hist = result.modalities[0].history;
    CHECK(hist.back().mse < hist.front().mse);
}
