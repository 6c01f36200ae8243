#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "qfuse/ops.hpp"
#include "qfuse/optim.hpp"
#include "testutil.hpp"

using namespace qfuse;

TEST_CASE("tensor construction checks shape against data") {
    CHECK_NOTHROW(make_tensor<float>({2, 3}, std::vector<float>(6, 0.f)));
    CHECK_THROWS_AS(make_tensor<float>({2, 3}, std::vector<float>(5, 0.f)), DimensionError);
    CHECK_THROWS_AS(make_tensor<float>({0, 3}), DimensionError);
}

TEST_CASE("conv2d: all-ones 3x3 input, 2x2 kernel, stride 1, pad 0 -> all 4") {
    auto x = make_tensor<float>({1, 1, 3, 3}, std::vector<float>(9, 1.f));
    auto w = make_tensor<float>({1, 1, 2, 2}, std::vector<float>(4, 1.f));
    auto b = make_tensor<float>({1});
    auto y = conv2d(x, w, b, 1, 0);
    CHECK(y->shape == std::vector<int>{1, 1, 2, 2});
    for (float v : y->data) CHECK(v == doctest::Approx(4.f));
}

TEST_CASE("conv2d: ones 3x3 * ones 3x3 pad 1 -> corners 4, edges 6, center 9") {
    auto x = make_tensor<float>({1, 1, 3, 3}, std::vector<float>(9, 1.f));
    auto w = make_tensor<float>({1, 1, 3, 3}, std::vector<float>(9, 1.f));
    auto b = make_tensor<float>({1});
    auto y = conv2d(x, w, b, 1, 1);
    const std::vector<float> want = {4, 6, 4, 6, 9, 6, 4, 6, 4};
    for (std::size_t i = 0; i < want.size(); ++i) CHECK(y->data[i] == doctest::Approx(want[i]));
}

TEST_CASE("conv2d: centered delta kernel reproduces the input") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<float> d(0.f, 1.f);
    auto x = make_tensor<float>({1, 1, 6, 6});
    for (auto& v : x->data) v = d(rng);
    std::vector<float> delta(9, 0.f);
    delta[4] = 1.f;
    auto w = make_tensor<float>({1, 1, 3, 3}, delta);
    auto b = make_tensor<float>({1});
    auto y = conv2d(x, w, b, 1, 1);
    for (std::size_t i = 0; i < x->data.size(); ++i) CHECK(y->data[i] == x->data[i]);
}

TEST_CASE("conv2d matches the nested-loop reference on random shapes") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    std::uniform_int_distribution<int> dim(3, 9), chan(1, 4), kk(1, 3), st(1, 2), pd(0, 2);
    for (int trial = 0; trial < 25; ++trial) {
        const int n = chan(rng), c = chan(rng), h = dim(rng), w = dim(rng);
        const int k = chan(rng), ks = kk(rng), stride = st(rng), pad = pd(rng);
        if (ks > h + 2 * pad || ks > w + 2 * pad) continue;
        std::vector<double> xd(static_cast<std::size_t>(n) * c * h * w), wd(static_cast<std::size_t>(k) * c * ks * ks), bd(static_cast<std::size_t>(k));
        for (auto& v : xd) v = d(rng);
        for (auto& v : wd) v = d(rng);
        for (auto& v : bd) v = d(rng);
        int oh = 0, ow = 0;
        const auto want = testutil::conv2d_reference(xd, n, c, h, w, wd, k, ks, ks, bd, stride, pad, oh, ow);
        auto y = conv2d(make_tensor<double>({n, c, h, w}, xd), make_tensor<double>({k, c, ks, ks}, wd),
                        make_tensor<double>({k}, bd), stride, pad);
        REQUIRE(y->shape == std::vector<int>{n, k, oh, ow});
        for (std::size_t i = 0; i < want.size(); ++i) CHECK(y->data[i] == doctest::Approx(want[i]).epsilon(1e-9));
    }
}

TEST_CASE("conv2d rejects channel mismatch") {
    auto x = make_tensor<float>({1, 2, 4, 4});
    auto w = make_tensor<float>({1, 3, 3, 3});
    auto b = make_tensor<float>({1});
    CHECK_THROWS_AS(conv2d(x, w, b, 1, 1), DimensionError);
}

TEST_CASE("max_pool2d examples") {
    auto y = max_pool2d(make_tensor<float>({1, 1, 2, 2}, {1, 2, 3, 4}));
    CHECK(y->data == std::vector<float>{4});

    auto c = max_pool2d(make_tensor<float>({1, 1, 4, 4}, std::vector<float>(16, 0.7f)));
    CHECK(c->shape == std::vector<int>{1, 1, 2, 2});
    for (float v : c->data) CHECK(v == 0.7f);

    std::vector<float> seq(16);
    for (int i = 0; i < 16; ++i) seq[static_cast<std::size_t>(i)] = static_cast<float>(i + 1);
    auto m = max_pool2d(make_tensor<float>({1, 1, 4, 4}, seq));
    CHECK(m->data == std::vector<float>{6, 8, 14, 16});

    CHECK_THROWS_AS(max_pool2d(make_tensor<float>({1, 1, 3, 4})), DimensionError);
}

TEST_CASE("upsample2x examples and backward block sum") {
    auto y = upsample2x(make_tensor<float>({1, 1, 2, 2}, {1, 2, 3, 4}));
    CHECK(y->data == std::vector<float>{1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4});

    auto x = make_tensor<float>({1, 1, 2, 2}, {1, 2, 3, 4}, true);
    auto up = upsample2x(x);
    backward(sum(up));
    for (float g : x->grad) CHECK(g == doctest::Approx(4.f));
}

TEST_CASE("dense examples") {
    auto x = make_tensor<float>({2, 2}, {1, 2, 3, 4});
    auto ident = make_tensor<float>({2, 2}, {1, 0, 0, 1});
    auto zero_b = make_tensor<float>({2});
    auto y = dense(x, ident, zero_b);
    CHECK(y->data == x->data);

    auto zero_w = make_tensor<float>({2, 2});
    auto bias = make_tensor<float>({2}, {5, -1});
    auto z = dense(x, zero_w, bias);
    CHECK(z->data == std::vector<float>{5, -1, 5, -1});

    auto v = dense(make_tensor<float>({1, 2}, {1, 2}), make_tensor<float>({2, 2}, {1, 0, 0, 2}),
                   make_tensor<float>({2}, {1, 1}));
    CHECK(v->data == std::vector<float>{2, 5});

    CHECK_THROWS_AS(dense(make_tensor<float>({1, 3}), make_tensor<float>({2, 2}), make_tensor<float>({2})),
                    DimensionError);
}

TEST_CASE("activation examples") {
    auto s = activation(scalar_tensor(0.f), Act::Sigmoid);
    CHECK(s->item() == doctest::Approx(0.5f));
    auto r = activation(make_tensor<float>({2}, {-1.f, 2.f}), Act::Relu);
    CHECK(r->data == std::vector<float>{0.f, 2.f});
    CHECK(activation(scalar_tensor(0.f), Act::Tanh)->item() == 0.f);

    std::mt19937_64 rng(5);
    std::uniform_real_distribution<float> d(-5.f, 5.f);
    auto x = make_tensor<float>({64});
    for (auto& v : x->data) v = d(rng);
    auto sig = activation(x, Act::Sigmoid);
    for (float v : sig->data) {
        CHECK(v > 0.f);
        CHECK(v < 1.f);
    }
    auto th = activation(x, Act::Tanh);
    for (float v : th->data) {
        CHECK(v > -1.f);
        CHECK(v < 1.f);
    }
    auto re = activation(x, Act::Relu);
    for (float v : re->data) CHECK(v >= 0.f);
}

TEST_CASE("mse_loss examples") {
    auto a = make_tensor<float>({3}, {0.2f, 0.4f, 0.9f});
    CHECK(mse_loss(a, a)->item() == 0.f);
    CHECK(mse_loss(make_tensor<float>({4}), make_tensor<float>({4}, std::vector<float>(4, 1.f)))->item() ==
          doctest::Approx(1.f));
    CHECK(mse_loss(make_tensor<float>({2}, {0.f, 0.5f}), make_tensor<float>({2}, {1.f, 0.5f}))->item() ==
          doctest::Approx(0.5f));
    CHECK_THROWS_AS(mse_loss(make_tensor<float>({3}), make_tensor<float>({4})), DimensionError);
}

TEST_CASE("bce_loss examples") {
    CHECK(bce_loss(scalar_tensor(0.5), 1)->item() == doctest::Approx(0.6931471805599453));
    CHECK(bce_loss(scalar_tensor(0.5), 0)->item() == doctest::Approx(0.6931471805599453));
    CHECK(bce_loss(scalar_tensor(0.999), 1)->item() == doctest::Approx(0.001).epsilon(1e-1));
    CHECK(std::abs(bce_loss(scalar_tensor(0.999), 1)->item() - 0.001) < 1e-4);
    // clamped at the boundaries rather than -ln 0
    CHECK(std::isfinite(bce_loss(scalar_tensor(0.0), 1)->item()));
    CHECK(std::isfinite(bce_loss(scalar_tensor(1.0), 0)->item()));
}

TEST_CASE("backward: linear loss, unreachable parameter, accumulation") {
    Parameter<float> p("p", {4});
    for (auto& v : p.value->data) v = 0.25f;
    auto loss = sum(affine(p.value, 2.f, 0.f));
    backward(loss);
    for (float g : p.value->grad) CHECK(g == doctest::Approx(2.f));

    // unreachable parameter keeps an all-zero gradient
    Parameter<float> q("q", {3});
    CHECK(q.value->grad == std::vector<float>(3, 0.f));

    // a second backward on the same graph accumulates
    backward(loss);
    for (float g : p.value->grad) CHECK(g == doctest::Approx(4.f));

    CHECK_THROWS_AS(backward(make_tensor<float>({3}, std::vector<float>(3, 1.f), true)), ContractError);
}

TEST_CASE("adagrad: zero grad, first-step magnitude, shrinking updates") {
    Parameter<float> p("p", {2});
    std::vector<Parameter<float>*> params{&p};

    SUBCASE("zero gradient leaves parameters untouched") {
        p.value->data = {0.3f, -0.4f};
        adagrad_step(params, 0.01f, 0.f);
        CHECK(p.value->data == std::vector<float>{0.3f, -0.4f});
    }

    SUBCASE("first step moves by about lr * sign(g)") {
        p.value->data = {0.f, 0.f};
        p.value->grad = {0.5f, -2.f};
        adagrad_step(params, 3e-4f, 0.f);
        CHECK(p.value->data[0] == doctest::Approx(-3e-4f).epsilon(1e-3));
        CHECK(p.value->data[1] == doctest::Approx(3e-4f).epsilon(1e-3));
        CHECK(p.value->grad == std::vector<float>(2, 0.f));  // zeroed by the step
    }

    SUBCASE("second identical step is smaller") {
        p.value->data = {0.f, 0.f};
        p.value->grad = {1.f, 1.f};
        adagrad_step(params, 0.1f, 0.f);
        const float delta1 = -p.value->data[0];
        p.value->grad = {1.f, 1.f};
        adagrad_step(params, 0.1f, 0.f);
        const float delta2 = -p.value->data[0] - delta1;
        CHECK(delta2 > 0.f);
        CHECK(delta2 < delta1);
    }

    SUBCASE("missing gradient raises a contract error") {
        Parameter<float> fresh("fresh", {2});
        fresh.value->grad.clear();
        std::vector<Parameter<float>*> ps{&fresh};
        CHECK_THROWS_AS(adagrad_step(ps, 0.1f, 0.f), ContractError);
    }
}

TEST_CASE("adagrad accumulator is monotonically non-decreasing") {
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<float> d(-1.f, 1.f);
    Parameter<float> p("p", {8});
    std::vector<Parameter<float>*> params{&p};
    std::vector<float> prev = p.accumulator;
    for (int step = 0; step < 50; ++step) {
        for (auto& g : p.value->grad) g = d(rng);
        adagrad_step(params, 1e-2f, 1e-4f);
        for (std::size_t i = 0; i < prev.size(); ++i) {
            CHECK(p.accumulator[i] >= prev[i]);
        }
        prev = p.accumulator;
    }
}

TEST_CASE("resize_bilinear is the identity at equal size") {
    std::mt19937_64 rng(29);
    std::uniform_real_distribution<float> d(0.f, 1.f);
    auto x = make_tensor<float>({1, 2, 5, 7});
    for (auto& v : x->data) v = d(rng);
    auto y = resize_bilinear(x, 5, 7);
    CHECK(y->data == x->data);
}

TEST_CASE("no-grad mode skips graph recording") {
    Parameter<float> p("p", {3});
    NoGradGuard ng;
    auto y = affine(p.value, 2.f, 0.f);
    CHECK_FALSE(y->requires_grad);
    CHECK(y->parents.empty());
}
