#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <random>

#include <json.hpp>

#include "qfuse/checkpoint.hpp"
#include "qfuse/nets.hpp"
#include "testutil.hpp"

using namespace qfuse;

TEST_CASE("checkpoint round-trip restores parameters and accumulators bit-identically") {
    testutil::TempDir dir("ckpt");
    GeneratorNet<float> gen(42);
    auto params = gen.params();
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<float> d(0.f, 1.f);
    for (auto* p : params) {
        for (auto& a : p->accumulator) a = d(rng);
    }
    save_checkpoint(dir.sub("g"), params);

    GeneratorNet<float> other(43);  // different init
    auto oparams = other.params();
    load_checkpoint(dir.sub("g"), oparams);
    for (std::size_t i = 0; i < params.size(); ++i) {
        CHECK(params[i]->value->data == oparams[i]->value->data);
        CHECK(params[i]->accumulator == oparams[i]->accumulator);
    }

    // forward pass after reload matches the original exactly
    auto x = make_tensor<float>({1, 1, 32, 32});
    for (auto& v : x->data) v = d(rng);
    NoGradGuard ng;
    CHECK(gen.forward(x)->data == other.forward(x)->data);
}

TEST_CASE("manifest carries names, shapes and f32 dtype in order") {
    testutil::TempDir dir("ckpt");
    QNetwork<float> q(1, 8, 4);
    save_checkpoint(dir.sub("q"), q.params());

    std::ifstream in(dir.sub("q") + "/manifest.json");
    nlohmann::json manifest;
    in >> manifest;
    REQUIRE(manifest.is_array());
    REQUIRE(manifest.size() == 4);
    CHECK(manifest[0]["name"] == "fc1.weight");
    CHECK(manifest[0]["shape"] == nlohmann::json({192, 4}));
    CHECK(manifest[1]["name"] == "fc1.bias");
    CHECK(manifest[3]["name"] == "fc2.bias");
    for (const auto& e : manifest) CHECK(e["dtype"] == "f32");
}

TEST_CASE("loading rejects missing files, wrong shapes, truncation") {
    testutil::TempDir dir("ckpt");
    QNetwork<float> q(1, 8, 4);
    CHECK_THROWS_AS(load_checkpoint(dir.sub("missing"), q.params()), IoError);

    save_checkpoint(dir.sub("q"), q.params());
    QNetwork<float> wider(1, 8, 6);
    CHECK_THROWS_AS(load_checkpoint(dir.sub("q"), wider.params()), ParseError);

    // truncate params.bin
    {
        std::ofstream trunc(dir.sub("q") + "/params.bin", std::ios::binary | std::ios::trunc);
        trunc << "xx";
    }
    CHECK_THROWS_AS(load_checkpoint(dir.sub("q"), q.params()), ParseError);
}
