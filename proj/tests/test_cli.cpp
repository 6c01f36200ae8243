#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "qfuse/config.hpp"
#include "testutil.hpp"

namespace fs = std::filesystem;
using namespace qfuse;

namespace {

std::string cli() {
    const char* bin = std::getenv("QFUSE_BIN");
    REQUIRE_MESSAGE(bin != nullptr, "QFUSE_BIN must point at the qfuse binary");
    return bin;
}

int run(const std::string& args) {
    const std::string cmd = cli() + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    return WEXITSTATUS(status);
}

bool same_bytes(const fs::path& a, const fs::path& b) {
    std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
    if (!fa || !fb) return false;
    std::string sa((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
    std::string sb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
    return sa == sb;
}

}  // namespace

TEST_CASE("config loading: defaults, file, overrides, unknown keys") {
    const RunConfig def = load_config(std::nullopt, {});
    CHECK(def.lambda_adv == 0.33);
    CHECK(def.adagrad_lr == 3e-4);
    CHECK(def.weight_decay == 1e-4);
    CHECK(def.alpha == 1e-4);
    CHECK(def.gamma == 0.9);
    CHECK(def.eta == 2.0);
    CHECK(def.phi == 0.04);
    CHECK(def.beta == 0.3);
    CHECK(def.delta == 0.1);
    CHECK(def.t_max == 20);
    CHECK(def.replay_capacity == 10000);
    CHECK(def.q_batch == 32);
    CHECK(def.gan_batch == 8);
    CHECK(def.sync_c == 100);
    CHECK(def.epsilon_start == 1.0);
    CHECK(def.epsilon_end == 0.1);
    CHECK(def.image_size == 64);
    CHECK(def.state_size == 56);
    CHECK_FALSE(def.quality.has_value());

    testutil::TempDir dir("cfg");
    {
        std::ofstream out(dir.sub("c.json"));
        out << R"({"seed": 9, "quality": [0.9, 0.1], "episodes": 33})";
    }
    const RunConfig fromfile = load_config(dir.sub("c.json"), {});
    CHECK(fromfile.seed == 9);
    CHECK(fromfile.episodes == 33);
    REQUIRE(fromfile.quality.has_value());
    CHECK((*fromfile.quality)[0] == 0.9);

    const RunConfig overridden = load_config(dir.sub("c.json"), {"episodes=44", "quality=random"}, 77);
    CHECK(overridden.episodes == 44);
    CHECK(overridden.seed == 77);
    CHECK_FALSE(overridden.quality.has_value());

    CHECK_THROWS_WITH_AS(load_config(dir.sub("c.json"), {"not_a_key=1"}), doctest::Contains("not_a_key"),
                         ConfigError);
    CHECK_THROWS_AS(load_config(dir.sub("missing.json"), {}), ConfigError);
    CHECK_THROWS_AS(load_config(std::nullopt, {"gamma=1.5"}), ConfigError);
    CHECK_THROWS_AS(load_config(std::nullopt, {"badform"}), ConfigError);
}

TEST_CASE("gendata: exit 0 and files present; deterministic across runs; exit 2 on bad config") {
    testutil::TempDir dir("cli");
    CHECK(run("gendata --set n_samples=4 --seed 5 --out " + dir.sub("a")) == 0);
    int pgms = 0;
    for (const auto& e : fs::directory_iterator(dir.sub("a"))) {
        if (e.path().extension() == ".pgm") ++pgms;
    }
    CHECK(pgms == 12);
    CHECK(fs::exists(fs::path(dir.sub("a")) / "manifest.csv"));

    CHECK(run("gendata --set n_samples=4 --seed 5 --out " + dir.sub("b")) == 0);
    CHECK(same_bytes(fs::path(dir.sub("a")) / "manifest.csv", fs::path(dir.sub("b")) / "manifest.csv"));
    CHECK(same_bytes(fs::path(dir.sub("a")) / "sample_0003_mod2.pgm",
                     fs::path(dir.sub("b")) / "sample_0003_mod2.pgm"));

    CHECK(run("gendata --config " + dir.sub("missing.json") + " --out " + dir.sub("c")) == 2);
    CHECK(run("gendata --set image_size=60 --out " + dir.sub("c")) == 2);
    CHECK(run("gendata --set nonsense=1 --out " + dir.sub("c")) == 2);
}

TEST_CASE("training commands: artifact layout, exit 3 on missing inputs") {
    testutil::TempDir dir("cli");
    const std::string common = "--set n_samples=3 --set image_size=16 --set stage1_iterations=2 "
                               "--set state_size=16 --set q_hidden=8 --set episodes=2 "
                               "--set replay_warmup=4 --set q_batch=4 --set \"quality=[0.9,0.2]\" --seed 3 ";

    CHECK(run(common + "train-stage1 --data " + dir.sub("nodata") + " --out " + dir.sub("s1")) == 3);

    REQUIRE(run(common + "gendata --out " + dir.sub("data")) == 0);
    REQUIRE(run(common + "train-stage1 --data " + dir.sub("data") + " --out " + dir.sub("s1")) == 0);
    for (const char* want : {"gen_mod1", "gen_mod2", "disc_mod1", "disc_mod2"}) {
        CHECK(fs::exists(fs::path(dir.sub("s1")) / want / "manifest.json"));
        CHECK(fs::exists(fs::path(dir.sub("s1")) / want / "params.bin"));
        CHECK(fs::exists(fs::path(dir.sub("s1")) / want / "optimizer.bin"));
    }
    // loss csv: header + one row per iteration
    std::ifstream loss(fs::path(dir.sub("s1")) / "loss_mod1.csv");
    REQUIRE(loss);
    std::string line;
    std::getline(loss, line);
    CHECK(line == "iteration,g_loss,d_loss,mse");
    int rows = 0;
    while (std::getline(loss, line)) ++rows;
    CHECK(rows == 2);

    CHECK(run(common + "train-stage2 --data " + dir.sub("data") + " --stage1 " + dir.sub("missing") +
              " --out " + dir.sub("s2")) == 3);
    REQUIRE(run(common + "train-stage2 --data " + dir.sub("data") + " --stage1 " + dir.sub("s1") +
                " --out " + dir.sub("s2")) == 0);
    CHECK(fs::exists(fs::path(dir.sub("s2")) / "q_network" / "params.bin"));
    std::ifstream log(fs::path(dir.sub("s2")) / "train_log.csv");
    REQUIRE(log);
    std::getline(log, line);
    CHECK(line == "episode,epsilon,steps,total_reward,final_mse,final_w1");
    std::getline(log, line);
    CHECK(line.find("0,1,") == 0);  // epsilon starts at 1.0
    rows = 1;
    while (std::getline(log, line)) ++rows;
    CHECK(rows == 2);

    // eval all four modes; equal must not need stage2
    for (const std::string mode : {"adaptive", "equal", "single-mod1", "single-mod2"}) {
        const std::string stage2 = mode == "adaptive" ? " --stage2 " + dir.sub("s2") : "";
        REQUIRE(run(common + "eval --data " + dir.sub("data") + " --stage1 " + dir.sub("s1") + stage2 +
                    " --mode " + mode + " --out " + dir.sub("eval_" + mode)) == 0);
        std::ifstream rep(fs::path(dir.sub("eval_" + mode)) / "report.json");
        REQUIRE(rep);
        nlohmann::json j;
        rep >> j;
        for (const char* key : {"mean_mse", "max_f", "p_at_max_f", "r_at_max_f", "threshold_at_max_f"}) {
            CHECK(j.contains(key));
        }
    }
    CHECK(run(common + "eval --data " + dir.sub("data") + " --stage1 " + dir.sub("s1") +
              " --mode adaptive --out " + dir.sub("eval_bad")) == 3);

    // equal-mode report is independent of any q-network checkpoint
    REQUIRE(run(common + "eval --data " + dir.sub("data") + " --stage1 " + dir.sub("s1") + " --stage2 " +
                dir.sub("s2") + " --mode equal --out " + dir.sub("eval_equal2")) == 0);
    CHECK(same_bytes(fs::path(dir.sub("eval_equal")) / "report.json",
                     fs::path(dir.sub("eval_equal2")) / "report.json"));

    // fuse writes a map and the chosen weights
    REQUIRE(run(common + "fuse --mod1 " + dir.sub("data") + "/sample_0000_mod1.pgm --mod2 " +
                dir.sub("data") + "/sample_0000_mod2.pgm --stage1 " + dir.sub("s1") + " --stage2 " +
                dir.sub("s2") + " --out " + dir.sub("fused")) == 0);
    CHECK(fs::exists(fs::path(dir.sub("fused")) / "fused.pgm"));
    std::ifstream wj(fs::path(dir.sub("fused")) / "weights.json");
    nlohmann::json weights;
    wj >> weights;
    const double w1 = weights["w1"].get<double>();
    const double w2 = weights["w2"].get<double>();
    CHECK(w1 >= 0.0);
    CHECK(w1 <= 1.0);
    CHECK(w1 + w2 == doctest::Approx(1.0).epsilon(1e-9));
}
