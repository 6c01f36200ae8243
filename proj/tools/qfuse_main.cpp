#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "qfuse/checkpoint.hpp"
#include "qfuse/config.hpp"
#include "qfuse/metrics.hpp"

namespace fs = std::filesystem;
using namespace qfuse;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;

int env_threads() {
    const char* v = std::getenv("QFUSE_THREADS");
    if (!v) return 1;
    const int n = std::atoi(v);
    return n >= 1 ? n : 1;
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory '" + dir + "'");
}

struct Stage1Artifacts {
    GeneratorNet<float> gen1, gen2;
    Stage1Artifacts(const RunConfig& cfg, const std::string& stage1_dir)
        : gen1(stage1_gen_seed(cfg.seed, 0)), gen2(stage1_gen_seed(cfg.seed, 1)) {
        load_checkpoint((fs::path(stage1_dir) / "gen_mod1").string(), gen1.params());
        load_checkpoint((fs::path(stage1_dir) / "gen_mod2").string(), gen2.params());
    }
};

void write_loss_csv(const std::string& path, const std::vector<LossRow>& history) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << "iteration,g_loss,d_loss,mse\n";
    char buf[128];
    for (const auto& row : history) {
        std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,%.9g\n", row.iteration, row.g_loss, row.d_loss,
                      row.mse);
        out << buf;
    }
    if (!out.flush()) throw IoError("short write to '" + path + "'");
}

int cmd_gendata(const RunConfig& cfg, const std::string& out_dir) {
    generate_dataset(cfg.synth_config(), out_dir, env_threads());
    std::printf("wrote %d samples to %s\n", cfg.n_samples, out_dir.c_str());
    return kExitOk;
}

int cmd_train_stage1(const RunConfig& cfg, const std::string& data_dir, const std::string& out_dir) {
    const auto dataset = load_dataset(data_dir);
    ensure_dir(out_dir);
    auto result = stage1_train(dataset, cfg.stage1_config());
    for (int m = 0; m < 2; ++m) {
        auto& run = result.modalities[static_cast<std::size_t>(m)];
        const std::string suffix = "_mod" + std::to_string(m + 1);
        save_checkpoint((fs::path(out_dir) / ("gen" + suffix)).string(), run.gen->params());
        save_checkpoint((fs::path(out_dir) / ("disc" + suffix)).string(), run.disc->params());
        write_loss_csv((fs::path(out_dir) / ("loss" + suffix + ".csv")).string(), run.history);
        std::printf("modality %d: %d G steps, %d D steps, final mse %.5f\n", m + 1, run.g_steps,
                    run.d_steps, run.history.back().mse);
    }
    return kExitOk;
}

int cmd_train_stage2(const RunConfig& cfg, const std::string& data_dir, const std::string& stage1_dir,
                     const std::string& out_dir) {
    const auto dataset = load_dataset(data_dir);
    Stage1Artifacts nets(cfg, stage1_dir);
    ensure_dir(out_dir);
    auto result = train_fusion(dataset, nets.gen1, nets.gen2, cfg.fusion_config());
    save_checkpoint((fs::path(out_dir) / "q_network").string(), result.q->params());

    const std::string log_path = (fs::path(out_dir) / "train_log.csv").string();
    std::ofstream out(log_path, std::ios::trunc);
    if (!out) throw IoError("cannot open '" + log_path + "' for writing");
    out << "episode,epsilon,steps,total_reward,final_mse,final_w1\n";
    char buf[160];
    for (const auto& row : result.log) {
        std::snprintf(buf, sizeof(buf), "%d,%.9g,%d,%.9g,%.9g,%.9g\n", row.episode, row.epsilon, row.steps,
                      row.total_reward, row.final_mse, row.final_w1);
        out << buf;
    }
    if (!out.flush()) throw IoError("short write to '" + log_path + "'");
    std::printf("trained %d episodes; final epsilon %.3f\n", cfg.episodes, result.log.back().epsilon);
    return kExitOk;
}

int cmd_eval(const RunConfig& cfg, const std::string& data_dir, const std::string& stage1_dir,
             const std::optional<std::string>& stage2_dir, const std::string& mode,
             const std::string& out_dir) {
    const auto dataset = load_dataset(data_dir);
    Stage1Artifacts nets(cfg, stage1_dir);
    std::optional<QNetwork<float>> q;
    if (mode == "adaptive") {
        if (!stage2_dir) throw IoError("adaptive mode needs --stage2 <dir> with a q_network checkpoint");
        q.emplace(fusion_q_seed(cfg.seed), cfg.state_size, cfg.q_hidden);
        load_checkpoint((fs::path(*stage2_dir) / "q_network").string(), q->params());
    }
    ensure_dir(out_dir);

    const auto fusion_cfg = cfg.fusion_config();
    std::vector<Image> preds;
    preds.reserve(dataset.size());
    for (const auto& sample : dataset) {
        if (mode == "adaptive") {
            preds.push_back(infer_weights(sample, nets.gen1, nets.gen2, *q, fusion_cfg).fused);
        } else if (mode == "equal") {
            const Image c1 = coarse_inference(nets.gen1, sample.mod[0]);
            const Image c2 = coarse_inference(nets.gen2, sample.mod[1]);
            preds.push_back(fuse_maps({&c1, &c2}, WeightVector::uniform(2)));
        } else if (mode == "single-mod1") {
            preds.push_back(coarse_inference(nets.gen1, sample.mod[0]));
        } else if (mode == "single-mod2") {
            preds.push_back(coarse_inference(nets.gen2, sample.mod[1]));
        } else {
            throw ConfigError("unknown eval mode '" + mode + "'");
        }
    }

    std::vector<const Image*> pred_ptrs, gt_ptrs;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        pred_ptrs.push_back(&preds[i]);
        gt_ptrs.push_back(&dataset[i].gt);
    }
    const EvalReport report = evaluate_run(pred_ptrs, gt_ptrs, cfg.beta, cfg.beta_squared);
    write_report_csv((fs::path(out_dir) / "report.csv").string(), report);
    write_report_json((fs::path(out_dir) / "report.json").string(), report);
    std::printf("%s: mean_mse %.5f max_f %.4f (P %.4f R %.4f at t %.4f)\n", mode.c_str(), report.mean_mse,
                report.max_f, report.p_at_max_f, report.r_at_max_f, report.threshold_at_max_f);
    return kExitOk;
}

int cmd_fuse(const RunConfig& cfg, const std::string& mod1, const std::string& mod2,
             const std::string& stage1_dir, const std::string& stage2_dir, const std::string& out_dir) {
    SaliencySample sample;
    sample.mod[0] = read_image(mod1);
    sample.mod[1] = read_image(mod2);
    if (!sample.mod[0].same_shape(sample.mod[1])) {
        throw DimensionError("modality images disagree on size: " + mod1 + " vs " + mod2);
    }
    Stage1Artifacts nets(cfg, stage1_dir);
    QNetwork<float> q(fusion_q_seed(cfg.seed), cfg.state_size, cfg.q_hidden);
    load_checkpoint((fs::path(stage2_dir) / "q_network").string(), q.params());
    ensure_dir(out_dir);

    const auto result = infer_weights(sample, nets.gen1, nets.gen2, q, cfg.fusion_config());
    write_pgm((fs::path(out_dir) / "fused.pgm").string(), result.fused);
    nlohmann::json j = {{"w1", result.weights.w[0]}, {"w2", result.weights.w[1]}, {"steps", result.steps}};
    std::ofstream out(fs::path(out_dir) / "weights.json", std::ios::trunc);
    if (!out) throw IoError("cannot write weights.json in '" + out_dir + "'");
    out << j.dump(2) << '\n';
    std::printf("fused with w = (%.2f, %.2f) after %d steps\n", result.weights.w[0], result.weights.w[1],
                result.steps);
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"qfuse — quality-aware two-modality saliency fusion"};
    app.require_subcommand(1);
    app.fallthrough();  // global options may follow the subcommand

    std::optional<std::string> config_path;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    app.add_option("--config", config_path, "JSON config file")->expected(1);
    app.add_option("--set", overrides, "override a config key (key=value, value in JSON syntax)");
    app.add_option("--seed", seed, "override the config seed");

    std::string out_dir, data_dir, stage1_dir, mode = "adaptive", mod1, mod2;
    std::optional<std::string> stage2_dir;

    auto* gendata = app.add_subcommand("gendata", "generate a synthetic two-modality dataset");
    gendata->add_option("--out", out_dir, "output directory")->required();

    auto* train1 = app.add_subcommand("train-stage1", "adversarial coarse-saliency training");
    train1->add_option("--data", data_dir, "dataset directory")->required();
    train1->add_option("--out", out_dir, "output directory")->required();

    auto* train2 = app.add_subcommand("train-stage2", "train the fusion agent");
    train2->add_option("--data", data_dir, "dataset directory")->required();
    train2->add_option("--stage1", stage1_dir, "stage-1 checkpoint directory")->required();
    train2->add_option("--out", out_dir, "output directory")->required();

    auto* eval = app.add_subcommand("eval", "evaluate fused or single-modality maps");
    eval->add_option("--data", data_dir, "dataset directory")->required();
    eval->add_option("--stage1", stage1_dir, "stage-1 checkpoint directory")->required();
    eval->add_option("--stage2", stage2_dir, "stage-2 checkpoint directory (adaptive mode)");
    eval->add_option("--mode", mode, "adaptive|equal|single-mod1|single-mod2")
        ->check(CLI::IsMember({"adaptive", "equal", "single-mod1", "single-mod2"}));
    eval->add_option("--out", out_dir, "output directory")->required();

    auto* fuse = app.add_subcommand("fuse", "fuse one pair of modality images");
    fuse->add_option("--mod1", mod1, "first modality image")->required();
    fuse->add_option("--mod2", mod2, "second modality image")->required();
    fuse->add_option("--stage1", stage1_dir, "stage-1 checkpoint directory")->required();
    fuse->add_option("--stage2", stage2_dir, "stage-2 checkpoint directory")->required();
    fuse->add_option("--out", out_dir, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitConfig;
    }

    try {
        const RunConfig cfg = load_config(config_path, overrides, seed);
        if (gendata->parsed()) return cmd_gendata(cfg, out_dir);
        if (train1->parsed()) return cmd_train_stage1(cfg, data_dir, out_dir);
        if (train2->parsed()) return cmd_train_stage2(cfg, data_dir, stage1_dir, out_dir);
        if (eval->parsed()) return cmd_eval(cfg, data_dir, stage1_dir, stage2_dir, mode, out_dir);
        if (fuse->parsed()) return cmd_fuse(cfg, mod1, mod2, stage1_dir, *stage2_dir, out_dir);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << '\n';
        return kExitIo;
    } catch (const DimensionError& e) {
        std::cerr << "input error: " << e.what() << '\n';
        return kExitIo;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return kExitConfig;
}
