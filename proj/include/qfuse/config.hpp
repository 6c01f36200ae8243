#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "qfuse/data_synth.hpp"
#include "qfuse/fusion.hpp"
#include "qfuse/gan.hpp"

namespace qfuse {

/// Every pipeline hyperparameter with its default. Unknown JSON keys and
/// out-of-range values are rejected.
struct RunConfig {
    // stage-I adversarial training
    double lambda_adv = 0.33;
    double adagrad_lr = 3e-4;
    double weight_decay = 1e-4;
    int gan_batch = 8;
    int stage1_iterations = 500;

    // stage-II agent
    double alpha = 1e-4;
    double gamma = 0.9;
    double eta = 2.0;
    double phi = 0.04;
    double delta = 0.1;
    int t_max = 20;
    int replay_capacity = 10000;
    int q_batch = 32;
    int sync_c = 100;
    int replay_warmup = 500;
    double epsilon_start = 1.0;
    double epsilon_end = 0.1;
    double anneal_fraction = 0.5;
    int episodes = 400;
    int q_hidden = 256;

    // evaluation
    double beta = 0.3;
    bool beta_squared = false;

    // data
    int image_size = 64;
    int state_size = 56;
    int n_samples = 16;
    std::optional<std::array<double, 2>> quality;  // nullopt = per-sample random
    int blur_radius = 2;
    double noise_sigma_max = 0.8;

    std::uint64_t seed = 0;

    void validate() const;  // throws ConfigError naming the offending key

    SynthConfig synth_config() const;
    Stage1Config stage1_config() const;
    FusionConfig fusion_config() const;
};

/// Parses a JSON config file and applies `key=value` overrides (values in
/// JSON syntax; bare words fall back to strings). A null path yields the
/// defaults. Throws ConfigError on unknown keys, bad values, or an
/// unreadable file.
RunConfig load_config(const std::optional<std::string>& path, const std::vector<std::string>& overrides,
                      std::optional<std::uint64_t> seed_override = std::nullopt);

}  // namespace qfuse
