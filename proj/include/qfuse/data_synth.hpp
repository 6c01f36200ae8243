#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "qfuse/image.hpp"

namespace qfuse {

/// One scene: two single-channel modality observations plus the binary
/// ground-truth saliency mask, all the same size.
struct SaliencySample {
    std::array<Image, 2> mod;
    Image gt;
};

struct SynthConfig {
    int image_size = 64;                        // divisible by 8, >= 16
    int n_samples = 16;
    std::optional<std::array<double, 2>> quality;  // nullopt: per-sample uniform draws
    int blur_radius = 2;
    double noise_sigma_max = 0.8;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Deterministic per-index sample; the RNG stream depends only on
/// (cfg.seed, index), so parallel and serial generation agree byte for byte.
/// Returns the sample plus the qualities actually used.
struct GeneratedSample {
    SaliencySample sample;
    std::array<double, 2> quality;
    std::uint64_t stream_seed;
};
GeneratedSample generate_sample(const SynthConfig& cfg, int index);

/// Writes sample_%04d_{mod1,mod2,gt}.pgm plus manifest.csv
/// (header id,quality1,quality2,seed). `threads` caps parallel generation.
void generate_dataset(const SynthConfig& cfg, const std::string& out_dir, int threads = 1);

/// Loads one sample from explicit paths; values scaled to [0,1], gt
/// binarized at 0.5.
SaliencySample load_sample(const std::string& mod1_path, const std::string& mod2_path,
                           const std::string& gt_path);

/// Loads every sample listed in `dir`/manifest.csv, in manifest order.
std::vector<SaliencySample> load_dataset(const std::string& dir);

}  // namespace qfuse
