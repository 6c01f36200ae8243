#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "qfuse/data_synth.hpp"
#include "qfuse/nets.hpp"

namespace qfuse {

struct Stage1Config {
    float lambda_adv = 0.33f;
    float lr = 3e-4f;
    float weight_decay = 1e-4f;
    int batch = 8;
    int iterations = 500;
    std::uint64_t seed = 0;
    int state_size = 56;  // discriminator input resolution
};

struct LossRow {
    int iteration;
    float g_loss, d_loss, mse;
};

/// One modality's trained pair plus its per-iteration loss history.
struct ModalityRun {
    std::unique_ptr<GeneratorNet<float>> gen;
    std::unique_ptr<DiscriminatorNet<float>> disc;
    std::vector<LossRow> history;
    int g_steps = 0, d_steps = 0;
};

struct Stage1Result {
    std::vector<ModalityRun> modalities;
};

/// Scalar-form generator objective: L_MSE + lambda * (-ln d_out), with d_out
/// clamped away from 0/1.
double generator_loss(double mse, double d_out, double lambda);

/// Scalar-form discriminator objective: -ln(d_real) - ln(1 - d_fake).
double discriminator_loss(double d_real, double d_fake);

/// Adversarial training of one (generator, discriminator) pair per modality.
/// Each iteration draws a batch, updates the discriminator, then the
/// generator, and logs (g_loss, d_loss, mse).
Stage1Result stage1_train(const std::vector<SaliencySample>& dataset, const Stage1Config& cfg);

/// Seeds used for the per-modality networks; exposed so freshly initialized
/// nets can be reproduced outside the training loop.
std::uint64_t stage1_gen_seed(std::uint64_t seed, int modality);
std::uint64_t stage1_disc_seed(std::uint64_t seed, int modality);

/// Runs the generator on one image; output in (0,1), same extents.
Image coarse_inference(GeneratorNet<float>& gen, const Image& image);

/// Mean per-pixel MSE of the generator's maps over a set of samples.
double generator_dataset_mse(GeneratorNet<float>& gen, const std::vector<SaliencySample>& dataset,
                             int modality);

}  // namespace qfuse
