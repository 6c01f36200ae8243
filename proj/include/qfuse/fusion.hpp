#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <vector>

#include "qfuse/gan.hpp"
#include "qfuse/nets.hpp"

namespace qfuse {

enum class Action { Increase = 0, Decrease = 1, Terminate = 2 };
constexpr int kNumActions = 3;

/// Per-modality fusion weights on the simplex: each in [0,1], summing to 1.
struct WeightVector {
    std::vector<double> w;

    static WeightVector uniform(int m) { return WeightVector{std::vector<double>(m, 1.0 / m)}; }
    double w1() const { return w.at(0); }
    bool valid(double tol = 1e-9) const;
};

/// Pixelwise convex combination of same-shape maps.
Image fuse_maps(const std::vector<const Image*>& maps, const WeightVector& weights);

/// Shared per-sample data of the agent's observation: the two resized coarse
/// maps (and the resized GT when training). Episode states reference one
/// basis and differ only in their weights.
struct StateBasis {
    Image s1, s2;  // coarse saliency maps at the state resolution
    Image gt;      // resized GT; empty (h==0) outside training
};

struct FusionState {
    std::shared_ptr<const StateBasis> basis;
    WeightVector weights;

    Image fused() const;                 // s3 = w1*s1 + w2*s2
    TensorPtr<float> to_tensor() const;  // [1,3,S,S] stack of (s1,s2,s3)
};

/// Builds the agent state from full-resolution coarse maps: bilinear-resize
/// both to state_size, stack with the fused channel.
FusionState build_state(const std::vector<const Image*>& coarse_maps, const WeightVector& weights,
                        int state_size = 56);

/// Increase/Decrease move w1 by +-delta (clamped to [0,1]) with w2 = 1-w1;
/// Terminate leaves the weights unchanged.
WeightVector apply_action(const WeightVector& weights, Action action, double delta);

/// +1 if the fused-map MSE decreased strictly, else -1.
double step_reward(double mse_prev, double mse_curr);

/// +eta if mse <= phi, else -eta.
double terminate_reward(double mse, double phi, double eta);

/// Epsilon-greedy over the Q-values; ties break to the lowest action index.
Action select_action(QNetwork<float>& q, const FusionState& state, double epsilon, std::mt19937_64& rng);

struct Transition {
    FusionState state;
    Action action;
    double reward;
    FusionState next_state;
    bool terminal;
};

/// Bounded FIFO of transitions with uniform random sampling.
class ReplayMemory {
public:
    explicit ReplayMemory(std::size_t capacity);
    void push(Transition t);
    std::size_t size() const { return buf_.size(); }
    std::size_t capacity() const { return capacity_; }
    const Transition& at(std::size_t i) const;  // 0 = oldest
    std::vector<const Transition*> sample(std::size_t count, std::mt19937_64& rng) const;

private:
    std::size_t capacity_, head_ = 0;
    std::vector<Transition> buf_;
};

/// TD target: r for terminal transitions, else r + gamma * max_a' Q^(s',a').
double compute_target(const Transition& t, QNetwork<float>& target_net, double gamma);

/// One SGD step on the mean squared TD error of the batch; only the taken
/// action's Q-value receives error signal. Returns the loss value.
double dqn_update(QNetwork<float>& q, const std::vector<const Transition*>& batch,
                  QNetwork<float>& target_net, double gamma, double alpha);

/// Copies online parameters into the target network bit-identically.
void sync_target(QNetwork<float>& q, QNetwork<float>& target);

struct FusionConfig {
    double alpha = 1e-4;
    double gamma = 0.9;
    double eta = 2.0;
    double phi = 0.04;
    double delta = 0.1;
    int t_max = 20;
    std::size_t replay_capacity = 10000;
    int batch = 32;
    int sync_c = 100;
    std::size_t replay_warmup = 500;
    double epsilon_start = 1.0;
    double epsilon_end = 0.1;
    double anneal_fraction = 0.5;  // of total episodes
    int episodes = 400;
    int state_size = 56;
    int q_hidden = 256;
    std::uint64_t seed = 0;

    void validate() const;
};

enum class EpisodeMode { Train, Eval };

struct EpisodeRecord {
    std::vector<WeightVector> weights;  // trajectory, starting at 1/M
    std::vector<double> rewards;
    Image final_fused;  // full-resolution fusion under the final weights
    double final_mse = 0.0;  // at the state resolution; NaN-free in training
    int steps = 0;
    bool terminated = false;  // agent chose Terminate (vs hitting the cap)
};

/// Book-keeping shared by training episodes.
struct EpisodeStats {
    std::size_t updates = 0;  // gradient steps so far (drives target syncs)
};

/// Runs one weight-tuning episode on a sample. Train mode stores every
/// transition and performs one update per step once the memory holds
/// `replay_warmup` transitions; eval mode is greedy and touches nothing.
EpisodeRecord run_episode(const SaliencySample& sample, GeneratorNet<float>& gen1,
                          GeneratorNet<float>& gen2, QNetwork<float>& q, QNetwork<float>& target,
                          ReplayMemory& memory, const FusionConfig& cfg, EpisodeMode mode,
                          std::mt19937_64& rng, double epsilon, EpisodeStats* stats = nullptr);

/// Same episode loop on a prepared state basis (used by train_fusion, which
/// caches the coarse maps per sample).
EpisodeRecord run_episode_on_basis(const std::shared_ptr<const StateBasis>& basis,
                                   const std::vector<const Image*>& coarse_fullres, const Image* gt_fullres,
                                   QNetwork<float>& q, QNetwork<float>& target, ReplayMemory& memory,
                                   const FusionConfig& cfg, EpisodeMode mode, std::mt19937_64& rng,
                                   double epsilon, EpisodeStats* stats);

struct FusionLogRow {
    int episode;
    double epsilon;
    int steps;
    double total_reward;
    double final_mse;
    double final_w1;
};

struct FusionTrainResult {
    std::unique_ptr<QNetwork<float>> q;
    std::vector<FusionLogRow> log;
};

std::uint64_t fusion_q_seed(std::uint64_t seed);

/// Episode schedule per the two-network DQN recipe: one episode per image
/// per pass, epsilon annealed linearly over the first `anneal_fraction` of
/// episodes, target synced every `sync_c` updates.
FusionTrainResult train_fusion(const std::vector<SaliencySample>& dataset, GeneratorNet<float>& gen1,
                               GeneratorNet<float>& gen2, const FusionConfig& cfg);

struct InferenceResult {
    WeightVector weights;
    Image fused;  // full resolution
    int steps = 0;
};

/// Greedy rollout (epsilon = 0) capped at t_max steps; no GT required.
InferenceResult infer_weights(const SaliencySample& sample, GeneratorNet<float>& gen1,
                              GeneratorNet<float>& gen2, QNetwork<float>& q, const FusionConfig& cfg);

}  // namespace qfuse
