#include "qfuse/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace qfuse {

namespace {

double mse_images(const Image& a, const Image& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a.v[i]) - b.v[i];
        acc += d * d;
    }
    return acc / static_cast<double>(a.size());
}

}  // namespace

bool WeightVector::valid(double tol) const {
    double sum = 0.0;
    for (double x : w) {
        if (!(x >= 0.0 && x <= 1.0)) return false;
        sum += x;
    }
    return std::abs(sum - 1.0) <= tol;
}

Image fuse_maps(const std::vector<const Image*>& maps, const WeightVector& weights) {
    if (maps.empty() || maps.size() != weights.w.size()) {
        throw ContractError("fuse_maps: need one weight per map");
    }
    if (!weights.valid()) throw ContractError("fuse_maps: weights are off the simplex");
    const Image& first = *maps[0];
    Image out(first.h, first.w);
    for (std::size_t m = 0; m < maps.size(); ++m) {
        if (!maps[m]->same_shape(first)) throw DimensionError("fuse_maps: map shapes disagree");
        const float wm = static_cast<float>(weights.w[m]);
        const float* src = maps[m]->v.data();
        float* dst = out.v.data();
        for (std::size_t i = 0; i < out.size(); ++i) dst[i] += wm * src[i];
    }
    for (auto& v : out.v) v = std::clamp(v, 0.f, 1.f);
    return out;
}

Image FusionState::fused() const {
    return fuse_maps({&basis->s1, &basis->s2}, weights);
}

TensorPtr<float> FusionState::to_tensor() const {
    const Image s3 = fused();
    return qfuse::to_tensor({&basis->s1, &basis->s2, &s3}, 1, 3);
}

FusionState build_state(const std::vector<const Image*>& coarse_maps, const WeightVector& weights,
                        int state_size) {
    if (coarse_maps.size() != 2) throw ContractError("build_state: expects two coarse maps");
    auto basis = std::make_shared<StateBasis>();
    basis->s1 = resize_bilinear(*coarse_maps[0], state_size, state_size);
    basis->s2 = resize_bilinear(*coarse_maps[1], state_size, state_size);
    return FusionState{std::move(basis), weights};
}

WeightVector apply_action(const WeightVector& weights, Action action, double delta) {
    if (weights.w.size() != 2) throw ContractError("apply_action: defined for two modalities");
    if (!(delta > 0.0 && delta <= 0.5)) throw ContractError("apply_action: delta must lie in (0, 0.5]");
    WeightVector out = weights;
    switch (action) {
        case Action::Increase:
            out.w[0] = std::min(1.0, out.w[0] + delta);
            out.w[1] = 1.0 - out.w[0];
            break;
        case Action::Decrease:
            out.w[0] = std::max(0.0, out.w[0] - delta);
            out.w[1] = 1.0 - out.w[0];
            break;
        case Action::Terminate:
            break;
    }
    return out;
}

double step_reward(double mse_prev, double mse_curr) {
    return (mse_curr - mse_prev < 0.0) ? 1.0 : -1.0;
}

double terminate_reward(double mse, double phi, double eta) {
    return (mse <= phi) ? eta : -eta;
}

Action select_action(QNetwork<float>& q, const FusionState& state, double epsilon, std::mt19937_64& rng) {
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ContractError("select_action: epsilon must lie in [0,1]");
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    if (coin(rng) < epsilon) {
        std::uniform_int_distribution<int> pick(0, kNumActions - 1);
        return static_cast<Action>(pick(rng));
    }
    NoGradGuard ng;
    auto out = q.forward(state.to_tensor());
    int best = 0;
    for (int a = 1; a < kNumActions; ++a) {
        if (out->data[static_cast<std::size_t>(a)] > out->data[static_cast<std::size_t>(best)]) best = a;
    }
    return static_cast<Action>(best);
}

ReplayMemory::ReplayMemory(std::size_t capacity) : capacity_(capacity) {
    if (capacity_ == 0) throw ContractError("ReplayMemory: capacity must be positive");
    buf_.reserve(std::min<std::size_t>(capacity_, 4096));
}

void ReplayMemory::push(Transition t) {
    if (buf_.size() < capacity_) {
        buf_.push_back(std::move(t));
    } else {
        buf_[head_] = std::move(t);
        head_ = (head_ + 1) % capacity_;
    }
}

const Transition& ReplayMemory::at(std::size_t i) const {
    if (i >= buf_.size()) throw ContractError("ReplayMemory::at: index out of range");
    return buf_[(head_ + i) % buf_.size()];
}

std::vector<const Transition*> ReplayMemory::sample(std::size_t count, std::mt19937_64& rng) const {
    if (buf_.empty()) throw ContractError("ReplayMemory::sample: memory is empty");
    std::uniform_int_distribution<std::size_t> pick(0, buf_.size() - 1);
    std::vector<const Transition*> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) out.push_back(&buf_[pick(rng)]);
    return out;
}

double compute_target(const Transition& t, QNetwork<float>& target_net, double gamma) {
    if (!(gamma >= 0.0 && gamma < 1.0)) throw ContractError("compute_target: gamma must lie in [0,1)");
    if (t.terminal) return t.reward;
    NoGradGuard ng;
    auto out = target_net.forward(t.next_state.to_tensor());
    double best = out->data[0];
    for (int a = 1; a < kNumActions; ++a) best = std::max(best, static_cast<double>(out->data[static_cast<std::size_t>(a)]));
    return t.reward + gamma * best;
}

double dqn_update(QNetwork<float>& q, const std::vector<const Transition*>& batch,
                  QNetwork<float>& target_net, double gamma, double alpha) {
    if (batch.empty()) throw ContractError("dqn_update: empty batch");
    const int b = static_cast<int>(batch.size());
    const int elems = q.input_elems();

    std::vector<float> states(static_cast<std::size_t>(b) * elems);
    std::vector<int> actions(static_cast<std::size_t>(b));
    std::vector<float> targets(static_cast<std::size_t>(b));
    for (int i = 0; i < b; ++i) {
        const Transition& t = *batch[static_cast<std::size_t>(i)];
        auto st = t.state.to_tensor();
        std::copy(st->data.begin(), st->data.end(), states.begin() + static_cast<std::size_t>(i) * elems);
        actions[static_cast<std::size_t>(i)] = static_cast<int>(t.action);
        targets[static_cast<std::size_t>(i)] = static_cast<float>(compute_target(t, target_net, gamma));
    }

    auto x = make_tensor<float>({b, elems}, std::move(states));
    auto y = make_tensor<float>({b}, std::move(targets));
    auto q_all = q.forward(x);
    auto q_sa = gather_cols(q_all, actions);
    auto diff = sub(q_sa, y);
    auto loss = mean(mul(diff, diff));
    backward(loss);
    sgd_step(q.params(), static_cast<float>(alpha));
    return loss->item();
}

void sync_target(QNetwork<float>& q, QNetwork<float>& target) {
    copy_params(q, target);
}

void FusionConfig::validate() const {
    if (!(alpha > 0.0)) throw ConfigError("alpha must be positive");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in [0,1)");
    if (!(eta > 0.0)) throw ConfigError("eta must be positive");
    if (!(phi >= 0.0)) throw ConfigError("phi must be >= 0");
    if (!(delta > 0.0 && delta <= 0.5)) throw ConfigError("delta must lie in (0, 0.5]");
    if (t_max < 1) throw ConfigError("t_max must be positive");
    if (replay_capacity == 0) throw ConfigError("replay_capacity must be positive");
    if (batch < 1) throw ConfigError("batch must be positive");
    if (sync_c < 1) throw ConfigError("sync_c must be positive");
    if (replay_warmup == 0) throw ConfigError("replay_warmup must be positive");
    if (!(epsilon_start >= 0.0 && epsilon_start <= 1.0)) throw ConfigError("epsilon_start must lie in [0,1]");
    if (!(epsilon_end >= 0.0 && epsilon_end <= epsilon_start)) {
        throw ConfigError("epsilon_end must lie in [0, epsilon_start]");
    }
    if (!(anneal_fraction >= 0.0 && anneal_fraction <= 1.0)) throw ConfigError("anneal_fraction must lie in [0,1]");
    if (episodes < 1) throw ConfigError("episodes must be positive");
    if (state_size < 8 || state_size % 8 != 0) throw ConfigError("state_size must be a positive multiple of 8");
    if (q_hidden < 1) throw ConfigError("q_hidden must be positive");
}

EpisodeRecord run_episode_on_basis(const std::shared_ptr<const StateBasis>& basis,
                                   const std::vector<const Image*>& coarse_fullres, const Image* gt_fullres,
                                   QNetwork<float>& q, QNetwork<float>& target, ReplayMemory& memory,
                                   const FusionConfig& cfg, EpisodeMode mode, std::mt19937_64& rng,
                                   double epsilon, EpisodeStats* stats) {
    const bool training = mode == EpisodeMode::Train;
    if (training && basis->gt.h == 0) throw ConfigError("run_episode: training requires ground truth");
    (void)gt_fullres;

    EpisodeRecord rec;
    WeightVector w = WeightVector::uniform(2);
    rec.weights.push_back(w);
    FusionState state{basis, w};
    double mse_prev = training ? mse_images(state.fused(), basis->gt) : 0.0;

    for (int t = 1; t <= cfg.t_max; ++t) {
        const Action a = select_action(q, state, training ? epsilon : 0.0, rng);
        rec.steps = t;
        if (a == Action::Terminate) {
            rec.terminated = true;
            if (training) {
                const double r = terminate_reward(mse_prev, cfg.phi, cfg.eta);
                rec.rewards.push_back(r);
                memory.push(Transition{state, a, r, state, true});
            }
        } else {
            const WeightVector w_next = apply_action(w, a, cfg.delta);
            FusionState next{basis, w_next};
            if (training) {
                const double mse_curr = mse_images(next.fused(), basis->gt);
                const double r = step_reward(mse_prev, mse_curr);
                rec.rewards.push_back(r);
                // hitting the step cap ends the episode; the transition is
                // stored terminal so its target is just the reward
                const bool capped = t == cfg.t_max;
                memory.push(Transition{state, a, r, next, capped});
                mse_prev = mse_curr;
            }
            w = w_next;
            state = next;
            rec.weights.push_back(w);
        }

        if (training && memory.size() >= cfg.replay_warmup) {
            auto batch = memory.sample(static_cast<std::size_t>(cfg.batch), rng);
            dqn_update(q, batch, target, cfg.gamma, cfg.alpha);
            if (stats) {
                ++stats->updates;
                if (stats->updates % static_cast<std::size_t>(cfg.sync_c) == 0) sync_target(q, target);
            }
        }
        if (rec.terminated) break;
    }

    rec.final_fused = fuse_maps(coarse_fullres, w);
    rec.final_mse = training ? mse_images(state.fused(), basis->gt) : std::numeric_limits<double>::quiet_NaN();
    return rec;
}

EpisodeRecord run_episode(const SaliencySample& sample, GeneratorNet<float>& gen1,
                          GeneratorNet<float>& gen2, QNetwork<float>& q, QNetwork<float>& target,
                          ReplayMemory& memory, const FusionConfig& cfg, EpisodeMode mode,
                          std::mt19937_64& rng, double epsilon, EpisodeStats* stats) {
    const Image c1 = coarse_inference(gen1, sample.mod[0]);
    const Image c2 = coarse_inference(gen2, sample.mod[1]);
    auto basis = std::make_shared<StateBasis>();
    basis->s1 = resize_bilinear(c1, cfg.state_size, cfg.state_size);
    basis->s2 = resize_bilinear(c2, cfg.state_size, cfg.state_size);
    if (mode == EpisodeMode::Train) {
        if (sample.gt.h == 0) throw ConfigError("run_episode: training requires ground truth");
        basis->gt = resize_bilinear(sample.gt, cfg.state_size, cfg.state_size);
    }
    return run_episode_on_basis(basis, {&c1, &c2}, &sample.gt, q, target, memory, cfg, mode, rng, epsilon,
                                stats);
}

std::uint64_t fusion_q_seed(std::uint64_t seed) { return derive_seed(seed, 0x400); }

FusionTrainResult train_fusion(const std::vector<SaliencySample>& dataset, GeneratorNet<float>& gen1,
                               GeneratorNet<float>& gen2, const FusionConfig& cfg) {
    cfg.validate();
    if (dataset.empty()) throw ConfigError("train_fusion: empty dataset");

    FusionTrainResult result;
    result.q = std::make_unique<QNetwork<float>>(fusion_q_seed(cfg.seed), cfg.state_size, cfg.q_hidden);
    QNetwork<float> target(fusion_q_seed(cfg.seed), cfg.state_size, cfg.q_hidden);
    sync_target(*result.q, target);

    // coarse maps are fixed during stage II; compute each sample's basis once
    std::vector<std::shared_ptr<const StateBasis>> bases;
    std::vector<std::array<Image, 2>> coarse;
    bases.reserve(dataset.size());
    coarse.reserve(dataset.size());
    for (const auto& s : dataset) {
        if (s.gt.h == 0) throw ConfigError("train_fusion: dataset lacks ground truth");
        auto basis = std::make_shared<StateBasis>();
        std::array<Image, 2> c{coarse_inference(gen1, s.mod[0]), coarse_inference(gen2, s.mod[1])};
        basis->s1 = resize_bilinear(c[0], cfg.state_size, cfg.state_size);
        basis->s2 = resize_bilinear(c[1], cfg.state_size, cfg.state_size);
        basis->gt = resize_bilinear(s.gt, cfg.state_size, cfg.state_size);
        bases.push_back(std::move(basis));
        coarse.push_back(std::move(c));
    }

    ReplayMemory memory(cfg.replay_capacity);
    EpisodeStats stats;
    std::mt19937_64 rng(derive_seed(cfg.seed, 0x500));
    const double anneal_span = std::max(1.0, cfg.anneal_fraction * cfg.episodes);

    for (int e = 0; e < cfg.episodes; ++e) {
        const double frac = std::min(1.0, e / anneal_span);
        const double epsilon = cfg.epsilon_start + (cfg.epsilon_end - cfg.epsilon_start) * frac;
        const std::size_t idx = static_cast<std::size_t>(e) % dataset.size();
        auto rec = run_episode_on_basis(bases[idx], {&coarse[idx][0], &coarse[idx][1]}, &dataset[idx].gt,
                                        *result.q, target, memory, cfg, EpisodeMode::Train, rng, epsilon,
                                        &stats);
        double total_reward = 0.0;
        for (double r : rec.rewards) total_reward += r;
        result.log.push_back({e, epsilon, rec.steps, total_reward, rec.final_mse,
                              rec.weights.back().w1()});
        if (!std::isfinite(rec.final_mse)) {
            throw ContractError("train_fusion: non-finite episode MSE at episode " + std::to_string(e));
        }
    }
    return result;
}

InferenceResult infer_weights(const SaliencySample& sample, GeneratorNet<float>& gen1,
                              GeneratorNet<float>& gen2, QNetwork<float>& q, const FusionConfig& cfg) {
    // eval never updates anything; the memory and target net are inert
    ReplayMemory memory(1);
    QNetwork<float> target(fusion_q_seed(cfg.seed), cfg.state_size, cfg.q_hidden);
    std::mt19937_64 rng(0);
    auto rec = run_episode(sample, gen1, gen2, q, target, memory, cfg, EpisodeMode::Eval, rng, 0.0, nullptr);
    return InferenceResult{rec.weights.back(), std::move(rec.final_fused), rec.steps};
}

}  // namespace qfuse
