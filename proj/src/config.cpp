#include "qfuse/config.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

using nlohmann::json;

namespace qfuse {

namespace {

double need_number(const json& v, const std::string& key) {
    if (!v.is_number()) throw ConfigError("config key '" + key + "' must be a number");
    return v.get<double>();
}

int need_int(const json& v, const std::string& key) {
    if (!v.is_number_integer()) throw ConfigError("config key '" + key + "' must be an integer");
    return v.get<int>();
}

void apply_key(RunConfig& cfg, const std::string& key, const json& v) {
    if (key == "lambda_adv") cfg.lambda_adv = need_number(v, key);
    else if (key == "adagrad_lr") cfg.adagrad_lr = need_number(v, key);
    else if (key == "weight_decay") cfg.weight_decay = need_number(v, key);
    else if (key == "gan_batch") cfg.gan_batch = need_int(v, key);
    else if (key == "stage1_iterations") cfg.stage1_iterations = need_int(v, key);
    else if (key == "alpha") cfg.alpha = need_number(v, key);
    else if (key == "gamma") cfg.gamma = need_number(v, key);
    else if (key == "eta") cfg.eta = need_number(v, key);
    else if (key == "phi") cfg.phi = need_number(v, key);
    else if (key == "delta") cfg.delta = need_number(v, key);
    else if (key == "t_max") cfg.t_max = need_int(v, key);
    else if (key == "replay_capacity") cfg.replay_capacity = need_int(v, key);
    else if (key == "q_batch") cfg.q_batch = need_int(v, key);
    else if (key == "sync_c") cfg.sync_c = need_int(v, key);
    else if (key == "replay_warmup") cfg.replay_warmup = need_int(v, key);
    else if (key == "epsilon_start") cfg.epsilon_start = need_number(v, key);
    else if (key == "epsilon_end") cfg.epsilon_end = need_number(v, key);
    else if (key == "anneal_fraction") cfg.anneal_fraction = need_number(v, key);
    else if (key == "episodes") cfg.episodes = need_int(v, key);
    else if (key == "q_hidden") cfg.q_hidden = need_int(v, key);
    else if (key == "beta") cfg.beta = need_number(v, key);
    else if (key == "beta_squared") {
        if (!v.is_boolean()) throw ConfigError("config key 'beta_squared' must be a boolean");
        cfg.beta_squared = v.get<bool>();
    } else if (key == "image_size") cfg.image_size = need_int(v, key);
    else if (key == "state_size") cfg.state_size = need_int(v, key);
    else if (key == "n_samples") cfg.n_samples = need_int(v, key);
    else if (key == "quality") {
        if (v.is_string() && v.get<std::string>() == "random") {
            cfg.quality.reset();
        } else if (v.is_array() && v.size() == 2 && v[0].is_number() && v[1].is_number()) {
            cfg.quality = {{v[0].get<double>(), v[1].get<double>()}};
        } else {
            throw ConfigError("config key 'quality' must be \"random\" or [q1, q2]");
        }
    } else if (key == "blur_radius") cfg.blur_radius = need_int(v, key);
    else if (key == "noise_sigma_max") cfg.noise_sigma_max = need_number(v, key);
    else if (key == "seed") {
        if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
            throw ConfigError("config key 'seed' must be a non-negative integer");
        }
        cfg.seed = v.get<std::uint64_t>();
    } else {
        throw ConfigError("unknown config key '" + key + "'");
    }
}

void check(bool ok, const char* what) {
    if (!ok) throw ConfigError(what);
}

}  // namespace

void RunConfig::validate() const {
    check(lambda_adv >= 0.0, "lambda_adv must be >= 0");
    check(adagrad_lr > 0.0, "adagrad_lr must be positive");
    check(weight_decay >= 0.0, "weight_decay must be >= 0");
    check(gan_batch >= 1, "gan_batch must be positive");
    check(stage1_iterations >= 1, "stage1_iterations must be positive");
    check(beta > 0.0, "beta must be positive");
    synth_config().validate();
    fusion_config().validate();
    check(state_size >= 8 && state_size % 8 == 0, "state_size must be a positive multiple of 8");
}

SynthConfig RunConfig::synth_config() const {
    SynthConfig s;
    s.image_size = image_size;
    s.n_samples = n_samples;
    s.quality = quality;
    s.blur_radius = blur_radius;
    s.noise_sigma_max = noise_sigma_max;
    s.seed = seed;
    return s;
}

Stage1Config RunConfig::stage1_config() const {
    Stage1Config s;
    s.lambda_adv = static_cast<float>(lambda_adv);
    s.lr = static_cast<float>(adagrad_lr);
    s.weight_decay = static_cast<float>(weight_decay);
    s.batch = gan_batch;
    s.iterations = stage1_iterations;
    s.seed = seed;
    s.state_size = state_size;
    return s;
}

FusionConfig RunConfig::fusion_config() const {
    FusionConfig f;
    f.alpha = alpha;
    f.gamma = gamma;
    f.eta = eta;
    f.phi = phi;
    f.delta = delta;
    f.t_max = t_max;
    f.replay_capacity = static_cast<std::size_t>(std::max(1, replay_capacity));
    f.batch = q_batch;
    f.sync_c = sync_c;
    f.replay_warmup = static_cast<std::size_t>(std::max(1, replay_warmup));
    f.epsilon_start = epsilon_start;
    f.epsilon_end = epsilon_end;
    f.anneal_fraction = anneal_fraction;
    f.episodes = episodes;
    f.state_size = state_size;
    f.q_hidden = q_hidden;
    f.seed = seed;
    return f;
}

RunConfig load_config(const std::optional<std::string>& path, const std::vector<std::string>& overrides,
                      std::optional<std::uint64_t> seed_override) {
    RunConfig cfg;
    if (path) {
        std::ifstream in(*path);
        if (!in) throw ConfigError("cannot open config file '" + *path + "'");
        json j;
        try {
            in >> j;
        } catch (const json::exception& e) {
            throw ConfigError("config file '" + *path + "': " + e.what());
        }
        if (!j.is_object()) throw ConfigError("config file '" + *path + "' must hold a JSON object");
        for (const auto& [key, value] : j.items()) apply_key(cfg, key, value);
    }
    for (const auto& kv : overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos || eq == 0) {
            throw ConfigError("override '" + kv + "' is not of the form key=value");
        }
        const std::string key = kv.substr(0, eq);
        const std::string raw = kv.substr(eq + 1);
        json value = json::parse(raw, nullptr, false);
        if (value.is_discarded()) value = raw;  // bare word -> string
        apply_key(cfg, key, value);
    }
    if (seed_override) cfg.seed = *seed_override;
    cfg.validate();
    return cfg;
}

}  // namespace qfuse
