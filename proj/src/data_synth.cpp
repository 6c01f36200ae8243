#include "qfuse/data_synth.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <thread>

#include "qfuse/nets.hpp"

namespace fs = std::filesystem;

namespace qfuse {

void SynthConfig::validate() const {
    if (image_size < 16 || image_size % 8 != 0) {
        throw ConfigError("image_size must be >= 16 and divisible by 8, got " + std::to_string(image_size));
    }
    if (n_samples < 1) throw ConfigError("n_samples must be positive");
    if (quality) {
        for (double q : *quality) {
            if (q < 0.0 || q > 1.0) throw ConfigError("quality values must lie in [0,1]");
        }
    }
    if (blur_radius < 0) throw ConfigError("blur_radius must be >= 0");
    if (noise_sigma_max < 0.0) throw ConfigError("noise_sigma_max must be >= 0");
}

namespace {

struct Shape {
    bool ellipse;
    double cx, cy, rx, ry;  // fractions of the image extent
};

bool inside(const Shape& s, double fx, double fy) {
    const double dx = fx - s.cx, dy = fy - s.cy;
    if (s.ellipse) return (dx * dx) / (s.rx * s.rx) + (dy * dy) / (s.ry * s.ry) <= 1.0;
    return std::abs(dx) <= s.rx && std::abs(dy) <= s.ry;
}

/// Union of 1-3 random filled ellipses/rectangles with 10-40% coverage;
/// redraws until the coverage constraint holds.
Image draw_mask(int size, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> n_shapes(1, 3);
    std::uniform_real_distribution<double> center(0.2, 0.8);
    std::uniform_real_distribution<double> radius(0.1, 0.3);
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    for (int attempt = 0; attempt < 256; ++attempt) {
        const int k = n_shapes(rng);
        std::vector<Shape> shapes;
        for (int i = 0; i < k; ++i) {
            shapes.push_back({coin(rng) < 0.5, center(rng), center(rng), radius(rng), radius(rng)});
        }
        Image mask(size, size);
        long on = 0;
        for (int y = 0; y < size; ++y) {
            const double fy = (y + 0.5) / size;
            for (int x = 0; x < size; ++x) {
                const double fx = (x + 0.5) / size;
                for (const auto& s : shapes) {
                    if (inside(s, fx, fy)) {
                        mask.at(y, x) = 1.f;
                        ++on;
                        break;
                    }
                }
            }
        }
        const double coverage = static_cast<double>(on) / mask.size();
        if (coverage >= 0.10 && coverage <= 0.40) return mask;
    }
    throw ContractError("draw_mask: could not hit the 10-40% coverage window");
}

std::string sample_stem(int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "sample_%04d", index);
    return buf;
}

std::string format_quality(double q) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", q);
    return buf;
}

}  // namespace

GeneratedSample generate_sample(const SynthConfig& cfg, int index) {
    cfg.validate();
    if (index < 0 || index >= cfg.n_samples) throw ContractError("generate_sample: index out of range");
    const std::uint64_t stream = derive_seed(cfg.seed, static_cast<std::uint64_t>(index));
    std::mt19937_64 rng(stream);

    GeneratedSample out;
    out.stream_seed = stream;
    out.sample.gt = draw_mask(cfg.image_size, rng);
    if (cfg.quality) {
        out.quality = *cfg.quality;
    } else {
        std::uniform_real_distribution<double> u(0.0, 1.0);
        out.quality[0] = u(rng);
        out.quality[1] = u(rng);
    }
    const Image blurred = box_blur(out.sample.gt, cfg.blur_radius);
    std::normal_distribution<float> gauss(0.f, 1.f);
    for (int m = 0; m < 2; ++m) {
        const float sigma = static_cast<float>(cfg.noise_sigma_max * (1.0 - out.quality[m]));
        Image obs = blurred;
        for (auto& v : obs.v) {
            v = std::clamp(v + sigma * gauss(rng), 0.f, 1.f);
        }
        out.sample.mod[m] = std::move(obs);
    }
    return out;
}

void generate_dataset(const SynthConfig& cfg, const std::string& out_dir, int threads) {
    cfg.validate();
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec || !fs::is_directory(out_dir)) throw IoError("cannot create output directory '" + out_dir + "'");

    std::vector<std::array<double, 2>> qualities(static_cast<std::size_t>(cfg.n_samples));
    std::vector<std::uint64_t> seeds(static_cast<std::size_t>(cfg.n_samples));
    auto work = [&](int begin, int end) {
        for (int i = begin; i < end; ++i) {
            auto gen = generate_sample(cfg, i);
            const std::string stem = (fs::path(out_dir) / sample_stem(i)).string();
            write_pgm(stem + "_mod1.pgm", gen.sample.mod[0]);
            write_pgm(stem + "_mod2.pgm", gen.sample.mod[1]);
            write_pgm(stem + "_gt.pgm", gen.sample.gt);
            qualities[static_cast<std::size_t>(i)] = gen.quality;
            seeds[static_cast<std::size_t>(i)] = gen.stream_seed;
        }
    };

    threads = std::max(1, std::min(threads, cfg.n_samples));
    if (threads == 1) {
        work(0, cfg.n_samples);
    } else {
        std::vector<std::thread> pool;
        const int chunk = (cfg.n_samples + threads - 1) / threads;
        for (int t = 0; t < threads; ++t) {
            const int b = t * chunk, e = std::min(cfg.n_samples, b + chunk);
            if (b < e) pool.emplace_back(work, b, e);
        }
        for (auto& th : pool) th.join();
    }

    std::ofstream manifest(fs::path(out_dir) / "manifest.csv", std::ios::trunc);
    if (!manifest) throw IoError("cannot write manifest in '" + out_dir + "'");
    manifest << "id,quality1,quality2,seed\n";
    for (int i = 0; i < cfg.n_samples; ++i) {
        manifest << sample_stem(i).substr(7) << ',' << format_quality(qualities[static_cast<std::size_t>(i)][0])
                 << ',' << format_quality(qualities[static_cast<std::size_t>(i)][1]) << ','
                 << seeds[static_cast<std::size_t>(i)] << '\n';
    }
    if (!manifest.flush()) throw IoError("short write to manifest in '" + out_dir + "'");
}

SaliencySample load_sample(const std::string& mod1_path, const std::string& mod2_path,
                           const std::string& gt_path) {
    SaliencySample s;
    s.mod[0] = read_image(mod1_path);
    s.mod[1] = read_image(mod2_path);
    s.gt = read_image(gt_path);
    if (!s.mod[0].same_shape(s.mod[1]) || !s.mod[0].same_shape(s.gt)) {
        throw DimensionError("sample files disagree on size: " + mod1_path + " / " + mod2_path + " / " +
                             gt_path);
    }
    for (auto& v : s.gt.v) v = v >= 0.5f ? 1.f : 0.f;
    return s;
}

std::vector<SaliencySample> load_dataset(const std::string& dir) {
    const fs::path manifest_path = fs::path(dir) / "manifest.csv";
    std::ifstream manifest(manifest_path);
    if (!manifest) throw IoError("cannot open '" + manifest_path.string() + "'");
    std::string line;
    if (!std::getline(manifest, line)) throw ParseError(manifest_path.string() + ": empty manifest");
    std::vector<SaliencySample> out;
    while (std::getline(manifest, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw ParseError(manifest_path.string() + ": malformed row '" + line + "'");
        const std::string id = line.substr(0, comma);
        const std::string stem = (fs::path(dir) / ("sample_" + id)).string();
        out.push_back(load_sample(stem + "_mod1.pgm", stem + "_mod2.pgm", stem + "_gt.pgm"));
    }
    if (out.empty()) throw ConfigError("dataset at '" + dir + "' has no samples");
    return out;
}

}  // namespace qfuse
