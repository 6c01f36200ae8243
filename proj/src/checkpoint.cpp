#include "qfuse/checkpoint.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace qfuse {

namespace {

void write_f32(const std::string& path, const std::vector<Parameter<float>*>& params, bool accumulators) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    for (const auto* p : params) {
        const float* src = accumulators ? p->accumulator.data() : p->value->data.data();
        out.write(reinterpret_cast<const char*>(src),
                  static_cast<std::streamsize>(p->value->data.size() * sizeof(float)));
    }
    if (!out) throw IoError("short write to '" + path + "'");
}

void read_f32(const std::string& path, const std::vector<Parameter<float>*>& params, bool accumulators) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    for (auto* p : params) {
        float* dst = accumulators ? p->accumulator.data() : p->value->data.data();
        in.read(reinterpret_cast<char*>(dst),
                static_cast<std::streamsize>(p->value->data.size() * sizeof(float)));
        if (!in) throw ParseError(path + ": truncated (while reading '" + p->name + "')");
    }
    char extra;
    if (in.read(&extra, 1)) throw ParseError(path + ": trailing bytes beyond manifest");
}

}  // namespace

void save_checkpoint(const std::string& dir, const std::vector<Parameter<float>*>& params) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw IoError("cannot create checkpoint directory '" + dir + "'");

    json manifest = json::array();
    for (const auto* p : params) {
        manifest.push_back({{"name", p->name}, {"shape", p->value->shape}, {"dtype", "f32"}});
    }
    std::ofstream mf(fs::path(dir) / "manifest.json", std::ios::trunc);
    if (!mf) throw IoError("cannot write manifest in '" + dir + "'");
    mf << manifest.dump(2) << '\n';
    if (!mf.flush()) throw IoError("short write to manifest in '" + dir + "'");

    write_f32((fs::path(dir) / "params.bin").string(), params, false);
    write_f32((fs::path(dir) / "optimizer.bin").string(), params, true);
}

void load_checkpoint(const std::string& dir, const std::vector<Parameter<float>*>& params) {
    const std::string mpath = (fs::path(dir) / "manifest.json").string();
    std::ifstream mf(mpath);
    if (!mf) throw IoError("cannot open '" + mpath + "'");
    json manifest;
    try {
        mf >> manifest;
    } catch (const json::exception& e) {
        throw ParseError(mpath + ": " + e.what());
    }
    if (!manifest.is_array() || manifest.size() != params.size()) {
        throw ParseError(mpath + ": expected " + std::to_string(params.size()) + " entries, got " +
                         std::to_string(manifest.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& e = manifest[i];
        if (e.value("name", "") != params[i]->name) {
            throw ParseError(mpath + ": entry " + std::to_string(i) + " is '" + e.value("name", "") +
                             "', expected '" + params[i]->name + "'");
        }
        if (e.value("dtype", "") != "f32") throw ParseError(mpath + ": unsupported dtype for '" + params[i]->name + "'");
        const auto shape = e.value("shape", std::vector<int>{});
        if (shape != params[i]->value->shape) {
            throw ParseError(mpath + ": shape mismatch for '" + params[i]->name + "'");
        }
    }
    read_f32((fs::path(dir) / "params.bin").string(), params, false);
    read_f32((fs::path(dir) / "optimizer.bin").string(), params, true);
}

}  // namespace qfuse
