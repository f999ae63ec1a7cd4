#include "trsd/checkpoint.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace trsd {

namespace {

void write_file(const std::string& path, const void* data, size_t bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw CheckpointIOError("cannot open for writing: " + path);
    }
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
    if (!out) {
        throw CheckpointIOError("short write: " + path);
    }
}

std::vector<char> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) {
        throw CheckpointIOError("cannot open for reading: " + path);
    }
    const std::streamsize size = in.tellg();
    in.seekg(0);
    std::vector<char> buf(static_cast<size_t>(size));
    in.read(buf.data(), size);
    if (!in) {
        throw CheckpointIOError("short read: " + path);
    }
    return buf;
}

}  // namespace

void save_checkpoint(const ModelState<float>& m, const std::string& prefix,
                     bool with_optimizer) {
    const ParamLayout layout(m.cfg);
    if (m.params.size() != layout.total) {
        throw CheckpointIOError("parameter buffer does not match config layout");
    }
    const std::filesystem::path p(prefix);
    if (p.has_parent_path()) {
        std::filesystem::create_directories(p.parent_path());
    }

    nlohmann::ordered_json manifest;
    manifest["format"] = "trsd-checkpoint-v1";
    manifest["config"] = {
        {"vocab_size", m.cfg.vocab_size},   {"context_length", m.cfg.context_length},
        {"n_layers", m.cfg.n_layers},       {"n_heads", m.cfg.n_heads},
        {"d_model", m.cfg.d_model},         {"d_ff", m.cfg.d_ff},
    };
    manifest["step"] = m.step;
    manifest["dtype"] = "float32-le";
    auto tensors = nlohmann::ordered_json::array();
    for (const TensorSpec& t : layout.tensors) {
        tensors.push_back({{"name", t.name},
                           {"shape", t.shape},
                           {"offset_bytes", t.offset * sizeof(float)},
                           {"numel", t.numel}});
    }
    manifest["tensors"] = tensors;
    manifest["blob"] = p.filename().string() + ".bin";
    if (with_optimizer) {
        manifest["optimizer_blob"] = p.filename().string() + ".opt.bin";
    }

    const std::string text = manifest.dump(2) + "\n";
    write_file(prefix + ".json", text.data(), text.size());
    write_file(prefix + ".bin", m.params.data(), m.params.size() * sizeof(float));
    if (with_optimizer) {
        std::vector<float> opt;
        opt.reserve(m.adam_m.size() + m.adam_v.size());
        opt.insert(opt.end(), m.adam_m.begin(), m.adam_m.end());
        opt.insert(opt.end(), m.adam_v.begin(), m.adam_v.end());
        write_file(prefix + ".opt.bin", opt.data(), opt.size() * sizeof(float));
    }
}

ModelState<float> load_checkpoint(const std::string& prefix) {
    const std::vector<char> text = read_file(prefix + ".json");
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(text.begin(), text.end());
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointIOError("bad manifest " + prefix + ".json: " + e.what());
    }
    if (manifest.value("format", "") != "trsd-checkpoint-v1") {
        throw CheckpointIOError("unknown checkpoint format in " + prefix + ".json");
    }
    ModelState<float> m;
    const auto& c = manifest.at("config");
    m.cfg.vocab_size = c.at("vocab_size").get<int>();
    m.cfg.context_length = c.at("context_length").get<int>();
    m.cfg.n_layers = c.at("n_layers").get<int>();
    m.cfg.n_heads = c.at("n_heads").get<int>();
    m.cfg.d_model = c.at("d_model").get<int>();
    m.cfg.d_ff = c.at("d_ff").get<int>();
    m.cfg.validate();
    m.step = manifest.at("step").get<int64_t>();

    const ParamLayout layout(m.cfg);
    const std::vector<char> blob = read_file(prefix + ".bin");
    if (blob.size() != layout.total * sizeof(float)) {
        throw CheckpointIOError("parameter blob size mismatch for " + prefix);
    }
    m.params.resize(layout.total);
    std::memcpy(m.params.data(), blob.data(), blob.size());

    m.adam_m.assign(layout.total, 0.0f);
    m.adam_v.assign(layout.total, 0.0f);
    if (manifest.contains("optimizer_blob")) {
        const std::vector<char> opt = read_file(prefix + ".opt.bin");
        if (opt.size() != 2 * layout.total * sizeof(float)) {
            throw CheckpointIOError("optimizer blob size mismatch for " + prefix);
        }
        std::memcpy(m.adam_m.data(), opt.data(), layout.total * sizeof(float));
        std::memcpy(m.adam_v.data(), opt.data() + layout.total * sizeof(float),
                    layout.total * sizeof(float));
    }
    return m;
}

bool checkpoint_exists(const std::string& prefix) {
    return std::filesystem::exists(prefix + ".json") &&
           std::filesystem::exists(prefix + ".bin");
}

uint64_t blob_hash(const std::string& bin_path) {
    const std::vector<char> data = read_file(bin_path);
    uint64_t h = 1469598103934665603ull;
    for (char c : data) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace trsd
