#include "segadapt/checkpoint.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace segadapt {

namespace {

constexpr const char* kFormatTag = "segadapt-ckpt-v1";

nlohmann::json geometry_json(const EncoderConfig& g) {
    return {{"input_size", g.input_size},
            {"patch_size", g.patch_size},
            {"embed_dim", g.embed_dim},
            {"num_blocks", g.num_blocks},
            {"num_heads", g.num_heads}};
}

EncoderConfig geometry_from_json(const nlohmann::json& j) {
    EncoderConfig g;
    g.input_size = j.at("input_size").get<int64_t>();
    g.patch_size = j.at("patch_size").get<int64_t>();
    g.embed_dim = j.at("embed_dim").get<int64_t>();
    g.num_blocks = j.at("num_blocks").get<int64_t>();
    g.num_heads = j.at("num_heads").get<int64_t>();
    return g;
}

std::string shape_string(const std::vector<int64_t>& shape) {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ", ";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

nlohmann::json read_manifest(std::ifstream& in, const std::string& path) {
    std::uint64_t json_len = 0;
    in.read(reinterpret_cast<char*>(&json_len), sizeof(json_len));
    if (!in) throw IoError("truncated checkpoint header: " + path);
    std::string text(json_len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(json_len));
    if (!in) throw IoError("truncated checkpoint manifest: " + path);
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("bad checkpoint manifest: ") + e.what());
    }
    if (manifest.value("format", "") != kFormatTag) {
        throw IoError("unrecognized checkpoint format in " + path);
    }
    return manifest;
}

std::ifstream open_for_read(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FileNotFound("cannot open checkpoint: " + path);
    return in;
}

}  // namespace

void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, torch::Tensor>>& tensors,
                     const EncoderConfig& geometry,
                     const std::map<std::string, std::string>& meta) {
    nlohmann::json index = nlohmann::json::object();
    std::vector<torch::Tensor> payloads;
    payloads.reserve(tensors.size());
    std::uint64_t offset = 0;  // bytes into the payload section
    for (const auto& [name, tensor] : tensors) {
        auto flat = tensor.detach().to(torch::kCPU, torch::kFloat32).contiguous();
        index[name] = {{"shape", tensor.sizes().vec()}, {"offset", offset}};
        offset += static_cast<std::uint64_t>(flat.numel()) * sizeof(float);
        payloads.push_back(flat);
    }

    nlohmann::json manifest = {{"format", kFormatTag},
                               {"geometry", geometry_json(geometry)},
                               {"tensors", index},
                               {"meta", meta}};
    const std::string text = manifest.dump();

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint: " + path);
    const std::uint64_t json_len = text.size();
    out.write(reinterpret_cast<const char*>(&json_len), sizeof(json_len));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& flat : payloads) {
        out.write(reinterpret_cast<const char*>(flat.data_ptr<float>()),
                  static_cast<std::streamsize>(flat.numel() * sizeof(float)));
    }
    if (!out) throw IoError("short write on checkpoint: " + path);
}

LoadReport load_checkpoint(const std::string& path,
                           const std::vector<std::pair<std::string, torch::Tensor>>& targets,
                           const EncoderConfig* expect_geometry) {
    auto in = open_for_read(path);
    const auto manifest = read_manifest(in, path);
    const std::uint64_t payload_base = static_cast<std::uint64_t>(in.tellg());

    if (expect_geometry) {
        const auto stored = geometry_from_json(manifest.at("geometry"));
        if (stored.input_size != expect_geometry->input_size ||
            stored.patch_size != expect_geometry->patch_size ||
            stored.embed_dim != expect_geometry->embed_dim ||
            stored.num_blocks != expect_geometry->num_blocks ||
            stored.num_heads != expect_geometry->num_heads) {
            throw GeometryMismatch("checkpoint geometry (" + std::to_string(stored.input_size) + "/" +
                            std::to_string(stored.patch_size) + "/" +
                            std::to_string(stored.embed_dim) + "/" +
                            std::to_string(stored.num_blocks) +
                            ") does not match the model geometry");
        }
    }

    const auto& index = manifest.at("tensors");
    LoadReport report;
    torch::NoGradGuard guard;
    for (const auto& [name, target] : targets) {
        if (!index.contains(name)) {
            report.missing.push_back(name);
            continue;
        }
        const auto& entry = index.at(name);
        const auto shape = entry.at("shape").get<std::vector<int64_t>>();
        if (shape != target.sizes().vec()) {
            throw GeometryMismatch("tensor '" + name + "' stored as " + shape_string(shape) +
                            " but the model expects " + shape_string(target.sizes().vec()));
        }
        int64_t numel = 1;
        for (const auto d : shape) numel *= d;
        auto buffer = torch::empty({numel}, torch::kFloat32);
        in.seekg(static_cast<std::streamoff>(payload_base + entry.at("offset").get<std::uint64_t>()));
        in.read(reinterpret_cast<char*>(buffer.data_ptr<float>()),
                static_cast<std::streamsize>(numel * sizeof(float)));
        if (!in) throw IoError("truncated payload for tensor '" + name + "'");
        target.copy_(buffer.reshape(shape).to(target.dtype()));
        report.loaded.push_back(name);
    }
    for (const auto& item : index.items()) {
        const bool wanted = std::any_of(targets.begin(), targets.end(),
                                        [&](const auto& t) { return t.first == item.key(); });
        if (!wanted) report.unexpected.push_back(item.key());
    }
    return report;
}

std::map<std::string, std::string> checkpoint_meta(const std::string& path) {
    auto in = open_for_read(path);
    const auto manifest = read_manifest(in, path);
    return manifest.at("meta").get<std::map<std::string, std::string>>();
}

EncoderConfig checkpoint_geometry(const std::string& path) {
    auto in = open_for_read(path);
    const auto manifest = read_manifest(in, path);
    return geometry_from_json(manifest.at("geometry"));
}

}  // namespace segadapt
