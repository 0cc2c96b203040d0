#include "segadapt/dataset_io.hpp"

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <zlib.h>

namespace fs = std::filesystem;

namespace segadapt {

void write_png_gray(const std::string& path, const torch::Tensor& values) {
    if (values.dim() != 2) throw ShapeMismatch("png writer expects an (H, W) tensor");
    const auto u8 = values.clamp(0.0, 255.0).round().to(torch::kUInt8).contiguous();
    cv::Mat mat(static_cast<int>(u8.size(0)), static_cast<int>(u8.size(1)), CV_8UC1);
    std::memcpy(mat.data, u8.data_ptr<uint8_t>(), static_cast<size_t>(u8.numel()));
    if (!cv::imwrite(path, mat)) throw IoError("cannot write png: " + path);
}

torch::Tensor read_png_gray(const std::string& path) {
    const cv::Mat mat = cv::imread(path, cv::IMREAD_GRAYSCALE);
    if (mat.empty()) throw FileNotFound("cannot read image: " + path);
    auto out = torch::empty({mat.rows, mat.cols}, torch::kUInt8);
    std::memcpy(out.data_ptr<uint8_t>(), mat.data, static_cast<size_t>(mat.total()));
    return out.to(torch::kFloat32);
}

void save_corpus(const std::vector<SegSample>& samples, const std::string& dir,
                 const std::map<std::string, std::string>& meta) {
    fs::create_directories(fs::path(dir) / "images");
    fs::create_directories(fs::path(dir) / "masks");

    nlohmann::json entries = nlohmann::json::array();
    for (size_t i = 0; i < samples.size(); ++i) {
        const auto& s = samples[i];
        char stem[16];
        std::snprintf(stem, sizeof(stem), "%04zu.png", i);
        const auto image_rel = std::string("images/") + stem;
        const auto mask_rel = std::string("masks/") + stem;
        write_png_gray((fs::path(dir) / image_rel).string(), s.image.index({0, 0}));
        write_png_gray((fs::path(dir) / mask_rel).string(), s.mask * 255.0);

        nlohmann::json e = {{"image", image_rel},
                            {"mask", mask_rel},
                            {"dataset_id", s.meta.dataset_id},
                            {"volume_id", s.meta.volume_id},
                            {"slice_index", s.meta.slice_index}};
        if (s.meta.spacing_mm) e["spacing_mm"] = *s.meta.spacing_mm;
        entries.push_back(e);
    }
    nlohmann::json manifest = {{"format", "segadapt-corpus-v1"},
                               {"meta", meta},
                               {"samples", entries}};
    std::ofstream out((fs::path(dir) / "manifest.json").string(), std::ios::trunc);
    if (!out) throw IoError("cannot write corpus manifest under " + dir);
    out << manifest.dump(2) << '\n';
}

std::vector<SegSample> load_corpus(const std::string& dir) {
    const auto manifest_path = (fs::path(dir) / "manifest.json").string();
    std::ifstream in(manifest_path);
    if (!in) throw FileNotFound("cannot open corpus manifest: " + manifest_path);
    nlohmann::json manifest;
    try {
        in >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("bad corpus manifest: ") + e.what());
    }
    if (manifest.value("format", "") != "segadapt-corpus-v1") {
        throw IoError("unrecognized corpus format in " + manifest_path);
    }

    std::vector<SegSample> out;
    for (const auto& e : manifest.at("samples")) {
        SegSample s;
        const auto gray = read_png_gray((fs::path(dir) / e.at("image").get<std::string>()).string());
        const auto mask = read_png_gray((fs::path(dir) / e.at("mask").get<std::string>()).string());
        if (gray.sizes() != mask.sizes()) {
            throw ShapeMismatch("image and mask sizes disagree for " +
                                e.at("image").get<std::string>());
        }
        s.image = gray.unsqueeze(0).unsqueeze(0).repeat({1, 3, 1, 1});
        s.mask = (mask > 127.0).to(torch::kFloat32);
        s.native_mask = s.mask;
        s.meta.dataset_id = e.value("dataset_id", "corpus");
        s.meta.volume_id = e.at("volume_id").get<std::string>();
        s.meta.slice_index = e.value("slice_index", int64_t{0});
        if (e.contains("spacing_mm")) s.meta.spacing_mm = e.at("spacing_mm").get<double>();
        s.meta.native_h = gray.size(0);
        s.meta.native_w = gray.size(1);
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<SegSample> load_png_pairs(const std::string& root) {
    const auto images = fs::path(root) / "images";
    const auto masks = fs::path(root) / "masks";
    if (!fs::is_directory(images) || !fs::is_directory(masks)) {
        throw FileNotFound("expected images/ and masks/ under " + root);
    }
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(images)) {
        if (entry.is_regular_file()) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());

    std::vector<SegSample> out;
    for (const auto& file : files) {
        const auto mask_path = masks / file.filename();
        if (!fs::exists(mask_path)) {
            throw FileNotFound("no mask for image " + file.filename().string());
        }
        const auto gray = read_png_gray(file.string());
        const auto mask = read_png_gray(mask_path.string());
        if (gray.sizes() != mask.sizes()) {
            throw ShapeMismatch("image and mask sizes disagree for " + file.filename().string());
        }
        SegSample s;
        s.image = gray.unsqueeze(0).unsqueeze(0).repeat({1, 3, 1, 1});
        s.mask = (mask > 127.0).to(torch::kFloat32);
        s.native_mask = s.mask;
        s.meta.dataset_id = "png";
        s.meta.volume_id = file.stem().string();
        s.meta.slice_index = 0;
        s.meta.native_h = gray.size(0);
        s.meta.native_w = gray.size(1);
        out.push_back(std::move(s));
    }
    return out;
}

namespace {

std::vector<unsigned char> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FileNotFound("cannot open " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<unsigned char> gunzip(const std::vector<unsigned char>& raw) {
    z_stream zs{};
    if (inflateInit2(&zs, 15 + 16) != Z_OK) throw IoError("zlib init failed");
    zs.next_in = const_cast<unsigned char*>(raw.data());
    zs.avail_in = static_cast<uInt>(raw.size());

    std::vector<unsigned char> out;
    std::vector<unsigned char> buf(1 << 18);
    int rc = Z_OK;
    while (rc != Z_STREAM_END) {
        zs.next_out = buf.data();
        zs.avail_out = static_cast<uInt>(buf.size());
        rc = inflate(&zs, Z_NO_FLUSH);
        if (rc != Z_OK && rc != Z_STREAM_END) {
            inflateEnd(&zs);
            throw IoError("corrupt gzip stream (zlib rc " + std::to_string(rc) + ")");
        }
        out.insert(out.end(), buf.data(), buf.data() + (buf.size() - zs.avail_out));
    }
    inflateEnd(&zs);
    return out;
}

template <typename T>
T read_le(const unsigned char* p, bool swap) {
    T v;
    std::memcpy(&v, p, sizeof(T));
    if (swap) {
        auto* bytes = reinterpret_cast<unsigned char*>(&v);
        std::reverse(bytes, bytes + sizeof(T));
    }
    return v;
}

template <typename T>
torch::Tensor decode_voxels(const unsigned char* p, int64_t n, bool swap) {
    auto out = torch::empty({n}, torch::kFloat32);
    auto* dst = out.data_ptr<float>();
    for (int64_t i = 0; i < n; ++i) {
        dst[i] = static_cast<float>(read_le<T>(p + i * static_cast<int64_t>(sizeof(T)), swap));
    }
    return out;
}

}  // namespace

NiftiVolume read_nifti(const std::string& path) {
    auto bytes = read_file_bytes(path);
    if (bytes.size() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b) bytes = gunzip(bytes);
    if (bytes.size() < 352) throw IoError("file too short for a NIfTI-1 header: " + path);

    const auto* p = bytes.data();
    bool swap = false;
    auto sizeof_hdr = read_le<int32_t>(p, false);
    if (sizeof_hdr != 348) {
        swap = true;
        sizeof_hdr = read_le<int32_t>(p, true);
        if (sizeof_hdr != 348) throw IoError("not a NIfTI-1 file: " + path);
    }
    if (std::memcmp(p + 344, "n+1", 3) != 0) {
        throw IoError("only single-file (n+1) NIfTI is supported: " + path);
    }

    int16_t dim[8];
    for (int i = 0; i < 8; ++i) dim[i] = read_le<int16_t>(p + 40 + 2 * i, swap);
    const auto ndim = dim[0];
    if (ndim < 2 || ndim > 7) throw IoError("bad NIfTI dimensionality: " + path);
    for (int i = 4; i <= ndim; ++i) {
        if (dim[i] > 1) throw IoError("only 3-D scalar volumes are supported: " + path);
    }
    const int64_t nx = dim[1], ny = dim[2], nz = ndim >= 3 ? std::max<int64_t>(dim[3], 1) : 1;

    const auto datatype = read_le<int16_t>(p + 70, swap);
    float pixdim[8];
    for (int i = 0; i < 8; ++i) pixdim[i] = read_le<float>(p + 76 + 4 * i, swap);
    const auto vox_offset = static_cast<int64_t>(read_le<float>(p + 108, swap));
    const auto scl_slope = read_le<float>(p + 112, swap);
    const auto scl_inter = read_le<float>(p + 116, swap);

    const int64_t n = nx * ny * nz;
    const auto need = [&](int64_t elem) {
        if (vox_offset < 348 ||
            static_cast<int64_t>(bytes.size()) < vox_offset + n * elem) {
            throw IoError("truncated NIfTI payload: " + path);
        }
    };
    const auto* vox = p + vox_offset;
    torch::Tensor flat;
    switch (datatype) {
        case 2:  // uint8
            need(1);
            flat = decode_voxels<uint8_t>(vox, n, swap);
            break;
        case 4:  // int16
            need(2);
            flat = decode_voxels<int16_t>(vox, n, swap);
            break;
        case 8:  // int32
            need(4);
            flat = decode_voxels<int32_t>(vox, n, swap);
            break;
        case 16:  // float32
            need(4);
            flat = decode_voxels<float>(vox, n, swap);
            break;
        case 64:  // float64
            need(8);
            flat = decode_voxels<double>(vox, n, swap);
            break;
        case 512:  // uint16
            need(2);
            flat = decode_voxels<uint16_t>(vox, n, swap);
            break;
        default:
            throw IoError("unsupported NIfTI datatype " + std::to_string(datatype) + ": " + path);
    }
    if (scl_slope != 0.0f && !(scl_slope == 1.0f && scl_inter == 0.0f)) {
        flat = flat * scl_slope + scl_inter;
    }

    NiftiVolume v;
    // x varies fastest on disk, so the flat buffer reshapes to (z, y, x)
    v.data = flat.reshape({nz, ny, nx});
    if (pixdim[1] > 0.0f && pixdim[2] > 0.0f) {
        v.spacing_mm = (static_cast<double>(pixdim[1]) + static_cast<double>(pixdim[2])) / 2.0;
    }
    return v;
}

std::vector<SegSample> load_nifti_dataset(const std::string& root, int64_t window) {
    const auto images = fs::path(root) / "images";
    const auto labels = fs::path(root) / "labels";
    if (!fs::is_directory(images) || !fs::is_directory(labels)) {
        throw FileNotFound("expected images/ and labels/ under " + root);
    }
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(images)) {
        if (entry.is_regular_file()) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());

    std::vector<SegSample> out;
    for (const auto& file : files) {
        const auto label_path = labels / file.filename();
        if (!fs::exists(label_path)) {
            throw FileNotFound("no label volume for " + file.filename().string());
        }
        const auto vol = read_nifti(file.string());
        const auto lbl = read_nifti(label_path.string());
        if (vol.data.sizes() != lbl.data.sizes()) {
            throw ShapeMismatch("volume and label shapes disagree for " +
                                file.filename().string());
        }
        auto scaled = intensity_scale(vol.data);
        scaled = normalize_nonzero(scaled);
        auto stem = file.filename().string();
        if (const auto dot = stem.find('.'); dot != std::string::npos) stem.erase(dot);
        auto tiles = slice_volume(scaled, lbl.data, window, "nifti", stem, vol.spacing_mm);
        for (auto& t : tiles) out.push_back(std::move(t));
    }
    return out;
}

}  // namespace segadapt
