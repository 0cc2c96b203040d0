#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "segadapt/pipeline.hpp"

namespace segadapt {

// 8-bit grayscale PNG round trip; values are clamped to [0, 255] and rounded
// on write.
void write_png_gray(const std::string& path, const torch::Tensor& values);
torch::Tensor read_png_gray(const std::string& path);  // (H, W) float32 in [0, 255]

// Persisted corpus layout: images/NNNN.png + masks/NNNN.png + manifest.json.
// Writing the same samples twice produces byte-identical trees.
void save_corpus(const std::vector<SegSample>& samples, const std::string& dir,
                 const std::map<std::string, std::string>& meta = {});
std::vector<SegSample> load_corpus(const std::string& dir);

// Generic 2-D pairs: <root>/images/*.png matched by filename under
// <root>/masks/. Each image is its own exemplar group.
std::vector<SegSample> load_png_pairs(const std::string& root);

struct NiftiVolume {
    torch::Tensor data;                // (D, H, W) float32
    std::optional<double> spacing_mm;  // in-plane voxel spacing when present
};

// NIfTI-1 single-file reader (.nii or .nii.gz), little- or big-endian
// headers, common scalar dtypes, scl_slope/scl_inter applied.
NiftiVolume read_nifti(const std::string& path);

// <root>/images/*.nii[.gz] with labels of the same name under
// <root>/labels/: CT-style intensity scaling, non-zero normalization, then
// foreground-bearing window tiles.
std::vector<SegSample> load_nifti_dataset(const std::string& root, int64_t window = 256);

}  // namespace segadapt
