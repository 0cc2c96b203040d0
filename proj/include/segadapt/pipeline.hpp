#pragma once

#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "segadapt/common.hpp"

namespace segadapt {

struct SampleMeta {
    std::string dataset_id;
    std::string volume_id;
    int64_t slice_index = 0;
    std::optional<double> spacing_mm;       // mm per pixel at native resolution
    int64_t native_h = 0, native_w = 0;
    double scale_factor = 1.0;              // model size / native size
    bool degenerate_normalization = false;  // sigma=0 fallback fired
    std::vector<std::string> stages;        // preprocessing applied, in order
};

// One training/evaluation unit: a 3-channel image tensor (1, 3, H, W), its
// binary mask (H, W) in the same frame, and provenance. `native_mask` keeps
// the pre-resize ground truth so metrics can run at native resolution.
struct SegSample {
    torch::Tensor image;        // float32 (1, 3, H, W)
    torch::Tensor mask;         // float32 (H, W), values in {0, 1}
    torch::Tensor native_mask;  // float32 (H0, W0); equals `mask` before resize
    SampleMeta meta;
};

struct ExemplarSet {
    std::vector<SegSample> train;
    std::vector<SegSample> eval;
    std::vector<std::string> train_groups;
    std::vector<std::string> eval_groups;
    int64_t n = 0;
    std::uint64_t seed = 0;
};

// The canonical preprocessing order. Each op stamps its stage tag into the
// sample metadata; applying a stage after a later one is a PipelineOrder error.
extern const std::vector<std::string> kPipelineStageOrder;
void stamp_stage(std::vector<std::string>& stages, const std::string& stage);

// Linear intensity map with clipping: [in_lo, in_hi] -> [out_lo, out_hi].
torch::Tensor intensity_scale(const torch::Tensor& x, double in_lo = -1000.0,
                              double in_hi = 2000.0, double out_lo = 0.0,
                              double out_hi = 255.0);

// Zero-mean/unit-std over non-zero entries only; zeros stay zero. When all
// non-zero values coincide (sigma = 0) the op falls back to mean subtraction
// and reports it through `degenerate`.
torch::Tensor normalize_nonzero(const torch::Tensor& x, bool* degenerate = nullptr);

// Axial slicing of a (D, H, W) volume with a non-overlapping square window;
// remainder tiles are zero-padded, tiles without label foreground dropped,
// single-channel tiles replicated to 3 channels.
std::vector<SegSample> slice_volume(const torch::Tensor& volume, const torch::Tensor& labels,
                                    int64_t window, const std::string& dataset_id = "",
                                    const std::string& volume_id = "",
                                    std::optional<double> spacing_mm = std::nullopt);

// Bilinear image resize + nearest-neighbor mask resize to a square target.
SegSample resize_to_model(const SegSample& sample, int64_t size);

// Uniform draw of n groups (volumes for 3-D data, images for 2-D data)
// without replacement, fully determined by the seed; the rest become eval.
ExemplarSet sample_exemplars(const std::vector<SegSample>& samples, int64_t n,
                             std::uint64_t seed);

// One generating ellipse of a synthetic blob.
struct BlobSpec {
    double cx, cy, a, b, theta;
    double q(double x, double y) const;  // quadratic form, <= 1 inside the support
};

// Seeded corpus of soft-edged elliptical blobs over textured noise. Masks are
// the analytic ellipse supports; foreground fraction enforced in [0.5%, 30%].
// `blob_specs`, when given, receives the generating ellipses per sample.
std::vector<SegSample> gen_synthetic(int64_t count, int64_t size, std::uint64_t seed,
                                     std::vector<std::vector<BlobSpec>>* blob_specs = nullptr);

// Leakage guard: no volume id may appear in both splits.
void check_no_leakage(const ExemplarSet& set);

}  // namespace segadapt
