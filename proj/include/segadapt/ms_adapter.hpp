#pragma once

#include <array>
#include <vector>

#include <torch/torch.h>

#include "segadapt/common.hpp"
#include "segadapt/encoder.hpp"

namespace segadapt {

struct MsfaConfig {
    int64_t channel_reduction = 4;
    bool per_layer = false;  // independent parameters per encoder layer
    void validate() const;
};

constexpr std::array<int64_t, 4> kPyramidSizes = {1, 2, 4, 8};

// Adaptive average pooling with contiguous bins, edges at floor(i * g / out).
torch::Tensor adaptive_bin_pool(const torch::Tensor& feature, int64_t out_size);

// The four-level pooling pyramid {1x1, 2x2, 4x4, 8x8}; grid must be >= 8.
std::vector<torch::Tensor> pyramid_pool(const torch::Tensor& feature);

// Per-layer multi-scale feature: squeeze-excitation channel gate on the tap,
// pooling pyramid, bilinear resize of every level back to the source grid,
// sum, and a learnable 1x1 projection.
class MultiScaleAdapterImpl : public torch::nn::Module {
public:
    MultiScaleAdapterImpl(int64_t channels, MsfaConfig cfg);

    torch::Tensor channel_process(const torch::Tensor& feature);
    torch::Tensor fuse_pyramid(const std::vector<torch::Tensor>& levels, int64_t target);
    torch::Tensor forward(const torch::Tensor& feature);

    const MsfaConfig& config() const { return cfg_; }

private:
    MsfaConfig cfg_;
    torch::nn::Linear gate_fc1_{nullptr}, gate_fc2_{nullptr};
    torch::nn::Conv2d proj_{nullptr};
};
TORCH_MODULE(MultiScaleAdapter);

}  // namespace segadapt
