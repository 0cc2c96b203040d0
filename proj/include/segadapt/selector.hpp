#pragma once

#include <utility>

#include <torch/torch.h>

#include "segadapt/common.hpp"

namespace segadapt {

// Per-layer gate over the two adapter streams. The decision layer is
// zero-initialized so both streams start at weight 1/2; the bias pair starts
// at (0, 1), tilting the fusion toward the multi-scale stream.
class FeatureSelectorImpl : public torch::nn::Module {
public:
    explicit FeatureSelectorImpl(int64_t channels);

    // Softmax over two decision logits from the globally pooled tap.
    std::pair<torch::Tensor, torch::Tensor> select_weights(const torch::Tensor& layer_feature);

    // fused = (w1 * hf + b1) + (w2 * ms + b2)
    torch::Tensor fuse(const torch::Tensor& hf_feature, const torch::Tensor& ms_feature,
                       const std::pair<torch::Tensor, torch::Tensor>& weights) const;

    torch::Tensor forward(const torch::Tensor& layer_feature, const torch::Tensor& hf_feature,
                          const torch::Tensor& ms_feature);

    // Pins the bias pair at (0, 0) and stops its gradient (bias ablation).
    void freeze_bias_at_zero();

    torch::Tensor bias1() const { return b1_; }
    torch::Tensor bias2() const { return b2_; }

private:
    torch::nn::Linear decision_{nullptr};
    torch::Tensor b1_, b2_;
};
TORCH_MODULE(FeatureSelector);

}  // namespace segadapt
