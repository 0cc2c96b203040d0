#include "segadapt/selector.hpp"

namespace segadapt {

FeatureSelectorImpl::FeatureSelectorImpl(int64_t channels) {
    decision_ = register_module("decision", torch::nn::Linear(channels, 2));
    torch::nn::init::zeros_(decision_->weight);
    torch::nn::init::zeros_(decision_->bias);
    b1_ = register_parameter("b1", torch::zeros({}));
    b2_ = register_parameter("b2", torch::ones({}));
}

std::pair<torch::Tensor, torch::Tensor> FeatureSelectorImpl::select_weights(
    const torch::Tensor& layer_feature) {
    if (layer_feature.dim() != 4) throw ShapeMismatch("select_weights expects (1, C, g, g)");
    if (!torch::isfinite(layer_feature).all().item<bool>()) {
        throw NonFiniteInput("layer feature contains NaN or Inf");
    }
    auto pooled = layer_feature.mean({2, 3});        // (1, C)
    auto weights = torch::softmax(decision_(pooled), /*dim=*/1).squeeze(0);
    return {weights[0], weights[1]};
}

torch::Tensor FeatureSelectorImpl::fuse(const torch::Tensor& hf_feature,
                                        const torch::Tensor& ms_feature,
                                        const std::pair<torch::Tensor, torch::Tensor>& weights) const {
    if (hf_feature.sizes() != ms_feature.sizes()) {
        throw ShapeMismatch("adapter features disagree: " + c10::str(hf_feature.sizes()) +
                            " vs " + c10::str(ms_feature.sizes()));
    }
    return (weights.first * hf_feature + b1_) + (weights.second * ms_feature + b2_);
}

torch::Tensor FeatureSelectorImpl::forward(const torch::Tensor& layer_feature,
                                           const torch::Tensor& hf_feature,
                                           const torch::Tensor& ms_feature) {
    return fuse(hf_feature, ms_feature, select_weights(layer_feature));
}

void FeatureSelectorImpl::freeze_bias_at_zero() {
    torch::NoGradGuard guard;
    b1_.zero_();
    b2_.zero_();
    b1_.set_requires_grad(false);
    b2_.set_requires_grad(false);
}

}  // namespace segadapt
