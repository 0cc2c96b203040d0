#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "segadapt/decoder.hpp"
#include "segadapt/encoder.hpp"
#include "segadapt/hf_adapter.hpp"
#include "segadapt/ms_adapter.hpp"
#include "segadapt/prompts.hpp"
#include "segadapt/selector.hpp"

namespace segadapt {

// Which adapter streams are active and how they are combined before the
// per-layer injection. "sum" adds both streams with unit weight and no bias;
// "selector" routes them through the learned per-layer gate.
enum class AblationMode { none, hfa_only, msfa_only, sum, selector };

AblationMode ablation_from_label(const std::string& label);
std::string to_string(AblationMode mode);

struct ModelConfig {
    EncoderConfig encoder;
    HfaConfig hfa;
    MsfaConfig msfa;
    AblationMode mode = AblationMode::selector;
    bool selector_bias = true;    // false pins both selector biases at zero
    bool freeze_decoder = false;  // freeze decoder + prompt encoder too

    void validate() const;
};

// The full promptable segmentation model: a frozen ViT encoder with the two
// adapter streams injected after every block, a box prompt encoder, and a
// light two-way mask decoder. Only the adapters, the selectors, and (unless
// frozen) the decoder side carry gradients.
class SegModelImpl : public torch::nn::Module {
public:
    explicit SegModelImpl(ModelConfig cfg);

    // (1, 3, S, S) image + box prompt -> (1, 1, S, S) logits
    torch::Tensor forward(const torch::Tensor& image, const BBox& box);

    // Hard {0,1} mask (S, S) under no_grad.
    torch::Tensor predict_mask(const torch::Tensor& image, const BBox& box);

    // The fused adapter feature injected after block `layer`, given the
    // features entering that block and the shared high-frequency clue.
    torch::Tensor fused_feature(int64_t layer, const torch::Tensor& block_input,
                                const torch::Tensor& hf_feature);

    // Shared high-frequency clue for one image, (1, C, g, g).
    torch::Tensor hf_clue(const torch::Tensor& image);

    std::vector<torch::Tensor> trainable_parameters();
    std::vector<std::pair<std::string, torch::Tensor>> trainable_named_tensors();

    int64_t adapter_parameter_count() const;  // adapters + selectors only
    int64_t total_parameter_count() const;

    ImageEncoder& encoder() { return encoder_; }
    HighFreqAdapter& hfa() { return hfa_; }
    MultiScaleAdapter& msfa_at(int64_t layer);
    FeatureSelector& selector_at(int64_t layer);
    BoxPromptEncoder& prompt_encoder() { return prompt_; }
    MaskDecoder& decoder() { return decoder_; }

    const ModelConfig& config() const { return cfg_; }

private:
    torch::Tensor adapter_hook(int64_t layer, const torch::Tensor& block_input,
                               const torch::Tensor& hf_feature);

    ModelConfig cfg_;
    ImageEncoder encoder_{nullptr};
    HighFreqAdapter hfa_{nullptr};
    MultiScaleAdapter msfa_shared_{nullptr};
    std::vector<MultiScaleAdapter> msfa_vec_;  // per-layer variant
    std::vector<FeatureSelector> selector_vec_;
    BoxPromptEncoder prompt_{nullptr};
    MaskDecoder decoder_{nullptr};
};
TORCH_MODULE(SegModel);

}  // namespace segadapt
