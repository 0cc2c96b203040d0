#pragma once

#include <torch/torch.h>

#include "segadapt/common.hpp"
#include "segadapt/encoder.hpp"

namespace segadapt {

struct HfaConfig {
    double tau = 0.25;       // side fraction of the suppressed low-frequency square
    int64_t hidden_dim = 0;  // 0 = embed_dim / 4
    void validate() const;
};

// Per-channel frequency-domain mask: forward FFT, center shift, zero a
// centered square of side ceil(tau * min(H, W)), inverse shift, inverse FFT,
// real part. Removes DC and the low-frequency band.
torch::Tensor extract_hfc(const torch::Tensor& image, double tau);

// Turns the high-frequency residue of an image into one feature map shaped
// like an encoder tap, shared across all encoder layers: dedicated patch
// embedding of the masked image, sum with the original image embedding, and
// a two-layer position-wise MLP.
class HighFreqAdapterImpl : public torch::nn::Module {
public:
    HighFreqAdapterImpl(const EncoderConfig& enc, HfaConfig cfg);

    torch::Tensor embed(const torch::Tensor& hf_image);  // trainable patch projection
    torch::Tensor mix(const torch::Tensor& hf_embedding, const torch::Tensor& image_embedding);
    torch::Tensor forward(const torch::Tensor& image, const torch::Tensor& image_embedding);

    const HfaConfig& config() const { return cfg_; }

private:
    HfaConfig cfg_;
    int64_t input_size_, grid_, dim_;
    torch::nn::Conv2d proj_{nullptr};
    torch::nn::Linear fc1_{nullptr}, fc2_{nullptr};
};
TORCH_MODULE(HighFreqAdapter);

}  // namespace segadapt
