#pragma once

#include <torch/torch.h>

#include "segadapt/common.hpp"
#include "segadapt/encoder.hpp"
#include "segadapt/prompts.hpp"

namespace segadapt {

// Random-Fourier positional features over normalized [0,1]^2 coordinates.
// The gaussian projection is a fixed buffer drawn from a constant seed, so
// the same box always encodes to the same embedding.
class PositionalEncodingImpl : public torch::nn::Module {
public:
    PositionalEncodingImpl(int64_t dim, std::uint64_t seed = 20240901);

    // coords (..., 2) in [0, 1] -> (..., dim)
    torch::Tensor encode(const torch::Tensor& coords) const;
    // dense map over a g x g grid of cell centers -> (1, dim, g, g)
    torch::Tensor dense(int64_t grid) const;

private:
    torch::Tensor gauss_;
};
TORCH_MODULE(PositionalEncoding);

// Encodes a box prompt as two corner tokens: positional features of the
// normalized corner plus a learned corner-type vector.
class BoxPromptEncoderImpl : public torch::nn::Module {
public:
    BoxPromptEncoderImpl(int64_t dim, int64_t input_size);

    torch::Tensor forward(const BBox& box);  // (1, 2, C)
    torch::Tensor dense_pe(int64_t grid) const { return pe_->dense(grid); }

private:
    int64_t input_size_;
    PositionalEncoding pe_{nullptr};
    torch::Tensor corner_type_;  // (2, C) learned, one per corner
};
TORCH_MODULE(BoxPromptEncoder);

// One round of token<->image attention: token self-attention, token-to-image
// cross attention, token MLP, image-to-token cross attention.
class TwoWayBlockImpl : public torch::nn::Module {
public:
    TwoWayBlockImpl(int64_t dim, int64_t heads);
    std::pair<torch::Tensor, torch::Tensor> forward(torch::Tensor tokens, torch::Tensor image,
                                                    const torch::Tensor& token_pe,
                                                    const torch::Tensor& image_pe);

private:
    Attention self_attn_{nullptr}, cross_t2i_{nullptr}, cross_i2t_{nullptr};
    torch::nn::LayerNorm norm1_{nullptr}, norm2_{nullptr}, norm3_{nullptr}, norm4_{nullptr};
    torch::nn::Linear fc1_{nullptr}, fc2_{nullptr};
};
TORCH_MODULE(TwoWayBlock);

// channel-wise layer norm on (B, C, H, W)
class LayerNorm2dImpl : public torch::nn::Module {
public:
    explicit LayerNorm2dImpl(int64_t channels, double eps = 1e-6);
    torch::Tensor forward(const torch::Tensor& x);

private:
    torch::Tensor weight_, bias_;
    double eps_;
};
TORCH_MODULE(LayerNorm2d);

// Box-promptable mask decoder: a learned mask token rides along the prompt
// tokens through two two-way blocks, the image features are upscaled 4x by
// two transposed convolutions, and the logit map is the inner product of the
// mask-token head with the upscaled per-pixel features, bilinearly resized
// to the model input resolution.
class MaskDecoderImpl : public torch::nn::Module {
public:
    MaskDecoderImpl(int64_t dim, int64_t heads, int64_t input_size);

    torch::Tensor forward(const torch::Tensor& features, const torch::Tensor& prompt_tokens,
                          const torch::Tensor& image_pe);

private:
    int64_t input_size_;
    torch::Tensor mask_token_;  // (1, 1, C)
    TwoWayBlock block1_{nullptr}, block2_{nullptr};
    torch::nn::ConvTranspose2d up1_{nullptr}, up2_{nullptr};
    LayerNorm2d up_norm_{nullptr};
    torch::nn::Linear head_fc1_{nullptr}, head_fc2_{nullptr};
};
TORCH_MODULE(MaskDecoder);

torch::Tensor binarize(const torch::Tensor& logits, double threshold = 0.0);

}  // namespace segadapt
