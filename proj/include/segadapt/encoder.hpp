#pragma once

#include <functional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "segadapt/common.hpp"

namespace segadapt {

struct EncoderConfig {
    int64_t input_size = 64;
    int64_t patch_size = 8;
    int64_t embed_dim = 96;
    int64_t num_blocks = 4;
    int64_t num_heads = 3;
    std::string pretrained_weights;

    int64_t grid() const { return input_size / patch_size; }
    void validate() const;
};

// Per-block feature taps, each (1, C, grid, grid), recorded post-injection.
struct LayerFeatures {
    std::vector<torch::Tensor> taps;
    torch::Tensor final;
};

// Given the layer index and the features entering that block (the
// post-injection output of the preceding block, or the patch embedding for
// block 0), returns the fused adapter feature to add to the block output.
using AdapterHook = std::function<torch::Tensor(int64_t layer, const torch::Tensor& block_input)>;

// Multi-head self/cross attention over (1, N, C) token sequences.
class AttentionImpl : public torch::nn::Module {
public:
    AttentionImpl(int64_t dim, int64_t heads);
    torch::Tensor forward(const torch::Tensor& q_in, const torch::Tensor& k_in,
                          const torch::Tensor& v_in);

private:
    int64_t heads_;
    torch::nn::Linear q_proj_{nullptr}, k_proj_{nullptr}, v_proj_{nullptr}, out_proj_{nullptr};
};
TORCH_MODULE(Attention);

class TransformerBlockImpl : public torch::nn::Module {
public:
    TransformerBlockImpl(int64_t dim, int64_t heads);
    torch::Tensor forward(const torch::Tensor& tokens);

private:
    torch::nn::LayerNorm norm1_{nullptr}, norm2_{nullptr};
    Attention attn_{nullptr};
    torch::nn::Linear fc1_{nullptr}, fc2_{nullptr};
};
TORCH_MODULE(TransformerBlock);

// Frozen ViT-style image encoder. Plain global attention; the full-scale
// profile omits window attention and relative position terms.
class ImageEncoderImpl : public torch::nn::Module {
public:
    explicit ImageEncoderImpl(EncoderConfig cfg);

    // Non-overlapping patch projection plus positional term, (1, C, grid, grid).
    torch::Tensor patch_embed(const torch::Tensor& image);
    // Projection only, before the positional term is added.
    torch::Tensor patch_project(const torch::Tensor& image);

    LayerFeatures encode(const torch::Tensor& image, const AdapterHook& hook = nullptr);
    LayerFeatures encode_embedded(const torch::Tensor& embedded,
                                  const AdapterHook& hook = nullptr);

    void freeze();
    bool frozen() const;
    std::uint64_t parameter_hash() const;

    const EncoderConfig& config() const { return cfg_; }

private:
    EncoderConfig cfg_;
    torch::nn::Conv2d proj_{nullptr};
    torch::Tensor pos_embed_;
    std::vector<TransformerBlock> blocks_;
};
TORCH_MODULE(ImageEncoder);

// Byte-level FNV-1a over parameters in registration order.
std::uint64_t parameters_hash(const std::vector<torch::Tensor>& params);

}  // namespace segadapt
