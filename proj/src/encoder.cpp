#include "segadapt/encoder.hpp"

#include <cmath>

namespace segadapt {

void EncoderConfig::validate() const {
    if (input_size <= 0 || patch_size <= 0 || embed_dim <= 0 || num_blocks <= 0 ||
        num_heads <= 0) {
        throw InvalidConfig("encoder geometry must be positive");
    }
    if (input_size % patch_size != 0) {
        throw InvalidConfig("input_size " + std::to_string(input_size) +
                            " not divisible by patch_size " + std::to_string(patch_size));
    }
    if (embed_dim % num_heads != 0) {
        throw InvalidConfig("embed_dim " + std::to_string(embed_dim) +
                            " not divisible by num_heads " + std::to_string(num_heads));
    }
}

AttentionImpl::AttentionImpl(int64_t dim, int64_t heads) : heads_(heads) {
    q_proj_ = register_module("q_proj", torch::nn::Linear(dim, dim));
    k_proj_ = register_module("k_proj", torch::nn::Linear(dim, dim));
    v_proj_ = register_module("v_proj", torch::nn::Linear(dim, dim));
    out_proj_ = register_module("out_proj", torch::nn::Linear(dim, dim));
}

torch::Tensor AttentionImpl::forward(const torch::Tensor& q_in, const torch::Tensor& k_in,
                                     const torch::Tensor& v_in) {
    const int64_t b = q_in.size(0);
    const int64_t nq = q_in.size(1), nk = k_in.size(1);
    const int64_t dim = q_in.size(2);
    const int64_t hd = dim / heads_;

    auto split = [&](const torch::Tensor& t, int64_t n) {
        return t.view({b, n, heads_, hd}).permute({0, 2, 1, 3});  // (b, h, n, hd)
    };
    auto q = split(q_proj_(q_in), nq);
    auto k = split(k_proj_(k_in), nk);
    auto v = split(v_proj_(v_in), nk);

    auto attn = torch::matmul(q, k.transpose(-2, -1)) / std::sqrt(static_cast<double>(hd));
    attn = torch::softmax(attn, -1);
    auto out = torch::matmul(attn, v);  // (b, h, nq, hd)
    out = out.permute({0, 2, 1, 3}).reshape({b, nq, dim});
    return out_proj_(out);
}

TransformerBlockImpl::TransformerBlockImpl(int64_t dim, int64_t heads) {
    norm1_ = register_module("norm1", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
    norm2_ = register_module("norm2", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
    attn_ = register_module("attn", Attention(dim, heads));
    fc1_ = register_module("fc1", torch::nn::Linear(dim, dim * 4));
    fc2_ = register_module("fc2", torch::nn::Linear(dim * 4, dim));
}

torch::Tensor TransformerBlockImpl::forward(const torch::Tensor& tokens) {
    auto x = tokens;
    auto n1 = norm1_(x);
    x = x + attn_(n1, n1, n1);
    x = x + fc2_(torch::gelu(fc1_(norm2_(x))));
    return x;
}

ImageEncoderImpl::ImageEncoderImpl(EncoderConfig cfg) : cfg_(cfg) {
    cfg_.validate();
    proj_ = register_module(
        "proj", torch::nn::Conv2d(torch::nn::Conv2dOptions(3, cfg_.embed_dim, cfg_.patch_size)
                                      .stride(cfg_.patch_size)));
    pos_embed_ = register_parameter(
        "pos_embed", torch::zeros({1, cfg_.embed_dim, cfg_.grid(), cfg_.grid()}));
    torch::nn::init::normal_(pos_embed_, 0.0, 0.02);
    for (int64_t k = 0; k < cfg_.num_blocks; ++k) {
        blocks_.push_back(register_module("block" + std::to_string(k),
                                          TransformerBlock(cfg_.embed_dim, cfg_.num_heads)));
    }
}

torch::Tensor ImageEncoderImpl::patch_project(const torch::Tensor& image) {
    if (image.dim() != 4 || image.size(1) != 3 || image.size(2) != cfg_.input_size ||
        image.size(3) != cfg_.input_size) {
        throw ShapeMismatch("expected image (1, 3, " + std::to_string(cfg_.input_size) + ", " +
                            std::to_string(cfg_.input_size) + "), got " +
                            c10::str(image.sizes()));
    }
    return proj_(image);
}

torch::Tensor ImageEncoderImpl::patch_embed(const torch::Tensor& image) {
    return patch_project(image) + pos_embed_;
}

LayerFeatures ImageEncoderImpl::encode(const torch::Tensor& image, const AdapterHook& hook) {
    return encode_embedded(patch_embed(image), hook);
}

LayerFeatures ImageEncoderImpl::encode_embedded(const torch::Tensor& embedded,
                                                const AdapterHook& hook) {
    const int64_t g = cfg_.grid();
    const int64_t c = cfg_.embed_dim;
    if (embedded.dim() != 4 || embedded.size(1) != c || embedded.size(2) != g ||
        embedded.size(3) != g) {
        throw ShapeMismatch("embedded features must be (1, C, grid, grid)");
    }

    LayerFeatures out;
    auto x = embedded;
    for (int64_t k = 0; k < cfg_.num_blocks; ++k) {
        const auto block_input = x;
        auto tokens = x.flatten(2).transpose(1, 2);  // (1, N, C)
        tokens = blocks_[static_cast<std::size_t>(k)](tokens);
        auto y = tokens.transpose(1, 2).reshape({1, c, g, g});
        if (hook) {
            auto fused = hook(k, block_input);
            if (fused.defined()) {
                if (fused.sizes() != y.sizes()) {
                    throw ShapeMismatch("adapter feature for layer " + std::to_string(k) +
                                        " is " + c10::str(fused.sizes()) + ", expected " +
                                        c10::str(y.sizes()));
                }
                y = y + fused;
            }
        }
        x = y;
        out.taps.push_back(x);
    }
    out.final = out.taps.back();
    return out;
}

void ImageEncoderImpl::freeze() {
    for (auto& p : parameters()) p.set_requires_grad(false);
}

bool ImageEncoderImpl::frozen() const {
    for (const auto& p : parameters()) {
        if (p.requires_grad()) return false;
    }
    return true;
}

std::uint64_t ImageEncoderImpl::parameter_hash() const {
    return parameters_hash(parameters());
}

std::uint64_t parameters_hash(const std::vector<torch::Tensor>& params) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& p : params) {
        auto t = p.detach().to(torch::kFloat32).contiguous();
        h = fnv1a64(t.data_ptr<float>(), t.numel() * sizeof(float), h);
    }
    return h;
}

}  // namespace segadapt
