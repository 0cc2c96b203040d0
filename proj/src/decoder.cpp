#include "segadapt/decoder.hpp"

#include <cmath>

namespace segadapt {

PositionalEncodingImpl::PositionalEncodingImpl(int64_t dim, std::uint64_t seed) {
    if (dim % 2 != 0) throw InvalidConfig("positional encoding dim must be even");
    DetRng rng(seed);
    auto g = torch::empty({2, dim / 2}, torch::kFloat32);
    auto acc = g.accessor<float, 2>();
    for (int64_t i = 0; i < 2; ++i)
        for (int64_t j = 0; j < dim / 2; ++j) acc[i][j] = static_cast<float>(rng.normal());
    gauss_ = register_buffer("gauss", g);
}

torch::Tensor PositionalEncodingImpl::encode(const torch::Tensor& coords) const {
    auto centered = coords.to(gauss_.dtype()) * 2.0 - 1.0;
    auto proj = torch::matmul(centered, gauss_) * (2.0 * M_PI);
    return torch::cat({torch::sin(proj), torch::cos(proj)}, -1);
}

torch::Tensor PositionalEncodingImpl::dense(int64_t grid) const {
    auto idx = torch::arange(grid, gauss_.options());
    auto centers = (idx + 0.5) / static_cast<double>(grid);
    auto ys = centers.view({grid, 1}).expand({grid, grid});
    auto xs = centers.view({1, grid}).expand({grid, grid});
    auto coords = torch::stack({xs, ys}, -1);          // (g, g, 2)
    auto pe = encode(coords);                          // (g, g, dim)
    return pe.permute({2, 0, 1}).unsqueeze(0);         // (1, dim, g, g)
}

BoxPromptEncoderImpl::BoxPromptEncoderImpl(int64_t dim, int64_t input_size)
    : input_size_(input_size) {
    pe_ = register_module("pe", PositionalEncoding(dim));
    corner_type_ = register_parameter("corner_type", torch::zeros({2, dim}));
    torch::nn::init::normal_(corner_type_, 0.0, 1.0);
}

torch::Tensor BoxPromptEncoderImpl::forward(const BBox& box) {
    const auto s = static_cast<double>(input_size_);
    for (double v : {box.x0, box.y0, box.x1, box.y1}) {
        if (v < 0.0 || v > s) {
            throw OutOfFrame("box coordinate " + format_double(v) + " outside [0, " +
                             format_double(s) + "]");
        }
    }
    auto corners = torch::tensor({{box.x0 / s, box.y0 / s}, {box.x1 / s, box.y1 / s}},
                                 torch::kFloat32);
    auto tokens = pe_->encode(corners) + corner_type_;  // (2, C)
    return tokens.unsqueeze(0);
}

TwoWayBlockImpl::TwoWayBlockImpl(int64_t dim, int64_t heads) {
    self_attn_ = register_module("self_attn", Attention(dim, heads));
    cross_t2i_ = register_module("cross_t2i", Attention(dim, heads));
    cross_i2t_ = register_module("cross_i2t", Attention(dim, heads));
    norm1_ = register_module("norm1", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
    norm2_ = register_module("norm2", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
    norm3_ = register_module("norm3", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
    norm4_ = register_module("norm4", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
    fc1_ = register_module("fc1", torch::nn::Linear(dim, dim * 2));
    fc2_ = register_module("fc2", torch::nn::Linear(dim * 2, dim));
}

std::pair<torch::Tensor, torch::Tensor> TwoWayBlockImpl::forward(torch::Tensor tokens,
                                                                 torch::Tensor image,
                                                                 const torch::Tensor& token_pe,
                                                                 const torch::Tensor& image_pe) {
    auto q = tokens + token_pe;
    tokens = norm1_(tokens + self_attn_(q, q, tokens));

    q = tokens + token_pe;
    auto k = image + image_pe;
    tokens = norm2_(tokens + cross_t2i_(q, k, image));

    tokens = norm3_(tokens + fc2_(torch::gelu(fc1_(tokens))));

    q = image + image_pe;
    k = tokens + token_pe;
    image = norm4_(image + cross_i2t_(q, k, tokens));
    return {tokens, image};
}

LayerNorm2dImpl::LayerNorm2dImpl(int64_t channels, double eps) : eps_(eps) {
    weight_ = register_parameter("weight", torch::ones({channels}));
    bias_ = register_parameter("bias", torch::zeros({channels}));
}

torch::Tensor LayerNorm2dImpl::forward(const torch::Tensor& x) {
    auto mu = x.mean(1, /*keepdim=*/true);
    auto centered = x - mu;
    auto var = centered.pow(2).mean(1, /*keepdim=*/true);
    auto normed = centered / torch::sqrt(var + eps_);
    return normed * weight_.view({1, -1, 1, 1}) + bias_.view({1, -1, 1, 1});
}

MaskDecoderImpl::MaskDecoderImpl(int64_t dim, int64_t heads, int64_t input_size)
    : input_size_(input_size) {
    if (dim % 8 != 0) throw InvalidConfig("decoder needs embed_dim divisible by 8");
    mask_token_ = register_parameter("mask_token", torch::zeros({1, 1, dim}));
    torch::nn::init::normal_(mask_token_, 0.0, 1.0);
    block1_ = register_module("block1", TwoWayBlock(dim, heads));
    block2_ = register_module("block2", TwoWayBlock(dim, heads));
    up1_ = register_module("up1", torch::nn::ConvTranspose2d(
                                      torch::nn::ConvTranspose2dOptions(dim, dim / 4, 2).stride(2)));
    up_norm_ = register_module("up_norm", LayerNorm2d(dim / 4));
    up2_ = register_module("up2", torch::nn::ConvTranspose2d(
                                      torch::nn::ConvTranspose2dOptions(dim / 4, dim / 8, 2).stride(2)));
    head_fc1_ = register_module("head_fc1", torch::nn::Linear(dim, dim));
    head_fc2_ = register_module("head_fc2", torch::nn::Linear(dim, dim / 8));
}

torch::Tensor MaskDecoderImpl::forward(const torch::Tensor& features,
                                       const torch::Tensor& prompt_tokens,
                                       const torch::Tensor& image_pe) {
    if (features.dim() != 4) throw ShapeMismatch("decoder expects features (1, C, g, g)");
    if (image_pe.sizes() != features.sizes()) {
        throw ShapeMismatch("image positional map must match the feature shape");
    }
    const int64_t c = features.size(1), g = features.size(2);

    auto tokens = torch::cat({mask_token_, prompt_tokens}, 1);  // (1, 1 + n, C)
    const auto token_pe = tokens;  // initial embeddings double as token positions
    auto image = features.flatten(2).transpose(1, 2);           // (1, N, C)
    auto img_pe = image_pe.flatten(2).transpose(1, 2);

    std::tie(tokens, image) = block1_(tokens, image, token_pe, img_pe);
    std::tie(tokens, image) = block2_(tokens, image, token_pe, img_pe);

    auto spatial = image.transpose(1, 2).reshape({1, c, g, g});
    auto up = torch::gelu(up_norm_(up1_(spatial)));
    up = torch::gelu(up2_(up));                                 // (1, C/8, 4g, 4g)

    auto head = head_fc2_(torch::gelu(head_fc1_(tokens.select(1, 0))));  // (1, C/8)
    auto logits = (up * head.view({1, -1, 1, 1})).sum(1, /*keepdim=*/true);

    namespace F = torch::nn::functional;
    if (logits.size(2) != input_size_) {
        logits = F::interpolate(logits, F::InterpolateFuncOptions()
                                            .size(std::vector<int64_t>{input_size_, input_size_})
                                            .mode(torch::kBilinear)
                                            .align_corners(false));
    }
    return logits;
}

torch::Tensor binarize(const torch::Tensor& logits, double threshold) {
    return (logits > threshold).to(torch::kFloat32);
}

}  // namespace segadapt
