#include "segadapt/hf_adapter.hpp"

#include <cmath>

namespace segadapt {

void HfaConfig::validate() const {
    if (!(tau > 0.0 && tau < 1.0)) throw InvalidTau("tau must lie in (0, 1)");
    if (hidden_dim < 0) throw InvalidConfig("hfa hidden_dim must be >= 0");
}

torch::Tensor extract_hfc(const torch::Tensor& image, double tau) {
    if (!(tau > 0.0 && tau < 1.0)) throw InvalidTau("tau must lie in (0, 1)");
    if (image.dim() != 4) throw ShapeMismatch("extract_hfc expects (B, C, H, W)");
    const int64_t h = image.size(2), w = image.size(3);

    const auto side = static_cast<int64_t>(std::ceil(tau * static_cast<double>(std::min(h, w))));
    const int64_t cy = h / 2, cx = w / 2;  // DC lands here after the shift
    const int64_t r0 = cy - side / 2, c0 = cx - side / 2;

    auto mask = torch::ones({h, w}, image.options());
    using torch::indexing::Slice;
    mask.index_put_({Slice(r0, r0 + side), Slice(c0, c0 + side)}, 0.0);
    // Taking real() afterwards couples every bin with its point mirror about
    // DC. On even grids the centered square misses the mirror of its lowest
    // row/column, which would leave the filter non-idempotent; suppress the
    // mirrored set as well so the whole operation is a projection.
    mask = mask * torch::roll(torch::flip(mask, {0, 1}), {1, 1}, {0, 1});

    auto spectrum = torch::fft::fftshift(torch::fft::fft2(image), {-2, -1});
    spectrum = spectrum * mask;
    auto back = torch::fft::ifft2(torch::fft::ifftshift(spectrum, {-2, -1}));
    return torch::real(back);
}

HighFreqAdapterImpl::HighFreqAdapterImpl(const EncoderConfig& enc, HfaConfig cfg)
    : cfg_(cfg), input_size_(enc.input_size), grid_(enc.grid()), dim_(enc.embed_dim) {
    cfg_.validate();
    if (cfg_.hidden_dim == 0) cfg_.hidden_dim = std::max<int64_t>(1, dim_ / 4);
    proj_ = register_module(
        "proj", torch::nn::Conv2d(torch::nn::Conv2dOptions(3, dim_, enc.patch_size)
                                      .stride(enc.patch_size)));
    fc1_ = register_module("fc1", torch::nn::Linear(dim_, cfg_.hidden_dim));
    fc2_ = register_module("fc2", torch::nn::Linear(cfg_.hidden_dim, dim_));
}

torch::Tensor HighFreqAdapterImpl::embed(const torch::Tensor& hf_image) {
    if (hf_image.dim() != 4 || hf_image.size(1) != 3 || hf_image.size(2) != input_size_ ||
        hf_image.size(3) != input_size_) {
        throw ShapeMismatch("hf image must be (1, 3, " + std::to_string(input_size_) + ", " +
                            std::to_string(input_size_) + ")");
    }
    return proj_(hf_image);
}

torch::Tensor HighFreqAdapterImpl::mix(const torch::Tensor& hf_embedding,
                                       const torch::Tensor& image_embedding) {
    if (hf_embedding.sizes() != image_embedding.sizes()) {
        throw ShapeMismatch("embedding shapes disagree: " + c10::str(hf_embedding.sizes()) +
                            " vs " + c10::str(image_embedding.sizes()));
    }
    auto combined = hf_embedding + image_embedding;         // (1, C, g, g)
    auto tokens = combined.flatten(2).transpose(1, 2);      // (1, N, C)
    tokens = fc2_(torch::gelu(fc1_(tokens)));
    return tokens.transpose(1, 2).reshape(combined.sizes());
}

torch::Tensor HighFreqAdapterImpl::forward(const torch::Tensor& image,
                                           const torch::Tensor& image_embedding) {
    return mix(embed(extract_hfc(image, cfg_.tau)), image_embedding);
}

}  // namespace segadapt
