#include "segadapt/ms_adapter.hpp"

namespace segadapt {

void MsfaConfig::validate() const {
    if (channel_reduction < 1) throw InvalidConfig("channel_reduction must be >= 1");
}

torch::Tensor adaptive_bin_pool(const torch::Tensor& feature, int64_t out_size) {
    if (feature.dim() != 4) throw ShapeMismatch("adaptive_bin_pool expects (1, C, g, g)");
    const int64_t g = feature.size(2);
    if (feature.size(3) != g) throw ShapeMismatch("feature grid must be square");

    auto edge = [&](int64_t i) { return (i * g) / out_size; };
    std::vector<torch::Tensor> rows;
    rows.reserve(static_cast<std::size_t>(out_size));
    for (int64_t i = 0; i < out_size; ++i) {
        const int64_t r0 = edge(i), r1 = edge(i + 1);
        auto row_band = feature.narrow(2, r0, r1 - r0);
        std::vector<torch::Tensor> cells;
        cells.reserve(static_cast<std::size_t>(out_size));
        for (int64_t j = 0; j < out_size; ++j) {
            const int64_t c0 = edge(j), c1 = edge(j + 1);
            cells.push_back(row_band.narrow(3, c0, c1 - c0).mean({2, 3}));  // (1, C)
        }
        rows.push_back(torch::stack(cells, 2));  // (1, C, out)
    }
    return torch::stack(rows, 2);  // (1, C, out, out)
}

std::vector<torch::Tensor> pyramid_pool(const torch::Tensor& feature) {
    if (feature.dim() != 4) throw ShapeMismatch("pyramid_pool expects (1, C, g, g)");
    const int64_t g = feature.size(2);
    if (g < kPyramidSizes.back()) {
        throw GridTooSmall("grid " + std::to_string(g) + " < " +
                           std::to_string(kPyramidSizes.back()));
    }
    std::vector<torch::Tensor> levels;
    for (auto s : kPyramidSizes) levels.push_back(adaptive_bin_pool(feature, s));
    return levels;
}

MultiScaleAdapterImpl::MultiScaleAdapterImpl(int64_t channels, MsfaConfig cfg) : cfg_(cfg) {
    cfg_.validate();
    const int64_t reduced = std::max<int64_t>(1, channels / cfg_.channel_reduction);
    gate_fc1_ = register_module("gate_fc1", torch::nn::Linear(channels, reduced));
    gate_fc2_ = register_module("gate_fc2", torch::nn::Linear(reduced, channels));
    proj_ = register_module(
        "proj", torch::nn::Conv2d(torch::nn::Conv2dOptions(channels, channels, 1)));
}

torch::Tensor MultiScaleAdapterImpl::channel_process(const torch::Tensor& feature) {
    if (feature.dim() != 4) throw ShapeMismatch("channel_process expects (1, C, g, g)");
    auto squeezed = feature.mean({2, 3});  // global average pool, (1, C)
    auto gate = torch::sigmoid(gate_fc2_(torch::relu(gate_fc1_(squeezed))));
    return feature * gate.unsqueeze(-1).unsqueeze(-1);
}

torch::Tensor MultiScaleAdapterImpl::fuse_pyramid(const std::vector<torch::Tensor>& levels,
                                                  int64_t target) {
    if (levels.size() != kPyramidSizes.size()) {
        throw ShapeMismatch("expected " + std::to_string(kPyramidSizes.size()) +
                            " pyramid levels, got " + std::to_string(levels.size()));
    }
    namespace F = torch::nn::functional;
    torch::Tensor sum;
    for (std::size_t i = 0; i < levels.size(); ++i) {
        if (levels[i].size(2) != kPyramidSizes[i]) {
            throw ShapeMismatch("level " + std::to_string(i) + " has size " +
                                std::to_string(levels[i].size(2)));
        }
        auto up = F::interpolate(levels[i], F::InterpolateFuncOptions()
                                                .size(std::vector<int64_t>{target, target})
                                                .mode(torch::kBilinear)
                                                .align_corners(false));
        sum = sum.defined() ? sum + up : up;
    }
    return proj_(sum);
}

torch::Tensor MultiScaleAdapterImpl::forward(const torch::Tensor& feature) {
    auto gated = channel_process(feature);
    auto levels = pyramid_pool(gated);
    return fuse_pyramid(levels, feature.size(2));
}

}  // namespace segadapt
