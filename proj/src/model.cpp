#include "segadapt/model.hpp"

namespace segadapt {

AblationMode ablation_from_label(const std::string& label) {
    if (label == "none") return AblationMode::none;
    if (label == "hfa") return AblationMode::hfa_only;
    if (label == "msfa") return AblationMode::msfa_only;
    if (label == "sum") return AblationMode::sum;
    if (label == "selector") return AblationMode::selector;
    throw InvalidConfig("unknown ablation mode '" + label + "'");
}

std::string to_string(AblationMode mode) {
    switch (mode) {
        case AblationMode::none: return "none";
        case AblationMode::hfa_only: return "hfa";
        case AblationMode::msfa_only: return "msfa";
        case AblationMode::sum: return "sum";
        case AblationMode::selector: return "selector";
    }
    return "?";
}

namespace {

bool uses_hfa(AblationMode m) {
    return m == AblationMode::hfa_only || m == AblationMode::sum || m == AblationMode::selector;
}

bool uses_msfa(AblationMode m) {
    return m == AblationMode::msfa_only || m == AblationMode::sum || m == AblationMode::selector;
}

}  // namespace

void ModelConfig::validate() const {
    encoder.validate();
    if (uses_hfa(mode)) hfa.validate();
    if (uses_msfa(mode)) {
        msfa.validate();
        if (encoder.grid() < kPyramidSizes.back()) {
            throw GridTooSmall("encoder grid " + std::to_string(encoder.grid()) +
                            " is below the largest pyramid level " +
                            std::to_string(kPyramidSizes.back()));
        }
    }
    if (encoder.embed_dim % 8 != 0) {
        throw InvalidConfig("embed_dim must be divisible by 8 for the decoder upscaler");
    }
}

SegModelImpl::SegModelImpl(ModelConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    const auto& enc = cfg_.encoder;

    encoder_ = register_module("encoder", ImageEncoder(enc));
    encoder_->freeze();

    if (uses_hfa(cfg_.mode)) {
        hfa_ = register_module("hfa", HighFreqAdapter(enc, cfg_.hfa));
    }
    if (uses_msfa(cfg_.mode)) {
        if (cfg_.msfa.per_layer) {
            auto list = register_module("msfa", torch::nn::ModuleList());
            for (int64_t k = 0; k < enc.num_blocks; ++k) {
                auto m = MultiScaleAdapter(enc.embed_dim, cfg_.msfa);
                msfa_vec_.push_back(m);
                list->push_back(m);
            }
        } else {
            msfa_shared_ = register_module("msfa", MultiScaleAdapter(enc.embed_dim, cfg_.msfa));
        }
    }
    if (cfg_.mode == AblationMode::selector) {
        auto list = register_module("selector", torch::nn::ModuleList());
        for (int64_t k = 0; k < enc.num_blocks; ++k) {
            auto sel = FeatureSelector(enc.embed_dim);
            if (!cfg_.selector_bias) sel->freeze_bias_at_zero();
            selector_vec_.push_back(sel);
            list->push_back(sel);
        }
    }

    prompt_ = register_module("prompt", BoxPromptEncoder(enc.embed_dim, enc.input_size));
    decoder_ = register_module("decoder",
                               MaskDecoder(enc.embed_dim, enc.num_heads, enc.input_size));

    if (cfg_.freeze_decoder) {
        for (auto& p : prompt_->parameters()) p.set_requires_grad(false);
        for (auto& p : decoder_->parameters()) p.set_requires_grad(false);
    }
}

MultiScaleAdapter& SegModelImpl::msfa_at(int64_t layer) {
    if (!uses_msfa(cfg_.mode)) {
        throw InvalidConfig("multi-scale adapter is not active in this mode");
    }
    if (cfg_.msfa.per_layer) {
        return msfa_vec_.at(static_cast<size_t>(layer));
    }
    return msfa_shared_;
}

FeatureSelector& SegModelImpl::selector_at(int64_t layer) {
    if (cfg_.mode != AblationMode::selector) {
        throw InvalidConfig("selectors are not active in this mode");
    }
    return selector_vec_.at(static_cast<size_t>(layer));
}

torch::Tensor SegModelImpl::hf_clue(const torch::Tensor& image) {
    return hfa_->forward(image, encoder_->patch_project(image));
}

torch::Tensor SegModelImpl::adapter_hook(int64_t layer, const torch::Tensor& block_input,
                                         const torch::Tensor& hf_feature) {
    switch (cfg_.mode) {
        case AblationMode::hfa_only:
            return hf_feature;
        case AblationMode::msfa_only:
            return msfa_at(layer)->forward(block_input);
        case AblationMode::sum:
            return hf_feature + msfa_at(layer)->forward(block_input);
        case AblationMode::selector: {
            const auto ms = msfa_at(layer)->forward(block_input);
            return selector_at(layer)->forward(block_input, hf_feature, ms);
        }
        case AblationMode::none:
            break;
    }
    throw InvalidConfig("adapter hook called with no active adapter");
}

torch::Tensor SegModelImpl::fused_feature(int64_t layer, const torch::Tensor& block_input,
                                          const torch::Tensor& hf_feature) {
    return adapter_hook(layer, block_input, hf_feature);
}

torch::Tensor SegModelImpl::forward(const torch::Tensor& image, const BBox& box) {
    if (image.dim() != 4 || image.size(0) != 1 || image.size(1) != 3 ||
        image.size(2) != cfg_.encoder.input_size || image.size(3) != cfg_.encoder.input_size) {
        throw ShapeMismatch("model input must be (1, 3, " + std::to_string(cfg_.encoder.input_size) +
                        ", " + std::to_string(cfg_.encoder.input_size) + ")");
    }
    if (!torch::isfinite(image).all().item<bool>()) {
        throw NonFiniteInput("model input contains NaN or Inf");
    }

    torch::Tensor hf;
    if (uses_hfa(cfg_.mode)) hf = hf_clue(image);

    AdapterHook hook;
    if (cfg_.mode != AblationMode::none) {
        hook = [this, &hf](int64_t layer, const torch::Tensor& block_input) {
            return adapter_hook(layer, block_input, hf);
        };
    }

    const auto feats = encoder_->encode(image, hook);
    const auto prompt_tokens = prompt_->forward(box);
    const auto image_pe = prompt_->dense_pe(cfg_.encoder.grid()).to(feats.final.dtype());
    return decoder_->forward(feats.final, prompt_tokens, image_pe);
}

torch::Tensor SegModelImpl::predict_mask(const torch::Tensor& image, const BBox& box) {
    torch::NoGradGuard guard;
    return binarize(forward(image, box)).squeeze(0).squeeze(0);
}

std::vector<torch::Tensor> SegModelImpl::trainable_parameters() {
    std::vector<torch::Tensor> out;
    for (auto& p : parameters()) {
        if (p.requires_grad()) out.push_back(p);
    }
    return out;
}

std::vector<std::pair<std::string, torch::Tensor>> SegModelImpl::trainable_named_tensors() {
    std::vector<std::pair<std::string, torch::Tensor>> out;
    for (const auto& item : named_parameters()) {
        if (item.key().rfind("encoder.", 0) == 0) continue;  // frozen, saved separately
        out.emplace_back(item.key(), item.value());
    }
    return out;
}

int64_t SegModelImpl::adapter_parameter_count() const {
    int64_t n = 0;
    for (const auto& item : named_parameters()) {
        const auto& name = item.key();
        if (name.rfind("hfa.", 0) == 0 || name.rfind("msfa.", 0) == 0 ||
            name.rfind("selector.", 0) == 0) {
            n += item.value().numel();
        }
    }
    return n;
}

int64_t SegModelImpl::total_parameter_count() const {
    int64_t n = 0;
    for (const auto& p : parameters()) n += p.numel();
    return n;
}

}  // namespace segadapt
