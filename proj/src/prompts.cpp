#include "segadapt/prompts.hpp"

#include "segadapt/pipeline.hpp"

namespace segadapt {

PromptSetting PromptSetting::from_label(char label) {
    switch (label) {
        case 'A': return {PromptKind::fine, PromptKind::fine, 'A'};
        case 'B': return {PromptKind::fine, PromptKind::coarse, 'B'};
        case 'C': return {PromptKind::coarse, PromptKind::fine, 'C'};
        case 'D': return {PromptKind::coarse, PromptKind::coarse, 'D'};
        default: throw InvalidConfig(std::string("unknown prompt setting '") + label + "'");
    }
}

BBox coarse_bbox(double width, double height, double rate) {
    if (width != height) {
        throw NonSquareImage("coarse box needs a square frame, got " +
                             format_double(width) + "x" + format_double(height));
    }
    if (rate > 1.0) throw InvalidRate("bbox rate " + format_double(rate) + " > 1");
    if (rate <= 0.5) {
        throw DegenerateBox("bbox rate " + format_double(rate) +
                            " <= 0.5 collapses or inverts the box");
    }
    const double offset = rate * width;
    BBox box;
    box.x0 = width - offset;
    box.y0 = height - offset;
    box.x1 = offset;
    box.y1 = offset;
    box.kind = BoxKind::coarse;
    box.rate = rate;
    return box;
}

BBox fine_bbox(const torch::Tensor& gt_mask) {
    if (gt_mask.dim() != 2) throw ShapeMismatch("fine_bbox expects a (H, W) mask");
    const auto fg = (gt_mask > 0.5).nonzero();  // (n, 2) rows of (row, col)
    if (fg.size(0) == 0) throw EmptyMask("mask has no foreground pixel");
    const auto rows = fg.select(1, 0);
    const auto cols = fg.select(1, 1);
    BBox box;
    box.x0 = static_cast<double>(cols.min().item<int64_t>());
    box.y0 = static_cast<double>(rows.min().item<int64_t>());
    box.x1 = static_cast<double>(cols.max().item<int64_t>()) + 1.0;
    box.y1 = static_cast<double>(rows.max().item<int64_t>()) + 1.0;
    box.kind = BoxKind::fine;
    return box;
}

BBox make_prompt(const PromptSetting& setting, Phase phase, const SegSample& sample,
                 double rate) {
    if (setting.kind_for(phase) == PromptKind::fine) {
        return fine_bbox(sample.mask);
    }
    const auto h = static_cast<double>(sample.image.size(2));
    const auto w = static_cast<double>(sample.image.size(3));
    return coarse_bbox(w, h, rate);
}

}  // namespace segadapt
