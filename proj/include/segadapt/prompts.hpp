#pragma once

#include <optional>
#include <string>

#include <torch/torch.h>

#include "segadapt/common.hpp"

namespace segadapt {

enum class BoxKind { coarse, fine };

// Axis-aligned box in the resized-image frame, [x0, y0, x1, y1] with an
// exclusive upper edge. Coordinates stay fractional; nothing rounds them
// until the prompt encoder consumes the box.
struct BBox {
    double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
    BoxKind kind = BoxKind::fine;
    std::optional<double> rate;  // recorded for coarse boxes

    double width() const { return x1 - x0; }
    double height() const { return y1 - y0; }
    double area() const { return width() * height(); }
};

enum class PromptKind { fine, coarse };
enum class Phase { train, test };

// The 2x2 matrix of {fine, coarse} prompts at train/test time.
struct PromptSetting {
    PromptKind train_kind;
    PromptKind test_kind;
    char label;  // 'A'..'D'

    static PromptSetting from_label(char label);
    PromptKind kind_for(Phase phase) const {
        return phase == Phase::train ? train_kind : test_kind;
    }
};

// Content-agnostic centered box: offset = rate * width, box spans
// [width - offset, offset] on both axes. Only square frames are accepted.
BBox coarse_bbox(double width, double height, double rate);

// Tight bounding rectangle of the foreground of a binary (H, W) mask.
BBox fine_bbox(const torch::Tensor& gt_mask);

struct SegSample;  // pipeline.hpp

BBox make_prompt(const PromptSetting& setting, Phase phase, const SegSample& sample,
                 double rate);

}  // namespace segadapt
