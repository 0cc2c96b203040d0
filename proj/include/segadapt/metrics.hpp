#pragma once

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "segadapt/pipeline.hpp"
#include "segadapt/prompts.hpp"

namespace segadapt {

// Overlap metrics in percent. Two empty masks count as a perfect match (100)
// by convention; the report records how often that fired.
double dice_score(const torch::Tensor& pred, const torch::Tensor& gt);
double iou(const torch::Tensor& pred, const torch::Tensor& gt);

// Foreground pixels with at least one background 4-neighbor (the frame edge
// counts as background). Returned as (row, col) pairs in scan order.
std::vector<std::pair<int64_t, int64_t>> boundary_pixels(const torch::Tensor& mask);

struct Hd95Result {
    double value = 0.0;
    bool degenerate = false;  // empty-mask penalty convention fired
};

// 95th percentile (linear interpolation between order statistics) of the
// union of both directed boundary-to-boundary nearest-distance sets,
// Euclidean on pixel centers, scaled by `spacing_mm` when given. An empty
// mask on one side yields the image-diagonal penalty.
Hd95Result hd95(const torch::Tensor& pred, const torch::Tensor& gt,
                std::optional<double> spacing_mm = std::nullopt);

struct SampleMetrics {
    std::string sample_id;
    double dice = 0.0;
    double miou = 0.0;
    double hd95 = 0.0;
    bool degenerate = false;
};

struct MetricsReport {
    char setting = 'D';
    double rate = 0.0;
    std::vector<SampleMetrics> samples;
    double mean_dice = 0.0;
    double mean_miou = 0.0;
    double mean_hd95 = 0.0;
    int64_t degenerate_count = 0;
    int64_t excluded_empty_gt = 0;
    std::string percentile_method = "linear-interpolated order statistics";
    std::string resolution = "native";
};

// Hard (H, W) {0,1} mask at model resolution for one sample and prompt.
using Predictor = std::function<torch::Tensor(const SegSample&, const BBox&)>;

// Runs the test-phase prompt protocol over the dataset, back-projects each
// prediction to the sample's native resolution, and aggregates the three
// metrics. Samples with empty ground truth are skipped and counted.
MetricsReport evaluate(const Predictor& predict, const std::vector<SegSample>& dataset,
                       const PromptSetting& setting, double rate);

void write_metrics_csv(const MetricsReport& report, const std::string& path);
std::string metrics_summary_json(const MetricsReport& report);

// Nearest-neighbor reprojection of a model-resolution mask onto the native
// frame of a sample.
torch::Tensor back_project(const torch::Tensor& mask, int64_t native_h, int64_t native_w);

}  // namespace segadapt
