#include "segadapt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace segadapt {

namespace {

void check_pair(const torch::Tensor& pred, const torch::Tensor& gt) {
    if (pred.dim() != 2 || gt.dim() != 2 || pred.sizes() != gt.sizes()) {
        throw ShapeMismatch("metric inputs must be equal-shaped (H, W) masks");
    }
}

struct Counts {
    double p, g, inter;
};

Counts overlap_counts(const torch::Tensor& pred, const torch::Tensor& gt) {
    const auto p = pred > 0.5;
    const auto g = gt > 0.5;
    return {p.sum().item<double>(), g.sum().item<double>(),
            (p & g).sum().item<double>()};
}

constexpr double kInf = std::numeric_limits<double>::infinity();

// 1-D squared-distance transform, lower envelope of parabolas
// (Felzenszwalb & Huttenlocher).
void dt1d(const std::vector<double>& f, std::vector<double>& d) {
    const int64_t n = static_cast<int64_t>(f.size());
    d.assign(f.size(), 0.0);
    std::vector<int64_t> v(f.size(), 0);
    std::vector<double> z(f.size() + 1, 0.0);
    int64_t k = 0;
    v[0] = 0;
    z[0] = -kInf;
    z[1] = kInf;
    for (int64_t q = 1; q < n; ++q) {
        if (f[q] == kInf) continue;
        double s;
        while (true) {
            if (f[v[k]] == kInf) {
                // no finite parabola yet; this one takes over everywhere
                if (k == 0) {
                    v[0] = q;
                    z[0] = -kInf;
                    z[1] = kInf;
                    s = -kInf;
                    break;
                }
                --k;
                continue;
            }
            s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k]);
            if (s <= z[k]) {
                --k;
                continue;
            }
            break;
        }
        if (s != -kInf) {
            ++k;
            v[k] = q;
            z[k] = s;
            z[k + 1] = kInf;
        }
    }
    k = 0;
    for (int64_t q = 0; q < n; ++q) {
        while (z[k + 1] < q) ++k;
        const double dq = q - v[k];
        d[q] = (f[v[k]] == kInf) ? kInf : dq * dq + f[v[k]];
    }
}

// Exact squared Euclidean distance field to the given seed pixels.
std::vector<double> distance_field(const std::vector<std::pair<int64_t, int64_t>>& seeds,
                                   int64_t h, int64_t w) {
    std::vector<double> grid(static_cast<size_t>(h * w), kInf);
    for (const auto& [r, c] : seeds) grid[static_cast<size_t>(r * w + c)] = 0.0;

    std::vector<double> col(static_cast<size_t>(h)), cold(static_cast<size_t>(h));
    for (int64_t x = 0; x < w; ++x) {
        for (int64_t y = 0; y < h; ++y) col[static_cast<size_t>(y)] = grid[static_cast<size_t>(y * w + x)];
        dt1d(col, cold);
        for (int64_t y = 0; y < h; ++y) grid[static_cast<size_t>(y * w + x)] = cold[static_cast<size_t>(y)];
    }
    std::vector<double> row(static_cast<size_t>(w)), rowd(static_cast<size_t>(w));
    for (int64_t y = 0; y < h; ++y) {
        for (int64_t x = 0; x < w; ++x) row[static_cast<size_t>(x)] = grid[static_cast<size_t>(y * w + x)];
        dt1d(row, rowd);
        for (int64_t x = 0; x < w; ++x) grid[static_cast<size_t>(y * w + x)] = rowd[static_cast<size_t>(x)];
    }
    return grid;
}

}  // namespace

double dice_score(const torch::Tensor& pred, const torch::Tensor& gt) {
    check_pair(pred, gt);
    const auto c = overlap_counts(pred, gt);
    if (c.p == 0.0 && c.g == 0.0) return 100.0;
    return 200.0 * c.inter / (c.p + c.g);
}

double iou(const torch::Tensor& pred, const torch::Tensor& gt) {
    check_pair(pred, gt);
    const auto c = overlap_counts(pred, gt);
    if (c.p == 0.0 && c.g == 0.0) return 100.0;
    return 100.0 * c.inter / (c.p + c.g - c.inter);
}

std::vector<std::pair<int64_t, int64_t>> boundary_pixels(const torch::Tensor& mask) {
    const auto m = mask.to(torch::kFloat32).contiguous();
    const auto h = m.size(0), w = m.size(1);
    const auto* data = m.data_ptr<float>();
    const auto fg = [&](int64_t r, int64_t c) {
        if (r < 0 || r >= h || c < 0 || c >= w) return false;  // frame edge = background
        return data[r * w + c] > 0.5f;
    };
    std::vector<std::pair<int64_t, int64_t>> out;
    for (int64_t r = 0; r < h; ++r) {
        for (int64_t c = 0; c < w; ++c) {
            if (!fg(r, c)) continue;
            if (!fg(r - 1, c) || !fg(r + 1, c) || !fg(r, c - 1) || !fg(r, c + 1)) {
                out.emplace_back(r, c);
            }
        }
    }
    return out;
}

Hd95Result hd95(const torch::Tensor& pred, const torch::Tensor& gt,
                std::optional<double> spacing_mm) {
    check_pair(pred, gt);
    const auto h = pred.size(0), w = pred.size(1);
    const double unit = spacing_mm.value_or(1.0);

    const auto bp = boundary_pixels(pred);
    const auto bg = boundary_pixels(gt);
    if (bp.empty() && bg.empty()) return {0.0, true};
    if (bp.empty() || bg.empty()) {
        const double diag = std::sqrt(static_cast<double>(h * h + w * w));
        return {diag * unit, true};
    }

    std::vector<double> distances;
    distances.reserve(bp.size() + bg.size());
    const auto gather = [&](const std::vector<std::pair<int64_t, int64_t>>& from,
                            const std::vector<std::pair<int64_t, int64_t>>& to) {
        const auto field = distance_field(to, h, w);
        for (const auto& [r, c] : from) {
            distances.push_back(std::sqrt(field[static_cast<size_t>(r * w + c)]));
        }
    };
    gather(bp, bg);
    gather(bg, bp);
    std::sort(distances.begin(), distances.end());
    return {percentile_linear(distances, 0.95) * unit, false};
}

torch::Tensor back_project(const torch::Tensor& mask, int64_t native_h, int64_t native_w) {
    if (mask.size(0) == native_h && mask.size(1) == native_w) return mask;
    namespace F = torch::nn::functional;
    auto up = F::interpolate(mask.view({1, 1, mask.size(0), mask.size(1)}),
                             F::InterpolateFuncOptions()
                                 .size(std::vector<int64_t>{native_h, native_w})
                                 .mode(torch::kNearest));
    return up.squeeze(0).squeeze(0);
}

MetricsReport evaluate(const Predictor& predict, const std::vector<SegSample>& dataset,
                       const PromptSetting& setting, double rate) {
    MetricsReport report;
    report.setting = setting.label;
    report.rate = rate;

    double sum_dice = 0, sum_miou = 0, sum_hd = 0;
    for (const auto& sample : dataset) {
        if (sample.native_mask.sum().item<double>() == 0.0) {
            ++report.excluded_empty_gt;
            continue;
        }
        const auto box = make_prompt(setting, Phase::test, sample, rate);
        const auto pred = predict(sample, box);
        const auto native_pred =
            back_project(pred, sample.meta.native_h, sample.meta.native_w);

        SampleMetrics m;
        m.sample_id = sample.meta.dataset_id + "/" + sample.meta.volume_id + "/" +
                      std::to_string(sample.meta.slice_index);
        m.dice = dice_score(native_pred, sample.native_mask);
        m.miou = iou(native_pred, sample.native_mask);
        const auto hd = hd95(native_pred, sample.native_mask, sample.meta.spacing_mm);
        m.hd95 = hd.value;
        m.degenerate = hd.degenerate;
        if (m.degenerate) ++report.degenerate_count;

        sum_dice += m.dice;
        sum_miou += m.miou;
        sum_hd += m.hd95;
        report.samples.push_back(std::move(m));
    }
    const auto n = static_cast<double>(report.samples.size());
    if (n > 0) {
        report.mean_dice = sum_dice / n;
        report.mean_miou = sum_miou / n;
        report.mean_hd95 = sum_hd / n;
    }
    return report;
}

void write_metrics_csv(const MetricsReport& report, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write metrics csv: " + path);
    out << "sample_id,setting,rate,dice,hd95,miou,degenerate_flag\n";
    for (const auto& m : report.samples) {
        out << m.sample_id << ',' << report.setting << ',' << format_double(report.rate) << ','
            << format_double(m.dice) << ',' << format_double(m.hd95) << ','
            << format_double(m.miou) << ',' << (m.degenerate ? 1 : 0) << '\n';
    }
    if (!out) throw IoError("short write on metrics csv: " + path);
}

std::string metrics_summary_json(const MetricsReport& report) {
    nlohmann::json j = {{"setting", std::string(1, report.setting)},
                        {"rate", report.rate},
                        {"samples", report.samples.size()},
                        {"mean_dice", report.mean_dice},
                        {"mean_miou", report.mean_miou},
                        {"mean_hd95", report.mean_hd95},
                        {"degenerate_count", report.degenerate_count},
                        {"excluded_empty_gt", report.excluded_empty_gt},
                        {"percentile_method", report.percentile_method},
                        {"resolution", report.resolution}};
    return j.dump(2);
}

}  // namespace segadapt
