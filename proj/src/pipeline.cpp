#include "segadapt/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace segadapt {

const std::vector<std::string> kPipelineStageOrder = {
    "intensity_scale", "normalize_nonzero", "slice", "resize"};

void stamp_stage(std::vector<std::string>& stages, const std::string& stage) {
    const auto pos = std::find(kPipelineStageOrder.begin(), kPipelineStageOrder.end(), stage);
    if (pos == kPipelineStageOrder.end()) throw PipelineOrder("unknown stage " + stage);
    for (const auto& done : stages) {
        const auto done_pos =
            std::find(kPipelineStageOrder.begin(), kPipelineStageOrder.end(), done);
        if (done_pos > pos) {
            throw PipelineOrder("stage " + stage + " applied after " + done);
        }
    }
    stages.push_back(stage);
}

torch::Tensor intensity_scale(const torch::Tensor& x, double in_lo, double in_hi,
                              double out_lo, double out_hi) {
    if (in_lo == in_hi) throw DegenerateRange("input range is a single point");
    auto y = (x - in_lo) / (in_hi - in_lo);
    y = y.clamp(0.0, 1.0);
    return y * (out_hi - out_lo) + out_lo;
}

torch::Tensor normalize_nonzero(const torch::Tensor& x, bool* degenerate) {
    if (degenerate) *degenerate = false;
    const auto nz = x != 0;
    const auto count = nz.sum().item<int64_t>();
    if (count == 0) {
        if (degenerate) *degenerate = true;
        return x.clone();
    }
    const auto values = x.masked_select(nz);
    const double mu = values.mean().item<double>();
    double sigma = 0.0;
    if (count > 1) {
        // population standard deviation over the non-zero voxels
        sigma = values.std(/*unbiased=*/false).item<double>();
    }
    auto out = x.clone();
    if (sigma > 0.0) {
        out.masked_scatter_(nz, (values - mu) / sigma);
    } else {
        if (degenerate) *degenerate = true;
        out.masked_scatter_(nz, values - mu);
    }
    return out;
}

namespace {

torch::Tensor pad_to(const torch::Tensor& tile, int64_t window) {
    const int64_t h = tile.size(0), w = tile.size(1);
    if (h == window && w == window) return tile;
    auto out = torch::zeros({window, window}, tile.options());
    out.narrow(0, 0, h).narrow(1, 0, w).copy_(tile);
    return out;
}

}  // namespace

std::vector<SegSample> slice_volume(const torch::Tensor& volume, const torch::Tensor& labels,
                                    int64_t window, const std::string& dataset_id,
                                    const std::string& volume_id,
                                    std::optional<double> spacing_mm) {
    if (volume.sizes() != labels.sizes()) {
        throw ShapeMismatch("volume and labels disagree");
    }
    if (volume.dim() != 3) throw ShapeMismatch("slice_volume expects a (D, H, W) field");
    const int64_t depth = volume.size(0);
    const int64_t h = volume.size(1), w = volume.size(2);

    std::vector<SegSample> out;
    for (int64_t z = 0; z < depth; ++z) {
        const auto img_slice = volume[z];
        const auto lbl_slice = labels[z];
        for (int64_t ty = 0; ty < h; ty += window) {
            for (int64_t tx = 0; tx < w; tx += window) {
                const int64_t th = std::min(window, h - ty);
                const int64_t tw = std::min(window, w - tx);
                auto lbl_tile = lbl_slice.narrow(0, ty, th).narrow(1, tx, tw);
                if ((lbl_tile > 0.5).sum().item<int64_t>() == 0) continue;
                auto img_tile = img_slice.narrow(0, ty, th).narrow(1, tx, tw);

                SegSample s;
                auto img = pad_to(img_tile.to(torch::kFloat32), window);
                s.image = img.unsqueeze(0).unsqueeze(0).repeat({1, 3, 1, 1});
                s.mask = (pad_to(lbl_tile.to(torch::kFloat32), window) > 0.5).to(torch::kFloat32);
                s.native_mask = s.mask;
                s.meta.dataset_id = dataset_id;
                s.meta.volume_id = volume_id;
                s.meta.slice_index = z;
                s.meta.spacing_mm = spacing_mm;
                s.meta.native_h = window;
                s.meta.native_w = window;
                stamp_stage(s.meta.stages, "slice");
                out.push_back(std::move(s));
            }
        }
    }
    return out;
}

SegSample resize_to_model(const SegSample& sample, int64_t size) {
    namespace F = torch::nn::functional;
    SegSample out;
    out.meta = sample.meta;
    const int64_t h = sample.image.size(2);
    if (h == size && sample.image.size(3) == size) {
        out.image = sample.image.clone();
        out.mask = sample.mask.clone();
    } else {
        out.image = F::interpolate(sample.image,
                                   F::InterpolateFuncOptions()
                                       .size(std::vector<int64_t>{size, size})
                                       .mode(torch::kBilinear)
                                       .align_corners(false));
        out.mask = F::interpolate(sample.mask.unsqueeze(0).unsqueeze(0),
                                  F::InterpolateFuncOptions()
                                      .size(std::vector<int64_t>{size, size})
                                      .mode(torch::kNearest))
                       .squeeze(0)
                       .squeeze(0);
    }
    out.native_mask = sample.native_mask.defined() ? sample.native_mask : sample.mask;
    out.meta.scale_factor = static_cast<double>(size) / static_cast<double>(h);
    stamp_stage(out.meta.stages, "resize");
    return out;
}

ExemplarSet sample_exemplars(const std::vector<SegSample>& samples, int64_t n,
                             std::uint64_t seed) {
    // group by volume id; a 2-D sample with a unique id is its own group
    std::map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        groups[samples[i].meta.volume_id].push_back(i);
    }
    if (static_cast<int64_t>(groups.size()) < n) {
        throw NotEnoughData("requested " + std::to_string(n) + " exemplars from " +
                            std::to_string(groups.size()) + " groups");
    }
    std::vector<std::string> keys;
    keys.reserve(groups.size());
    for (const auto& [k, _] : groups) keys.push_back(k);

    DetRng rng(seed);
    auto chosen = rng.sample_indices(keys.size(), static_cast<std::size_t>(n));
    std::set<std::size_t> chosen_set(chosen.begin(), chosen.end());

    ExemplarSet set;
    set.n = n;
    set.seed = seed;
    for (std::size_t gi = 0; gi < keys.size(); ++gi) {
        const bool train = chosen_set.count(gi) > 0;
        for (auto si : groups[keys[gi]]) {
            (train ? set.train : set.eval).push_back(samples[si]);
        }
        (train ? set.train_groups : set.eval_groups).push_back(keys[gi]);
    }
    if (set.eval.empty()) {
        throw NotEnoughData("all " + std::to_string(groups.size()) +
                            " groups consumed by training; evaluation split is empty");
    }
    check_no_leakage(set);
    return set;
}

void check_no_leakage(const ExemplarSet& set) {
    std::set<std::string> train_ids(set.train_groups.begin(), set.train_groups.end());
    for (const auto& id : set.eval_groups) {
        if (train_ids.count(id)) {
            throw InvalidConfig("volume " + id + " appears in both train and eval splits");
        }
    }
}

double BlobSpec::q(double x, double y) const {
    const double dx = x - cx, dy = y - cy;
    const double ct = std::cos(theta), st = std::sin(theta);
    const double u = dx * ct + dy * st;
    const double v = -dx * st + dy * ct;
    return (u * u) / (a * a) + (v * v) / (b * b);
}

namespace {

torch::Tensor smooth_noise(DetRng& rng, int64_t size, int64_t cells) {
    auto coarse = torch::empty({1, 1, cells, cells}, torch::kFloat32);
    auto acc = coarse.accessor<float, 4>();
    for (int64_t i = 0; i < cells; ++i)
        for (int64_t j = 0; j < cells; ++j) acc[0][0][i][j] = static_cast<float>(rng.uniform(-1, 1));
    namespace F = torch::nn::functional;
    return F::interpolate(coarse, F::InterpolateFuncOptions()
                                      .size(std::vector<int64_t>{size, size})
                                      .mode(torch::kBilinear)
                                      .align_corners(false))
        .squeeze(0)
        .squeeze(0);
}

}  // namespace

std::vector<SegSample> gen_synthetic(int64_t count, int64_t size, std::uint64_t seed,
                                     std::vector<std::vector<BlobSpec>>* blob_specs) {
    if (size < 32) throw InvalidConfig("synthetic size must be >= 32");
    DetRng rng(seed);
    const auto s = static_cast<double>(size);
    const int64_t n_pix = size * size;

    if (blob_specs) blob_specs->clear();
    std::vector<SegSample> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int64_t idx = 0; idx < count; ++idx) {
        std::vector<BlobSpec> blobs;
        torch::Tensor mask;
        for (int attempt = 0; attempt < 100; ++attempt) {
            blobs.clear();
            const auto n_blobs = 1 + static_cast<int>(rng.below(3));
            for (int bi = 0; bi < n_blobs; ++bi) {
                BlobSpec e;
                e.cx = rng.uniform(0.25, 0.75) * s;
                e.cy = rng.uniform(0.25, 0.75) * s;
                e.a = std::max(2.0, rng.uniform(0.06, 0.2) * s);
                e.b = std::max(2.0, rng.uniform(0.06, 0.2) * s);
                e.theta = rng.uniform(0.0, M_PI);
                blobs.push_back(e);
            }
            mask = torch::zeros({size, size}, torch::kFloat32);
            auto macc = mask.accessor<float, 2>();
            int64_t fg = 0;
            for (int64_t y = 0; y < size; ++y) {
                for (int64_t x = 0; x < size; ++x) {
                    for (const auto& e : blobs) {
                        if (e.q(static_cast<double>(x), static_cast<double>(y)) <= 1.0) {
                            macc[y][x] = 1.0f;
                            ++fg;
                            break;
                        }
                    }
                }
            }
            const double frac = static_cast<double>(fg) / static_cast<double>(n_pix);
            if (frac >= 0.005 && frac <= 0.30) break;
            blobs.clear();
        }
        if (blobs.empty()) throw InvalidConfig("synthetic blob rejection sampling exhausted");

        // background: mid-gray with smooth drift and fine speckle
        auto img = 60.0 + 20.0 * smooth_noise(rng, size, std::max<int64_t>(2, size / 16));
        auto speckle = torch::empty({size, size}, torch::kFloat32);
        auto sacc = speckle.accessor<float, 2>();
        for (int64_t y = 0; y < size; ++y)
            for (int64_t x = 0; x < size; ++x) sacc[y][x] = static_cast<float>(rng.uniform(-1, 1));
        img = img + 6.0 * speckle;

        // blobs: bright, textured, soft-edged
        auto texture = torch::empty({size, size}, torch::kFloat32);
        auto tacc = texture.accessor<float, 2>();
        for (int64_t y = 0; y < size; ++y)
            for (int64_t x = 0; x < size; ++x) tacc[y][x] = static_cast<float>(rng.uniform(-1, 1));
        auto iacc = img.accessor<float, 2>();
        for (int64_t y = 0; y < size; ++y) {
            for (int64_t x = 0; x < size; ++x) {
                double qmin = 1e30;
                for (const auto& e : blobs) {
                    qmin = std::min(qmin, e.q(static_cast<double>(x), static_cast<double>(y)));
                }
                const double alpha = std::clamp((1.15 - qmin) / 0.3, 0.0, 1.0);
                if (alpha > 0.0) {
                    const double fg_val = 205.0 + 18.0 * tacc[y][x];
                    iacc[y][x] = static_cast<float>((1.0 - alpha) * iacc[y][x] + alpha * fg_val);
                }
            }
        }
        img = img.clamp(0.0, 255.0);

        SegSample sample;
        sample.image = img.unsqueeze(0).unsqueeze(0).repeat({1, 3, 1, 1});
        sample.mask = mask;
        sample.native_mask = mask;
        sample.meta.dataset_id = "synthetic";
        sample.meta.volume_id = "synth_" + std::to_string(idx);
        sample.meta.slice_index = 0;
        sample.meta.native_h = size;
        sample.meta.native_w = size;
        if (blob_specs) blob_specs->push_back(blobs);
        out.push_back(std::move(sample));
    }
    return out;
}

}  // namespace segadapt
