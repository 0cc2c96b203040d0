#include "segadapt/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "segadapt/metrics.hpp"

namespace segadapt {

namespace {

void check_shapes(const torch::Tensor& a, const torch::Tensor& b) {
    if (a.sizes() != b.sizes()) {
        throw ShapeMismatch("loss inputs must have identical shapes");
    }
}

}  // namespace

torch::Tensor dice_loss(const torch::Tensor& probs, const torch::Tensor& gt, double eps) {
    check_shapes(probs, gt);
    const auto inter = (probs * gt).sum();
    const auto denom = probs.sum() + gt.sum();
    return 1.0 - (2.0 * inter + eps) / (denom + eps);
}

torch::Tensor ce_loss(const torch::Tensor& logits, const torch::Tensor& gt) {
    check_shapes(logits, gt);
    return torch::binary_cross_entropy_with_logits(logits, gt.to(logits.dtype()));
}

torch::Tensor combined_loss(const torch::Tensor& logits, const torch::Tensor& gt, double alpha,
                            double beta) {
    return alpha * dice_loss(torch::sigmoid(logits), gt.to(logits.dtype())) +
           beta * ce_loss(logits, gt);
}

void TrainConfig::validate() const {
    if (lr <= 0 || weight_decay < 0 || lr_gamma <= 0 || lr_step <= 0) {
        throw InvalidConfig("learning-rate schedule values must be positive");
    }
    if (epochs < 0 || patience <= 0) {
        throw InvalidConfig("epochs must be >= 0 and patience positive");
    }
    if (batch != 1) {
        throw InvalidConfig("only batch size 1 is supported");
    }
    if (alpha < 0 || beta < 0) {
        throw InvalidConfig("loss weights must be non-negative");
    }
    if (val_fraction <= 0.0 || val_fraction >= 1.0) {
        throw InvalidConfig("val_fraction must lie in (0, 1)");
    }
}

double lr_at(int64_t epoch, const TrainConfig& cfg) {
    return cfg.lr * std::pow(cfg.lr_gamma, static_cast<double>(epoch / cfg.lr_step));
}

namespace {

struct Split {
    std::vector<const SegSample*> train;
    std::vector<const SegSample*> val;
    bool weak = false;
};

Split split_validation(const std::vector<SegSample>& pool, const TrainConfig& cfg) {
    Split split;
    if (pool.empty()) {
        throw NotEnoughData("training pool is empty");
    }
    if (pool.size() == 1) {
        // one tile total: validate on the training tile itself, flagged weak
        split.train.push_back(&pool[0]);
        split.val.push_back(&pool[0]);
        split.weak = true;
        return split;
    }
    const auto n = static_cast<int64_t>(pool.size());
    const auto n_val = std::max<int64_t>(1, static_cast<int64_t>(std::floor(n * cfg.val_fraction)));
    DetRng rng(cfg.seed ^ 0x76616c5f73706c74ULL);  // independent stream for the split
    const auto val_idx = rng.sample_indices(n, n_val);
    std::vector<bool> is_val(static_cast<size_t>(n), false);
    for (const auto i : val_idx) is_val[static_cast<size_t>(i)] = true;
    for (int64_t i = 0; i < n; ++i) {
        (is_val[static_cast<size_t>(i)] ? split.val : split.train).push_back(&pool[static_cast<size_t>(i)]);
    }
    std::set<std::string> train_volumes;
    for (const auto* s : split.train) train_volumes.insert(s->meta.volume_id);
    for (const auto* s : split.val) {
        if (train_volumes.count(s->meta.volume_id)) {
            split.weak = true;
            break;
        }
    }
    return split;
}

double validation_dice(SegModel& model, const std::vector<const SegSample*>& val,
                       const TrainConfig& cfg) {
    double sum = 0.0;
    for (const auto* s : val) {
        const auto box = make_prompt(cfg.setting, Phase::test, *s, cfg.rate);
        const auto pred = model->predict_mask(s->image, box);
        sum += dice_score(pred, s->mask);
    }
    return sum / static_cast<double>(val.size());
}

void set_lr(torch::optim::Adam& opt, double lr) {
    for (auto& group : opt.param_groups()) {
        static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
    }
}

}  // namespace

RunRecord train(SegModel& model, const std::vector<SegSample>& pool, const TrainConfig& cfg) {
    cfg.validate();
    if (!model->encoder()->frozen()) {
        throw FrozenViolation("encoder must be frozen before training");
    }

    RunRecord record;
    record.frozen_hash_before = model->encoder()->parameter_hash();

    const auto split = split_validation(pool, cfg);
    record.weak_validation = split.weak;
    record.train_count = static_cast<int64_t>(split.train.size());
    record.val_count = static_cast<int64_t>(split.val.size());

    auto params = model->trainable_parameters();
    torch::optim::Adam opt(params,
                           torch::optim::AdamOptions(cfg.lr).weight_decay(cfg.weight_decay));

    // best-so-far snapshot of the trainable tensors
    std::vector<torch::Tensor> best_state;
    const auto snapshot = [&] {
        best_state.clear();
        for (const auto& p : params) best_state.push_back(p.detach().clone());
    };

    DetRng order_rng(cfg.seed ^ 0x65706f63685f7268ULL);
    std::vector<int64_t> order(split.train.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int64_t>(i);

    int64_t since_best = 0;
    record.stop_reason = "max_epochs";
    for (int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = lr_at(epoch, cfg);
        set_lr(opt, lr);
        order_rng.shuffle(order);

        model->train();
        double loss_sum = 0.0;
        for (size_t step = 0; step < order.size(); ++step) {
            const auto& sample = *split.train[static_cast<size_t>(order[step])];
            const auto box = make_prompt(cfg.setting, Phase::train, sample, cfg.rate);
            opt.zero_grad();
            const auto logits = model->forward(sample.image, box).squeeze(0).squeeze(0);
            const auto loss = combined_loss(logits, sample.mask, cfg.alpha, cfg.beta);
            const double value = loss.item<double>();
            if (!std::isfinite(value)) {
                throw NonFiniteLoss("non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                                std::to_string(step));
            }
            loss.backward();
            opt.step();
            loss_sum += value;
        }

        model->eval();
        const double val_dice = validation_dice(model, split.val, cfg);

        EpochStat stat;
        stat.epoch = epoch;
        stat.lr = lr;
        stat.train_loss = order.empty() ? 0.0 : loss_sum / static_cast<double>(order.size());
        stat.val_dice = val_dice;
        record.epochs.push_back(stat);

        if (val_dice > record.best_val_dice) {
            record.best_val_dice = val_dice;
            record.best_epoch = epoch;
            since_best = 0;
            snapshot();
        } else {
            ++since_best;
            if (since_best >= cfg.patience) {
                record.stop_reason = "early_stop";
                break;
            }
        }
    }

    if (!best_state.empty()) {
        torch::NoGradGuard guard;
        for (size_t i = 0; i < params.size(); ++i) params[i].copy_(best_state[i]);
    }

    record.frozen_hash_after = model->encoder()->parameter_hash();
    if (record.frozen_hash_after != record.frozen_hash_before) {
        throw FrozenViolation("frozen encoder parameters changed during training");
    }
    return record;
}

void write_epoch_csv(const RunRecord& record, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write epoch csv: " + path);
    out << "epoch,train_loss,val_dice,lr\n";
    for (const auto& e : record.epochs) {
        out << e.epoch << ',' << format_double(e.train_loss) << ',' << format_double(e.val_dice)
            << ',' << format_double(e.lr) << '\n';
    }
    if (!out) throw IoError("short write on epoch csv: " + path);
}

}  // namespace segadapt
