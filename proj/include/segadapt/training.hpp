#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "segadapt/model.hpp"
#include "segadapt/pipeline.hpp"
#include "segadapt/prompts.hpp"

namespace segadapt {

// 1 - (2*sum(p*g) + eps) / (sum(p) + sum(g) + eps) over probabilities in [0,1].
torch::Tensor dice_loss(const torch::Tensor& probs, const torch::Tensor& gt, double eps = 1e-5);

// Mean binary cross-entropy with logits (log-sum-exp stabilized).
torch::Tensor ce_loss(const torch::Tensor& logits, const torch::Tensor& gt);

// alpha * dice_loss(sigmoid(logits), gt) + beta * ce_loss(logits, gt)
torch::Tensor combined_loss(const torch::Tensor& logits, const torch::Tensor& gt,
                            double alpha = 1.0, double beta = 1.0);

struct TrainConfig {
    double lr = 1e-4;
    double weight_decay = 0.01;
    double lr_gamma = 0.1;     // multiplicative lr step factor
    int64_t lr_step = 30;      // epochs between lr steps
    int64_t epochs = 100;
    int64_t batch = 1;
    int64_t patience = 10;     // early-stop tolerance, epochs
    double alpha = 1.0;
    double beta = 1.0;
    PromptSetting setting = PromptSetting::from_label('D');
    double rate = 0.95;
    double val_fraction = 0.2;
    std::uint64_t seed = 0;

    void validate() const;
};

// Stepwise schedule: lr * gamma^floor(epoch / step), epoch 0-based.
double lr_at(int64_t epoch, const TrainConfig& cfg);

struct EpochStat {
    int64_t epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double val_dice = 0.0;  // percent
};

struct RunRecord {
    std::vector<EpochStat> epochs;
    int64_t best_epoch = -1;
    double best_val_dice = -1.0;
    std::string stop_reason;  // "max_epochs" or "early_stop"
    std::uint64_t frozen_hash_before = 0;
    std::uint64_t frozen_hash_after = 0;
    bool weak_validation = false;  // val shares a volume with train
    int64_t train_count = 0;
    int64_t val_count = 0;
};

// Adam over the trainable subset; per-epoch deterministic shuffle, held-out
// validation Dice, early stopping, best-weights restoration at the end. The
// encoder hash is taken before and after and must agree.
RunRecord train(SegModel& model, const std::vector<SegSample>& pool, const TrainConfig& cfg);

// epoch,train_loss,val_dice,lr rows with round-trip-exact number formatting.
void write_epoch_csv(const RunRecord& record, const std::string& path);

}  // namespace segadapt
