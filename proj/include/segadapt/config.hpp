#pragma once

#include <cstdint>
#include <string>

#include "segadapt/model.hpp"
#include "segadapt/training.hpp"

namespace segadapt {

// Resolved run settings: geometry profile, adapter knobs, prompt protocol,
// optimizer recipe, determinism controls, and data source. Every CLI flag
// maps onto one key here, and a config file line `key = value` sets the same
// field; flags override file values.
struct RunConfig {
    // geometry (0 = take from profile)
    std::string profile = "desk";  // desk | desk32 | sam-vit-b
    int64_t input_size = 0;
    int64_t patch_size = 0;
    int64_t embed_dim = 0;
    int64_t num_blocks = 0;
    int64_t num_heads = 0;

    // adapter streams
    bool use_hfa = true;
    bool use_msfa = true;
    bool use_selector = true;
    bool selector_bias = true;
    bool freeze_decoder = false;
    double hfa_tau = 0.25;
    int64_t hfa_hidden = 0;  // 0 = embed_dim / 4
    int64_t msfa_reduction = 4;
    bool msfa_per_layer = false;

    // prompt protocol
    char prompt_setting = 'D';
    double bbox_rate = 0.95;

    // optimizer recipe
    double lr = 1e-4;
    double weight_decay = 0.01;
    double lr_gamma = 0.1;
    int64_t lr_step = 30;
    int64_t epochs = 100;
    int64_t batch = 1;
    int64_t patience = 10;
    double alpha = 1.0;
    double beta = 1.0;
    double val_fraction = 0.2;

    // experiment
    int64_t exemplars = 5;
    std::uint64_t seed = 7;

    // determinism
    bool fixed_math = true;
    int64_t threads = 1;

    // data source
    std::string data_kind = "synthetic";  // synthetic | png | nifti
    std::string data_root;
    int64_t synth_count = 40;
    int64_t synth_size = 0;  // 0 = input size
    std::uint64_t synth_seed = 1234;

    std::string out_root;  // empty = $SEGADAPT_OUT_ROOT, else ./runs

    void validate() const;
    EncoderConfig encoder_config() const;
    ModelConfig model_config() const;  // throws InvalidCombination on bad toggles
    TrainConfig train_config() const;

    std::string dump() const;            // canonical key = value document
    std::uint64_t content_hash() const;  // over the canonical dump
    std::string resolved_out_root() const;
};

// Parse one `key = value` assignment; unknown keys are InvalidConfig errors.
void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& value);

// Load a whole config file: one assignment per line, `#` comments, blank
// lines ignored.
RunConfig load_config_file(const std::string& path);

// Combine the component toggles into an ablation mode; selector demands both
// adapter streams (InvalidCombination otherwise).
AblationMode resolve_mode(bool use_hfa, bool use_msfa, bool use_selector);

// Pin torch math to a single deterministic configuration when requested.
void apply_fixed_math(const RunConfig& cfg);

}  // namespace segadapt
