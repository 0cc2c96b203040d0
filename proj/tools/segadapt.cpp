#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <torch/torch.h>

#include "segadapt/checkpoint.hpp"
#include "segadapt/config.hpp"
#include "segadapt/dataset_io.hpp"
#include "segadapt/metrics.hpp"
#include "segadapt/model.hpp"
#include "segadapt/pipeline.hpp"
#include "segadapt/plotting.hpp"
#include "segadapt/training.hpp"

namespace fs = std::filesystem;
using namespace segadapt;

namespace {

std::vector<std::pair<std::string, std::string>> g_overrides;
std::string g_config_path;

void add_common_options(CLI::App* cmd) {
    cmd->add_option("--config", g_config_path, "key = value config file");
    const auto opt = [cmd](const std::string& flag, const std::string& key,
                           const std::string& help) {
        cmd->add_option_function<std::string>(
            flag, [key](const std::string& v) { g_overrides.emplace_back(key, v); }, help);
    };
    const auto set_flag = [cmd](const std::string& name, const std::string& key,
                                const std::string& value, const std::string& help) {
        cmd->add_flag_callback(
            name, [key, value] { g_overrides.emplace_back(key, value); }, help);
    };
    opt("--profile", "profile", "geometry profile: desk, desk32, sam-vit-b");
    opt("--seed", "seed", "experiment seed");
    opt("--prompt-setting", "prompt_setting", "prompt protocol: A, B, C, or D");
    opt("--bbox-rate", "bbox_rate", "coarse-box overlap rate in (0.5, 1.0]");
    opt("--exemplars", "exemplars", "number of training exemplars");
    opt("--epochs", "epochs", "maximum training epochs");
    opt("--hfa-tau", "hfa_tau", "low-frequency mask side fraction");
    opt("--data-kind", "data_kind", "data source: synthetic, png, nifti");
    opt("--data-root", "data_root", "dataset root directory");
    opt("--out-root", "out_root", "output root (default $SEGADAPT_OUT_ROOT or ./runs)");
    opt("--threads", "threads", "torch threads when fixed_math is off");
    opt("--synth-count", "synth_count", "synthetic corpus size");
    opt("--synth-size", "synth_size", "synthetic image side (>= 32)");
    opt("--synth-seed", "synth_seed", "synthetic corpus seed");
    set_flag("--freeze-decoder", "freeze_decoder", "true", "freeze decoder and prompt encoder");
    set_flag("--no-selector-bias", "selector_bias", "false", "pin selector biases at zero");
    set_flag("--synthetic", "data_kind", "synthetic", "shorthand for --data-kind synthetic");
    set_flag("--no-fixed-math", "fixed_math", "false", "allow multi-threaded kernels");
}

RunConfig resolve_config() {
    RunConfig cfg;
    if (!g_config_path.empty()) cfg = load_config_file(g_config_path);
    for (const auto& [key, value] : g_overrides) apply_config_entry(cfg, key, value);
    cfg.validate();
    return cfg;
}

std::vector<SegSample> load_dataset(const RunConfig& cfg) {
    std::vector<SegSample> raw;
    if (cfg.data_kind == "synthetic") {
        const auto size = cfg.synth_size > 0 ? cfg.synth_size : cfg.encoder_config().input_size;
        raw = gen_synthetic(cfg.synth_count, size, cfg.synth_seed);
    } else if (cfg.data_kind == "png") {
        raw = load_png_pairs(cfg.data_root);
    } else {
        raw = load_nifti_dataset(cfg.data_root);
    }
    std::vector<SegSample> out;
    out.reserve(raw.size());
    const auto input = cfg.encoder_config().input_size;
    for (const auto& s : raw) out.push_back(resize_to_model(s, input));
    return out;
}

std::string timestamp_now() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y%m%d-%H%M%S", &tm);
    return buf;
}

fs::path make_run_dir(const RunConfig& cfg, const std::string& kind) {
    const auto dir = fs::path(cfg.resolved_out_root()) /
                     (kind + "-" + to_hex(cfg.content_hash()) + "-" + timestamp_now());
    fs::create_directories(dir);
    return dir;
}

void write_manifest(const fs::path& dir, const RunConfig& cfg,
                    const std::vector<std::pair<std::string, std::string>>& extra) {
    std::ofstream out((dir / "manifest.txt").string(), std::ios::trunc);
    if (!out) throw IoError("cannot write manifest under " + dir.string());
    out << "# resolved configuration\n" << cfg.dump();
    out << "# run\n";
    out << "config_hash = " << to_hex(cfg.content_hash()) << '\n';
    out << "lr_decay_interpretation = weight decay 0.01 on the optimizer; "
           "lr multiplied by lr_gamma every lr_step epochs\n";
    for (const auto& [k, v] : extra) out << k << " = " << v << '\n';
}

Predictor make_predictor(SegModel& model) {
    return [&model](const SegSample& sample, const BBox& box) {
        return model->predict_mask(sample.image, box);
    };
}

struct TrainedRun {
    RunRecord record;
    MetricsReport report;
};

TrainedRun train_and_evaluate(SegModel& model, const ExemplarSet& split, const RunConfig& cfg) {
    TrainedRun run;
    run.record = train(model, split.train, cfg.train_config());
    auto predictor = make_predictor(model);
    run.report = evaluate(predictor, split.eval, PromptSetting::from_label(cfg.prompt_setting),
                          cfg.bbox_rate);
    return run;
}

void save_model(const fs::path& path, SegModel& model, const RunConfig& cfg,
                const TrainedRun& run) {
    std::map<std::string, std::string> meta = {
        {"mode", to_string(model->config().mode)},
        {"seed", std::to_string(cfg.seed)},
        {"best_epoch", std::to_string(run.record.best_epoch)},
        {"best_val_dice", format_double(run.record.best_val_dice)},
        {"stop_reason", run.record.stop_reason},
    };
    save_checkpoint(path.string(), model->trainable_named_tensors(), cfg.encoder_config(), meta);
}

int cmd_train() {
    const auto cfg = resolve_config();
    apply_fixed_math(cfg);
    torch::manual_seed(cfg.seed);

    const auto dataset = load_dataset(cfg);
    const auto split = sample_exemplars(dataset, cfg.exemplars, cfg.seed);

    SegModel model(cfg.model_config());
    const auto run = train_and_evaluate(model, split, cfg);

    const auto dir = make_run_dir(cfg, "train");
    write_epoch_csv(run.record, (dir / "epochs.csv").string());
    write_metrics_csv(run.report, (dir / "metrics.csv").string());
    save_model(dir / "best.ckpt", model, cfg, run);
    {
        std::ofstream out((dir / "summary.json").string(), std::ios::trunc);
        out << metrics_summary_json(run.report) << '\n';
    }
    write_manifest(dir, cfg,
                   {{"frozen_hash_before", to_hex(run.record.frozen_hash_before)},
                    {"frozen_hash_after", to_hex(run.record.frozen_hash_after)},
                    {"stop_reason", run.record.stop_reason},
                    {"best_epoch", std::to_string(run.record.best_epoch)},
                    {"best_val_dice", format_double(run.record.best_val_dice)},
                    {"weak_validation", run.record.weak_validation ? "true" : "false"},
                    {"train_tiles", std::to_string(run.record.train_count)},
                    {"val_tiles", std::to_string(run.record.val_count)},
                    {"eval_mean_dice", format_double(run.report.mean_dice)},
                    {"eval_mean_miou", format_double(run.report.mean_miou)},
                    {"eval_mean_hd95", format_double(run.report.mean_hd95)}});

    if (!run.record.epochs.empty()) {
        Series loss{"train loss", {}, {}}, dice{"val dice", {}, {}};
        for (const auto& e : run.record.epochs) {
            loss.x.push_back(static_cast<double>(e.epoch));
            loss.y.push_back(e.train_loss);
            dice.x.push_back(static_cast<double>(e.epoch));
            dice.y.push_back(e.val_dice);
        }
        line_plot((dir / "train_loss.png").string(), "training loss", "epoch", "loss", {loss});
        line_plot((dir / "val_dice.png").string(), "validation dice", "epoch", "%", {dice});
    }

    std::cout << "run_dir: " << dir.string() << '\n'
              << "stop: " << run.record.stop_reason << " best_epoch " << run.record.best_epoch
              << " best_val_dice " << format_double(run.record.best_val_dice) << '\n'
              << "held_out: dice " << format_double(run.report.mean_dice) << " miou "
              << format_double(run.report.mean_miou) << " hd95 "
              << format_double(run.report.mean_hd95) << " over " << run.report.samples.size()
              << " samples\n";
    return 0;
}

int cmd_eval(const std::string& ckpt_path) {
    const auto cfg = resolve_config();
    apply_fixed_math(cfg);
    torch::manual_seed(cfg.seed);

    const auto dataset = load_dataset(cfg);
    const auto split = sample_exemplars(dataset, cfg.exemplars, cfg.seed);

    SegModel model(cfg.model_config());
    const auto enc = cfg.encoder_config();
    const auto report_load =
        load_checkpoint(ckpt_path, model->trainable_named_tensors(), &enc);

    auto predictor = make_predictor(model);
    const auto report = evaluate(predictor, split.eval,
                                 PromptSetting::from_label(cfg.prompt_setting), cfg.bbox_rate);

    const auto dir = make_run_dir(cfg, "eval");
    write_metrics_csv(report, (dir / "metrics.csv").string());
    {
        std::ofstream out((dir / "summary.json").string(), std::ios::trunc);
        out << metrics_summary_json(report) << '\n';
    }
    write_manifest(dir, cfg,
                   {{"checkpoint", ckpt_path},
                    {"tensors_loaded", std::to_string(report_load.loaded.size())},
                    {"tensors_missing", std::to_string(report_load.missing.size())},
                    {"tensors_unexpected", std::to_string(report_load.unexpected.size())}});

    std::cout << "run_dir: " << dir.string() << '\n'
              << "eval: dice " << format_double(report.mean_dice) << " miou "
              << format_double(report.mean_miou) << " hd95 " << format_double(report.mean_hd95)
              << " over " << report.samples.size() << " samples ("
              << report.excluded_empty_gt << " empty-gt excluded)\n";
    return 0;
}

struct VariantToggles {
    bool hfa = false, msfa = false, selector = false, bias = true;
    std::string label;
};

VariantToggles parse_variant(const std::string& text) {
    VariantToggles v;
    v.label = text;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok == "hfa") v.hfa = true;
        else if (tok == "msfa") v.msfa = true;
        else if (tok == "selector") v.selector = true;
        else if (tok == "nobias") v.bias = false;
        else if (tok == "none") { /* explicit empty set */ }
        else throw InvalidConfig("unknown ablation toggle '" + tok + "'");
    }
    return v;
}

int cmd_ablate(const std::vector<std::string>& variant_args) {
    const auto base = resolve_config();
    apply_fixed_math(base);

    std::vector<std::string> variants = variant_args;
    if (variants.empty()) {
        variants = {"hfa", "msfa", "hfa,msfa", "hfa,msfa,selector", "hfa,msfa,selector,nobias"};
    }
    // validate every toggle set before any training starts
    std::vector<VariantToggles> toggles;
    for (const auto& text : variants) {
        auto v = parse_variant(text);
        resolve_mode(v.hfa, v.msfa, v.selector);
        toggles.push_back(std::move(v));
    }

    const auto dataset = load_dataset(base);
    const auto split = sample_exemplars(dataset, base.exemplars, base.seed);
    const auto dir = make_run_dir(base, "ablate");

    std::ofstream csv((dir / "ablation.csv").string(), std::ios::trunc);
    csv << "variant,dice,miou,hd95,best_epoch,stop_reason\n";
    std::cout << "variant                        dice    miou    hd95\n";
    for (const auto& v : toggles) {
        auto cfg = base;
        cfg.use_hfa = v.hfa;
        cfg.use_msfa = v.msfa;
        cfg.use_selector = v.selector;
        cfg.selector_bias = v.bias;

        torch::manual_seed(cfg.seed);
        SegModel model(cfg.model_config());
        const auto run = train_and_evaluate(model, split, cfg);

        csv << v.label << ',' << format_double(run.report.mean_dice) << ','
            << format_double(run.report.mean_miou) << ',' << format_double(run.report.mean_hd95)
            << ',' << run.record.best_epoch << ',' << run.record.stop_reason << '\n';
        std::printf("%-30s %6.2f  %6.2f  %6.2f\n", v.label.c_str(), run.report.mean_dice,
                    run.report.mean_miou, run.report.mean_hd95);

        const auto safe = [&] {
            std::string s = v.label;
            std::replace(s.begin(), s.end(), ',', '+');
            return s;
        }();
        write_epoch_csv(run.record, (dir / ("epochs-" + safe + ".csv")).string());
        save_model(dir / ("best-" + safe + ".ckpt"), model, cfg, run);
    }
    write_manifest(dir, base, {{"variants", std::to_string(toggles.size())}});
    std::cout << "run_dir: " << dir.string() << '\n';
    return 0;
}

int cmd_sweep_rate(const std::string& ckpt_path, const std::string& rates_text) {
    const auto cfg = resolve_config();
    apply_fixed_math(cfg);
    torch::manual_seed(cfg.seed);

    std::vector<double> rates;
    {
        std::stringstream ss(rates_text);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            if (tok.empty()) continue;
            const double r = std::stod(tok);
            if (r <= 0.5 || r > 1.0) {
                throw InvalidRate("sweep rate must lie in (0.5, 1.0], got " + tok);
            }
            rates.push_back(r);
        }
    }
    if (rates.empty()) throw InvalidConfig("no rates given");
    std::sort(rates.begin(), rates.end(), std::greater<>());
    const auto dup = std::unique(rates.begin(), rates.end());
    if (dup != rates.end()) {
        std::cerr << "warning: duplicate rates dropped ("
                  << std::distance(dup, rates.end()) << ")\n";
        rates.erase(dup, rates.end());
    }

    const auto dataset = load_dataset(cfg);
    const auto split = sample_exemplars(dataset, cfg.exemplars, cfg.seed);

    SegModel model(cfg.model_config());
    const auto enc = cfg.encoder_config();
    load_checkpoint(ckpt_path, model->trainable_named_tensors(), &enc);
    auto predictor = make_predictor(model);

    const auto dir = make_run_dir(cfg, "sweep");
    std::ofstream csv((dir / "rate_sweep.csv").string(), std::ios::trunc);
    csv << "rate,dice,miou,hd95\n";
    Series dice{"dice", {}, {}}, miou{"miou", {}, {}}, hd{"hd95", {}, {}};
    for (const auto r : rates) {
        const auto report =
            evaluate(predictor, split.eval, PromptSetting::from_label(cfg.prompt_setting), r);
        csv << format_double(r) << ',' << format_double(report.mean_dice) << ','
            << format_double(report.mean_miou) << ',' << format_double(report.mean_hd95) << '\n';
        dice.x.push_back(r);
        dice.y.push_back(report.mean_dice);
        miou.x.push_back(r);
        miou.y.push_back(report.mean_miou);
        hd.x.push_back(r);
        hd.y.push_back(report.mean_hd95);
        std::cout << "rate " << format_double(r) << ": dice " << format_double(report.mean_dice)
                  << " miou " << format_double(report.mean_miou) << " hd95 "
                  << format_double(report.mean_hd95) << '\n';
    }
    line_plot((dir / "dice_vs_rate.png").string(), "dice vs box rate", "rate", "%", {dice});
    line_plot((dir / "miou_vs_rate.png").string(), "miou vs box rate", "rate", "%", {miou});
    line_plot((dir / "hd95_vs_rate.png").string(), "hd95 vs box rate", "rate", "px", {hd});
    write_manifest(dir, cfg, {{"checkpoint", ckpt_path}, {"rates", std::to_string(rates.size())}});
    std::cout << "run_dir: " << dir.string() << '\n';
    return 0;
}

int cmd_synth(int64_t count, int64_t size, std::uint64_t seed, const std::string& outdir) {
    const auto samples = gen_synthetic(count, size, seed);
    save_corpus(samples, outdir,
                {{"count", std::to_string(count)},
                 {"size", std::to_string(size)},
                 {"seed", std::to_string(seed)}});
    std::cout << "wrote " << samples.size() << " samples under " << outdir << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"box-promptable few-exemplar segmentation workbench"};
    app.require_subcommand(1);

    auto* train_cmd = app.add_subcommand("train", "train adapters on an exemplar split");
    add_common_options(train_cmd);

    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on the held-out split");
    add_common_options(eval_cmd);
    std::string eval_ckpt;
    eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();

    auto* ablate_cmd = app.add_subcommand("ablate", "train and compare component variants");
    add_common_options(ablate_cmd);
    std::vector<std::string> variants;
    ablate_cmd->add_option("--variant", variants,
                           "toggle set, e.g. hfa | hfa,msfa | hfa,msfa,selector,nobias");

    auto* sweep_cmd = app.add_subcommand("sweep-rate", "evaluate one checkpoint across box rates");
    add_common_options(sweep_cmd);
    std::string sweep_ckpt, sweep_rates = "1.0,0.95,0.9,0.8,0.7,0.6";
    sweep_cmd->add_option("--checkpoint", sweep_ckpt, "checkpoint file")->required();
    sweep_cmd->add_option("--rates", sweep_rates, "comma-separated rates in (0.5, 1.0]");

    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic corpus");
    int64_t synth_count = 40, synth_size = 64;
    std::uint64_t synth_seed = 1234;
    std::string synth_out = "synthetic";
    synth_cmd->add_option("--count", synth_count, "number of images");
    synth_cmd->add_option("--size", synth_size, "image side in pixels (>= 32)");
    synth_cmd->add_option("--seed", synth_seed, "corpus seed");
    synth_cmd->add_option("--outdir", synth_out, "output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (train_cmd->parsed()) return cmd_train();
        if (eval_cmd->parsed()) return cmd_eval(eval_ckpt);
        if (ablate_cmd->parsed()) return cmd_ablate(variants);
        if (sweep_cmd->parsed()) return cmd_sweep_rate(sweep_ckpt, sweep_rates);
        if (synth_cmd->parsed()) return cmd_synth(synth_count, synth_size, synth_seed, synth_out);
    } catch (const Error& e) {
        std::cerr << e.what() << '\n';  // "<class>: <detail>" on one line
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "InternalError: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
