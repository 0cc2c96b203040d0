#include "testing.hpp"

#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "segadapt/plotting.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using testutil::CmdResult;
using testutil::TempDir;

namespace {

std::string cli() { return SEGADAPT_CLI_PATH; }

// the driver prints "run_dir: <path>"; grab the last such line
std::string run_dir_of(const std::string& output) {
    const auto pos = output.rfind("run_dir: ");
    REQUIRE(pos != std::string::npos);
    const auto start = pos + 9;
    const auto end = output.find('\n', start);
    return output.substr(start, end - start);
}

std::string base_flags(const TempDir& tmp, const std::string& out_sub) {
    return " --profile desk32 --synth-count 6 --exemplars 2 --seed 3 --out-root " +
           tmp.str(out_sub);
}

}  // namespace

TEST_CASE("the top-level help names every subcommand") {
    TempDir tmp;
    const auto r = testutil::run_cmd(cli() + " --help", tmp);
    CHECK(r.status == 0);
    for (const char* name : {"train", "eval", "ablate", "sweep-rate", "synth"}) {
        CAPTURE(name);
        CHECK(r.output.find(name) != std::string::npos);
    }
    const auto bare = testutil::run_cmd(cli(), tmp);
    CHECK(bare.status != 0);
    CHECK(bare.output.find("subcommand") != std::string::npos);
}

TEST_CASE("synth writes the same corpus bytes for the same seed") {
    TempDir tmp;
    const auto gen = [&](const std::string& sub) {
        return testutil::run_cmd(
            cli() + " synth --count 6 --size 48 --seed 7 --outdir " + tmp.str(sub), tmp);
    };
    const auto a = gen("a");
    REQUIRE(a.status == 0);
    CHECK(a.output.find("wrote 6 samples under") != std::string::npos);
    const auto b = gen("b");
    REQUIRE(b.status == 0);

    CHECK(testutil::read_text(tmp.str("a/manifest.json")) ==
          testutil::read_text(tmp.str("b/manifest.json")));
    for (int i = 0; i < 6; ++i) {
        char name[16];
        std::snprintf(name, sizeof(name), "%04d.png", i);
        CAPTURE(name);
        CHECK(testutil::read_text(tmp.str("a/images/") + name) ==
              testutil::read_text(tmp.str("b/images/") + name));
        CHECK(testutil::read_text(tmp.str("a/masks/") + name) ==
              testutil::read_text(tmp.str("b/masks/") + name));
    }

    const auto empty = testutil::run_cmd(
        cli() + " synth --count 0 --size 48 --outdir " + tmp.str("empty"), tmp);
    CHECK(empty.status == 0);
    CHECK(empty.output.find("wrote 0 samples") != std::string::npos);

    const auto tiny = testutil::run_cmd(
        cli() + " synth --count 1 --size 16 --outdir " + tmp.str("tiny"), tmp);
    CHECK(tiny.status == 1);
    CHECK(tiny.output.find("InvalidConfig: synthetic size must be >= 32") != std::string::npos);
}

TEST_CASE("train leaves a complete run directory behind") {
    TempDir tmp;
    const auto r =
        testutil::run_cmd(cli() + " train --epochs 2" + base_flags(tmp, "out"), tmp);
    REQUIRE(r.status == 0);
    CHECK(r.output.find("stop: ") != std::string::npos);
    CHECK(r.output.find("held_out: dice ") != std::string::npos);

    const fs::path dir = run_dir_of(r.output);
    for (const char* name : {"manifest.txt", "epochs.csv", "metrics.csv", "best.ckpt",
                             "summary.json", "train_loss.png", "val_dice.png"}) {
        CAPTURE(name);
        CHECK(fs::exists(dir / name));
    }

    const auto manifest = testutil::read_text((dir / "manifest.txt").string());
    CHECK(manifest.find("profile = desk32\n") != std::string::npos);
    CHECK(manifest.find("config_hash = ") != std::string::npos);
    CHECK(manifest.find("lr_decay_interpretation = weight decay 0.01 on the optimizer; "
                        "lr multiplied by lr_gamma every lr_step epochs\n") !=
          std::string::npos);
    CHECK(manifest.find("frozen_hash_before = ") != std::string::npos);
    CHECK(manifest.find("train_tiles = 1") != std::string::npos);
    CHECK(manifest.find("val_tiles = 1") != std::string::npos);

    const auto epochs = testutil::read_text((dir / "epochs.csv").string());
    CHECK(epochs.rfind("epoch,train_loss,val_dice,lr\n", 0) == 0);
    CHECK(std::count(epochs.begin(), epochs.end(), '\n') == 3);  // header + 2 epochs

    const auto summary = nlohmann::json::parse(testutil::read_text((dir / "summary.json").string()));
    CHECK(summary["setting"] == "D");
    CHECK(summary["samples"] == 4);  // 6 volumes minus 2 exemplars
    CHECK(summary["mean_dice"].is_number());

    // PNG plots carry the magic header
    const auto plot = testutil::read_text((dir / "train_loss.png").string());
    REQUIRE(plot.size() > 8);
    CHECK(plot.compare(0, 4, "\x89PNG") == 0);
}

TEST_CASE("identical train invocations reproduce their logs byte for byte") {
    TempDir tmp;
    const auto run = [&](const std::string& sub) {
        const auto r =
            testutil::run_cmd(cli() + " train --epochs 2" + base_flags(tmp, sub), tmp);
        REQUIRE(r.status == 0);
        return fs::path(run_dir_of(r.output));
    };
    const auto a = run("a");
    const auto b = run("b");
    const auto text_a = testutil::read_text((a / "epochs.csv").string());
    CHECK(!text_a.empty());
    CHECK(text_a == testutil::read_text((b / "epochs.csv").string()));
    CHECK(testutil::read_text((a / "metrics.csv").string()) ==
          testutil::read_text((b / "metrics.csv").string()));
}

TEST_CASE("config files merge with flag overrides") {
    TempDir tmp;
    const auto cfg_path = tmp.str("run.cfg");
    std::ofstream(cfg_path) << "profile = desk32\nepochs = 50\nsynth_count = 6\n"
                               "exemplars = 2\nseed = 3\n";
    const auto r = testutil::run_cmd(cli() + " train --config " + cfg_path +
                                         " --epochs 1 --out-root " + tmp.str("out"),
                                     tmp);
    REQUIRE(r.status == 0);
    const fs::path dir = run_dir_of(r.output);
    const auto manifest = testutil::read_text((dir / "manifest.txt").string());
    CHECK(manifest.find("epochs = 1\n") != std::string::npos);  // the flag wins

    std::ofstream(tmp.str("bad.cfg")) << "warp = 1\n";
    const auto bad =
        testutil::run_cmd(cli() + " train --config " + tmp.str("bad.cfg"), tmp);
    CHECK(bad.status == 1);
    CHECK(bad.output.find("InvalidConfig: unknown config key 'warp'") != std::string::npos);
}

TEST_CASE("an out-of-range box rate fails before any work starts") {
    TempDir tmp;
    const auto r = testutil::run_cmd(
        cli() + " train --bbox-rate 0.4" + base_flags(tmp, "out"), tmp);
    CHECK(r.status == 1);
    CHECK(r.output.find("InvalidRate: bbox_rate must lie in (0.5, 1.0], got 0.4") !=
          std::string::npos);
    CHECK(!fs::exists(tmp.str("out")));  // no run directory was created
}

TEST_CASE("eval on the training checkpoint reproduces the held-out metrics") {
    TempDir tmp;
    const auto train_run =
        testutil::run_cmd(cli() + " train --epochs 2" + base_flags(tmp, "out"), tmp);
    REQUIRE(train_run.status == 0);
    const fs::path train_dir = run_dir_of(train_run.output);

    const auto eval_run = testutil::run_cmd(cli() + " eval --checkpoint " +
                                                (train_dir / "best.ckpt").string() +
                                                base_flags(tmp, "out-eval"),
                                            tmp);
    REQUIRE(eval_run.status == 0);
    CHECK(eval_run.output.find("eval: dice ") != std::string::npos);
    const fs::path eval_dir = run_dir_of(eval_run.output);
    CHECK(testutil::read_text((eval_dir / "metrics.csv").string()) ==
          testutil::read_text((train_dir / "metrics.csv").string()));
    const auto manifest = testutil::read_text((eval_dir / "manifest.txt").string());
    CHECK(manifest.find("tensors_missing = 0") != std::string::npos);
    CHECK(manifest.find("tensors_unexpected = 0") != std::string::npos);

    // a different geometry must refuse the stored tensors
    const auto clash = testutil::run_cmd(
        cli() + " eval --checkpoint " + (train_dir / "best.ckpt").string() +
            " --profile desk --synth-count 6 --exemplars 2 --seed 3 --out-root " +
            tmp.str("out-clash"),
        tmp);
    CHECK(clash.status == 1);
    CHECK(clash.output.find("GeometryMismatch: ") != std::string::npos);

    const auto absent = testutil::run_cmd(
        cli() + " eval --checkpoint " + tmp.str("nowhere.ckpt") + base_flags(tmp, "x"), tmp);
    CHECK(absent.status == 1);
    CHECK(absent.output.find("FileNotFound: ") != std::string::npos);
}

TEST_CASE("ablate trains each requested variant and tabulates them") {
    TempDir tmp;
    const auto r = testutil::run_cmd(cli() + " ablate --epochs 1 --variant hfa --variant none" +
                                         base_flags(tmp, "out"),
                                     tmp);
    REQUIRE(r.status == 0);
    const fs::path dir = run_dir_of(r.output);
    const auto csv = testutil::read_text((dir / "ablation.csv").string());
    CHECK(csv.rfind("variant,dice,miou,hd95,best_epoch,stop_reason\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
    CHECK(csv.find("\nhfa,") != std::string::npos);
    CHECK(csv.find("\nnone,") != std::string::npos);
    CHECK(fs::exists(dir / "epochs-hfa.csv"));
    CHECK(fs::exists(dir / "best-hfa.ckpt"));
    CHECK(fs::exists(dir / "epochs-none.csv"));

    // a selector without its streams is rejected before any training
    const auto invalid = testutil::run_cmd(
        cli() + " ablate --variant selector" + base_flags(tmp, "out-bad"), tmp);
    CHECK(invalid.status == 1);
    CHECK(invalid.output.find(
              "InvalidCombination: the selector requires both adapter streams") !=
          std::string::npos);
    CHECK(!fs::exists(tmp.str("out-bad")));

    const auto unknown = testutil::run_cmd(
        cli() + " ablate --variant warp" + base_flags(tmp, "out-warp"), tmp);
    CHECK(unknown.status == 1);
    CHECK(unknown.output.find("InvalidConfig: unknown ablation toggle 'warp'") !=
          std::string::npos);
}

TEST_CASE("sweep-rate orders, deduplicates, and plots the rate grid") {
    TempDir tmp;
    const auto train_run =
        testutil::run_cmd(cli() + " train --epochs 1" + base_flags(tmp, "out"), tmp);
    REQUIRE(train_run.status == 0);
    const auto ckpt = (fs::path(run_dir_of(train_run.output)) / "best.ckpt").string();

    const auto sweep = testutil::run_cmd(cli() + " sweep-rate --checkpoint " + ckpt +
                                             " --rates 0.9,0.7,0.9,0.8" +
                                             base_flags(tmp, "out-sweep"),
                                         tmp);
    REQUIRE(sweep.status == 0);
    CHECK(sweep.output.find("warning: duplicate rates dropped (1)") != std::string::npos);
    const fs::path dir = run_dir_of(sweep.output);
    const auto csv = testutil::read_text((dir / "rate_sweep.csv").string());
    CHECK(csv.rfind("rate,dice,miou,hd95\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
    // rows come out in descending rate order
    const auto p9 = csv.find("\n0.9,");
    const auto p8 = csv.find("\n0.8,");
    const auto p7 = csv.find("\n0.7,");
    REQUIRE(p9 != std::string::npos);
    REQUIRE(p8 != std::string::npos);
    REQUIRE(p7 != std::string::npos);
    CHECK(p9 < p8);
    CHECK(p8 < p7);
    for (const char* name : {"dice_vs_rate.png", "miou_vs_rate.png", "hd95_vs_rate.png"}) {
        CAPTURE(name);
        CHECK(fs::exists(dir / name));
    }

    const auto bad = testutil::run_cmd(cli() + " sweep-rate --checkpoint " + ckpt +
                                           " --rates 0.4" + base_flags(tmp, "x1"),
                                       tmp);
    CHECK(bad.status == 1);
    CHECK(bad.output.find("InvalidRate: sweep rate must lie in (0.5, 1.0], got 0.4") !=
          std::string::npos);

    const auto none = testutil::run_cmd(cli() + " sweep-rate --checkpoint " + ckpt +
                                            " --rates '' " + base_flags(tmp, "x2"),
                                        tmp);
    CHECK(none.status == 1);
    CHECK(none.output.find("InvalidConfig: no rates given") != std::string::npos);
}

TEST_CASE("line plots render to png and reject malformed series") {
    TempDir tmp;
    segadapt::Series s{"score", {0.0, 1.0, 2.0}, {10.0, 30.0, 20.0}};
    const auto path = tmp.str("plot.png");
    segadapt::line_plot(path, "score over time", "epoch", "%", {s});
    const auto bytes = testutil::read_text(path);
    REQUIRE(bytes.size() > 8);
    CHECK(bytes.compare(0, 4, "\x89PNG") == 0);

    segadapt::Series lopsided{"bad", {0.0, 1.0}, {5.0}};
    CHECK_THROWS_AS(segadapt::line_plot(tmp.str("bad.png"), "t", "x", "y", {lopsided}),
                    segadapt::ShapeMismatch);
    CHECK_THROWS_AS(segadapt::line_plot(tmp.str("empty.png"), "t", "x", "y", {}),
                    segadapt::InvalidConfig);

    // a flat series still renders (degenerate range is padded internally)
    segadapt::Series flat{"flat", {0.0, 1.0}, {4.0, 4.0}};
    CHECK_NOTHROW(segadapt::line_plot(tmp.str("flat.png"), "t", "x", "y", {flat}));
}
