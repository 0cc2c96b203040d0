#include "segadapt/config.hpp"

#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <torch/torch.h>

namespace segadapt {

namespace {

struct Profile {
    int64_t input_size, patch_size, embed_dim, num_blocks, num_heads;
};

const std::map<std::string, Profile>& profiles() {
    static const std::map<std::string, Profile> table = {
        {"desk", {64, 8, 96, 4, 3}},
        {"desk32", {32, 4, 48, 2, 3}},
        {"sam-vit-b", {1024, 16, 768, 12, 12}},
    };
    return table;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

int64_t parse_int(const std::string& key, const std::string& value) {
    try {
        size_t pos = 0;
        const auto v = std::stoll(value, &pos);
        if (pos != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw InvalidConfig("key '" + key + "' expects an integer, got '" + value + "'");
    }
}

std::uint64_t parse_uint(const std::string& key, const std::string& value) {
    try {
        size_t pos = 0;
        const auto v = std::stoull(value, &pos);
        if (pos != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw InvalidConfig("key '" + key + "' expects an unsigned integer, got '" + value + "'");
    }
}

double parse_real(const std::string& key, const std::string& value) {
    try {
        size_t pos = 0;
        const auto v = std::stod(value, &pos);
        if (pos != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw InvalidConfig("key '" + key + "' expects a real number, got '" + value + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw InvalidConfig("key '" + key + "' expects true/false, got '" + value + "'");
}

}  // namespace

void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "profile") cfg.profile = value;
    else if (key == "input_size") cfg.input_size = parse_int(key, value);
    else if (key == "patch_size") cfg.patch_size = parse_int(key, value);
    else if (key == "embed_dim") cfg.embed_dim = parse_int(key, value);
    else if (key == "num_blocks") cfg.num_blocks = parse_int(key, value);
    else if (key == "num_heads") cfg.num_heads = parse_int(key, value);
    else if (key == "use_hfa") cfg.use_hfa = parse_bool(key, value);
    else if (key == "use_msfa") cfg.use_msfa = parse_bool(key, value);
    else if (key == "use_selector") cfg.use_selector = parse_bool(key, value);
    else if (key == "selector_bias") cfg.selector_bias = parse_bool(key, value);
    else if (key == "freeze_decoder") cfg.freeze_decoder = parse_bool(key, value);
    else if (key == "hfa_tau") cfg.hfa_tau = parse_real(key, value);
    else if (key == "hfa_hidden") cfg.hfa_hidden = parse_int(key, value);
    else if (key == "msfa_reduction") cfg.msfa_reduction = parse_int(key, value);
    else if (key == "msfa_per_layer") cfg.msfa_per_layer = parse_bool(key, value);
    else if (key == "prompt_setting") {
        const auto v = trim(value);
        if (v.size() != 1) throw InvalidConfig("prompt_setting expects one of A, B, C, D");
        cfg.prompt_setting = v[0];
    } else if (key == "bbox_rate") cfg.bbox_rate = parse_real(key, value);
    else if (key == "lr") cfg.lr = parse_real(key, value);
    else if (key == "weight_decay") cfg.weight_decay = parse_real(key, value);
    else if (key == "lr_gamma") cfg.lr_gamma = parse_real(key, value);
    else if (key == "lr_step") cfg.lr_step = parse_int(key, value);
    else if (key == "epochs") cfg.epochs = parse_int(key, value);
    else if (key == "batch") cfg.batch = parse_int(key, value);
    else if (key == "patience") cfg.patience = parse_int(key, value);
    else if (key == "alpha") cfg.alpha = parse_real(key, value);
    else if (key == "beta") cfg.beta = parse_real(key, value);
    else if (key == "val_fraction") cfg.val_fraction = parse_real(key, value);
    else if (key == "exemplars") cfg.exemplars = parse_int(key, value);
    else if (key == "seed") cfg.seed = parse_uint(key, value);
    else if (key == "fixed_math") cfg.fixed_math = parse_bool(key, value);
    else if (key == "threads") cfg.threads = parse_int(key, value);
    else if (key == "data_kind") cfg.data_kind = value;
    else if (key == "data_root") cfg.data_root = value;
    else if (key == "synth_count") cfg.synth_count = parse_int(key, value);
    else if (key == "synth_size") cfg.synth_size = parse_int(key, value);
    else if (key == "synth_seed") cfg.synth_seed = parse_uint(key, value);
    else if (key == "out_root") cfg.out_root = value;
    else throw InvalidConfig("unknown config key '" + key + "'");
}

RunConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FileNotFound("cannot open config file: " + path);
    RunConfig cfg;
    std::string line;
    int64_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw InvalidConfig("line " + std::to_string(lineno) + " of " + path +
                                " is not a 'key = value' assignment");
        }
        apply_config_entry(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
}

AblationMode resolve_mode(bool use_hfa, bool use_msfa, bool use_selector) {
    if (use_selector && !(use_hfa && use_msfa)) {
        throw InvalidCombination("the selector requires both adapter streams to be enabled");
    }
    if (use_selector) return AblationMode::selector;
    if (use_hfa && use_msfa) return AblationMode::sum;
    if (use_hfa) return AblationMode::hfa_only;
    if (use_msfa) return AblationMode::msfa_only;
    return AblationMode::none;
}

EncoderConfig RunConfig::encoder_config() const {
    const auto it = profiles().find(profile);
    if (it == profiles().end()) {
        throw InvalidConfig("unknown profile '" + profile + "' (expected desk, desk32, sam-vit-b)");
    }
    EncoderConfig enc;
    enc.input_size = input_size > 0 ? input_size : it->second.input_size;
    enc.patch_size = patch_size > 0 ? patch_size : it->second.patch_size;
    enc.embed_dim = embed_dim > 0 ? embed_dim : it->second.embed_dim;
    enc.num_blocks = num_blocks > 0 ? num_blocks : it->second.num_blocks;
    enc.num_heads = num_heads > 0 ? num_heads : it->second.num_heads;
    return enc;
}

ModelConfig RunConfig::model_config() const {
    ModelConfig mc;
    mc.encoder = encoder_config();
    mc.hfa.tau = hfa_tau;
    mc.hfa.hidden_dim = hfa_hidden;
    mc.msfa.channel_reduction = msfa_reduction;
    mc.msfa.per_layer = msfa_per_layer;
    mc.mode = resolve_mode(use_hfa, use_msfa, use_selector);
    mc.selector_bias = selector_bias;
    mc.freeze_decoder = freeze_decoder;
    return mc;
}

TrainConfig RunConfig::train_config() const {
    TrainConfig tc;
    tc.lr = lr;
    tc.weight_decay = weight_decay;
    tc.lr_gamma = lr_gamma;
    tc.lr_step = lr_step;
    tc.epochs = epochs;
    tc.batch = batch;
    tc.patience = patience;
    tc.alpha = alpha;
    tc.beta = beta;
    tc.setting = PromptSetting::from_label(prompt_setting);
    tc.rate = bbox_rate;
    tc.val_fraction = val_fraction;
    tc.seed = seed;
    return tc;
}

void RunConfig::validate() const {
    model_config().validate();  // geometry + toggle combination
    train_config().validate();
    PromptSetting::from_label(prompt_setting);
    if (bbox_rate <= 0.5 || bbox_rate > 1.0) {
        throw InvalidRate("bbox_rate must lie in (0.5, 1.0], got " + format_double(bbox_rate));
    }
    if (exemplars < 1) throw InvalidConfig("exemplars must be >= 1");
    if (threads < 1) throw InvalidConfig("threads must be >= 1");
    if (data_kind != "synthetic" && data_kind != "png" && data_kind != "nifti") {
        throw InvalidConfig("data_kind must be synthetic, png, or nifti");
    }
    if (data_kind != "synthetic" && data_root.empty()) {
        throw InvalidConfig("data_root is required for data_kind " + data_kind);
    }
    if (synth_count < 0) throw InvalidConfig("synth_count must be >= 0");
    const auto sz = synth_size > 0 ? synth_size : encoder_config().input_size;
    if (data_kind == "synthetic" && sz < 32) {
        throw InvalidConfig("synth_size must be >= 32, got " + std::to_string(sz));
    }
}

std::string RunConfig::dump() const {
    std::ostringstream out;
    const auto enc = encoder_config();
    out << "profile = " << profile << '\n'
        << "input_size = " << enc.input_size << '\n'
        << "patch_size = " << enc.patch_size << '\n'
        << "embed_dim = " << enc.embed_dim << '\n'
        << "num_blocks = " << enc.num_blocks << '\n'
        << "num_heads = " << enc.num_heads << '\n'
        << "use_hfa = " << (use_hfa ? "true" : "false") << '\n'
        << "use_msfa = " << (use_msfa ? "true" : "false") << '\n'
        << "use_selector = " << (use_selector ? "true" : "false") << '\n'
        << "selector_bias = " << (selector_bias ? "true" : "false") << '\n'
        << "freeze_decoder = " << (freeze_decoder ? "true" : "false") << '\n'
        << "hfa_tau = " << format_double(hfa_tau) << '\n'
        << "hfa_hidden = " << hfa_hidden << '\n'
        << "msfa_reduction = " << msfa_reduction << '\n'
        << "msfa_per_layer = " << (msfa_per_layer ? "true" : "false") << '\n'
        << "prompt_setting = " << prompt_setting << '\n'
        << "bbox_rate = " << format_double(bbox_rate) << '\n'
        << "lr = " << format_double(lr) << '\n'
        << "weight_decay = " << format_double(weight_decay) << '\n'
        << "lr_gamma = " << format_double(lr_gamma) << '\n'
        << "lr_step = " << lr_step << '\n'
        << "epochs = " << epochs << '\n'
        << "batch = " << batch << '\n'
        << "patience = " << patience << '\n'
        << "alpha = " << format_double(alpha) << '\n'
        << "beta = " << format_double(beta) << '\n'
        << "val_fraction = " << format_double(val_fraction) << '\n'
        << "exemplars = " << exemplars << '\n'
        << "seed = " << seed << '\n'
        << "fixed_math = " << (fixed_math ? "true" : "false") << '\n'
        << "threads = " << threads << '\n'
        << "data_kind = " << data_kind << '\n'
        << "data_root = " << data_root << '\n'
        << "synth_count = " << synth_count << '\n'
        << "synth_size = " << synth_size << '\n'
        << "synth_seed = " << synth_seed << '\n';
    return out.str();
}

std::uint64_t RunConfig::content_hash() const {
    const auto text = dump();
    return fnv1a64(text.data(), text.size());
}

std::string RunConfig::resolved_out_root() const {
    if (!out_root.empty()) return out_root;
    if (const char* env = std::getenv("SEGADAPT_OUT_ROOT")) {
        if (*env) return env;
    }
    return "runs";
}

void apply_fixed_math(const RunConfig& cfg) {
    const int threads = cfg.fixed_math ? 1 : static_cast<int>(cfg.threads);
    torch::set_num_threads(threads);
    try {
        at::set_num_interop_threads(1);
    } catch (const c10::Error&) {
        // interop pool already spun up; the intra-op setting above still applies
    }
}

}  // namespace segadapt
