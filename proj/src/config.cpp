#include "polyper/config.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "polyper/error.hpp"

namespace polyper {

namespace {

int to_int(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const int x = std::stoi(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': not an integer: " + v);
    }
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const unsigned long long x = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': not an unsigned integer: " + v);
    }
}

double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': not a number: " + v);
    }
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("config key '" + key + "': not a boolean: " + v);
}

std::array<int, 4> to_channels(const std::string& key, const std::string& v) {
    std::array<int, 4> out{};
    std::stringstream ss(v);
    std::string part;
    int i = 0;
    while (std::getline(ss, part, ',')) {
        if (i >= 4) throw ConfigError("config key '" + key + "': expected 4 comma-separated values");
        out[i++] = to_int(key, part);
    }
    if (i != 4) throw ConfigError("config key '" + key + "': expected 4 comma-separated values");
    return out;
}

std::string fmt_double(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = {
        {"mode", [](RunConfig& c, const std::string&, const std::string& v) { c.mode = v; }},
        {"stages_k", [](RunConfig& c, const std::string& k, const std::string& v) { c.stages_k = to_int(k, v); }},
        {"iterations",
         [](RunConfig& c, const std::string& k, const std::string& v) { c.iterations = to_int(k, v); }},
        {"decoder_width",
         [](RunConfig& c, const std::string& k, const std::string& v) { c.decoder_width = to_int(k, v); }},
        {"spatial_heads",
         [](RunConfig& c, const std::string& k, const std::string& v) { c.spatial_heads = to_int(k, v); }},
        {"channel_heads",
         [](RunConfig& c, const std::string& k, const std::string& v) { c.channel_heads = to_int(k, v); }},
        {"encoder_channels",
         [](RunConfig& c, const std::string& k, const std::string& v) { c.encoder_channels = to_channels(k, v); }},
        {"optimizer", [](RunConfig& c, const std::string&, const std::string& v) { c.optimizer = v; }},
        {"lr", [](RunConfig& c, const std::string& k, const std::string& v) { c.lr = to_double(k, v); }},
        {"beta1", [](RunConfig& c, const std::string& k, const std::string& v) { c.beta1 = to_double(k, v); }},
        {"beta2", [](RunConfig& c, const std::string& k, const std::string& v) { c.beta2 = to_double(k, v); }},
        {"momentum",
         [](RunConfig& c, const std::string& k, const std::string& v) { c.momentum = to_double(k, v); }},
        {"weight_decay",
         [](RunConfig& c, const std::string& k, const std::string& v) { c.weight_decay = to_double(k, v); }},
        {"steps", [](RunConfig& c, const std::string& k, const std::string& v) { c.steps = to_int(k, v); }},
        {"batch_size",
         [](RunConfig& c, const std::string& k, const std::string& v) { c.batch_size = to_int(k, v); }},
        {"warmup_frac",
         [](RunConfig& c, const std::string& k, const std::string& v) { c.warmup_frac = to_double(k, v); }},
        {"val_interval",
         [](RunConfig& c, const std::string& k, const std::string& v) { c.val_interval = to_int(k, v); }},
        {"log_interval",
         [](RunConfig& c, const std::string& k, const std::string& v) { c.log_interval = to_int(k, v); }},
        {"seed", [](RunConfig& c, const std::string& k, const std::string& v) { c.seed = to_u64(k, v); }},
        {"data", [](RunConfig& c, const std::string&, const std::string& v) { c.data = v; }},
        {"input_size",
         [](RunConfig& c, const std::string& k, const std::string& v) { c.input_size = to_int(k, v); }},
        {"data_seed",
         [](RunConfig& c, const std::string& k, const std::string& v) { c.data_seed = to_u64(k, v); }},
        {"train_images", [](RunConfig& c, const std::string&, const std::string& v) { c.train_images = v; }},
        {"train_masks", [](RunConfig& c, const std::string&, const std::string& v) { c.train_masks = v; }},
        {"val_images", [](RunConfig& c, const std::string&, const std::string& v) { c.val_images = v; }},
        {"val_masks", [](RunConfig& c, const std::string&, const std::string& v) { c.val_masks = v; }},
        {"synth_train",
         [](RunConfig& c, const std::string& k, const std::string& v) { c.synth_train = to_int(k, v); }},
        {"synth_val",
         [](RunConfig& c, const std::string& k, const std::string& v) { c.synth_val = to_int(k, v); }},
        {"synth_blobs_min",
         [](RunConfig& c, const std::string& k, const std::string& v) { c.synth_blobs_min = to_int(k, v); }},
        {"synth_blobs_max",
         [](RunConfig& c, const std::string& k, const std::string& v) { c.synth_blobs_max = to_int(k, v); }},
        {"synth_proportion_lo",
         [](RunConfig& c, const std::string& k, const std::string& v) { c.synth_proportion_lo = to_double(k, v); }},
        {"synth_proportion_hi",
         [](RunConfig& c, const std::string& k, const std::string& v) { c.synth_proportion_hi = to_double(k, v); }},
        {"synth_blur_lo",
         [](RunConfig& c, const std::string& k, const std::string& v) { c.synth_blur_lo = to_double(k, v); }},
        {"synth_blur_hi",
         [](RunConfig& c, const std::string& k, const std::string& v) { c.synth_blur_hi = to_double(k, v); }},
        {"synth_contrast_lo",
         [](RunConfig& c, const std::string& k, const std::string& v) { c.synth_contrast_lo = to_double(k, v); }},
        {"synth_contrast_hi",
         [](RunConfig& c, const std::string& k, const std::string& v) { c.synth_contrast_hi = to_double(k, v); }},
        {"synth_noise",
         [](RunConfig& c, const std::string& k, const std::string& v) { c.synth_noise = to_double(k, v); }},
        {"augment",
         [](RunConfig& c, const std::string& k, const std::string& v) { c.augment = to_bool(k, v); }},
        {"out_dir", [](RunConfig& c, const std::string&, const std::string& v) { c.out_dir = v; }},
    };
    return table;
}

}  // namespace

ModelConfig RunConfig::model() const {
    ModelConfig m;
    m.plan.channels = encoder_channels;
    m.decoder_width = decoder_width;
    m.spatial_heads = spatial_heads;
    m.channel_heads = channel_heads;
    m.iterations = iterations;
    return m;
}

SynthSpec RunConfig::synth_spec(bool val) const {
    SynthSpec s;
    s.count = val ? synth_val : synth_train;
    s.image_size = resolved_input_size();
    s.blobs_min = synth_blobs_min;
    s.blobs_max = synth_blobs_max;
    s.proportion_lo = synth_proportion_lo;
    s.proportion_hi = synth_proportion_hi;
    s.blur_lo = synth_blur_lo;
    s.blur_hi = synth_blur_hi;
    s.contrast_lo = synth_contrast_lo;
    s.contrast_hi = synth_contrast_hi;
    s.noise = synth_noise;
    s.seed = data_seed * 2 + (val ? 1 : 0);
    return s;
}

std::string RunConfig::resolved_out_dir() const {
    const char* root = std::getenv("POLYPER_OUT_ROOT");
    if (root && root[0] != '\0' && std::filesystem::path(out_dir).is_relative())
        return (std::filesystem::path(root) / out_dir).string();
    return out_dir;
}

void RunConfig::validate() const {
    parse_mode(mode);
    if (mode == "stages_subset" && (stages_k < 1 || stages_k > 4))
        throw ConfigError("stages_k must be in 1..4");
    if (iterations < 1) throw ConfigError("iterations must be >= 1");
    if (decoder_width < 1) throw ConfigError("decoder_width must be >= 1");
    if (spatial_heads < 1 || channel_heads < 1) throw ConfigError("head counts must be >= 1");
    if (decoder_width % spatial_heads != 0 || decoder_width % channel_heads != 0)
        throw ConfigError("decoder_width must be divisible by both head counts");
    for (int c : encoder_channels)
        if (c < 1) throw ConfigError("encoder_channels must be positive");
    if (optimizer != "adamw" && optimizer != "sgd") throw ConfigError("unknown optimizer: " + optimizer);
    if (lr <= 0.0) throw ConfigError("lr must be > 0");
    if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
    if (steps < 1) throw ConfigError("steps must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (warmup_frac < 0.0 || warmup_frac >= 1.0) throw ConfigError("warmup_frac must be in [0, 1)");
    if (val_interval < 1 || log_interval < 1) throw ConfigError("intervals must be >= 1");
    if (data != "synth" && data != "folder") throw ConfigError("data must be synth or folder");
    if (data == "folder") {
        if (train_images.empty() || train_masks.empty())
            throw ConfigError("folder data requires train_images and train_masks");
        if (val_images.empty() || val_masks.empty())
            throw ConfigError("folder data requires val_images and val_masks");
    }
    const int sz = resolved_input_size();
    if (sz % 32 != 0) throw ConfigError("input_size must be divisible by 32");
    if (data == "synth") synth_spec(false).validate();
}

std::string RunConfig::to_text() const {
    std::ostringstream os;
    os << "mode=" << mode << "\n";
    os << "stages_k=" << stages_k << "\n";
    os << "iterations=" << iterations << "\n";
    os << "decoder_width=" << decoder_width << "\n";
    os << "spatial_heads=" << spatial_heads << "\n";
    os << "channel_heads=" << channel_heads << "\n";
    os << "encoder_channels=" << encoder_channels[0] << "," << encoder_channels[1] << ","
       << encoder_channels[2] << "," << encoder_channels[3] << "\n";
    os << "optimizer=" << optimizer << "\n";
    os << "lr=" << fmt_double(lr) << "\n";
    os << "beta1=" << fmt_double(beta1) << "\n";
    os << "beta2=" << fmt_double(beta2) << "\n";
    os << "momentum=" << fmt_double(momentum) << "\n";
    os << "weight_decay=" << fmt_double(weight_decay) << "\n";
    os << "steps=" << steps << "\n";
    os << "batch_size=" << batch_size << "\n";
    os << "warmup_frac=" << fmt_double(warmup_frac) << "\n";
    os << "val_interval=" << val_interval << "\n";
    os << "log_interval=" << log_interval << "\n";
    os << "seed=" << seed << "\n";
    os << "data=" << data << "\n";
    os << "input_size=" << input_size << "\n";
    os << "data_seed=" << data_seed << "\n";
    os << "train_images=" << train_images << "\n";
    os << "train_masks=" << train_masks << "\n";
    os << "val_images=" << val_images << "\n";
    os << "val_masks=" << val_masks << "\n";
    os << "synth_train=" << synth_train << "\n";
    os << "synth_val=" << synth_val << "\n";
    os << "synth_blobs_min=" << synth_blobs_min << "\n";
    os << "synth_blobs_max=" << synth_blobs_max << "\n";
    os << "synth_proportion_lo=" << fmt_double(synth_proportion_lo) << "\n";
    os << "synth_proportion_hi=" << fmt_double(synth_proportion_hi) << "\n";
    os << "synth_blur_lo=" << fmt_double(synth_blur_lo) << "\n";
    os << "synth_blur_hi=" << fmt_double(synth_blur_hi) << "\n";
    os << "synth_contrast_lo=" << fmt_double(synth_contrast_lo) << "\n";
    os << "synth_contrast_hi=" << fmt_double(synth_contrast_hi) << "\n";
    os << "synth_noise=" << fmt_double(synth_noise) << "\n";
    os << "augment=" << (augment ? "true" : "false") << "\n";
    os << "out_dir=" << out_dir << "\n";
    return os.str();
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("expected key=value, got: " + assignment);
    const std::string key = assignment.substr(0, eq);
    const std::string value = assignment.substr(eq + 1);
    const auto& table = setters();
    const auto it = table.find(key);
    if (it == table.end()) throw ConfigError("unknown config key: " + key);
    it->second(cfg, key, value);
}

RunConfig parse_config_text(const std::string& text) {
    RunConfig cfg;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        // trim
        const auto b = line.find_first_not_of(" \t\r");
        if (b == std::string::npos) continue;
        const auto e = line.find_last_not_of(" \t\r");
        line = line.substr(b, e - b + 1);
        try {
            apply_override(cfg, line);
        } catch (const ConfigError& err) {
            throw ConfigError("line " + std::to_string(lineno) + ": " + err.what());
        }
    }
    return cfg;
}

RunConfig load_config_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file: " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return parse_config_text(ss.str());
}

}  // namespace polyper
