#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "polyper/data.hpp"
#include "polyper/model.hpp"

namespace polyper {

/// Every tunable of a run in one validated record. Text form is flat
/// `key=value` lines; unknown keys are rejected outright.
struct RunConfig {
    // model
    std::string mode = "full";
    int stages_k = 4;
    int iterations = 4;
    int decoder_width = 32;
    int spatial_heads = 4;
    int channel_heads = 4;
    std::array<int, 4> encoder_channels{32, 64, 128, 256};

    // optimizer
    std::string optimizer = "adamw";  // adamw | sgd
    double lr = 2e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double momentum = 0.9;
    double weight_decay = 1e-4;

    // schedule
    int steps = 2000;
    int batch_size = 6;
    double warmup_frac = 0.1;  // fraction of steps trained without refinement
    int val_interval = 100;
    int log_interval = 10;
    std::uint64_t seed = 0;

    // data
    std::string data = "synth";  // synth | folder
    int input_size = 0;          // 0 = source default: 64 synthetic, 224 folder
    std::uint64_t data_seed = 42;
    std::string train_images, train_masks, val_images, val_masks;
    int synth_train = 200;
    int synth_val = 50;
    int synth_blobs_min = 1;
    int synth_blobs_max = 3;
    double synth_proportion_lo = 0.01;
    double synth_proportion_hi = 0.25;
    double synth_blur_lo = 0.4;
    double synth_blur_hi = 1.6;
    double synth_contrast_lo = 0.35;
    double synth_contrast_hi = 0.9;
    double synth_noise = 0.06;
    bool augment = true;

    // output
    std::string out_dir = "runs/default";

    int resolved_input_size() const { return input_size > 0 ? input_size : (data == "folder" ? 224 : 64); }
    Mode parsed_mode() const { return parse_mode(mode); }
    ModelConfig model() const;
    SynthSpec synth_spec(bool val) const;
    /// out_dir, placed under $POLYPER_OUT_ROOT when that is set and the
    /// configured path is relative.
    std::string resolved_out_dir() const;
    void validate() const;
    /// Canonical echo: every key in a fixed order, round-trippable.
    std::string to_text() const;
};

/// Parse `key=value` lines ('#' starts a comment). Later keys override
/// earlier ones; unknown keys or malformed values raise ConfigError.
RunConfig parse_config_text(const std::string& text);
RunConfig load_config_file(const std::string& path);
void apply_override(RunConfig& cfg, const std::string& assignment);  // "key=value"

}  // namespace polyper
