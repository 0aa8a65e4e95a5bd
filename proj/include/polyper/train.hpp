#pragma once

#include <string>
#include <vector>

#include "polyper/config.hpp"
#include "polyper/metrics.hpp"
#include "polyper/model.hpp"

namespace polyper {

struct TrainResult {
    double best_val_dice = 0.0;
    double best_val_iou = 0.0;
    int best_step = 0;
    double final_loss = 0.0;
    std::string checkpoint_path;
    std::string log_path;
    std::vector<double> ema_history;  // one entry per step
    double elapsed_seconds = 0.0;
};

/// Threshold the final logits of one forward pass at probability 0.5.
BinaryMask predict_mask(const PolyperModel<float>& model, const Sample& sample, Mode mode, int stages_k);

/// Materialize the configured dataset split (synthetic or folder-backed).
std::vector<Sample> load_dataset(const RunConfig& cfg, bool val);

EvalReport eval_model(const PolyperModel<float>& model, const std::vector<Sample>& data, Mode mode,
                      int stages_k);

/// Seeded full training run; writes metrics.log, train_report.json, and the
/// best-by-validation-dice checkpoint under the resolved output directory.
/// `echo` mirrors log lines to stdout.
TrainResult train(const RunConfig& cfg, bool echo = false);

}  // namespace polyper
