#pragma once

#include <string>
#include <vector>

#include "polyper/data.hpp"

namespace polyper {

struct OverlayEntry {
    std::string id;
    bool empty_prediction = false;
    std::vector<std::string> files;  // the five emitted file names
};

/// Render qualitative results for a trained checkpoint: per sample the raw
/// input, ground-truth and prediction overlays, the three-color partition of
/// the initial mask at base resolution, and per-stage mean-activation
/// heatmaps. An empty prediction leaves the prediction overlay identical to
/// the input; manifest.json carries the legend and per-sample flags.
/// `limit` > 0 caps the number of samples.
std::vector<OverlayEntry> emit_overlays(const std::string& checkpoint_path, const std::vector<Sample>& data,
                                        const std::string& out_dir, int limit = 0);

}  // namespace polyper
