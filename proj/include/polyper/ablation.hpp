#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "polyper/config.hpp"

namespace polyper {

struct VariantOutcome {
    std::string label;
    bool ok = false;
    std::string error;             // set when every seed failed
    std::vector<double> dices;     // best val dice per seed
    std::vector<double> ious;
    double mean_dice = 0.0;
    double std_dice = 0.0;
    double mean_iou = 0.0;
    double std_iou = 0.0;
};

struct AblationTable {
    std::vector<VariantOutcome> rows;
    std::vector<std::uint64_t> seeds;
    std::string footer;
};

/// Translate a variant label into a config patch. Accepted labels: the mode
/// names, `stages=K`, and `T=N` (iteration sweep on top of the base mode).
RunConfig apply_variant(RunConfig base, const std::string& label);

/// Train and evaluate every (variant, seed) pair. A failing run is recorded
/// on its row and the remaining work continues. Writes ablation.csv and
/// ablation.json under the base output directory.
AblationTable run_ablation(const RunConfig& base, const std::vector<std::string>& variants,
                           const std::vector<std::uint64_t>& seeds, bool echo = false);

std::string ablation_json(const AblationTable& table);
void write_ablation_csv(const std::string& path, const AblationTable& table);
std::string format_ablation_text(const AblationTable& table);

}  // namespace polyper
