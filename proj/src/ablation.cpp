#include "polyper/ablation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "polyper/error.hpp"
#include "polyper/train.hpp"

namespace polyper {

namespace {

namespace fs = std::filesystem;

std::string sanitize(const std::string& label) {
    std::string out = label;
    for (char& c : out)
        if (c == '=') c = '-';
    return out;
}

void mean_std(const std::vector<double>& xs, double& mean, double& sd) {
    mean = 0.0;
    sd = 0.0;
    if (xs.empty()) return;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    if (xs.size() < 2) return;
    double acc = 0.0;
    for (double x : xs) acc += (x - mean) * (x - mean);
    sd = std::sqrt(acc / static_cast<double>(xs.size() - 1));
}

}  // namespace

RunConfig apply_variant(RunConfig base, const std::string& label) {
    if (label.rfind("stages=", 0) == 0) {
        base.mode = "stages_subset";
        base.stages_k = std::stoi(label.substr(7));
    } else if (label.rfind("T=", 0) == 0) {
        base.iterations = std::stoi(label.substr(2));
    } else {
        parse_mode(label);  // throws on unknown labels
        base.mode = label;
    }
    base.validate();
    return base;
}

AblationTable run_ablation(const RunConfig& base, const std::vector<std::string>& variants,
                           const std::vector<std::uint64_t>& seeds, bool echo) {
    if (variants.empty()) throw ConfigError("ablation: need at least one variant");
    if (seeds.empty()) throw ConfigError("ablation: need at least one seed");

    AblationTable table;
    table.seeds = seeds;
    table.footer = "full-scale reference configuration: iterations T=4";
    const std::string root = base.resolved_out_dir();
    fs::create_directories(root);

    for (const std::string& label : variants) {
        VariantOutcome row;
        row.label = label;
        for (std::uint64_t seed : seeds) {
            try {
                RunConfig cfg = apply_variant(base, label);
                cfg.seed = seed;
                cfg.out_dir =
                    (fs::path(base.out_dir) / (sanitize(label) + "_seed" + std::to_string(seed))).string();
                const TrainResult res = train(cfg, false);
                row.dices.push_back(res.best_val_dice);
                row.ious.push_back(res.best_val_iou);
                if (echo)
                    std::printf("[ablate] %s seed=%llu val_mdice=%.4f val_miou=%.4f (%.1fs)\n",
                                label.c_str(), static_cast<unsigned long long>(seed), res.best_val_dice,
                                res.best_val_iou, res.elapsed_seconds);
            } catch (const std::exception& e) {
                row.error = e.what();
                if (echo)
                    std::printf("[ablate] %s seed=%llu FAILED: %s\n", label.c_str(),
                                static_cast<unsigned long long>(seed), e.what());
            }
        }
        row.ok = !row.dices.empty();
        mean_std(row.dices, row.mean_dice, row.std_dice);
        mean_std(row.ious, row.mean_iou, row.std_iou);
        table.rows.push_back(std::move(row));
    }

    write_ablation_csv((fs::path(root) / "ablation.csv").string(), table);
    std::ofstream js((fs::path(root) / "ablation.json").string());
    js << ablation_json(table) << "\n";
    return table;
}

std::string ablation_json(const AblationTable& table) {
    nlohmann::json j;
    j["seeds"] = table.seeds;
    j["footer"] = table.footer;
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : table.rows) {
        nlohmann::json row;
        row["variant"] = r.label;
        row["ok"] = r.ok;
        if (!r.error.empty()) row["error"] = r.error;
        row["m_dice_mean"] = r.mean_dice;
        row["m_dice_std"] = r.std_dice;
        row["m_iou_mean"] = r.mean_iou;
        row["m_iou_std"] = r.std_iou;
        row["m_dice_per_seed"] = r.dices;
        row["m_iou_per_seed"] = r.ious;
        rows.push_back(std::move(row));
    }
    j["rows"] = rows;
    return j.dump(2);
}

void write_ablation_csv(const std::string& path, const AblationTable& table) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot write ablation table: " + path);
    os << "variant,m_dice_mean,m_dice_std,m_iou_mean,m_iou_std,seeds,status\n";
    for (const auto& r : table.rows) {
        char buf[128];
        std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.6f,%.6f", r.mean_dice, r.std_dice, r.mean_iou,
                      r.std_iou);
        os << r.label << "," << buf << "," << r.dices.size() << ","
           << (r.ok ? "ok" : ("failed: " + r.error)) << "\n";
    }
    os << "# " << table.footer << "\n";
}

std::string format_ablation_text(const AblationTable& table) {
    std::ostringstream os;
    os << "variant          mDice (mean+/-std)    mIoU (mean+/-std)    seeds\n";
    for (const auto& r : table.rows) {
        char buf[160];
        if (r.ok)
            std::snprintf(buf, sizeof(buf), "%-16s %.4f +/- %.4f     %.4f +/- %.4f     %zu\n",
                          r.label.c_str(), r.mean_dice, r.std_dice, r.mean_iou, r.std_iou,
                          r.dices.size());
        else
            std::snprintf(buf, sizeof(buf), "%-16s failed: %s\n", r.label.c_str(), r.error.c_str());
        os << buf;
    }
    os << table.footer << "\n";
    return os.str();
}

}  // namespace polyper
