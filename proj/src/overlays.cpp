#include "polyper/overlays.hpp"

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "polyper/checkpoint.hpp"
#include "polyper/config.hpp"
#include "polyper/error.hpp"
#include "polyper/image_io.hpp"
#include "polyper/model.hpp"

namespace polyper {

namespace {

namespace fs = std::filesystem;

TensorF blend(const TensorF& image, const BinaryMask& mask, std::array<float, 3> color) {
    TensorF out = image;
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x) {
            if (!mask.at(y, x)) continue;
            for (int c = 0; c < 3; ++c) out.at(c, y, x) = 0.55f * image.at(c, y, x) + 0.45f * color[c];
        }
    return out;
}

TensorF render_partition(const RegionPartition& part) {
    const int h = part.boundary.height, w = part.boundary.width;
    TensorF out({3, h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            std::array<float, 3> color{0.0f, 0.0f, 1.0f};  // background: blue
            if (part.boundary.at(y, x)) color = {1.0f, 1.0f, 0.0f};  // boundary: yellow
            else if (part.interior.at(y, x)) color = {1.0f, 0.0f, 0.0f};  // interior: red
            for (int c = 0; c < 3; ++c) out.at(c, y, x) = color[c];
        }
    return out;
}

TensorF render_stage_heatmaps(const Tape<float>& tape, const std::array<int, 4>& stages) {
    const TensorF& first = tape.val(stages[0]);
    const int h = first.shape[1], w = first.shape[2];
    TensorF out({3, h, 4 * w});
    for (int s = 0; s < 4; ++s) {
        const TensorF& m = tape.val(stages[s]);
        TensorF mean({h, w});
        float lo = 0.0f, hi = 0.0f;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                float acc = 0.0f;
                for (int c = 0; c < m.shape[0]; ++c) acc += m.at(c, y, x);
                acc /= static_cast<float>(m.shape[0]);
                mean.at(y, x) = acc;
                if (y == 0 && x == 0) lo = hi = acc;
                lo = std::min(lo, acc);
                hi = std::max(hi, acc);
            }
        const float span = hi - lo > 1e-12f ? hi - lo : 1.0f;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const float v = (mean.at(y, x) - lo) / span;
                for (int c = 0; c < 3; ++c) out.at(c, y, s * w + x) = v;
            }
    }
    return out;
}

}  // namespace

std::vector<OverlayEntry> emit_overlays(const std::string& checkpoint_path, const std::vector<Sample>& data,
                                        const std::string& out_dir, int limit) {
    const Checkpoint ckpt = load_checkpoint(checkpoint_path);
    const RunConfig cfg = parse_config_text(ckpt.config_text);
    PolyperModel<float> model;
    model.cfg = cfg.model();
    model.params = ckpt.params;

    fs::create_directories(out_dir);
    std::vector<OverlayEntry> entries;
    const int n = limit > 0 ? std::min<int>(limit, static_cast<int>(data.size()))
                            : static_cast<int>(data.size());
    for (int i = 0; i < n; ++i) {
        const Sample& sample = data[i];
        Tape<float> tape;
        const ForwardResult<float> fwd = model.forward(tape, sample.image);
        const BinaryMask pred = threshold_logits(tape.val(fwd.final_logits));

        OverlayEntry e;
        e.id = sample.id;
        e.empty_prediction = pred.empty_mask();
        auto emit = [&](const std::string& suffix, const TensorF& img) {
            const std::string name = sample.id + suffix;
            save_image_rgb((fs::path(out_dir) / name).string(), img);
            e.files.push_back(name);
        };
        emit("_input.png", sample.image);
        emit("_gt.png", blend(sample.image, sample.mask, {0.0f, 1.0f, 0.0f}));
        emit("_pred.png", e.empty_prediction ? sample.image : blend(sample.image, pred, {1.0f, 0.0f, 0.0f}));
        emit("_regions.png", render_partition(fwd.partition));
        emit("_stages.png", render_stage_heatmaps(tape, fwd.stages));
        entries.push_back(std::move(e));
    }

    nlohmann::json manifest;
    manifest["legend"] = {
        {"gt_overlay", "ground truth blended in green"},
        {"pred_overlay", "prediction blended in red; identical to the input when the mask is empty"},
        {"regions", "boundary yellow, interior red, background blue, at quarter resolution"},
        {"stages", "four per-stage mean activations, min-max normalized, tiled left to right"},
    };
    manifest["samples"] = nlohmann::json::array();
    for (const auto& e : entries)
        manifest["samples"].push_back(
            {{"id", e.id}, {"empty_prediction", e.empty_prediction}, {"files", e.files}});
    std::ofstream out(fs::path(out_dir) / "manifest.json");
    out << manifest.dump(2) << "\n";
    if (!out) throw DataError("cannot write overlay manifest in " + out_dir);
    return entries;
}

}  // namespace polyper
