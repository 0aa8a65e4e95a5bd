#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "polyper/ablation.hpp"
#include "polyper/checkpoint.hpp"
#include "polyper/config.hpp"
#include "polyper/error.hpp"
#include "polyper/gradcheck.hpp"
#include "polyper/image_io.hpp"
#include "polyper/mask.hpp"
#include "polyper/metrics.hpp"
#include "polyper/overlays.hpp"
#include "polyper/train.hpp"

namespace {

namespace fs = std::filesystem;
using namespace polyper;

struct ConfigArgs {
    std::string path;
    std::vector<std::string> sets;
};

void add_config_options(CLI::App* sub, ConfigArgs& args) {
    sub->add_option("--config", args.path, "config file, flat key=value lines");
    sub->add_option("--set", args.sets, "override as key=value, repeatable");
}

RunConfig resolve_config(const ConfigArgs& args) {
    RunConfig cfg = args.path.empty() ? RunConfig{} : load_config_file(args.path);
    for (const auto& s : args.sets) apply_override(cfg, s);
    cfg.validate();
    return cfg;
}

/// Base config for checkpoint-consuming commands: the checkpoint's embedded
/// config, optionally replaced by --config, then patched by --set.
RunConfig resolve_config_from(const Checkpoint& ckpt, const ConfigArgs& args) {
    RunConfig cfg = args.path.empty() ? parse_config_text(ckpt.config_text) : load_config_file(args.path);
    for (const auto& s : args.sets) apply_override(cfg, s);
    cfg.validate();
    return cfg;
}

int cmd_train(const ConfigArgs& args) {
    const RunConfig cfg = resolve_config(args);
    const TrainResult r = train(cfg, /*echo=*/true);
    std::printf("checkpoint: %s\n", r.checkpoint_path.c_str());
    std::printf("log: %s\n", r.log_path.c_str());
    return 0;
}

int cmd_eval(const std::string& ckpt_path, const ConfigArgs& args, const std::string& report_path,
             const std::string& csv_path, const std::string& split) {
    const Checkpoint ckpt = load_checkpoint(ckpt_path);
    const RunConfig cfg = resolve_config_from(ckpt, args);
    PolyperModel<float> model;
    model.cfg = cfg.model();
    model.params = ckpt.params;
    const std::vector<Sample> data = load_dataset(cfg, split == "val");
    const EvalReport rep = eval_model(model, data, cfg.parsed_mode(), cfg.stages_k);
    std::printf("images=%d mdice=%.6f miou=%.6f\n", rep.all.count, rep.all.m_dice, rep.all.m_iou);
    std::printf("small images=%d mdice=%.6f miou=%.6f\n", rep.small_polyp.count, rep.small_polyp.m_dice,
                rep.small_polyp.m_iou);
    if (!report_path.empty()) {
        std::ofstream out(report_path);
        out << eval_report_json(rep) << "\n";
        if (!out) throw DataError("cannot write report: " + report_path);
        std::printf("report: %s\n", report_path.c_str());
    }
    if (!csv_path.empty()) {
        write_eval_csv(csv_path, rep);
        std::printf("csv: %s\n", csv_path.c_str());
    }
    return 0;
}

int cmd_ablate(const ConfigArgs& args, const std::vector<std::string>& variants,
               const std::vector<std::uint64_t>& seeds) {
    const RunConfig base = resolve_config(args);
    const AblationTable table = run_ablation(base, variants, seeds, /*echo=*/true);
    std::printf("%s", format_ablation_text(table).c_str());
    std::printf("tables: %s\n", (fs::path(base.resolved_out_dir()) / "ablation.csv").string().c_str());
    return 0;
}

int cmd_gradcheck(std::uint64_t seed) {
    bool ok = true;
    for (const GradCheckRow& row : run_gradcheck(seed)) {
        std::printf("%-12s checked=%-4d max_rel_err=%.3e worst=%s tol=%.0e %s\n", row.scope.c_str(),
                    row.checked, row.max_rel_err, row.worst.c_str(), row.tolerance,
                    row.pass ? "PASS" : "FAIL");
        ok = ok && row.pass;
    }
    return ok ? 0 : 1;
}

int cmd_synth_data(const ConfigArgs& args, const std::string& out) {
    RunConfig cfg = args.path.empty() ? RunConfig{} : load_config_file(args.path);
    for (const auto& s : args.sets) apply_override(cfg, s);
    cfg.data = "synth";
    cfg.validate();
    const SynthSpec train_spec = cfg.synth_spec(false);
    const SynthSpec val_spec = cfg.synth_spec(true);
    write_dataset((fs::path(out) / "train").string(), generate_synth(train_spec));
    write_dataset((fs::path(out) / "val").string(), generate_synth(val_spec));
    auto echo = [](const SynthSpec& s) {
        char buf[512];
        std::snprintf(buf, sizeof(buf),
                      "{\"count\": %d, \"image_size\": %d, \"blobs_min\": %d, \"blobs_max\": %d, "
                      "\"proportion_lo\": %g, \"proportion_hi\": %g, \"blur_lo\": %g, \"blur_hi\": %g, "
                      "\"contrast_lo\": %g, \"contrast_hi\": %g, \"noise\": %g, \"seed\": %llu}",
                      s.count, s.image_size, s.blobs_min, s.blobs_max, s.proportion_lo, s.proportion_hi,
                      s.blur_lo, s.blur_hi, s.contrast_lo, s.contrast_hi, s.noise,
                      static_cast<unsigned long long>(s.seed));
        return std::string(buf);
    };
    std::ofstream manifest(fs::path(out) / "manifest.json");
    manifest << "{\n  \"train\": " << echo(train_spec) << ",\n  \"val\": " << echo(val_spec) << "\n}\n";
    if (!manifest) throw DataError("cannot write manifest in " + out);
    std::printf("wrote %d train and %d val samples under %s\n", train_spec.count, val_spec.count,
                out.c_str());
    return 0;
}

int cmd_separate_regions(const std::string& mask_path, int iterations, const std::string& out_dir) {
    const BinaryMask mask = load_mask(mask_path);
    const RegionPartition part = separate_regions(mask, iterations);
    fs::create_directories(out_dir);
    save_mask((fs::path(out_dir) / "boundary.png").string(), part.boundary);
    save_mask((fs::path(out_dir) / "interior.png").string(), part.interior);
    save_mask((fs::path(out_dir) / "background.png").string(), part.background);
    std::printf("boundary=%d interior=%d background=%d of %d pixels\n", part.boundary.popcount(),
                part.interior.popcount(), part.background.popcount(), mask.height * mask.width);
    return 0;
}

int cmd_overlays(const std::string& ckpt_path, const ConfigArgs& args, const std::string& out_dir,
                 int limit, const std::string& split) {
    const Checkpoint ckpt = load_checkpoint(ckpt_path);
    const RunConfig cfg = resolve_config_from(ckpt, args);
    const std::vector<Sample> data = load_dataset(cfg, split == "val");
    const auto entries = emit_overlays(ckpt_path, data, out_dir, limit);
    std::printf("wrote overlays for %zu samples under %s\n", entries.size(), out_dir.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"boundary-sensitive polyp segmentation toolkit"};
    app.require_subcommand(1);

    ConfigArgs train_args;
    auto* train_cmd = app.add_subcommand("train", "train a model from a config");
    add_config_options(train_cmd, train_args);

    ConfigArgs eval_args;
    std::string eval_ckpt, eval_report, eval_csv, eval_split = "val";
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
    eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
    add_config_options(eval_cmd, eval_args);
    eval_cmd->add_option("--report", eval_report, "write JSON report here");
    eval_cmd->add_option("--csv", eval_csv, "write per-image CSV here");
    eval_cmd->add_option("--split", eval_split, "val or train")->check(CLI::IsMember({"val", "train"}));

    ConfigArgs ablate_args;
    std::vector<std::string> variants;
    std::vector<std::uint64_t> seeds{0};
    auto* ablate_cmd = app.add_subcommand("ablate", "train and compare config variants");
    add_config_options(ablate_cmd, ablate_args);
    ablate_cmd->add_option("--variants", variants, "labels: mode names, stages=K, T=N")
        ->required()
        ->delimiter(',');
    ablate_cmd->add_option("--seeds", seeds, "seeds to average over")->delimiter(',');

    std::uint64_t gc_seed = 0;
    auto* gc_cmd = app.add_subcommand("gradcheck", "finite-difference gradient verification");
    gc_cmd->add_option("--seed", gc_seed, "rng seed");

    ConfigArgs synth_args;
    std::string synth_out;
    auto* synth_cmd = app.add_subcommand("synth-data", "write the synthetic dataset to folders");
    add_config_options(synth_cmd, synth_args);
    synth_cmd->add_option("--out", synth_out, "output root")->required();

    std::string sr_mask, sr_out;
    int sr_iters = 4;
    auto* sr_cmd = app.add_subcommand("separate-regions", "split a mask into boundary and interior");
    sr_cmd->add_option("--mask", sr_mask, "binary mask image")->required();
    sr_cmd->add_option("--iterations", sr_iters, "erosion/dilation steps");
    sr_cmd->add_option("--out-dir", sr_out, "where to write the region masks")->required();

    ConfigArgs ov_args;
    std::string ov_ckpt, ov_out, ov_split = "val";
    int ov_limit = 0;
    auto* ov_cmd = app.add_subcommand("overlays", "render qualitative results for a checkpoint");
    ov_cmd->add_option("--checkpoint", ov_ckpt, "checkpoint file")->required();
    add_config_options(ov_cmd, ov_args);
    ov_cmd->add_option("--out-dir", ov_out, "output directory")->required();
    ov_cmd->add_option("--limit", ov_limit, "max samples, 0 = all");
    ov_cmd->add_option("--split", ov_split, "val or train")->check(CLI::IsMember({"val", "train"}));

    CLI11_PARSE(app, argc, argv);

    try {
        if (train_cmd->parsed()) return cmd_train(train_args);
        if (eval_cmd->parsed()) return cmd_eval(eval_ckpt, eval_args, eval_report, eval_csv, eval_split);
        if (ablate_cmd->parsed()) return cmd_ablate(ablate_args, variants, seeds);
        if (gc_cmd->parsed()) return cmd_gradcheck(gc_seed);
        if (synth_cmd->parsed()) return cmd_synth_data(synth_args, synth_out);
        if (sr_cmd->parsed()) return cmd_separate_regions(sr_mask, sr_iters, sr_out);
        if (ov_cmd->parsed()) return cmd_overlays(ov_ckpt, ov_args, ov_out, ov_limit, ov_split);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
