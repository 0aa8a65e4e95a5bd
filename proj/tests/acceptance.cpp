// End-to-end acceptance gate: one pass/fail line per criterion, nonzero
// exit when any fails. Heavier than the unit suites; the ablation criterion
// trains nine seconds-scale models.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "oracles/attention_oracle.hpp"
#include "oracles/morphology_oracle.hpp"
#include "polyper/ablation.hpp"
#include "polyper/gradcheck.hpp"
#include "polyper/metrics.hpp"
#include "polyper/model.hpp"
#include "polyper/train.hpp"

using namespace polyper;
using testutil::random_mask;
using testutil::random_tensor;

namespace {

struct CriterionFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void expect(bool cond, const std::string& what) {
    if (!cond) throw CriterionFailure(what);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    expect(in.good(), "cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

ParamStore<double> jittered_params(Rng& rng, const BsaConfig& cfg) {
    ParamStore<double> store;
    init_bsa_params(store, rng, "bsa", cfg);
    for (const char* tail : {"bsa.comb_s.w", "bsa.comb_c.w"})
        for (auto& x : store.get(tail).v) x = rng.normal() * 0.3;
    for (auto& x : store.get("bsa.channel.log_temp").v) x = rng.normal() * 0.3;
    return store;
}

RefinementRegions sample_regions(Rng& rng, int n, bool allow_degenerate) {
    if (allow_degenerate && rng.bernoulli(0.15)) {
        RefinementRegions r;
        r.boundary = random_mask(rng, n, n, 0.3);
        r.interior = BinaryMask(n, n);  // queries without keys
        return r;
    }
    for (int attempt = 0; attempt < 300; ++attempt) {
        const RefinementRegions r =
            derive_refinement_regions(random_mask(rng, n, n, rng.uniform(0.3, 0.6)), 1, Mode::Full);
        if (!r.identity && !r.boundary.empty_mask() && !r.interior.empty_mask()) return r;
    }
    throw CriterionFailure("could not sample usable refinement regions");
}

/// Training recipe calibrated so the refinement ablation separates cleanly
/// at desk scale: low contrast and moderate noise leave boundary errors the
/// refinement can actually fix, and T=3 keeps a visible band at 16x16.
RunConfig ablation_base(const std::string& out_dir) {
    RunConfig cfg;
    cfg.decoder_width = 32;
    cfg.spatial_heads = 4;
    cfg.channel_heads = 4;
    cfg.encoder_channels = {8, 16, 24, 32};
    cfg.iterations = 3;
    cfg.lr = 1e-3;
    cfg.steps = 1000;
    cfg.batch_size = 4;
    cfg.val_interval = 100;
    cfg.log_interval = 100;
    cfg.synth_train = 200;
    cfg.synth_val = 50;
    cfg.synth_proportion_lo = 0.18;
    cfg.synth_proportion_hi = 0.3;
    cfg.synth_contrast_lo = 0.12;
    cfg.synth_contrast_hi = 0.3;
    cfg.synth_noise = 0.1;
    cfg.synth_blur_lo = 0.8;
    cfg.synth_blur_hi = 1.5;
    cfg.out_dir = out_dir;
    return cfg;
}

RunConfig micro_base(const std::string& out_dir) {
    RunConfig cfg;
    cfg.decoder_width = 8;
    cfg.spatial_heads = 2;
    cfg.channel_heads = 2;
    cfg.encoder_channels = {4, 8, 12, 16};
    cfg.lr = 1e-3;
    cfg.steps = 60;
    cfg.batch_size = 2;
    cfg.val_interval = 30;
    cfg.log_interval = 30;
    cfg.synth_train = 24;
    cfg.synth_val = 8;
    cfg.synth_proportion_lo = 0.1;
    cfg.synth_proportion_hi = 0.25;
    cfg.synth_contrast_lo = 0.5;
    cfg.synth_contrast_hi = 0.9;
    cfg.out_dir = out_dir;
    return cfg;
}

// ---- criteria ------------------------------------------------------------------

std::string criterion_morphology_oracle() {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(101);
    for (int round = 0; round < 200; ++round) {
        const int h = rng.uniform_int(1, 16), w = rng.uniform_int(1, 16);
        const BinaryMask m = random_mask(rng, h, w, rng.uniform(0.1, 0.9));
        const int t = rng.uniform_int(1, 4);

        expect(erode(m, t) == oracle::erode(m, t), "erosion disagrees with the oracle");
        expect(dilate(m, t) == oracle::dilate(m, t), "dilation disagrees with the oracle");

        const RegionPartition part = separate_regions(m, t);
        const BinaryMask interior = oracle::erode(m, t);
        const BinaryMask boundary = oracle::dilate(m, t).minus(interior);
        expect(part.interior == interior, "interior region disagrees with the oracle");
        expect(part.boundary == boundary, "boundary region disagrees with the oracle");
        expect(part.background == oracle::complement(interior.unite(boundary)),
               "background region disagrees with the oracle");
    }
    const double dt = seconds_since(t0);
    expect(dt < 10.0, "morphology oracle sweep took too long");
    char buf[64];
    std::snprintf(buf, sizeof(buf), "200 masks, %.2fs", dt);
    return buf;
}

std::string criterion_partition_invariants() {
    Rng rng(102);
    for (int round = 0; round < 200; ++round) {
        const int h = rng.uniform_int(1, 16), w = rng.uniform_int(1, 16);
        const BinaryMask m = random_mask(rng, h, w, rng.uniform(0.1, 0.9));
        const int t = rng.uniform_int(1, 4);
        const RegionPartition part = separate_regions(m, t);

        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const int hits = int(part.interior.at(y, x)) + int(part.boundary.at(y, x)) +
                                 int(part.background.at(y, x));
                expect(hits == 1, "partition is not disjoint-exhaustive");
            }
        expect(part.interior.subset_of(m), "interior escapes the mask");
        expect(m.subset_of(part.interior.unite(part.boundary)), "mask escapes the dilation");
    }
    return "200 masks, zero violations";
}

std::string criterion_dense_equivalence() {
    Rng rng(103);
    double worst = 0.0;
    for (int round = 0; round < 50; ++round) {
        const int heads = rng.bernoulli(0.5) ? 2 : 1;
        const int c = heads * rng.uniform_int(1, 4);
        const int n = rng.uniform_int(4, 16);
        const ParamStore<double> store = jittered_params(rng, {c, heads, heads});
        const RefinementRegions r = sample_regions(rng, n, true);
        const TensorD d = random_tensor<double>(rng, {c, n, n});

        Tape<double> tape;
        BoundParams<double> p(tape, store);
        const auto ids = bsa_forward(tape, p, "bsa", tape.value(d), r.boundary, r.interior,
                                     {c, heads, heads});
        const TensorD expect_map =
            oracle::dense_bsa_oracle(d, r.boundary, r.interior, store, "bsa", heads, heads);
        worst = std::max(worst, max_abs_diff(tape.val(ids.out), expect_map));
    }
    expect(worst <= 1e-5, "attention deviates from the dense reference");
    char buf[64];
    std::snprintf(buf, sizeof(buf), "50 configs, max abs err %.2e", worst);
    return buf;
}

std::string criterion_gradcheck() {
    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<GradCheckRow> rows = run_gradcheck(2024);
    expect(!rows.empty(), "no gradient scopes were checked");
    bool saw_bsa = false, saw_model = false;
    for (const GradCheckRow& row : rows) {
        expect(row.pass, "scope '" + row.scope + "' failed at " + row.worst);
        if (row.scope == "bsa") {
            saw_bsa = true;
            expect(row.max_rel_err < 1e-4, "attention gradients out of tolerance");
        }
        if (row.scope == "model") {
            saw_model = true;
            expect(row.max_rel_err < 1e-3, "model gradients out of tolerance");
        }
    }
    expect(saw_bsa && saw_model, "expected dedicated attention and model scopes");
    const double dt = seconds_since(t0);
    expect(dt < 120.0, "gradient checks took too long");
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%zu scopes, %.1fs", rows.size(), dt);
    return buf;
}

std::string criterion_locality() {
    Rng rng(104);
    for (int round = 0; round < 50; ++round) {
        const int n = rng.uniform_int(6, 14);
        const ParamStore<double> store = jittered_params(rng, {4, 2, 2});
        const RefinementRegions r = sample_regions(rng, n, false);
        Tape<double> tape;
        BoundParams<double> p(tape, store);
        const auto ids =
            bsa_forward(tape, p, "bsa", tape.value(random_tensor<double>(rng, {4, n, n})), r.boundary,
                        r.interior, {4, 2, 2});
        expect(ids.spatial_map >= 0, "spatial branch did not run");
        const TensorD& contrib = tape.val(ids.spatial_map);
        for (int c = 0; c < 4; ++c)
            for (int y = 0; y < n; ++y)
                for (int x = 0; x < n; ++x)
                    if (!r.boundary.at(y, x))
                        expect(contrib.at(c, y, x) == 0.0,
                               "spatial contribution leaked outside the boundary");
    }
    return "50 inputs, exact zeros off-boundary";
}

std::string criterion_permutation() {
    Rng rng(105);
    double worst = 0.0;
    for (int round = 0; round < 50; ++round) {
        const int rows_n = rng.uniform_int(2, 12);
        const ParamStore<double> store = jittered_params(rng, {8, 4, 4});
        const TensorD q = random_tensor<double>(rng, {rng.uniform_int(1, 8), 8});
        const TensorD kv = random_tensor<double>(rng, {rows_n, 8});

        std::vector<int> perm(rows_n);
        for (int i = 0; i < rows_n; ++i) perm[i] = i;
        for (int i = rows_n - 1; i > 0; --i) std::swap(perm[i], perm[rng.uniform_int(0, i)]);
        TensorD shuffled = kv;
        for (int r = 0; r < rows_n; ++r)
            for (int c = 0; c < 8; ++c) shuffled.at(r, c) = kv.at(perm[r], c);

        auto attend = [&](const TensorD& keys) {
            Tape<double> tape;
            BoundParams<double> p(tape, store);
            return tape.val(
                spatial_cross_attention(tape, p, "bsa.spatial", tape.value(q), tape.value(keys), 4));
        };
        worst = std::max(worst, max_abs_diff(attend(kv), attend(shuffled)));
    }
    expect(worst < 1e-6, "attention output depends on key order");
    char buf[64];
    std::snprintf(buf, sizeof(buf), "50 permutations, max abs diff %.2e", worst);
    return buf;
}

std::string criterion_cost_contract() {
    // A plausible polyp blob on a 32x32 base grid: the boundary band and
    // interior stay far below full resolution.
    BinaryMask blob(32, 32);
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x) {
            const double dy = (y - 15.0) / 6.0, dx = (x - 16.0) / 8.0;
            blob.set(y, x, dy * dy + dx * dx <= 1.0);
        }
    const RefinementRegions r = derive_refinement_regions(blob, 2, Mode::Full);
    const long B = r.boundary.popcount(), M = r.interior.popcount();
    const long hw = 32L * 32L;
    expect(B > 0 && M > 0, "degenerate test regions");
    expect(B * M <= hw * hw / 50, "test regions exceed the cost envelope");

    Rng rng(106);
    const ParamStore<double> store = jittered_params(rng, {8, 4, 4});
    Tape<double> tape;
    BoundParams<double> p(tape, store);
    BsaTrace<double> trace;
    bsa_forward(tape, p, "bsa", tape.value(random_tensor<double>(rng, {8, 32, 32})), r.boundary,
                r.interior, {8, 4, 4}, &trace);

    int spatial = 0;
    for (const auto& alloc : trace.score_allocs) {
        if (alloc.branch != 's') continue;
        ++spatial;
        expect(alloc.rows == B && alloc.cols == M, "score matrix is not B x M");
        expect(static_cast<long>(alloc.rows) * alloc.cols < hw * hw,
               "score matrix scales with the full resolution");
    }
    expect(spatial == 4, "expected one score matrix per spatial head");
    char buf[80];
    std::snprintf(buf, sizeof(buf), "B=%ld M=%ld, B*M/(HW)^2=%.4f", B, M,
                  double(B * M) / double(hw * hw));
    return buf;
}

std::string criterion_ablation_signs() {
    const auto t0 = std::chrono::steady_clock::now();
    const AblationTable table =
        run_ablation(ablation_base("ablation_signs"), {"full", "no_bsr", "no_rs"}, {0, 1, 2});
    expect(table.rows.size() == 3, "expected three variants");
    for (const auto& row : table.rows)
        expect(row.ok && row.dices.size() == 3, "variant " + row.label + " failed: " + row.error);

    const double full = table.rows[0].mean_dice;
    const double no_bsr = table.rows[1].mean_dice;
    const double no_rs = table.rows[2].mean_dice;
    expect(full > no_bsr, "refinement does not beat the ablated decoder");
    expect(full >= no_rs, "region separation does not pay for itself");
    const double dt = seconds_since(t0);
    expect(dt < 1800.0, "ablation exceeded the runtime budget");

    char buf[128];
    std::snprintf(buf, sizeof(buf), "mdice full=%.4f no_bsr=%.4f no_rs=%.4f, %.0fs", full, no_bsr,
                  no_rs, dt);
    return buf;
}

std::string criterion_iteration_sweep() {
    RunConfig base = micro_base("iteration_sweep");
    const AblationTable table = run_ablation(base, {"T=1", "T=2", "T=3", "T=4", "T=5", "T=6"}, {0});
    expect(table.rows.size() == 6, "expected six sweep rows");
    for (const auto& row : table.rows)
        expect(row.ok, "sweep variant " + row.label + " failed: " + row.error);

    const std::string csv = read_file(base.resolved_out_dir() + "/ablation.csv");
    expect(csv.rfind("variant,m_dice_mean,", 0) == 0, "sweep table lacks column headers");
    int data_rows = 0;
    std::istringstream lines(csv);
    std::string line, last;
    std::getline(lines, line);  // header
    while (std::getline(lines, line))
        if (!line.empty()) {
            if (line[0] == '#') last = line;
            else ++data_rows;
        }
    expect(data_rows == 6, "sweep table does not have six rows");
    expect(last.find("T=4") != std::string::npos,
           "footer does not record the full-scale reference iteration count");
    return "6 rows + reference footer";
}

std::string criterion_metric_examples() {
    BinaryMask block(8, 8);
    for (int y = 2; y <= 5; ++y)
        for (int x = 3; x <= 6; ++x) block.set(y, x, true);
    expect(dice_iou(block, block) == std::pair<double, double>{1.0, 1.0},
           "identical masks are not scored perfectly");

    BinaryMask pred(4, 4), gt(4, 4);
    for (int x = 0; x < 4; ++x) pred.set(0, x, true);
    gt.set(0, 2, true);
    gt.set(0, 3, true);
    gt.set(1, 0, true);
    gt.set(1, 1, true);
    expect(dice_iou(pred, gt) == std::pair<double, double>{0.5, 1.0 / 3.0},
           "half-overlap example is not exact");

    expect(dice_iou(BinaryMask(3, 3), BinaryMask(3, 3)) == std::pair<double, double>{1.0, 1.0},
           "empty-vs-empty is not a perfect match");

    // Small bucket membership is strict at 6% area: 245/4096 in, 246/4096 out.
    auto with_popcount = [](int count) {
        Sample s;
        s.id = "n" + std::to_string(count);
        s.image = TensorF({3, 64, 64});
        s.mask = BinaryMask(64, 64);
        for (int k = 0; k < count; ++k) s.mask.set(k / 64, k % 64, true);
        return s;
    };
    const std::vector<Sample> data = {with_popcount(245), with_popcount(246)};
    const EvalReport rep = evaluate([](const Sample& s) { return s.mask; }, data);
    expect(rep.small_polyp.count == 1, "small bucket has the wrong membership");
    expect(rep.per_image[0].gt_proportion < kSmallProportion, "245 px should fall under the cut");
    expect(rep.per_image[1].gt_proportion >= kSmallProportion, "246 px should fall over the cut");
    return "worked examples exact, bucket strict";
}

std::string criterion_determinism() {
    RunConfig cfg = micro_base("determinism_a");
    cfg.steps = 40;
    cfg.val_interval = 20;
    cfg.log_interval = 10;
    cfg.synth_train = 12;
    cfg.synth_val = 4;
    const TrainResult a = train(cfg);
    cfg.out_dir = "determinism_b";
    const TrainResult b = train(cfg);
    expect(read_file(a.log_path) == read_file(b.log_path), "metric logs differ between runs");
    expect(a.best_val_dice == b.best_val_dice, "best scores differ between runs");
    return "byte-identical metric logs";
}

}  // namespace

int main() {
    const std::string out_root = testutil::scratch_dir("acceptance");
    ::setenv("POLYPER_OUT_ROOT", out_root.c_str(), 1);

    struct Criterion {
        int num;
        const char* name;
        std::function<std::string()> body;
    };
    const std::vector<Criterion> criteria = {
        {1, "morphology oracle equivalence", criterion_morphology_oracle},
        {2, "partition invariants", criterion_partition_invariants},
        {3, "attention dense-reference equivalence", criterion_dense_equivalence},
        {4, "finite-difference gradient checks", criterion_gradcheck},
        {5, "spatial-branch locality", criterion_locality},
        {6, "key-permutation invariance", criterion_permutation},
        {7, "attention cost contract", criterion_cost_contract},
        {8, "refinement ablation sign", criterion_ablation_signs},
        {9, "iteration sweep table", criterion_iteration_sweep},
        {10, "metric worked examples", criterion_metric_examples},
        {11, "training determinism", criterion_determinism},
    };

    int failures = 0;
    for (const Criterion& c : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        std::string detail;
        bool ok = true;
        try {
            detail = c.body();
        } catch (const std::exception& e) {
            ok = false;
            detail = e.what();
        }
        std::printf("[%s] %2d. %s (%.1fs)%s%s\n", ok ? "PASS" : "FAIL", c.num, c.name,
                    seconds_since(t0), detail.empty() ? "" : " - ", detail.c_str());
        std::fflush(stdout);
        if (!ok) ++failures;
    }
    ::unsetenv("POLYPER_OUT_ROOT");
    if (failures > 0) std::printf("%d of %zu criteria failed\n", failures, criteria.size());
    return failures == 0 ? 0 : 1;
}
