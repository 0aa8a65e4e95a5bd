#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "polyper/aggregation.hpp"
#include "polyper/bsa.hpp"
#include "polyper/encoder.hpp"
#include "polyper/mask.hpp"
#include "polyper/params.hpp"
#include "polyper/tape.hpp"

namespace polyper {

enum class Mode { Full, NoBsr, NoRs, StagesSubset, SpatialOnly, ChannelOnly };

inline Mode parse_mode(const std::string& s) {
    if (s == "full") return Mode::Full;
    if (s == "no_bsr") return Mode::NoBsr;
    if (s == "no_rs") return Mode::NoRs;
    if (s == "stages_subset") return Mode::StagesSubset;
    if (s == "spatial_only") return Mode::SpatialOnly;
    if (s == "channel_only") return Mode::ChannelOnly;
    throw ConfigError("unknown mode: " + s);
}

inline std::string mode_name(Mode m) {
    switch (m) {
        case Mode::Full: return "full";
        case Mode::NoBsr: return "no_bsr";
        case Mode::NoRs: return "no_rs";
        case Mode::StagesSubset: return "stages_subset";
        case Mode::SpatialOnly: return "spatial_only";
        case Mode::ChannelOnly: return "channel_only";
    }
    return "full";
}

struct ModelConfig {
    EncoderPlan plan;
    int decoder_width = 32;
    int spatial_heads = 4;
    int channel_heads = 4;
    int iterations = 4;  // erosion/dilation steps defining the boundary band

    BsaConfig bsa() const { return {decoder_width, spatial_heads, channel_heads}; }
};

/// The masks attention actually consumes. Unlike RegionPartition these may
/// overlap (whole-mask refinement) and may both be empty, in which case every
/// attention stage is skipped outright.
struct RefinementRegions {
    BinaryMask boundary;  // query positions
    BinaryMask interior;  // key/value positions
    bool identity = false;
};

/// Per-mode choice of query/key regions, with the small-mask fallback: when
/// erosion leaves no interior, the whole predicted mask becomes the interior
/// and the dilation shell becomes the boundary, so tiny blobs still refine.
inline RefinementRegions derive_refinement_regions(const BinaryMask& f_m, int iterations, Mode mode) {
    RefinementRegions r;
    if (f_m.empty_mask()) {
        r.boundary = BinaryMask(f_m.height, f_m.width);
        r.interior = BinaryMask(f_m.height, f_m.width);
        r.identity = true;
        return r;
    }
    if (mode == Mode::NoRs) {
        r.boundary = dilate(f_m, iterations);
        r.interior = f_m;
        return r;
    }
    RegionPartition part = separate_regions(f_m, iterations);
    if (part.interior.empty_mask()) {
        r.interior = f_m;
        r.boundary = dilate(f_m, iterations).minus(f_m);
    } else {
        r.boundary = part.boundary;
        r.interior = part.interior;
    }
    return r;
}

template <typename T>
struct ForwardOptions {
    Mode mode = Mode::Full;
    int stages_k = 4;  // with StagesSubset, refine only the k deepest stages
    BsaTrace<T>* trace = nullptr;
    /// Optional pinned regions. Finite-difference checks pass the regions of
    /// an unperturbed forward so the thresholded mask stays constant.
    const RefinementRegions* pinned_regions = nullptr;
};

template <typename T>
struct ForwardResult {
    int initial_logits = -1;  // 1 x H/4 x W/4
    int final_logits = -1;    // 1 x H x W
    std::array<int, 4> stages{};
    BinaryMask initial_mask;
    RegionPartition partition;  // literal separation of the initial mask
    RefinementRegions regions;  // what attention consumed
    BoundParams<T> bound;
};

/// Full model: encoder pyramid, top-down aggregation, initial mask with
/// region separation, attention refinement over all stages, final head.
template <typename T>
struct PolyperModel {
    ModelConfig cfg;
    ParamStore<T> params;

    void init(std::uint64_t seed) {
        if (cfg.iterations < 1) throw ConfigError("iterations must be >= 1");
        params = ParamStore<T>();
        Rng rng(seed);
        init_encoder_params(params, rng, cfg.plan);
        init_aggregation_params(params, rng, cfg.plan, cfg.decoder_width);
        for (int i = 3; i >= 0; --i) init_bsa_params(params, rng, "bsa" + std::to_string(i), cfg.bsa());
        for (int i = 2; i >= 0; --i) {
            const std::string name = "refine" + std::to_string(i);
            params.add(name + ".w",
                       glorot_uniform<T>(rng, {cfg.decoder_width, cfg.decoder_width}, cfg.decoder_width,
                                         cfg.decoder_width));
            params.add(name + ".b", Tensor<T>({cfg.decoder_width}));
        }
        params.add("head.final.w", glorot_uniform<T>(rng, {1, cfg.decoder_width}, cfg.decoder_width, 1));
        params.add("head.final.b", Tensor<T>({1}));
    }

    ForwardResult<T> forward(Tape<T>& tape, const Tensor<T>& image, const ForwardOptions<T>& opt = {}) const {
        if (opt.mode == Mode::StagesSubset && (opt.stages_k < 1 || opt.stages_k > 4))
            throw ConfigError("stages_k must be in 1..4");
        BoundParams<T> p(tape, params);
        const int img = tape.value(image);
        const PyramidIds pyr = encode(tape, p, img, cfg.plan);
        const AggregatedIds agg = aggregate(tape, p, pyr);

        ForwardResult<T> out;
        out.initial_logits = predict_initial_logits(tape, p, agg.d[0]);
        out.initial_mask = threshold_logits(tape.val(out.initial_logits));
        out.partition = separate_regions(out.initial_mask, cfg.iterations);
        out.regions = opt.pinned_regions ? *opt.pinned_regions
                                         : derive_refinement_regions(out.initial_mask, cfg.iterations, opt.mode);

        int head_input;
        if (opt.mode == Mode::NoBsr) {
            out.stages = {agg.d[0], agg.d[1], agg.d[2], agg.d[3]};
            head_input = agg.d[0];
        } else {
            BsaBranches branches = BsaBranches::Both;
            if (opt.mode == Mode::SpatialOnly) branches = BsaBranches::SpatialOnly;
            if (opt.mode == Mode::ChannelOnly) branches = BsaBranches::ChannelOnly;
            const int min_refined = opt.mode == Mode::StagesSubset ? 4 - opt.stages_k : 0;
            auto refine = [&](int stage, int x) {
                if (stage < min_refined) return x;
                return bsa_forward(tape, p, "bsa" + std::to_string(stage), x, out.regions.boundary,
                                   out.regions.interior, cfg.bsa(), opt.trace, branches)
                    .out;
            };
            out.stages[3] = refine(3, agg.d[3]);
            for (int i = 2; i >= 0; --i) {
                const std::string name = "refine" + std::to_string(i);
                int skip = tape.conv1x1(out.stages[i + 1], p(name + ".w"), p(name + ".b"));
                out.stages[i] = refine(i, tape.add(skip, agg.d[i]));
            }
            head_input = out.stages[0];
        }

        const int low = tape.conv1x1(head_input, p("head.final.w"), p("head.final.b"));
        out.final_logits = tape.upsample_bilinear(low, image.shape[1], image.shape[2]);
        out.bound = p;
        return out;
    }
};

}  // namespace polyper
