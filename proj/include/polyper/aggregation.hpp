#pragma once

#include <array>

#include "polyper/encoder.hpp"
#include "polyper/mask.hpp"
#include "polyper/params.hpp"
#include "polyper/tape.hpp"

namespace polyper {

/// Tape ids of the four aggregated maps D0..D3, all decoder_width x H/4 x W/4.
struct AggregatedIds {
    std::array<int, 4> d{};
};

/// Bilinear resize to the base (stage-0) resolution, align-corners.
template <typename T>
int upsample_to_base(Tape<T>& tape, int stage, int target_h, int target_w) {
    const Tensor<T>& s = tape.val(stage);
    if (target_h < s.shape[1] || target_w < s.shape[2])
        throw SizingError("upsample_to_base: target smaller than source");
    if (target_h == s.shape[1] && target_w == s.shape[2]) return stage;
    return tape.upsample_bilinear(stage, target_h, target_w);
}

template <typename T>
void init_aggregation_params(ParamStore<T>& store, Rng& rng, const EncoderPlan& plan, int decoder_width) {
    auto add_1x1 = [&](const std::string& name, int cin, int cout) {
        store.add(name + ".w", glorot_uniform<T>(rng, {cout, cin}, cin, cout));
        store.add(name + ".b", Tensor<T>({cout}));
    };
    add_1x1("agg.proj3", plan.channels[3], decoder_width);
    for (int i = 2; i >= 0; --i) {
        add_1x1("agg.lat" + std::to_string(i), decoder_width, decoder_width);
        add_1x1("agg.fuse" + std::to_string(i), decoder_width + plan.channels[i], decoder_width);
    }
    add_1x1("head.initial", decoder_width, 1);
}

/// Top-down aggregation: every stage is resized to the base resolution,
/// the deepest stage is projected to the decoder width, and each shallower
/// stage fuses the laterally projected previous output with its own
/// features through a learned pointwise projection.
template <typename T>
AggregatedIds aggregate(Tape<T>& tape, BoundParams<T>& p, const PyramidIds& pyramid) {
    const int bh = tape.val(pyramid.stages[0]).shape[1];
    const int bw = tape.val(pyramid.stages[0]).shape[2];
    AggregatedIds out;
    int e3 = upsample_to_base(tape, pyramid.stages[3], bh, bw);
    out.d[3] = tape.conv1x1(e3, p("agg.proj3.w"), p("agg.proj3.b"));
    for (int i = 2; i >= 0; --i) {
        const std::string si = std::to_string(i);
        int lat = tape.conv1x1(out.d[i + 1], p("agg.lat" + si + ".w"), p("agg.lat" + si + ".b"));
        int ei = upsample_to_base(tape, pyramid.stages[i], bh, bw);
        int cat = tape.concat_channels({lat, ei});
        out.d[i] = tape.conv1x1(cat, p("agg.fuse" + si + ".w"), p("agg.fuse" + si + ".b"));
    }
    return out;
}

/// One-channel logits from D0 via a pointwise projection.
template <typename T>
int predict_initial_logits(Tape<T>& tape, BoundParams<T>& p, int d0) {
    return tape.conv1x1(d0, p("head.initial.w"), p("head.initial.b"));
}

/// Binarize logits: true iff sigmoid(logit) > 0.5, i.e. logit > 0.
template <typename T>
BinaryMask threshold_logits(const Tensor<T>& logits) {
    const int h = logits.shape[1], w = logits.shape[2];
    BinaryMask m(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) m.set(y, x, logits.at(0, y, x) > T(0));
    return m;
}

}  // namespace polyper
