#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "polyper/mask.hpp"
#include "polyper/params.hpp"
#include "polyper/tape.hpp"

namespace polyper {

/// Features of one region pulled out of a map: one row per foreground pixel
/// of the region mask, positions in row-major order.
template <typename T>
struct RegionGather {
    std::vector<std::pair<int, int>> positions;
    Tensor<T> features;  // {count, channels}

    int count() const { return static_cast<int>(positions.size()); }
};

template <typename T>
RegionGather<T> gather(const Tensor<T>& map, const BinaryMask& region) {
    if (map.shape[1] != region.height || map.shape[2] != region.width)
        throw SizingError("gather: region and map sizes differ");
    RegionGather<T> g;
    g.positions = region.positions();
    const int n = g.count();
    const int c = map.shape[0];
    g.features = Tensor<T>({n, c});
    for (int k = 0; k < n; ++k) {
        const auto [y, x] = g.positions[k];
        for (int ch = 0; ch < c; ++ch) g.features.at(k, ch) = map.at(ch, y, x);
    }
    return g;
}

/// Copy of `base` with the rows at the gather's positions replaced by the
/// gathered features. Positions must lie inside the base map.
template <typename T>
Tensor<T> scatter_rows(const Tensor<T>& base, const RegionGather<T>& g) {
    Tensor<T> out = base;
    const int c = base.shape[0];
    for (int k = 0; k < g.count(); ++k) {
        const auto [y, x] = g.positions[k];
        if (y < 0 || y >= base.shape[1] || x < 0 || x >= base.shape[2])
            throw SizingError("scatter_rows: position out of bounds");
        for (int ch = 0; ch < c; ++ch) out.at(ch, y, x) = g.features.at(k, ch);
    }
    return out;
}

/// Test and instrumentation hook passed through a forward call. Records the
/// shape of every attention score matrix that gets materialized, and
/// optionally copies out the softmax weights.
template <typename T>
struct BsaTrace {
    struct ScoreAlloc {
        char branch;  // 's' spatial, 'c' channel
        int head;
        int rows;
        int cols;
    };
    bool capture_weights = false;
    std::vector<ScoreAlloc> score_allocs;
    std::vector<Tensor<T>> spatial_weights;
    std::vector<Tensor<T>> channel_weights;
    int bsa_calls = 0;
    int spatial_branch_runs = 0;
    int channel_branch_runs = 0;
};

enum class BsaBranches { Both, SpatialOnly, ChannelOnly };

struct BsaConfig {
    int decoder_width = 32;
    int spatial_heads = 4;
    int channel_heads = 4;
};

/// Register one BSA stage: per-branch query/key/value/output projections,
/// a learned log-temperature per channel head, and the two combination
/// projections applied before the residual add.
template <typename T>
void init_bsa_params(ParamStore<T>& store, Rng& rng, const std::string& prefix, const BsaConfig& cfg) {
    const int c = cfg.decoder_width;
    if (c % cfg.spatial_heads != 0 || c % cfg.channel_heads != 0)
        throw ConfigError("decoder width must be divisible by both head counts");
    auto add_proj = [&](const std::string& name) {
        store.add(name + ".w", glorot_uniform<T>(rng, {c, c}, c, c));
        store.add(name + ".b", Tensor<T>({c}));
    };
    for (const char* br : {"spatial", "channel"}) {
        add_proj(prefix + "." + br + ".q");
        add_proj(prefix + "." + br + ".k");
        add_proj(prefix + "." + br + ".v");
        add_proj(prefix + "." + br + ".o");
    }
    store.add(prefix + ".channel.log_temp", Tensor<T>({cfg.channel_heads}));
    // Zero-started combination projections make the residual an exact
    // identity at init; the attention branches fade in as they earn weight.
    store.add(prefix + ".comb_s.w", Tensor<T>({c, c}));
    store.add(prefix + ".comb_s.b", Tensor<T>({c}));
    store.add(prefix + ".comb_c.w", Tensor<T>({c, c}));
    store.add(prefix + ".comb_c.b", Tensor<T>({c}));
}

/// Multi-head cross-attention over pixel rows: queries from the boundary
/// gather, keys/values from the interior gather, softmax over interior
/// positions, scale 1/sqrt(head_dim). The score matrix is B x M per head.
/// Degenerate inputs (no queries or no keys) return the query rows as-is.
template <typename T>
int spatial_cross_attention(Tape<T>& tape, BoundParams<T>& p, const std::string& prefix, int q_rows,
                            int kv_rows, int heads, BsaTrace<T>* trace = nullptr) {
    const int B = tape.val(q_rows).shape[0];
    const int M = tape.val(kv_rows).shape[0];
    if (B == 0 || M == 0) return q_rows;
    const int c = tape.val(q_rows).shape[1];
    if (tape.val(kv_rows).shape[1] != c) throw SizingError("spatial attention: channel mismatch");
    const int d = c / heads;

    const int q = tape.linear(q_rows, p(prefix + ".q.w"), p(prefix + ".q.b"));
    const int k = tape.linear(kv_rows, p(prefix + ".k.w"), p(prefix + ".k.b"));
    const int v = tape.linear(kv_rows, p(prefix + ".v.w"), p(prefix + ".v.b"));

    std::vector<int> head_outs;
    head_outs.reserve(heads);
    for (int h = 0; h < heads; ++h) {
        const int qh = tape.slice_cols(q, h * d, (h + 1) * d);
        const int kh = tape.slice_cols(k, h * d, (h + 1) * d);
        const int vh = tape.slice_cols(v, h * d, (h + 1) * d);
        int scores = tape.matmul(qh, kh, false, true);
        scores = tape.scale(scores, static_cast<T>(1.0 / std::sqrt(static_cast<double>(d))));
        if (trace) trace->score_allocs.push_back({'s', h, B, M});
        Tensor<T> weights;
        const int probs = tape.softmax_rows(scores, trace && trace->capture_weights ? &weights : nullptr);
        if (trace && trace->capture_weights) trace->spatial_weights.push_back(std::move(weights));
        head_outs.push_back(tape.matmul(probs, vh));
    }
    const int merged = heads == 1 ? head_outs[0] : tape.concat_cols(head_outs);
    return tape.linear(merged, p(prefix + ".o.w"), p(prefix + ".o.b"));
}

/// Transposed multi-head cross-attention over channels: per head a
/// (C/heads)^2 affinity between query and key channels, scaled by a learned
/// temperature, softmax over key channels, applied to value channels.
template <typename T>
int channel_cross_attention(Tape<T>& tape, BoundParams<T>& p, const std::string& prefix, int q_map,
                            int kv_map, int heads, BsaTrace<T>* trace = nullptr) {
    const Tensor<T>& qv = tape.val(q_map);
    if (!(qv.same_shape(tape.val(kv_map)))) throw SizingError("channel attention: map shape mismatch");
    const int c = qv.shape[0], h0 = qv.shape[1], w0 = qv.shape[2];
    const int hw = h0 * w0;
    const int d = c / heads;

    const int q = tape.conv1x1(q_map, p(prefix + ".q.w"), p(prefix + ".q.b"));
    const int k = tape.conv1x1(kv_map, p(prefix + ".k.w"), p(prefix + ".k.b"));
    const int v = tape.conv1x1(kv_map, p(prefix + ".v.w"), p(prefix + ".v.b"));
    const int qm = tape.reshape(q, {c, hw});
    const int km = tape.reshape(k, {c, hw});
    const int vm = tape.reshape(v, {c, hw});
    const int log_temp = p(prefix + ".log_temp");

    std::vector<int> head_outs;
    head_outs.reserve(heads);
    for (int h = 0; h < heads; ++h) {
        const int qh = tape.slice_rows(qm, h * d, (h + 1) * d);
        const int kh = tape.slice_rows(km, h * d, (h + 1) * d);
        const int vh = tape.slice_rows(vm, h * d, (h + 1) * d);
        int affinity = tape.matmul(qh, kh, false, true);  // {d, d}
        const int temp = tape.exp_scalar(tape.index_scalar(log_temp, h));
        affinity = tape.mul_scalar_node(affinity, temp);
        if (trace) trace->score_allocs.push_back({'c', h, d, d});
        Tensor<T> weights;
        const int probs = tape.softmax_rows(affinity, trace && trace->capture_weights ? &weights : nullptr);
        if (trace && trace->capture_weights) trace->channel_weights.push_back(std::move(weights));
        head_outs.push_back(tape.matmul(probs, vh));
    }
    const int merged = heads == 1 ? head_outs[0] : tape.concat_rows(head_outs);
    const int omap = tape.reshape(merged, {c, h0, w0});
    return tape.conv1x1(omap, p(prefix + ".o.w"), p(prefix + ".o.b"));
}

template <typename T>
struct BsaForwardIds {
    int out = -1;
    int spatial_map = -1;  // scattered spatial branch before the residual add
    int channel_map = -1;
};

/// One BSA application: spatial branch on gathered boundary/interior rows,
/// channel branch on background-inclusive maps, residual combination.
/// An all-background partition makes the module an exact identity.
template <typename T>
BsaForwardIds<T> bsa_forward(Tape<T>& tape, BoundParams<T>& p, const std::string& prefix, int d_i,
                             const BinaryMask& boundary, const BinaryMask& interior, const BsaConfig& cfg,
                             BsaTrace<T>* trace = nullptr, BsaBranches branches = BsaBranches::Both) {
    const Tensor<T>& x = tape.val(d_i);
    if (boundary.height != x.shape[1] || boundary.width != x.shape[2] || !boundary.same_shape(interior))
        throw SizingError("bsa_forward: partition size does not match the feature map");
    if (trace) ++trace->bsa_calls;

    const int bcount = boundary.popcount();
    const int icount = interior.popcount();
    if (bcount == 0 && icount == 0) return {d_i, -1, -1};

    int out = d_i;
    BsaForwardIds<T> ids;

    if (branches != BsaBranches::ChannelOnly) {
        if (trace) ++trace->spatial_branch_runs;
        const auto bpos = boundary.positions();
        const int f_br = tape.gather_rows(d_i, bpos);
        const int f_cr = tape.gather_rows(d_i, interior.positions());
        const int refined = spatial_cross_attention(tape, p, prefix + ".spatial", f_br, f_cr,
                                                    cfg.spatial_heads, trace);
        ids.spatial_map = tape.scatter_rows(refined, bpos, x.shape[1], x.shape[2]);
        const int proj = tape.conv1x1(ids.spatial_map, p(prefix + ".comb_s.w"), p(prefix + ".comb_s.b"));
        out = tape.add(out, proj);
    }
    if (branches != BsaBranches::SpatialOnly) {
        if (trace) ++trace->channel_branch_runs;
        // Background-inclusive operands: queries keep boundary + background,
        // keys/values keep interior + background.
        const int f_br_bg = tape.mul_mask(d_i, interior.complement().template to_tensor<T>());
        const int f_cr_bg = tape.mul_mask(d_i, boundary.complement().template to_tensor<T>());
        ids.channel_map = channel_cross_attention(tape, p, prefix + ".channel", f_br_bg, f_cr_bg,
                                                  cfg.channel_heads, trace);
        const int proj = tape.conv1x1(ids.channel_map, p(prefix + ".comb_c.w"), p(prefix + ".comb_c.b"));
        out = tape.add(out, proj);
    }
    ids.out = out;
    return ids;
}

}  // namespace polyper
