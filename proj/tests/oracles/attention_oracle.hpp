#pragma once

#include <string>

#include "polyper/mask.hpp"
#include "polyper/params.hpp"
#include "polyper/tensor.hpp"

namespace polyper::oracle {

/// Dense reference for one boundary-sensitive attention application, written
/// as plain double loops with no shared math. Contract mirrored:
///   - both regions empty: the input map is returned untouched;
///   - spatial branch: cross-attention from boundary pixel rows into interior
///     pixel rows (per-head scale 1/sqrt(head_dim)), output projection, rows
///     scattered into a zero map; no queries leaves the map all zero, no keys
///     passes the boundary rows through unchanged;
///   - channel branch: transposed attention between the interior-suppressed
///     and boundary-suppressed maps, per-head channel affinity scaled by
///     exp(log_temp[head]), softmax over key channels;
///   - out = d + comb_s(F_spatial) + comb_c(F_channel), both combination
///     projections applied as pointwise convs with bias at every pixel.
TensorD dense_bsa_oracle(const TensorD& d, const BinaryMask& boundary, const BinaryMask& interior,
                         const ParamStore<double>& params, const std::string& prefix,
                         int spatial_heads, int channel_heads);

}  // namespace polyper::oracle
