#pragma once

#include <string>

#include "polyper/params.hpp"

namespace polyper {

/// On-disk parameter container. Layout (little-endian):
///   8-byte magic "PLYPRCK1", uint32 version,
///   uint32 config length + config text (flat key=value echo),
///   uint32 scalar width (4 = float32), uint32 tensor count,
///   then per tensor: uint32 name length, name, uint32 rank,
///   int32 dims, raw scalar data in registration order.
struct Checkpoint {
    std::string config_text;
    ParamStore<float> params;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace polyper
