#pragma once

#include <string>

#include "polyper/mask.hpp"
#include "polyper/tensor.hpp"

namespace polyper {

/// Decode to RGB float in [0,1], shape {3,H,W}. Throws DataError naming the
/// path on unreadable files.
TensorF load_image_rgb(const std::string& path);

/// Decode a single-channel mask, true where the pixel value is >= 128.
BinaryMask load_mask(const std::string& path);

/// Encode {3,H,W} floats in [0,1] (clamped) as an 8-bit image.
void save_image_rgb(const std::string& path, const TensorF& image);

/// Encode a mask as a single-channel 0/255 image.
void save_mask(const std::string& path, const BinaryMask& mask);

/// Resize an RGB tensor bilinearly / a mask with nearest-neighbor.
TensorF resize_image(const TensorF& image, int height, int width);
BinaryMask resize_mask(const BinaryMask& mask, int height, int width);

}  // namespace polyper
