#pragma once

#include <cstdint>
#include <vector>

#include "polyper/error.hpp"
#include "polyper/tensor.hpp"

namespace polyper {

/// H x W boolean grid, true = foreground. Row-major storage.
struct BinaryMask {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> v;

    BinaryMask() = default;
    BinaryMask(int h, int w, bool fill = false)
        : height(h), width(w), v(static_cast<std::size_t>(h) * w, fill ? 1 : 0) {
        if (h < 1 || w < 1) throw SizingError("BinaryMask: dimensions must be >= 1");
    }

    bool at(int y, int x) const { return v[static_cast<std::size_t>(y) * width + x] != 0; }
    void set(int y, int x, bool b) { v[static_cast<std::size_t>(y) * width + x] = b ? 1 : 0; }

    /// In-bounds lookup treating everything outside the image as background.
    bool at_or_false(int y, int x) const {
        if (y < 0 || y >= height || x < 0 || x >= width) return false;
        return at(y, x);
    }

    int popcount() const {
        int n = 0;
        for (auto b : v) n += b != 0;
        return n;
    }

    bool empty_mask() const { return popcount() == 0; }

    bool same_shape(const BinaryMask& o) const { return height == o.height && width == o.width; }

    bool operator==(const BinaryMask& o) const {
        return height == o.height && width == o.width && v == o.v;
    }

    BinaryMask complement() const {
        BinaryMask out(height, width);
        for (std::size_t i = 0; i < v.size(); ++i) out.v[i] = v[i] ? 0 : 1;
        return out;
    }

    /// True everywhere this mask is set and `o` is not.
    BinaryMask minus(const BinaryMask& o) const {
        BinaryMask out(height, width);
        for (std::size_t i = 0; i < v.size(); ++i) out.v[i] = (v[i] && !o.v[i]) ? 1 : 0;
        return out;
    }

    BinaryMask unite(const BinaryMask& o) const {
        BinaryMask out(height, width);
        for (std::size_t i = 0; i < v.size(); ++i) out.v[i] = (v[i] || o.v[i]) ? 1 : 0;
        return out;
    }

    bool subset_of(const BinaryMask& o) const {
        for (std::size_t i = 0; i < v.size(); ++i)
            if (v[i] && !o.v[i]) return false;
        return true;
    }

    /// 0/1 float field at the mask's resolution, {H*W}.
    template <typename T>
    Tensor<T> to_tensor() const {
        Tensor<T> t({height * width});
        for (std::size_t i = 0; i < v.size(); ++i) t.v[i] = v[i] ? T(1) : T(0);
        return t;
    }

    /// Row-major list of foreground coordinates.
    std::vector<std::pair<int, int>> positions() const {
        std::vector<std::pair<int, int>> out;
        out.reserve(popcount());
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x)
                if (at(y, x)) out.emplace_back(y, x);
        return out;
    }
};

/// Split of a mask into boundary band, interior core, and background.
/// The three masks are pairwise disjoint and jointly cover every pixel.
struct RegionPartition {
    BinaryMask boundary;    // band between the dilated and eroded masks
    BinaryMask interior;    // erosion survivor
    BinaryMask background;  // everything else
    int iterations = 0;
};

/// One erosion or dilation step uses the full 3x3 square neighborhood;
/// pixels outside the image count as background.
BinaryMask erode(const BinaryMask& mask, int iterations);
BinaryMask dilate(const BinaryMask& mask, int iterations);

/// interior = erode(mask, T); boundary = dilate(mask, T) minus interior;
/// background = the rest. Returns the literal partition even when the
/// interior comes out empty.
RegionPartition separate_regions(const BinaryMask& mask, int iterations);

}  // namespace polyper
