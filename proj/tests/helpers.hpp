#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "polyper/mask.hpp"
#include "polyper/rng.hpp"
#include "polyper/tensor.hpp"

namespace polyper::testutil {

/// Mask fixture from rows of '.' (background) and '#' (foreground).
inline BinaryMask mask_from(const std::vector<std::string>& rows) {
    BinaryMask m(static_cast<int>(rows.size()), static_cast<int>(rows[0].size()));
    for (int y = 0; y < m.height; ++y) {
        if (static_cast<int>(rows[y].size()) != m.width) throw std::invalid_argument("ragged mask fixture");
        for (int x = 0; x < m.width; ++x) m.set(y, x, rows[y][x] == '#');
    }
    return m;
}

inline BinaryMask random_mask(Rng& rng, int h, int w, double p) {
    BinaryMask m(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) m.set(y, x, rng.bernoulli(p));
    return m;
}

template <typename T>
Tensor<T> random_tensor(Rng& rng, std::vector<int> shape, double stddev = 1.0) {
    Tensor<T> t(std::move(shape));
    for (auto& x : t.v) x = static_cast<T>(rng.normal() * stddev);
    return t;
}

/// Runs `f`, returns the caught E message, or "" when nothing was thrown.
template <typename E, typename F>
std::string thrown_message(F&& f) {
    try {
        f();
    } catch (const E& e) {
        return e.what();
    }
    return "";
}

inline bool contains(const std::string& haystack, const std::string& needle) {
    return haystack.find(needle) != std::string::npos;
}

/// Fresh scratch directory under the working directory.
inline std::string scratch_dir(const std::string& tag) {
    namespace fs = std::filesystem;
    const fs::path dir = fs::path("test_out") / tag;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir.string();
}

}  // namespace polyper::testutil
