#include "polyper/mask.hpp"

namespace polyper {

namespace {

BinaryMask erode_once(const BinaryMask& m) {
    BinaryMask out(m.height, m.width);
    for (int y = 0; y < m.height; ++y) {
        for (int x = 0; x < m.width; ++x) {
            if (!m.at(y, x)) continue;
            bool all = true;
            for (int dy = -1; dy <= 1 && all; ++dy)
                for (int dx = -1; dx <= 1; ++dx)
                    if (!m.at_or_false(y + dy, x + dx)) {
                        all = false;
                        break;
                    }
            out.set(y, x, all);
        }
    }
    return out;
}

BinaryMask dilate_once(const BinaryMask& m) {
    BinaryMask out(m.height, m.width);
    for (int y = 0; y < m.height; ++y) {
        for (int x = 0; x < m.width; ++x) {
            bool any = false;
            for (int dy = -1; dy <= 1 && !any; ++dy)
                for (int dx = -1; dx <= 1; ++dx)
                    if (m.at_or_false(y + dy, x + dx)) {
                        any = true;
                        break;
                    }
            out.set(y, x, any);
        }
    }
    return out;
}

}  // namespace

BinaryMask erode(const BinaryMask& mask, int iterations) {
    if (iterations < 0) throw SizingError("erode: iterations must be >= 0");
    BinaryMask m = mask;
    for (int i = 0; i < iterations; ++i) m = erode_once(m);
    return m;
}

BinaryMask dilate(const BinaryMask& mask, int iterations) {
    if (iterations < 0) throw SizingError("dilate: iterations must be >= 0");
    BinaryMask m = mask;
    for (int i = 0; i < iterations; ++i) m = dilate_once(m);
    return m;
}

RegionPartition separate_regions(const BinaryMask& mask, int iterations) {
    if (iterations < 1) throw SizingError("separate_regions: iterations must be >= 1");
    RegionPartition p;
    p.iterations = iterations;
    p.interior = erode(mask, iterations);
    p.boundary = dilate(mask, iterations).minus(p.interior);
    p.background = p.interior.unite(p.boundary).complement();
    return p;
}

}  // namespace polyper
