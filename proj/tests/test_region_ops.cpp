#include <doctest.h>

#include "helpers.hpp"
#include "oracles/morphology_oracle.hpp"
#include "polyper/mask.hpp"

using namespace polyper;
using testutil::mask_from;
using testutil::random_mask;

TEST_CASE("erosion of a solid 5x5 leaves the central 3x3") {
    const BinaryMask out = erode(BinaryMask(5, 5, true), 1);
    const BinaryMask expect = mask_from({
        ".....",
        ".###.",
        ".###.",
        ".###.",
        ".....",
    });
    CHECK(out == expect);
}

TEST_CASE("zero iterations are the identity for both operators") {
    Rng rng(11);
    for (int i = 0; i < 10; ++i) {
        const BinaryMask m = random_mask(rng, rng.uniform_int(1, 12), rng.uniform_int(1, 12), 0.4);
        CHECK(erode(m, 0) == m);
        CHECK(dilate(m, 0) == m);
    }
}

TEST_CASE("two erosions of a centered 5x5 block leave only the center pixel") {
    BinaryMask m(9, 9);
    for (int y = 2; y <= 6; ++y)
        for (int x = 2; x <= 6; ++x) m.set(y, x, true);
    const BinaryMask out = erode(m, 2);
    CHECK(out.popcount() == 1);
    CHECK(out.at(4, 4));
}

TEST_CASE("dilating a lone center pixel gives the centered 3x3 block") {
    BinaryMask m(5, 5);
    m.set(2, 2, true);
    const BinaryMask expect = mask_from({
        ".....",
        ".###.",
        ".###.",
        ".###.",
        ".....",
    });
    CHECK(dilate(m, 1) == expect);
}

TEST_CASE("the empty mask is a fixed point of dilation and erosion") {
    const BinaryMask empty(6, 4);
    CHECK(dilate(empty, 3) == empty);
    CHECK(erode(empty, 3) == empty);
}

TEST_CASE("a solid mask saturates at the border under dilation") {
    const BinaryMask solid(5, 5, true);
    CHECK(dilate(solid, 3) == solid);
}

TEST_CASE("iteration counts compose additively") {
    Rng rng(23);
    for (int i = 0; i < 20; ++i) {
        const BinaryMask m = random_mask(rng, rng.uniform_int(3, 14), rng.uniform_int(3, 14), 0.5);
        const int a = rng.uniform_int(0, 3), b = rng.uniform_int(0, 3);
        CHECK(erode(erode(m, a), b) == erode(m, a + b));
        CHECK(dilate(dilate(m, a), b) == dilate(m, a + b));
    }
}

TEST_CASE("separating a centered 5x5 block at one iteration") {
    BinaryMask m(9, 9);
    for (int y = 2; y <= 6; ++y)
        for (int x = 2; x <= 6; ++x) m.set(y, x, true);
    const RegionPartition part = separate_regions(m, 1);

    BinaryMask interior(9, 9);
    for (int y = 3; y <= 5; ++y)
        for (int x = 3; x <= 5; ++x) interior.set(y, x, true);
    CHECK(part.interior == interior);

    // Band between the dilated 7x7 block and the eroded 3x3 block.
    CHECK(part.boundary.popcount() == 40);
    CHECK(part.boundary == dilate(m, 1).minus(interior));
    CHECK(part.background == part.interior.unite(part.boundary).complement());
    CHECK(part.iterations == 1);
}

TEST_CASE("an all-false mask separates into pure background") {
    const RegionPartition part = separate_regions(BinaryMask(7, 7), 4);
    CHECK(part.interior.empty_mask());
    CHECK(part.boundary.empty_mask());
    CHECK(part.background.popcount() == 49);
}

TEST_CASE("an all-true mask separates into a 4-deep frame and a core") {
    const int n = 12, t = 4;
    const RegionPartition part = separate_regions(BinaryMask(n, n, true), t);
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            const int margin = std::min(std::min(y, x), std::min(n - 1 - y, n - 1 - x));
            CHECK(part.interior.at(y, x) == (margin >= t));
            CHECK(part.boundary.at(y, x) == (margin < t));
            CHECK_FALSE(part.background.at(y, x));
        }
}

TEST_CASE("partitions are disjoint and exhaustive with the sandwich property") {
    Rng rng(37);
    for (int i = 0; i < 100; ++i) {
        const int h = rng.uniform_int(1, 16), w = rng.uniform_int(1, 16);
        const BinaryMask m = random_mask(rng, h, w, rng.uniform(0.1, 0.9));
        const int t = rng.uniform_int(1, 4);
        const RegionPartition part = separate_regions(m, t);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const int count = part.interior.at(y, x) + part.boundary.at(y, x) + part.background.at(y, x);
                REQUIRE(count == 1);
            }
        CHECK(part.interior.subset_of(m));
        CHECK(m.subset_of(part.interior.unite(part.boundary)));
        CHECK(erode(m, t).subset_of(m));
        CHECK(m.subset_of(dilate(m, t)));
    }
}

TEST_CASE("both operators are monotone in the mask argument") {
    Rng rng(41);
    for (int i = 0; i < 30; ++i) {
        const int h = rng.uniform_int(2, 14), w = rng.uniform_int(2, 14);
        const BinaryMask m2 = random_mask(rng, h, w, 0.6);
        BinaryMask m1 = m2;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                if (m1.at(y, x) && rng.bernoulli(0.3)) m1.set(y, x, false);
        const int t = rng.uniform_int(1, 3);
        CHECK(erode(m1, t).subset_of(erode(m2, t)));
        CHECK(dilate(m1, t).subset_of(dilate(m2, t)));
    }
}

TEST_CASE("erosion and dilation are dual through the complement") {
    // Zero padding on the primal side matches foreground padding on the
    // complement side: outside pixels flip along with the mask.
    Rng rng(43);
    for (int i = 0; i < 50; ++i) {
        const int h = rng.uniform_int(1, 16), w = rng.uniform_int(1, 16);
        const BinaryMask m = random_mask(rng, h, w, rng.uniform(0.2, 0.8));
        const int t = rng.uniform_int(1, 4);
        CHECK(oracle::equal(erode(m, t),
                            oracle::complement(oracle::dilate(m.complement(), t, oracle::Pad::Foreground))));
        CHECK(oracle::equal(dilate(m, t),
                            oracle::complement(oracle::erode(m.complement(), t, oracle::Pad::Foreground))));
    }
}

TEST_CASE("iterated operators match the definition-level reference") {
    Rng rng(47);
    for (int i = 0; i < 60; ++i) {
        const int h = rng.uniform_int(1, 16), w = rng.uniform_int(1, 16);
        const BinaryMask m = random_mask(rng, h, w, rng.uniform(0.1, 0.9));
        const int t = rng.uniform_int(1, 4);
        CHECK(oracle::equal(erode(m, t), oracle::erode(m, t)));
        CHECK(oracle::equal(dilate(m, t), oracle::dilate(m, t)));
    }
}
