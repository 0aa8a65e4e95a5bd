#include <doctest.h>

#include <fstream>
#include <json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "polyper/metrics.hpp"

using namespace polyper;
using testutil::contains;
using testutil::random_mask;
using testutil::scratch_dir;
using testutil::thrown_message;

namespace {

BinaryMask mask_with_popcount(int h, int w, int count) {
    BinaryMask m(h, w);
    for (int k = 0; k < count; ++k) m.set(k / w, k % w, true);
    return m;
}

Sample sample_of(const std::string& id, const BinaryMask& gt) {
    Sample s;
    s.id = id;
    s.image = TensorF({3, gt.height, gt.width});
    s.mask = gt;
    return s;
}

}  // namespace

TEST_CASE("identical nonempty masks score a perfect one") {
    BinaryMask m(8, 8);
    for (int y = 2; y <= 5; ++y)
        for (int x = 3; x <= 6; ++x) m.set(y, x, true);
    const auto [dice, iou] = dice_iou(m, m);
    CHECK(dice == 1.0);
    CHECK(iou == 1.0);
}

TEST_CASE("a half-overlapping pair gives dice one half and iou one third") {
    // |P| = |G| = 4 with an intersection of 2: dice = 4/8, iou = 2/6.
    BinaryMask pred(4, 4), gt(4, 4);
    for (int x = 0; x < 4; ++x) pred.set(0, x, true);
    for (int x = 2; x < 6; ++x) gt.set(x / 4, x % 4, true);
    REQUIRE(pred.popcount() == 4);
    REQUIRE(gt.popcount() == 4);
    const auto [dice, iou] = dice_iou(pred, gt);
    CHECK(dice == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(iou == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("two empty masks count as a perfect match") {
    const auto [dice, iou] = dice_iou(BinaryMask(5, 7), BinaryMask(5, 7));
    CHECK(dice == 1.0);
    CHECK(iou == 1.0);
}

TEST_CASE("iou never exceeds dice and both stay in the unit interval") {
    Rng rng(41);
    for (int round = 0; round < 200; ++round) {
        const int h = rng.uniform_int(1, 12), w = rng.uniform_int(1, 12);
        const auto [dice, iou] = dice_iou(random_mask(rng, h, w, rng.uniform(0.0, 1.0)),
                                          random_mask(rng, h, w, rng.uniform(0.0, 1.0)));
        REQUIRE(dice >= 0.0);
        REQUIRE(dice <= 1.0);
        REQUIRE(iou >= 0.0);
        REQUIRE(iou <= dice + 1e-15);
    }
}

TEST_CASE("metrics are invariant under a joint flip of both masks") {
    Rng rng(42);
    for (int round = 0; round < 20; ++round) {
        const Sample p = sample_of("p", random_mask(rng, 9, 6, 0.4));
        const Sample g = sample_of("g", random_mask(rng, 9, 6, 0.4));
        const Sample pf = flip_sample(p, true, round % 2 == 1);
        const Sample gf = flip_sample(g, true, round % 2 == 1);
        CHECK(dice_iou(p.mask, g.mask) == dice_iou(pf.mask, gf.mask));
    }
}

TEST_CASE("mismatched mask shapes are rejected") {
    CHECK(contains(thrown_message<SizingError>([] { dice_iou(BinaryMask(4, 4), BinaryMask(4, 5)); }),
                   "dice_iou: mask shapes differ"));
}

TEST_CASE("evaluation averages per-image scores") {
    BinaryMask gt(4, 4);
    for (int x = 0; x < 4; ++x) gt.set(1, x, true);
    BinaryMask half(4, 4);
    half.set(1, 0, true);
    half.set(1, 1, true);
    half.set(2, 0, true);
    half.set(2, 1, true);

    const std::vector<Sample> data = {sample_of("a", gt), sample_of("b", gt)};
    const EvalReport report = evaluate(
        [&](const Sample& s) { return s.id == "a" ? gt : half; }, data);
    CHECK(report.all.count == 2);
    CHECK(report.all.m_dice == doctest::Approx(0.75).epsilon(1e-15));
    REQUIRE(report.per_image.size() == 2);
    CHECK(report.per_image[0].id == "a");
    CHECK(report.per_image[0].dice == 1.0);
    CHECK(report.per_image[1].dice == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("the small bucket cuts strictly below six percent area") {
    // On 64x64, 245 px is 5.98% and 246 px is 6.01%.
    const std::vector<Sample> data = {sample_of("under", mask_with_popcount(64, 64, 245)),
                                      sample_of("over", mask_with_popcount(64, 64, 246))};
    const EvalReport report = evaluate([](const Sample& s) { return s.mask; }, data);
    CHECK(report.all.count == 2);
    CHECK(report.small_polyp.count == 1);
    CHECK(report.small_polyp.m_dice == 1.0);
    CHECK(report.per_image[0].gt_proportion == doctest::Approx(245.0 / 4096.0).epsilon(1e-15));
}

TEST_CASE("evaluation rejects empty datasets and size mismatches") {
    CHECK(contains(thrown_message<DataError>([] {
                       evaluate([](const Sample& s) { return s.mask; }, {});
                   }),
                   "evaluate: empty dataset"));

    const std::vector<Sample> data = {sample_of("odd", BinaryMask(4, 4))};
    CHECK(contains(thrown_message<DataError>([&] {
                       evaluate([](const Sample&) { return BinaryMask(4, 5); }, data);
                   }),
                   "evaluate: prediction/mask size mismatch for sample odd"));
}

TEST_CASE("the report serializes to parseable json and csv") {
    Rng rng(43);
    std::vector<Sample> data;
    for (int i = 0; i < 3; ++i)
        data.push_back(sample_of("s" + std::to_string(i), random_mask(rng, 8, 8, 0.3)));
    const EvalReport report = evaluate([](const Sample& s) { return s.mask; }, data);

    const nlohmann::json j = nlohmann::json::parse(eval_report_json(report));
    CHECK(j["m_dice"].get<double>() == 1.0);
    CHECK(j["m_iou"].get<double>() == 1.0);
    CHECK(j["count"].get<int>() == 3);
    CHECK(j["small_polyp"]["count"].get<int>() == report.small_polyp.count);
    CHECK(j["per_image"].size() == 3);

    const std::string dir = scratch_dir("metrics_csv");
    write_eval_csv(dir + "/eval.csv", report);
    std::ifstream in(dir + "/eval.csv");
    REQUIRE(in.good());
    std::string line;
    std::getline(in, line);
    CHECK(line == "id,dice,iou,gt_proportion");
    int rows = 0;
    while (std::getline(in, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 3);
}
