#include "polyper/metrics.hpp"

#include <fstream>

#include <json.hpp>

#include "polyper/error.hpp"

namespace polyper {

std::pair<double, double> dice_iou(const BinaryMask& pred, const BinaryMask& gt) {
    if (!pred.same_shape(gt)) throw SizingError("dice_iou: mask shapes differ");
    std::int64_t inter = 0, p = 0, g = 0;
    for (std::size_t i = 0; i < pred.v.size(); ++i) {
        const bool a = pred.v[i] != 0, b = gt.v[i] != 0;
        inter += a && b;
        p += a;
        g += b;
    }
    if (p == 0 && g == 0) return {1.0, 1.0};
    const double dice = 2.0 * inter / static_cast<double>(p + g);
    const double uni = static_cast<double>(p + g - inter);
    const double iou = uni == 0.0 ? 1.0 : inter / uni;
    return {dice, iou};
}

EvalReport evaluate(const std::function<BinaryMask(const Sample&)>& predict,
                    const std::vector<Sample>& data) {
    if (data.empty()) throw DataError("evaluate: empty dataset");
    EvalReport rep;
    rep.per_image.reserve(data.size());
    for (const Sample& s : data) {
        const BinaryMask pred = predict(s);
        if (!pred.same_shape(s.mask))
            throw DataError("evaluate: prediction/mask size mismatch for sample " + s.id);
        const auto [dice, iou] = dice_iou(pred, s.mask);
        ImageMetrics m{s.id, dice, iou, s.gt_proportion()};
        rep.all.m_dice += dice;
        rep.all.m_iou += iou;
        ++rep.all.count;
        if (m.gt_proportion < kSmallProportion) {
            rep.small_polyp.m_dice += dice;
            rep.small_polyp.m_iou += iou;
            ++rep.small_polyp.count;
        }
        rep.per_image.push_back(std::move(m));
    }
    rep.all.m_dice /= rep.all.count;
    rep.all.m_iou /= rep.all.count;
    if (rep.small_polyp.count > 0) {
        rep.small_polyp.m_dice /= rep.small_polyp.count;
        rep.small_polyp.m_iou /= rep.small_polyp.count;
    }
    return rep;
}

std::string eval_report_json(const EvalReport& report) {
    nlohmann::json j;
    j["m_dice"] = report.all.m_dice;
    j["m_iou"] = report.all.m_iou;
    j["count"] = report.all.count;
    j["small_polyp"] = {{"m_dice", report.small_polyp.m_dice},
                        {"m_iou", report.small_polyp.m_iou},
                        {"count", report.small_polyp.count}};
    nlohmann::json per = nlohmann::json::array();
    for (const auto& m : report.per_image)
        per.push_back({{"id", m.id}, {"dice", m.dice}, {"iou", m.iou}, {"gt_proportion", m.gt_proportion}});
    j["per_image"] = per;
    return j.dump(2);
}

void write_eval_csv(const std::string& path, const EvalReport& report) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot write report: " + path);
    os << "id,dice,iou,gt_proportion\n";
    for (const auto& m : report.per_image)
        os << m.id << "," << m.dice << "," << m.iou << "," << m.gt_proportion << "\n";
}

}  // namespace polyper
