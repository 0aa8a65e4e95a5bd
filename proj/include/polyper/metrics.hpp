#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "polyper/data.hpp"
#include "polyper/mask.hpp"

namespace polyper {

/// Area fraction below which an image counts as a small-target case.
inline constexpr double kSmallProportion = 0.06;

struct ImageMetrics {
    std::string id;
    double dice = 0.0;
    double iou = 0.0;
    double gt_proportion = 0.0;
};

struct MetricAggregate {
    double m_dice = 0.0;
    double m_iou = 0.0;
    int count = 0;
};

struct EvalReport {
    std::vector<ImageMetrics> per_image;
    MetricAggregate all;
    MetricAggregate small_polyp;  // restricted to gt_proportion < kSmallProportion
};

/// dice = 2|P∩G| / (|P|+|G|), iou = |P∩G| / |P∪G|; both-empty counts as a
/// perfect match (1, 1).
std::pair<double, double> dice_iou(const BinaryMask& pred, const BinaryMask& gt);

/// Image-level mean metrics of `predict` over the dataset.
EvalReport evaluate(const std::function<BinaryMask(const Sample&)>& predict,
                    const std::vector<Sample>& data);

std::string eval_report_json(const EvalReport& report);
void write_eval_csv(const std::string& path, const EvalReport& report);

}  // namespace polyper
