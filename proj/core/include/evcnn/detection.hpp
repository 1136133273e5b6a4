#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "evcnn/config.hpp"
#include "evcnn/network.hpp"

namespace evcnn {

/// Axis-aligned rectangle in absolute pixels.
struct Rect {
    double x_min = 0, y_min = 0, x_max = 0, y_max = 0;

    double width() const { return x_max - x_min; }
    double height() const { return y_max - y_min; }
    double area() const { return width() * height(); }
    bool operator==(const Rect&) const = default;
};

struct DetBox {
    int cls = 0;
    double conf = 0;
    Rect box;
    std::size_t sample = 0;
};

struct GroundTruth {
    int cls = 0;
    Rect box;
    std::size_t sample = 0;
};

/// Raw cell-relative parameters of one predicted box.
struct CellBox {
    int row = 0, col = 0, slot = 0;
    double x = 0, y = 0, w = 0, h = 0;
};

/// Decodes a [rows][cols][boxes*5 + classes] head grid. Per box the channels
/// are x, y, w, h, confidence; the class scores follow all boxes. Raw values
/// are clamped to [0, 1]. A box is kept when its score (confidence times the
/// best class score) is positive and at least `conf_threshold`.
/// Throws ShapeMismatch.
std::vector<DetBox> decode_grid(const GridOutput& grid, const HeadSpec& head, int image_w, int image_h,
                                double conf_threshold, std::size_t sample = 0);

/// Inverse of the geometric part of decode_grid for a box centred in cell (row, col).
CellBox encode_box(const Rect& box, int row, int col, const HeadSpec& head, int image_w, int image_h);

double iou(const Rect& a, const Rect& b);

/// Greedy per-class suppression by descending confidence; a box is dropped
/// when its IoU with a kept box of the same class reaches `iou_threshold`.
std::vector<DetBox> nms(std::vector<DetBox> boxes, double iou_threshold);

struct MapResult {
    std::map<int, double> ap;  // classes with at least one ground truth
    double map = 0;
};

/// All-point interpolated average precision per class and its mean.
/// preds[i] and gts[i] belong to sample i.
MapResult evaluate_map(const std::vector<std::vector<DetBox>>& preds,
                       const std::vector<std::vector<GroundTruth>>& gts, double iou_threshold = 0.5);

/// Fraction of ground truths whose highest-IoU prediction in the same sample
/// overlaps it (IoU > 0) and, when `class_sensitive`, has the same class.
double evaluate_accuracy(const std::vector<std::vector<DetBox>>& preds,
                         const std::vector<std::vector<GroundTruth>>& gts, bool class_sensitive = true);

// JSON lines: {"sample": n, "class": c, "conf": p, "box": [x_min, y_min, x_max, y_max]}
std::string to_jsonl(const std::vector<DetBox>& boxes);
std::string to_jsonl(const std::vector<GroundTruth>& boxes);
/// Throws MalformedRecord with the 1-based line number.
std::vector<DetBox> parse_predictions(const std::string& jsonl);
std::vector<GroundTruth> parse_ground_truth(const std::string& jsonl);

/// Groups boxes by sample id into a vector of `samples` entries (at least max id + 1).
template <typename Box>
std::vector<std::vector<Box>> group_by_sample(const std::vector<Box>& boxes, std::size_t samples = 0) {
    for (const Box& b : boxes) samples = std::max(samples, b.sample + 1);
    std::vector<std::vector<Box>> out(samples);
    for (const Box& b : boxes) out[b.sample].push_back(b);
    return out;
}

}  // namespace evcnn
