#include "evcnn/detection.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "evcnn/errors.hpp"

namespace evcnn {

using nlohmann::json;

namespace {

double clamp01(double v) {
    // NaN maps to 0 so a corrupt head never produces a confident box.
    if (!(v > 0)) return 0;
    return v < 1 ? v : 1;
}

}  // namespace

std::vector<DetBox> decode_grid(const GridOutput& grid, const HeadSpec& head, int image_w, int image_h,
                                double conf_threshold, std::size_t sample) {
    if (grid.rows != head.rows || grid.cols != head.cols || grid.channels != head.channels()) {
        throw ShapeMismatch("head grid is " + std::to_string(grid.rows) + "x" + std::to_string(grid.cols) + "x" +
                            std::to_string(grid.channels) + ", expected " + std::to_string(head.rows) + "x" +
                            std::to_string(head.cols) + "x" + std::to_string(head.channels()));
    }
    const double cell_w = static_cast<double>(image_w) / head.cols;
    const double cell_h = static_cast<double>(image_h) / head.rows;
    std::vector<DetBox> out;
    for (int r = 0; r < head.rows; ++r) {
        for (int c = 0; c < head.cols; ++c) {
            int best_cls = 0;
            double best_p = -1;
            for (int k = 0; k < head.classes; ++k) {
                const double p = clamp01(grid.at(r, c, head.boxes * 5 + k));
                if (p > best_p) best_p = p, best_cls = k;
            }
            if (head.classes == 0) best_p = 1;
            for (int b = 0; b < head.boxes; ++b) {
                const double x = clamp01(grid.at(r, c, b * 5 + 0));
                const double y = clamp01(grid.at(r, c, b * 5 + 1));
                const double w = clamp01(grid.at(r, c, b * 5 + 2));
                const double h = clamp01(grid.at(r, c, b * 5 + 3));
                const double score = clamp01(grid.at(r, c, b * 5 + 4)) * best_p;
                if (!(score > 0) || score < conf_threshold) continue;
                const double cx = (c + x) * cell_w, cy = (r + y) * cell_h;
                const double bw = w * image_w, bh = h * image_h;
                out.push_back({best_cls, score, {cx - bw / 2, cy - bh / 2, cx + bw / 2, cy + bh / 2}, sample});
            }
        }
    }
    return out;
}

CellBox encode_box(const Rect& box, int row, int col, const HeadSpec& head, int image_w, int image_h) {
    const double cx = (box.x_min + box.x_max) / 2, cy = (box.y_min + box.y_max) / 2;
    CellBox cb;
    cb.row = row;
    cb.col = col;
    cb.x = cx * head.cols / image_w - col;
    cb.y = cy * head.rows / image_h - row;
    cb.w = box.width() / image_w;
    cb.h = box.height() / image_h;
    return cb;
}

double iou(const Rect& a, const Rect& b) {
    const double iw = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
    const double ih = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
    const double inter = (iw > 0 && ih > 0) ? iw * ih : 0.0;
    const double uni = a.area() + b.area() - inter;
    if (!(uni > 0)) return 0.0;
    return inter / uni;
}

std::vector<DetBox> nms(std::vector<DetBox> boxes, double iou_threshold) {
    std::stable_sort(boxes.begin(), boxes.end(), [](const DetBox& a, const DetBox& b) { return a.conf > b.conf; });
    std::vector<DetBox> kept;
    for (const DetBox& cand : boxes) {
        bool suppressed = false;
        for (const DetBox& k : kept) {
            if (k.cls == cand.cls && iou(k.box, cand.box) >= iou_threshold) {
                suppressed = true;
                break;
            }
        }
        if (!suppressed) kept.push_back(cand);
    }
    return kept;
}

MapResult evaluate_map(const std::vector<std::vector<DetBox>>& preds,
                       const std::vector<std::vector<GroundTruth>>& gts, double iou_threshold) {
    std::map<int, std::size_t> gt_count;
    for (const auto& sample : gts)
        for (const GroundTruth& g : sample) ++gt_count[g.cls];

    MapResult result;
    for (const auto& [cls, n_gt] : gt_count) {
        struct Ranked {
            double conf;
            std::size_t sample;
            const Rect* box;
        };
        std::vector<Ranked> ranked;
        for (std::size_t s = 0; s < preds.size(); ++s)
            for (const DetBox& p : preds[s])
                if (p.cls == cls) ranked.push_back({p.conf, s, &p.box});
        std::stable_sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) { return a.conf > b.conf; });

        std::vector<std::vector<bool>> matched(gts.size());
        for (std::size_t s = 0; s < gts.size(); ++s) matched[s].assign(gts[s].size(), false);

        std::vector<double> precision, recall;
        std::size_t tp = 0;
        for (std::size_t i = 0; i < ranked.size(); ++i) {
            const Ranked& r = ranked[i];
            double best = -1;
            std::size_t best_j = 0;
            if (r.sample < gts.size()) {
                for (std::size_t j = 0; j < gts[r.sample].size(); ++j) {
                    const GroundTruth& g = gts[r.sample][j];
                    if (g.cls != cls || matched[r.sample][j]) continue;
                    const double o = iou(*r.box, g.box);
                    if (o > best) best = o, best_j = j;
                }
            }
            if (best >= iou_threshold) {
                matched[r.sample][best_j] = true;
                ++tp;
            }
            precision.push_back(static_cast<double>(tp) / static_cast<double>(i + 1));
            recall.push_back(static_cast<double>(tp) / static_cast<double>(n_gt));
        }
        for (std::size_t i = precision.size(); i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
        double ap = 0, prev_recall = 0;
        for (std::size_t i = 0; i < precision.size(); ++i) {
            ap += (recall[i] - prev_recall) * precision[i];
            prev_recall = recall[i];
        }
        result.ap[cls] = ap;
    }
    if (!result.ap.empty()) {
        double sum = 0;
        for (const auto& [cls, ap] : result.ap) sum += ap;
        result.map = sum / static_cast<double>(result.ap.size());
    }
    return result;
}

double evaluate_accuracy(const std::vector<std::vector<DetBox>>& preds,
                         const std::vector<std::vector<GroundTruth>>& gts, bool class_sensitive) {
    std::size_t total = 0, correct = 0;
    for (std::size_t s = 0; s < gts.size(); ++s) {
        for (const GroundTruth& g : gts[s]) {
            ++total;
            if (s >= preds.size()) continue;
            const DetBox* best = nullptr;
            double best_iou = -1;
            for (const DetBox& p : preds[s]) {
                const double o = iou(p.box, g.box);
                if (o > best_iou) best_iou = o, best = &p;
            }
            if (best && best_iou > 0 && (!class_sensitive || best->cls == g.cls)) ++correct;
        }
    }
    return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

namespace {

json box_json(const Rect& r) { return json::array({r.x_min, r.y_min, r.x_max, r.y_max}); }

template <typename F>
void for_each_line(const std::string& text, F f) {
    std::istringstream in(text);
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const json j = json::parse(line);
            f(j);
        } catch (const json::exception& e) {
            throw MalformedRecord(std::string("bad box record: ") + e.what(), n);
        }
    }
}

Rect parse_rect(const json& j) {
    const auto v = j.at("box").get<std::vector<double>>();
    if (v.size() != 4) throw json::other_error::create(501, "box must have 4 numbers", &j);
    Rect r{v[0], v[1], v[2], v[3]};
    if (!(r.x_min <= r.x_max && r.y_min <= r.y_max)) throw json::other_error::create(502, "inverted box", &j);
    return r;
}

}  // namespace

std::string to_jsonl(const std::vector<DetBox>& boxes) {
    std::string out;
    for (const DetBox& b : boxes) {
        json j{{"sample", b.sample}, {"class", b.cls}, {"conf", b.conf}, {"box", box_json(b.box)}};
        out += j.dump() + "\n";
    }
    return out;
}

std::string to_jsonl(const std::vector<GroundTruth>& boxes) {
    std::string out;
    for (const GroundTruth& b : boxes) {
        json j{{"sample", b.sample}, {"class", b.cls}, {"box", box_json(b.box)}};
        out += j.dump() + "\n";
    }
    return out;
}

std::vector<DetBox> parse_predictions(const std::string& jsonl) {
    std::vector<DetBox> out;
    for_each_line(jsonl, [&](const json& j) {
        out.push_back({j.at("class").get<int>(), j.at("conf").get<double>(), parse_rect(j),
                       j.at("sample").get<std::size_t>()});
    });
    return out;
}

std::vector<GroundTruth> parse_ground_truth(const std::string& jsonl) {
    std::vector<GroundTruth> out;
    for_each_line(jsonl, [&](const json& j) {
        out.push_back({j.at("class").get<int>(), parse_rect(j), j.at("sample").get<std::size_t>()});
    });
    return out;
}

}  // namespace evcnn
