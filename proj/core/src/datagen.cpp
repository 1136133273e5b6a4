#include "evcnn/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include <json.hpp>

#include "evcnn/errors.hpp"
#include "evcnn/surface.hpp"

namespace evcnn {

using nlohmann::json;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

ShapeKind parse_shape(const std::string& name) {
    if (name == "rectangle") return ShapeKind::rectangle;
    if (name == "cross") return ShapeKind::cross;
    if (name == "ring") return ShapeKind::ring;
    throw ConfigError("unknown shape '" + name + "'");
}

std::string to_string(ShapeKind shape) {
    switch (shape) {
        case ShapeKind::rectangle: return "rectangle";
        case ShapeKind::cross: return "cross";
        case ShapeKind::ring: return "ring";
    }
    return "rectangle";
}

SceneScript SceneScript::parse(const std::string& json_text) {
    SceneScript s;
    try {
        const json j = json::parse(json_text);
        s.width = j.value("width", s.width);
        s.height = j.value("height", s.height);
        s.duration_us = j.value("duration_us", s.duration_us);
        s.window_us = j.value("window_us", s.window_us);
        s.micro_step_us = j.value("micro_step_us", s.micro_step_us);
        for (const json& o : j.value("objects", json::array())) {
            SceneObject obj;
            obj.shape = parse_shape(o.value("shape", std::string("rectangle")));
            obj.size = o.value("size", obj.size);
            obj.stroke = o.value("stroke", obj.stroke);
            const auto start = o.at("start").get<std::vector<double>>();
            const auto vel = o.value("velocity", std::vector<double>{0.0, 0.0});
            if (start.size() != 2 || vel.size() != 2) throw ConfigError("start and velocity take two numbers");
            obj.start_x = start[0];
            obj.start_y = start[1];
            obj.velocity_x = vel[0];
            obj.velocity_y = vel[1];
            obj.intensity = o.value("intensity", obj.intensity);
            obj.cls = o.value("class", obj.cls);
            s.objects.push_back(obj);
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid scene script: ") + e.what());
    }
    if (s.width <= 0 || s.height <= 0 || s.width > 65535 || s.height > 65535) throw ConfigError("bad sensor size");
    if (s.window_us == 0) throw ZeroWindow();
    for (const SceneObject& o : s.objects) {
        if (o.size < 1 || o.stroke < 1) throw ConfigError("object size and stroke must be positive");
        if (o.intensity < 0 || o.intensity > 1) throw ConfigError("object intensity must lie in [0, 1]");
    }
    return s;
}

SceneScript SceneScript::load(const std::string& path) { return parse(read_file(path)); }

std::string SceneScript::to_json() const {
    json j{{"width", width}, {"height", height}, {"duration_us", duration_us}, {"window_us", window_us},
           {"micro_step_us", micro_step_us}, {"objects", json::array()}};
    for (const SceneObject& o : objects) {
        j["objects"].push_back({{"shape", to_string(o.shape)},
                                {"size", o.size},
                                {"stroke", o.stroke},
                                {"start", {o.start_x, o.start_y}},
                                {"velocity", {o.velocity_x, o.velocity_y}},
                                {"intensity", o.intensity},
                                {"class", o.cls}});
    }
    return j.dump(2) + "\n";
}

namespace {

// Calls f(x, y) for every pixel of the shape centred at (cx, cy), in bounds or not.
template <typename F>
void raster(const SceneObject& o, double cx, double cy, F f) {
    const int s = o.size;
    const int t = std::clamp(o.stroke, 1, s);
    const int ox = static_cast<int>(std::floor(cx)) - s / 2;
    const int oy = static_cast<int>(std::floor(cy)) - s / 2;
    const double c = (s - 1) / 2.0;
    const int bar = (s - t) / 2;  // first row/column of the cross bars
    const double ring_r = c - (t - 1) / 2.0;
    for (int j = 0; j < s; ++j) {
        for (int i = 0; i < s; ++i) {
            bool on = false;
            switch (o.shape) {
                case ShapeKind::rectangle: on = i < t || j < t || i >= s - t || j >= s - t; break;
                case ShapeKind::cross: on = (i >= bar && i < bar + t) || (j >= bar && j < bar + t); break;
                case ShapeKind::ring: on = std::fabs(std::hypot(i - c, j - c) - ring_r) <= t / 2.0; break;
            }
            if (on) f(ox + i, oy + j);
        }
    }
}

struct Extent {
    int x0 = std::numeric_limits<int>::max(), y0 = std::numeric_limits<int>::max(), x1 = -1, y1 = -1;

    bool empty() const { return x1 < 0; }
    void add(int x, int y) {
        x0 = std::min(x0, x), y0 = std::min(y0, y), x1 = std::max(x1, x), y1 = std::max(y1, y);
    }
    void merge(const Extent& o) {
        if (o.empty()) return;
        add(o.x0, o.y0);
        add(o.x1, o.y1);
    }
};

double position(double start, double velocity, Timestamp t) { return start + velocity * static_cast<double>(t); }

// First microsecond after t at which floor(start + velocity * t) differs.
Timestamp next_crossing(double start, double velocity, Timestamp t, Timestamp limit) {
    if (velocity == 0) return limit;
    const double f = std::floor(position(start, velocity, t));
    const double boundary = velocity > 0 ? f + 1 : f;
    const double tau = (boundary - start) / velocity;
    if (!(tau < static_cast<double>(limit))) return limit;
    Timestamp c = std::max<Timestamp>(t + 1, static_cast<Timestamp>(std::ceil(tau)));
    while (c < limit && std::floor(position(start, velocity, c)) == f) ++c;
    return c;
}

Timestamp next_render(const SceneScript& script, Timestamp t) {
    if (script.micro_step_us > 0) return t + script.micro_step_us;
    Timestamp next = script.duration_us;
    for (const SceneObject& o : script.objects) {
        next = std::min(next, next_crossing(o.start_x, o.velocity_x, t, next));
        next = std::min(next, next_crossing(o.start_y, o.velocity_y, t, next));
    }
    return next;
}

}  // namespace

GeneratedScene gen_moving_shapes(const SceneScript& script, std::uint64_t seed, double noise_rate) {
    if (script.objects.empty()) throw EmptyScene("scene script has no objects");
    if (script.duration_us == 0) throw EmptyScene("scene duration is zero");
    if (script.window_us == 0) throw ZeroWindow();
    if (!(noise_rate >= 0)) throw ConfigError("noise rate must be non-negative");

    const int W = script.width, H = script.height;
    const std::size_t npix = static_cast<std::size_t>(W) * H;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    GeneratedScene out;
    out.stream.width = W;
    out.stream.height = H;
    out.windows = static_cast<std::size_t>((script.duration_us + script.window_us - 1) / script.window_us);

    const std::size_t n_obj = script.objects.size();
    std::vector<Extent> extents(n_obj), last_raster(n_obj);
    std::size_t current_window = 0;
    auto flush_window = [&] {
        for (std::size_t k = 0; k < n_obj; ++k) {
            const Extent& e = extents[k];
            if (e.empty()) continue;
            out.boxes.push_back({script.objects[k].cls,
                                 {double(e.x0), double(e.y0), double(e.x1 + 1), double(e.y1 + 1)},
                                 current_window});
        }
    };
    auto advance_window_to = [&](std::size_t w) {
        while (current_window < w) {
            flush_window();
            ++current_window;
            extents = last_raster;
        }
    };

    std::vector<std::uint8_t> covered(npix, 0), next(npix, 0);
    std::vector<double> owner(npix, 1.0), next_owner(npix, 1.0);
    std::vector<std::size_t> covered_list, next_list;
    std::vector<std::pair<std::size_t, std::int8_t>> changes;

    for (Timestamp t = 0; t < script.duration_us; t = next_render(script, t)) {
        advance_window_to(static_cast<std::size_t>(t / script.window_us));
        next_list.clear();
        for (std::size_t k = 0; k < n_obj; ++k) {
            const SceneObject& o = script.objects[k];
            Extent drawn;
            raster(o, position(o.start_x, o.velocity_x, t), position(o.start_y, o.velocity_y, t), [&](int x, int y) {
                if (x < 0 || y < 0 || x >= W || y >= H) return;
                const std::size_t p = static_cast<std::size_t>(y) * W + x;
                drawn.add(x, y);
                if (!next[p]) next_list.push_back(p);
                next[p] = 1;
                next_owner[p] = o.intensity;
            });
            last_raster[k] = drawn;
            extents[k].merge(drawn);
        }
        // Pixels switching on or off, in row-major order.
        changes.clear();
        for (std::size_t p : next_list)
            if (!covered[p]) changes.push_back({p, std::int8_t{1}});
        for (std::size_t p : covered_list)
            if (!next[p]) changes.push_back({p, std::int8_t{-1}});
        std::sort(changes.begin(), changes.end());
        for (const auto& [p, pol] : changes) {
            const double intensity = pol > 0 ? next_owner[p] : owner[p];
            if (intensity < 1.0 && !(unit(rng) < intensity)) continue;
            out.stream.events.push_back(
                {static_cast<std::uint16_t>(p % W), static_cast<std::uint16_t>(p / W), t, pol});
        }
        for (std::size_t p : covered_list) covered[p] = 0;
        for (std::size_t p : next_list) {
            covered[p] = 1;
            owner[p] = next_owner[p];
            next[p] = 0;
        }
        std::swap(covered_list, next_list);
    }
    advance_window_to(out.windows - 1);
    flush_window();

    if (noise_rate > 0) {
        std::poisson_distribution<std::uint64_t> count(noise_rate * static_cast<double>(script.duration_us));
        std::uniform_int_distribution<int> px(0, W - 1), py(0, H - 1);
        std::uniform_int_distribution<Timestamp> pt(0, script.duration_us - 1);
        const std::uint64_t n = count(rng);
        std::vector<Event> noise;
        noise.reserve(n);
        for (std::uint64_t i = 0; i < n; ++i) {
            Event e;
            e.x = static_cast<std::uint16_t>(px(rng));
            e.y = static_cast<std::uint16_t>(py(rng));
            e.ts = pt(rng);
            e.polarity = unit(rng) < 0.5 ? 1 : -1;
            noise.push_back(e);
        }
        std::stable_sort(noise.begin(), noise.end(), [](const Event& a, const Event& b) { return a.ts < b.ts; });
        std::vector<Event> merged;
        merged.reserve(out.stream.events.size() + noise.size());
        std::merge(out.stream.events.begin(), out.stream.events.end(), noise.begin(), noise.end(),
                   std::back_inserter(merged), [](const Event& a, const Event& b) { return a.ts < b.ts; });
        out.stream.events = std::move(merged);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Frames

FrameSequence FrameSequence::parse(const std::string& json_text) {
    FrameSequence f;
    try {
        const json j = json::parse(json_text);
        f.width = j.at("width").get<int>();
        f.height = j.at("height").get<int>();
        f.period_us = j.value("period_us", f.period_us);
        for (const json& frame : j.at("frames")) {
            std::vector<double> grid;
            grid.reserve(static_cast<std::size_t>(f.width) * f.height);
            if (frame.size() != static_cast<std::size_t>(f.height)) throw ConfigError("frame row count mismatch");
            for (const json& row : frame) {
                if (row.size() != static_cast<std::size_t>(f.width)) throw ConfigError("frame column count mismatch");
                for (const json& v : row) grid.push_back(v.get<double>());
            }
            f.frames.push_back(std::move(grid));
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid frame sequence: ") + e.what());
    }
    return f;
}

FrameSequence FrameSequence::load(const std::string& path) { return parse(read_file(path)); }

std::string FrameSequence::to_json() const {
    json frames_j = json::array();
    for (const auto& grid : frames) {
        json rows = json::array();
        for (int y = 0; y < height; ++y) {
            rows.push_back(std::vector<double>(grid.begin() + static_cast<std::ptrdiff_t>(y) * width,
                                               grid.begin() + static_cast<std::ptrdiff_t>(y + 1) * width));
        }
        frames_j.push_back(std::move(rows));
    }
    json j{{"width", width}, {"height", height}, {"period_us", period_us}, {"frames", std::move(frames_j)}};
    return j.dump() + "\n";
}

EventStream frames_to_events(const FrameSequence& seq, const FrameConversionOptions& options) {
    if (!(options.threshold > 0)) throw ConfigError("threshold must be positive");
    if (seq.frames.size() < 2) throw ConfigError("need at least two frames");
    if (seq.period_us == 0) throw ZeroWindow();
    if (seq.width <= 0 || seq.height <= 0 || seq.width > 65535 || seq.height > 65535) {
        throw ConfigError("bad frame size");
    }
    const std::size_t npix = static_cast<std::size_t>(seq.width) * seq.height;
    double vmax = 0;
    for (const auto& grid : seq.frames) {
        if (grid.size() != npix) throw ConfigError("frame has the wrong number of pixels");
        for (double v : grid) {
            if (!std::isfinite(v)) throw NonPositiveIntensity("non-finite intensity");
            if (v < 0) throw NonPositiveIntensity("negative intensity");
            vmax = std::max(vmax, v);
        }
    }
    const double floor_value = vmax > 0 ? vmax / 255.0 : 1.0 / 255.0;

    auto log_at = [&](std::size_t f, std::size_t p) {
        double v = seq.frames[f][p];
        if (v == 0) {
            if (!options.floor_zeros) {
                throw NonPositiveIntensity("zero intensity at frame " + std::to_string(f) + ", pixel " +
                                           std::to_string(p));
            }
            v = floor_value;
        }
        return std::log(v);
    };

    // Absorbs round-off when a segment ends exactly on a level.
    constexpr double kEps = 1e-12;
    const double theta = options.threshold;
    const double period = static_cast<double>(seq.period_us);

    EventStream out;
    out.width = seq.width;
    out.height = seq.height;
    for (std::size_t p = 0; p < npix; ++p) {
        const auto x = static_cast<std::uint16_t>(p % seq.width);
        const auto y = static_cast<std::uint16_t>(p / seq.width);
        double ref = log_at(0, p);
        double a = ref;
        for (std::size_t f = 0; f + 1 < seq.frames.size(); ++f) {
            const double b = log_at(f + 1, p);
            const double t0 = static_cast<double>(f) * period;
            auto emit = [&](double level, std::int8_t pol) {
                double frac = (level - a) / (b - a);
                frac = std::clamp(frac, 0.0, 1.0);
                const auto ts = static_cast<Timestamp>(std::llround(t0 + frac * period));
                out.events.push_back({x, y, ts, pol});
                ref = level;
            };
            if (b > a) {
                while (b >= ref + theta - kEps) emit(ref + theta, 1);
            } else if (b < a) {
                while (b <= ref - theta + kEps) emit(ref - theta, -1);
            }
            a = b;
        }
    }
    std::stable_sort(out.events.begin(), out.events.end(), [](const Event& l, const Event& r) { return l.ts < r.ts; });
    return out;
}

// ---------------------------------------------------------------------------
// Labeling

std::vector<Rect> cluster_boxes(const std::vector<double>& grid, int width, int height, const ExtractOptions& options) {
    const int r = static_cast<int>(std::floor(options.radius));
    const double r2 = options.radius * options.radius;
    std::vector<std::pair<int, int>> offsets;
    for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx)
            if ((dx || dy) && dx * dx + dy * dy <= r2) offsets.push_back({dx, dy});

    auto idx = [width](int x, int y) { return static_cast<std::size_t>(y) * width + x; };
    std::vector<std::uint8_t> core(grid.size(), 0);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            if (grid[idx(x, y)] == 0) continue;
            int n = 0;
            for (const auto& [dx, dy] : offsets) {
                const int nx = x + dx, ny = y + dy;
                if (nx >= 0 && ny >= 0 && nx < width && ny < height && grid[idx(nx, ny)] != 0) ++n;
            }
            if (n >= options.rho) core[idx(x, y)] = 1;
        }
    }

    std::vector<Rect> boxes;
    std::vector<std::uint8_t> seen(grid.size(), 0);
    std::vector<std::pair<int, int>> stack;
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            if (!core[idx(x, y)] || seen[idx(x, y)]) continue;
            int x0 = x, x1 = x, y0 = y, y1 = y;
            stack.assign(1, {x, y});
            seen[idx(x, y)] = 1;
            while (!stack.empty()) {
                const auto [cx, cy] = stack.back();
                stack.pop_back();
                x0 = std::min(x0, cx), x1 = std::max(x1, cx), y0 = std::min(y0, cy), y1 = std::max(y1, cy);
                for (const auto& [dx, dy] : offsets) {
                    const int nx = cx + dx, ny = cy + dy;
                    if (nx < 0 || ny < 0 || nx >= width || ny >= height) continue;
                    const std::size_t q = idx(nx, ny);
                    if (core[q] && !seen[q]) {
                        seen[q] = 1;
                        stack.push_back({nx, ny});
                    }
                }
            }
            Rect box{double(x0), double(y0), double(x1 + 1), double(y1 + 1)};
            if (box.area() >= options.min_area) boxes.push_back(box);
        }
    }
    return boxes;
}

std::vector<GroundTruth> extract_bboxes(const EventStream& events, Timestamp window, const ExtractOptions& options) {
    if (window == 0) throw ZeroWindow();
    std::vector<GroundTruth> out;
    if (events.events.empty()) return out;
    const Timestamp origin = options.origin.value_or(events.events.front().ts);
    const auto batches = window_events(events, window, origin);
    std::vector<double> grid(static_cast<std::size_t>(events.width) * events.height);
    for (std::size_t w = 0; w < batches.size(); ++w) {
        if (batches[w].events.empty()) continue;
        LeakySurface<double> surface(events.width, events.height, options.lambda);
        surface.apply(batches[w], UpdateMode::per_event);
        const auto& px = surface.pixels().values();
        std::copy(px.begin(), px.end(), grid.begin());
        for (const Rect& r : cluster_boxes(grid, events.width, events.height, options)) out.push_back({0, r, w});
    }
    return out;
}

}  // namespace evcnn
