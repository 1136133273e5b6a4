#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>

#include "evcnn/datagen.hpp"
#include "evcnn/errors.hpp"

using namespace evcnn;

namespace {

SceneScript one_object(ShapeKind shape, double vx, double vy) {
    SceneScript s;
    s.width = s.height = 64;
    s.duration_us = 50000;
    SceneObject o;
    o.shape = shape;
    o.size = 12;
    o.start_x = 30;
    o.start_y = 28;
    o.velocity_x = vx;
    o.velocity_y = vy;
    s.objects.push_back(o);
    return s;
}

// Two frames per pixel holding the given linear intensities.
FrameSequence ramp(std::vector<double> levels, Timestamp period) {
    FrameSequence f{1, 1, period, {}};
    for (double l : levels) f.frames.push_back({l});
    return f;
}

std::vector<double> block_grid(int w, int h, const std::vector<Rect>& blocks) {
    std::vector<double> g(static_cast<std::size_t>(w) * h, 0.0);
    for (const Rect& r : blocks)
        for (int y = static_cast<int>(r.y_min); y < r.y_max; ++y)
            for (int x = static_cast<int>(r.x_min); x < r.x_max; ++x) g[static_cast<std::size_t>(y) * w + x] = 1.0;
    return g;
}

}  // namespace

TEST(Shapes, StaticSceneOnlyFiresAtStart) {
    for (ShapeKind k : {ShapeKind::rectangle, ShapeKind::cross, ShapeKind::ring}) {
        const GeneratedScene g = gen_moving_shapes(one_object(k, 0, 0), 1, 0.0);
        ASSERT_FALSE(g.stream.events.empty());
        for (const Event& e : g.stream.events) EXPECT_LT(e.ts, 10000u);
        EXPECT_EQ(g.windows, 5u);
        EXPECT_EQ(g.boxes.size(), 5u);
    }
}

TEST(Shapes, EventsStayInsideDilatedTruth) {
    for (ShapeKind k : {ShapeKind::rectangle, ShapeKind::cross, ShapeKind::ring}) {
        const SceneScript s = one_object(k, 3e-4, -2e-4);
        const GeneratedScene g = gen_moving_shapes(s, 4, 0.0);
        std::map<std::size_t, Rect> truth;
        for (const GroundTruth& b : g.boxes) truth[b.sample] = b.box;
        EXPECT_GT(g.stream.events.size(), 100u);
        for (const Event& e : g.stream.events) {
            const Rect r = truth.at(e.ts / s.window_us);
            EXPECT_GE(e.x, r.x_min - 1);
            EXPECT_LT(e.x, r.x_max + 1);
            EXPECT_GE(e.y, r.y_min - 1);
            EXPECT_LT(e.y, r.y_max + 1);
        }
    }
}

TEST(Shapes, SeedDeterminesStream) {
    SceneScript s = one_object(ShapeKind::ring, 2e-4, 1e-4);
    s.objects[0].intensity = 0.7;
    const double noise = noise_rate_from_density(0.01, 64, 64, s.window_us);
    const GeneratedScene a = gen_moving_shapes(s, 7, noise), b = gen_moving_shapes(s, 7, noise);
    EXPECT_EQ(a.stream, b.stream);
    EXPECT_NE(gen_moving_shapes(s, 8, noise).stream, a.stream);
    EXPECT_NO_THROW(validate(a.stream));
}

TEST(Shapes, OffscreenObjectsAreClipped) {
    SceneScript s = one_object(ShapeKind::rectangle, -1e-3, 0);
    s.objects[0].start_x = 2;
    const GeneratedScene g = gen_moving_shapes(s, 1, 0.0);
    EXPECT_NO_THROW(validate(g.stream));
    for (const GroundTruth& b : g.boxes) {
        EXPECT_GE(b.box.x_min, 0);
        EXPECT_LE(b.box.x_max, 64);
    }
}

TEST(Shapes, EmptyScene) {
    SceneScript s;
    EXPECT_THROW(gen_moving_shapes(s, 1, 0.0), EmptyScene);
    s = one_object(ShapeKind::cross, 0, 0);
    s.duration_us = 0;
    EXPECT_THROW(gen_moving_shapes(s, 1, 0.0), EmptyScene);
}

TEST(Shapes, ScriptJsonRoundTrip) {
    const SceneScript s = one_object(ShapeKind::cross, 1e-4, 0);
    EXPECT_EQ(SceneScript::parse(s.to_json()).to_json(), s.to_json());
    EXPECT_THROW(SceneScript::parse(R"({"objects": [{"shape": "blob"}]})"), ConfigError);
}

TEST(Frames, LinearLogRampCrossings) {
    const auto st = frames_to_events(ramp({1.0, std::exp(1.0)}, 1000));
    ASSERT_EQ(st.events.size(), 4u);
    const Timestamp want[] = {250, 500, 750, 1000};
    for (int i = 0; i < 4; ++i) {
        EXPECT_EQ(st.events[static_cast<std::size_t>(i)].ts, want[i]);
        EXPECT_EQ(st.events[static_cast<std::size_t>(i)].polarity, 1);
    }
}

TEST(Frames, ConstantFramesAreSilent) {
    FrameSequence f{4, 3, 1000, {}};
    for (int i = 0; i < 5; ++i) f.frames.push_back(std::vector<double>(12, 0.4));
    EXPECT_TRUE(frames_to_events(f).events.empty());
}

TEST(Frames, SymmetricRampBalancesPolarity) {
    for (double peak : {2.0, 5.0, 30.0}) {
        const auto st = frames_to_events(ramp({1.0, peak, 1.0}, 800));
        int on = 0, off = 0;
        for (const Event& e : st.events) (e.polarity > 0 ? on : off)++;
        EXPECT_EQ(on, off);
        EXPECT_EQ(on, static_cast<int>(std::floor(std::log(peak) / 0.25)));
    }
}

TEST(Frames, CountFollowsLogDistance) {
    const std::vector<double> levels{1.0, 3.0, 0.8, 0.8, 9.0, 2.0};
    const auto st = frames_to_events(ramp(levels, 1000), {0.1, true});
    // Within one event per segment of the floor sum.
    long expected = 0;
    for (std::size_t i = 1; i < levels.size(); ++i)
        expected += static_cast<long>(std::floor(std::fabs(std::log(levels[i]) - std::log(levels[i - 1])) / 0.1));
    EXPECT_LE(std::labs(static_cast<long>(st.events.size()) - expected), static_cast<long>(levels.size() - 1));
    for (std::size_t i = 1; i < st.events.size(); ++i) EXPECT_LE(st.events[i - 1].ts, st.events[i].ts);
}

TEST(Frames, TimestampsIncreaseOnMonotoneSegment) {
    const auto st = frames_to_events(ramp({0.01, 10.0}, 997), {0.05, true});
    ASSERT_GT(st.events.size(), 100u);
    for (std::size_t i = 1; i < st.events.size(); ++i) EXPECT_LT(st.events[i - 1].ts, st.events[i].ts);
}

TEST(Frames, ZeroIntensity) {
    FrameSequence f = ramp({0.0, 1.0}, 1000);
    EXPECT_EQ(frames_to_events(f).events.size(), static_cast<std::size_t>(std::floor(std::log(255.0) / 0.25)));
    EXPECT_THROW(frames_to_events(f, {0.25, false}), NonPositiveIntensity);
    EXPECT_THROW(frames_to_events(f, {0.0, true}), ConfigError);
}

TEST(Frames, JsonRoundTrip) {
    FrameSequence f{2, 2, 500, {{1, 2, 3, 4}, {4, 3, 2, 1}}};
    const FrameSequence back = FrameSequence::parse(f.to_json());
    EXPECT_EQ(back.frames, f.frames);
    EXPECT_EQ(back.at(1, 0, 1), 2.0);
    EXPECT_EQ(back.period_us, 500u);
}

TEST(Extract, IsolatedPixelIsNoise) {
    EXPECT_TRUE(cluster_boxes(block_grid(16, 16, {{5, 5, 6, 6}}), 16, 16, {}).empty());
}

TEST(Extract, DenseBlockGivesOneBox) {
    const auto boxes = cluster_boxes(block_grid(16, 16, {{3, 4, 8, 9}}), 16, 16, {});
    ASSERT_EQ(boxes.size(), 1u);
    EXPECT_EQ(boxes[0], (Rect{3, 4, 8, 9}));
    EXPECT_EQ(boxes[0].area(), 25.0);
}

TEST(Extract, SeparatedBlocksGiveTwoBoxes) {
    const auto boxes = cluster_boxes(block_grid(32, 16, {{2, 2, 7, 7}, {10, 2, 15, 7}}), 32, 16, {});
    ASSERT_EQ(boxes.size(), 2u);
    EXPECT_DOUBLE_EQ(boxes[0].area() + boxes[1].area(), 50.0);
}

TEST(Extract, SmallClustersAreDropped) {
    // 3x3 block: every pixel is a core point, but the box area is 9 < 10.
    EXPECT_TRUE(cluster_boxes(block_grid(16, 16, {{2, 2, 5, 5}}), 16, 16, {}).empty());
}

TEST(Extract, NoisePixelsDoNotGrowBoxes) {
    auto grid = block_grid(32, 32, {{10, 10, 16, 16}});
    grid[static_cast<std::size_t>(20) * 32 + 20] = 1.0;
    grid[static_cast<std::size_t>(10) * 32 + 19] = 1.0;
    const auto boxes = cluster_boxes(grid, 32, 32, {});
    ASSERT_EQ(boxes.size(), 1u);
    EXPECT_EQ(boxes[0], (Rect{10, 10, 16, 16}));
}

TEST(Extract, EveryCorePixelInsideOneBox) {
    std::mt19937_64 rng(10);
    for (int t = 0; t < 20; ++t) {
        std::vector<Rect> blocks;
        for (int i = 0; i < 4; ++i) {
            const double x = static_cast<double>(rng() % 50), y = static_cast<double>(rng() % 50);
            blocks.push_back({x, y, x + 3 + rng() % 8, y + 3 + rng() % 8});
        }
        const auto grid = block_grid(64, 64, blocks);
        ExtractOptions opts;
        opts.min_area = 0;
        const auto boxes = cluster_boxes(grid, 64, 64, opts);
        for (int y = 0; y < 64; ++y)
            for (int x = 0; x < 64; ++x) {
                if (grid[static_cast<std::size_t>(y) * 64 + x] == 0) continue;
                int n = 0;
                for (int dy = -2; dy <= 2; ++dy)
                    for (int dx = -2; dx <= 2; ++dx) {
                        const int yy = y + dy, xx = x + dx;
                        if ((dx || dy) && dx * dx + dy * dy <= 4 && yy >= 0 && xx >= 0 && yy < 64 && xx < 64 &&
                            grid[static_cast<std::size_t>(yy) * 64 + xx] != 0)
                            ++n;
                    }
                if (n < 3) continue;
                int inside = 0;
                for (const Rect& b : boxes) inside += x >= b.x_min && x < b.x_max && y >= b.y_min && y < b.y_max;
                EXPECT_GE(inside, 1);
            }
    }
}

TEST(Extract, WindowsFromEvents) {
    EventStream s{32, 32, {}};
    for (int y = 0; y < 5; ++y)
        for (int x = 0; x < 5; ++x) s.events.push_back({static_cast<std::uint16_t>(4 + x), static_cast<std::uint16_t>(4 + y), 100, 1});
    s.events.push_back({20, 20, 25000, 1});
    ExtractOptions opts;
    opts.origin = 0;
    const auto boxes = extract_bboxes(s, 10000, opts);
    ASSERT_EQ(boxes.size(), 1u);
    EXPECT_EQ(boxes[0].sample, 0u);
    EXPECT_EQ(boxes[0].box, (Rect{4, 4, 9, 9}));
    EXPECT_THROW(extract_bboxes(s, 0), ZeroWindow);
}

TEST(Extract, RecoversGeneratedObjects) {
    SceneScript s = one_object(ShapeKind::rectangle, 2.5e-4, 1.5e-4);
    s.objects[0].start_x = 20;
    const GeneratedScene g = gen_moving_shapes(s, 2, 0.0);
    ExtractOptions opts;
    opts.origin = 0;
    const auto boxes = extract_bboxes(g.stream, s.window_us, opts);
    for (const GroundTruth& t : g.boxes) {
        double best = 0;
        for (const GroundTruth& b : boxes)
            if (b.sample == t.sample) best = std::max(best, iou(b.box, t.box));
        EXPECT_GE(best, 0.5) << "window " << t.sample;
    }
}
