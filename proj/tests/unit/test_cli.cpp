#ifdef EVCNN_HAVE_CLI

#include <gtest/gtest.h>
#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "cli.hpp"
#include "evcnn/bench.hpp"
#include "evcnn/datagen.hpp"
#include "evcnn/detection.hpp"
#include "evcnn/network.hpp"
#include "oracles.hpp"

using namespace evcnn;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out, err;
};

Result evcnn_cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("evcnn_cli_" + std::to_string(::getpid()) + "_" +
                ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::create_directories(dir_);

        cfg_.width = cfg_.height = 32;
        cfg_.lambda = 2e-4;
        ConvLayerSpec c;
        c.channels = 4;
        ConvLayerSpec head;
        head.channels = 7;
        head.kernel_h = head.kernel_w = 1;
        head.activation = PiecewiseLinearActivation::identity();
        cfg_.layers = {LayerSpec::make_conv(c), LayerSpec::make_pool({2, 2, 2}), LayerSpec::make_pool({2, 2, 2}),
                       LayerSpec::make_conv(head)};
        cfg_.head = {8, 8, 1, 2};
        cfg_.save(path("net.json"));
        random_weights(cfg_, 4).save(path("w"));

        std::mt19937_64 rng(5);
        save_stream(evtest::random_stream(rng, 32, 32, 1000, 100000), path("s.txt"), StreamFormat::text);
    }
    void TearDown() override { fs::remove_all(dir_); }

    std::string path(const std::string& name) const { return (dir_ / name).string(); }

    fs::path dir_;
    NetworkConfig cfg_;
};

}  // namespace

TEST_F(CliTest, RunEmptyStreamZeroWeights) {
    zero_weights(cfg_).save(path("zero"));
    save_stream(EventStream{32, 32, {}}, path("empty.txt"), StreamFormat::text);
    const Result r = evcnn_cli({"run", "--config", path("net.json"), "--weights", path("zero"), "--stream", path("empty.txt")});
    EXPECT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(r.out, "");
}

TEST_F(CliTest, RunIsDeterministicAndMatchesDensePipeline) {
    // Push every confidence and the first class score above 1 so each cell
    // yields a box whose geometry comes from the network.
    const WeightContainer base = random_weights(cfg_, 9);
    WeightContainer w;
    for (const auto& e : base.entries()) {
        std::vector<float> v(base.values(e.name).begin(), base.values(e.name).end());
        if (e.name == NetworkConfig::bias_name(3)) {
            v[4] += 3.0f;
            v[5] += 3.0f;
        }
        w.add(e.name, e.shape, v);
    }
    w.save(path("conf"));
    const std::vector<std::string> args{"run",    "--config",     path("net.json"), "--weights", path("conf"),
                                        "--stream", path("s.txt"), "--mode",       "per_event", "--arithmetic",
                                        "f64",    "--conf",       "0.5"};
    const Result a = evcnn_cli(args), b = evcnn_cli(args);
    ASSERT_EQ(a.code, 0) << a.err;
    EXPECT_EQ(a.out, b.out);

    const auto got = parse_predictions(a.out);
    const EventStream s = load_stream(path("s.txt"));
    LeakySurface<double> surface(32, 32, cfg_.lambda);
    DenseNetwork<double> dense(cfg_, w);
    std::vector<DetBox> want;
    const auto batches = window_events(s, 10000);
    for (std::size_t i = 0; i < batches.size(); ++i) {
        surface.apply(batches[i], UpdateMode::per_event);
        const auto boxes = nms(decode_grid(dense.head(surface.pixels()), cfg_.head, 32, 32, 0.5, i), 0.5);
        want.insert(want.end(), boxes.begin(), boxes.end());
    }
    ASSERT_EQ(got.size(), want.size());
    ASSERT_GT(got.size(), 0u);
    for (std::size_t i = 0; i < got.size(); ++i) {
        EXPECT_EQ(got[i].sample, want[i].sample);
        EXPECT_EQ(got[i].cls, want[i].cls);
        EXPECT_NEAR(got[i].conf, want[i].conf, 1e-9);
        EXPECT_NEAR(got[i].box.x_min, want[i].box.x_min, 1e-7);
        EXPECT_NEAR(got[i].box.y_max, want[i].box.y_max, 1e-7);
    }
    const auto first = nlohmann::json::parse(a.out.substr(0, a.out.find('\n')));
    EXPECT_EQ(first.at("window_end").get<Timestamp>() - first.at("window_start").get<Timestamp>(), 10000u);
}

TEST_F(CliTest, ComparePassesAtDoublePrecision) {
    const Result r = evcnn_cli({"compare", "--config", path("net.json"), "--weights", path("w"), "--stream",
                                path("s.txt"), "--mode", "per_event", "--arithmetic", "f64", "--tolerance", "1e-9"});
    EXPECT_EQ(r.code, 0) << r.out << r.err;
    EXPECT_EQ(r.out.rfind("PASS", 0), 0u);
}

TEST_F(CliTest, CompareReportsInjectedFault) {
    const Result r = evcnn_cli({"compare", "--config", path("net.json"), "--weights", path("w"), "--stream",
                                path("s.txt"), "--arithmetic", "f64", "--inject-skip-refresh", "3:0", "--out",
                                path("report.json")});
    EXPECT_EQ(r.code, 1);
    EXPECT_EQ(r.out.rfind("FAIL: batch ", 0), 0u) << r.out;
    const auto j = nlohmann::json::parse(slurp(path("report.json")));
    EXPECT_FALSE(j.at("pass").get<bool>());
    EXPECT_GE(j.at("first_failure_batch").get<int>(), 3);
}

TEST_F(CliTest, CompareEmptyStream) {
    save_stream(EventStream{32, 32, {}}, path("empty.bin"), StreamFormat::binary);
    const Result r = evcnn_cli({"compare", "--config", path("net.json"), "--weights", path("w"), "--stream",
                                path("empty.bin"), "--json"});
    EXPECT_EQ(r.code, 0);
    const auto j = nlohmann::json::parse(r.out);
    EXPECT_EQ(j.at("worst").get<double>(), 0.0);
}

TEST_F(CliTest, ExitCodes) {
    std::ofstream(path("bad.json")) << "{\"input\": 3}";
    std::ofstream(path("bad.txt")) << "EVT 32 32\n1,2\n";
    save_stream(EventStream{16, 16, {}}, path("small.txt"), StreamFormat::text);
    zero_weights(NetworkConfig::default_detector()).save(path("other"));
    auto run = [&](const std::string& cfg, const std::string& w, const std::string& s) {
        return evcnn_cli({"run", "--config", cfg, "--weights", w, "--stream", s}).code;
    };
    EXPECT_EQ(run(path("bad.json"), path("w"), path("s.txt")), cli::kExitConfig);
    EXPECT_EQ(run(path("missing.json"), path("w"), path("s.txt")), cli::kExitConfig);
    EXPECT_EQ(run(path("net.json"), path("other"), path("s.txt")), cli::kExitWeights);
    EXPECT_EQ(run(path("net.json"), path("nothing"), path("s.txt")), cli::kExitWeights);
    EXPECT_EQ(run(path("net.json"), path("w"), path("bad.txt")), cli::kExitStream);
    EXPECT_EQ(run(path("net.json"), path("w"), path("small.txt")), cli::kExitStream);
    EXPECT_NE(evcnn_cli({"frobnicate"}).code, 0);
}

TEST_F(CliTest, GenShapesIsDeterministic) {
    ASSERT_EQ(evcnn_cli({"gen", "shapes", "--seed", "7", "--out", path("a.txt"), "--truth", path("a.jsonl")}).code, 0);
    ASSERT_EQ(evcnn_cli({"gen", "shapes", "--seed", "7", "--out", path("b.txt"), "--truth", path("b.jsonl")}).code, 0);
    EXPECT_EQ(slurp(path("a.txt")), slurp(path("b.txt")));
    EXPECT_EQ(slurp(path("a.jsonl")), slurp(path("b.jsonl")));
    EXPECT_FALSE(load_stream(path("a.txt")).events.empty());
}

TEST_F(CliTest, GenLabelRecoversScriptedObjects) {
    for (const char* seed : {"1", "2", "3"}) {
        ASSERT_EQ(evcnn_cli({"gen", "shapes", "--seed", seed, "--out", path("s.bin"), "--format", "binary", "--truth",
                             path("t.jsonl")})
                      .code,
                  0);
        const Result r = evcnn_cli({"gen", "label", "--stream", path("s.bin")});
        ASSERT_EQ(r.code, 0) << r.err;
        const auto truth = parse_ground_truth(slurp(path("t.jsonl")));
        const auto found = parse_ground_truth(r.out);
        EXPECT_EQ(found.size(), truth.size());
        for (const GroundTruth& t : truth) {
            double best = 0;
            for (const GroundTruth& f : found)
                if (f.sample == t.sample) best = std::max(best, iou(f.box, t.box));
            EXPECT_GE(best, 0.5) << "seed " << seed << " window " << t.sample;
        }
    }
}

TEST_F(CliTest, GenFramesOnConstantFramesIsEmpty) {
    FrameSequence f{3, 2, 1000, {std::vector<double>(6, 0.5), std::vector<double>(6, 0.5), std::vector<double>(6, 0.5)}};
    std::ofstream(path("frames.json")) << f.to_json();
    ASSERT_EQ(evcnn_cli({"gen", "frames2ev", "--frames", path("frames.json"), "--out", path("f.txt")}).code, 0);
    EXPECT_EQ(slurp(path("f.txt")), "EVT 3 2\n");
}

TEST_F(CliTest, GenWeightsLoadable) {
    ASSERT_EQ(evcnn_cli({"gen", "weights", "--config", path("net.json"), "--seed", "3", "--out", path("g")}).code, 0);
    EXPECT_NO_THROW(check_weights(cfg_, WeightContainer::load(path("g"))));
}

TEST_F(CliTest, BenchEmitsJsonAndCsv) {
    const Result r = evcnn_cli({"bench", "--config", path("net.json"), "--repetitions", "1", "--batches", "2",
                                "--warmup", "1", "--json", "--csv", path("b.csv")});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = nlohmann::json::parse(r.out);
    EXPECT_EQ(j.at("points").size(), BenchOptions::default_sweep().size());
    EXPECT_EQ(j.at("repetitions").get<int>(), 1);
    EXPECT_NE(slurp(path("b.csv")).find("sparsity"), std::string::npos);
}

#endif
