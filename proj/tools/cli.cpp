#include "cli.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <random>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "evcnn/bench.hpp"
#include "evcnn/datagen.hpp"
#include "evcnn/detection.hpp"
#include "evcnn/errors.hpp"
#include "evcnn/network.hpp"

namespace evcnn::cli {

namespace {

using nlohmann::json;

struct ExitError : std::runtime_error {
    int code;
    ExitError(int c, const std::string& what) : std::runtime_error(what), code(c) {}
};

struct NetworkArgs {
    std::string config;
    std::string weights;
    std::string stream;
    Timestamp window = 10000;
    std::string mode;
    std::string arithmetic;
};

void add_network_options(CLI::App* cmd, NetworkArgs& a, bool need_stream, bool need_weights = true) {
    cmd->add_option("--config", a.config, "network config JSON")->required();
    auto* w = cmd->add_option("--weights", a.weights, "weight container (base path or either file)");
    if (need_weights) w->required();
    if (need_stream) cmd->add_option("--stream", a.stream, "event stream (text or binary)")->required();
    cmd->add_option("--window", a.window, "batch window in microseconds")->capture_default_str()->check(CLI::PositiveNumber);
    cmd->add_option("--mode", a.mode, "per_event or batched (overrides the config)")
        ->check(CLI::IsMember({"per_event", "batched"}));
    cmd->add_option("--arithmetic", a.arithmetic, "f32 or f64 (overrides the config)")
        ->check(CLI::IsMember({"f32", "f64"}));
}

NetworkConfig load_config(const NetworkArgs& a) {
    try {
        NetworkConfig cfg = NetworkConfig::load(a.config);
        if (!a.mode.empty()) cfg.mode = parse_mode(a.mode);
        if (!a.arithmetic.empty()) cfg.arithmetic = parse_arithmetic(a.arithmetic);
        cfg.validate();
        return cfg;
    } catch (const Error& e) {
        throw ExitError(kExitConfig, e.what());
    }
}

WeightContainer load_weights(const NetworkConfig& cfg, const std::string& path) {
    try {
        WeightContainer w = WeightContainer::load(path);
        check_weights(cfg, w);
        return w;
    } catch (const Error& e) {
        throw ExitError(kExitWeights, e.what());
    }
}

EventStream load_events(const NetworkConfig* cfg, const std::string& path) {
    try {
        EventStream s = load_stream(path);
        if (cfg && (s.width != cfg->width || s.height != cfg->height)) {
            throw Error("stream sensor is " + std::to_string(s.width) + "x" + std::to_string(s.height) +
                        ", network expects " + std::to_string(cfg->width) + "x" + std::to_string(cfg->height));
        }
        return s;
    } catch (const Error& e) {
        throw ExitError(kExitStream, e.what());
    }
}

// Writes to the file when a path is given, otherwise to `fallback`.
class Sink {
public:
    Sink(const std::string& path, std::ostream& fallback) : os_(&fallback) {
        if (!path.empty()) {
            file_ = std::make_unique<std::ofstream>(path, std::ios::binary);
            if (!*file_) throw Error("cannot write " + path);
            os_ = file_.get();
        }
    }
    std::ostream& get() { return *os_; }

private:
    std::unique_ptr<std::ofstream> file_;
    std::ostream* os_;
};

void write_file(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write " + path);
    f << text;
}

// run

struct RunArgs {
    NetworkArgs net;
    double conf = 0.25;
    double nms_iou = 0.5;
    std::string out;
};

template <typename Real>
void emit_detections(const NetworkConfig& cfg, const WeightContainer& w, const EventStream& s, const RunArgs& a,
                     std::ostream& os) {
    Network<Real> net(cfg, w);
    const auto batches = window_events(s, a.net.window);
    for (std::size_t i = 0; i < batches.size(); ++i) {
        net.apply_batch(batches[i]);
        const auto boxes =
            nms(decode_grid(net.head_output(), cfg.head, cfg.width, cfg.height, a.conf, i), a.nms_iou);
        for (const DetBox& b : boxes) {
            json j{{"sample", b.sample},
                   {"window_start", batches[i].window_start},
                   {"window_end", batches[i].window_end},
                   {"class", b.cls},
                   {"conf", b.conf},
                   {"box", {b.box.x_min, b.box.y_min, b.box.x_max, b.box.y_max}}};
            os << j.dump() << "\n";
        }
    }
}

int cmd_run(const RunArgs& a, std::ostream& out) {
    const NetworkConfig cfg = load_config(a.net);
    const WeightContainer w = load_weights(cfg, a.net.weights);
    const EventStream s = load_events(&cfg, a.net.stream);
    Sink sink(a.out, out);
    if (cfg.arithmetic == Arithmetic::f64) emit_detections<double>(cfg, w, s, a, sink.get());
    else emit_detections<float>(cfg, w, s, a, sink.get());
    return kExitOk;
}

// compare

struct CompareArgs {
    NetworkArgs net;
    std::optional<double> tolerance;
    std::string out;
    bool json_only = false;
    std::string fault;
};

int cmd_compare(const CompareArgs& a, std::ostream& out) {
    const NetworkConfig cfg = load_config(a.net);
    const WeightContainer w = load_weights(cfg, a.net.weights);
    const EventStream s = load_events(&cfg, a.net.stream);
    const double tol = a.tolerance.value_or(cfg.arithmetic == Arithmetic::f64 ? 1e-9 : 1e-4);

    std::optional<std::pair<std::size_t, std::size_t>> fault;
    if (!a.fault.empty()) {
        std::size_t batch = 0, layer = 0;
        char colon = 0;
        std::istringstream in(a.fault);
        if (!(in >> batch >> colon >> layer) || colon != ':') throw ExitError(kExitFailure, "--inject-skip-refresh expects BATCH:LAYER");
        fault = std::make_pair(batch, layer);
    }

    EquivalenceReport r;
    if (cfg.arithmetic == Arithmetic::f64) {
        EquivalenceOptions<double> o;
        o.skip_rate_refresh = fault;
        r = check_equivalence<double>(cfg, w, s, a.net.window, tol, o);
    } else {
        EquivalenceOptions<float> o;
        o.skip_rate_refresh = fault;
        r = check_equivalence<float>(cfg, w, s, a.net.window, tol, o);
    }
    if (!a.out.empty()) write_file(a.out, r.to_json());
    if (a.json_only) out << r.to_json();
    else out << r.summary() << "\n";
    return r.pass ? kExitOk : kExitFailure;
}

// bench

struct BenchArgs {
    NetworkArgs net;
    int repetitions = 5;
    int batches = 9;
    int warmup = 3;
    std::uint64_t seed = 1;
    std::string out;
    std::string csv;
    bool json_only = false;
};

int cmd_bench(const BenchArgs& a, std::ostream& out) {
    const NetworkConfig cfg = load_config(a.net);
    const WeightContainer w = a.net.weights.empty() ? random_weights(cfg, a.seed) : load_weights(cfg, a.net.weights);
    BenchOptions o;
    o.repetitions = a.repetitions;
    o.batches = a.batches;
    o.warmup_batches = a.warmup;
    o.window_us = a.net.window;
    o.seed = a.seed;
    const BenchReport r = run_bench(cfg, w, o);
    if (!a.out.empty()) write_file(a.out, r.to_json());
    if (!a.csv.empty()) write_file(a.csv, r.to_csv());
    if (a.json_only) {
        out << r.to_json();
        return kExitOk;
    }
    out << std::left << std::setw(14) << "point" << std::right << std::setw(10) << "sparsity" << std::setw(12)
        << "event_us" << std::setw(12) << "dense_us" << std::setw(10) << "speedup" << "\n";
    out << std::fixed;
    for (const SweepSummary& p : r.points) {
        out << std::left << std::setw(14) << p.label << std::right << std::setprecision(4) << std::setw(10)
            << p.sparsity << std::setprecision(1) << std::setw(12) << p.event_us << std::setw(12) << p.dense_us
            << std::setprecision(2) << std::setw(10) << p.speedup << "\n";
    }
    out << "crossover sparsity: ";
    if (r.crossover) out << std::setprecision(4) << *r.crossover << "\n";
    else out << "none\n";
    return kExitOk;
}

// gen

struct ShapesArgs {
    std::string script;
    std::uint64_t seed = 1;
    double noise = 0.0;
    std::string out;
    std::string truth;
    std::string format = "text";
};

// Three objects of different shapes on a 128x128 sensor, one per horizontal
// lane. All share the vertical velocity so lanes never meet, and every object
// moves diagonally so both edge orientations fire.
SceneScript default_scene(std::uint64_t seed) {
    SceneScript s;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> pos(44, 84), speed(1.5e-4, 3e-4);
    const double vy = speed(rng) * ((rng() & 1) ? 1 : -1);
    const double drift = vy * static_cast<double>(s.duration_us);
    const ShapeKind kinds[] = {ShapeKind::rectangle, ShapeKind::cross, ShapeKind::ring};
    for (int i = 0; i < 3; ++i) {
        SceneObject o;
        o.shape = kinds[i];
        o.size = 14;
        o.start_x = pos(rng);
        o.start_y = 24 + 40 * i - drift / 2;
        o.velocity_x = speed(rng) * ((rng() & 1) ? 1 : -1);
        o.velocity_y = vy;
        o.cls = i;
        s.objects.push_back(o);
    }
    return s;
}

StreamFormat parse_format(const std::string& f) { return f == "binary" ? StreamFormat::binary : StreamFormat::text; }

int cmd_shapes(const ShapesArgs& a) {
    SceneScript script;
    try {
        script = a.script.empty() ? default_scene(a.seed) : SceneScript::load(a.script);
    } catch (const Error& e) {
        throw ExitError(kExitConfig, e.what());
    }
    const double rate = noise_rate_from_density(a.noise, script.width, script.height, script.window_us);
    const GeneratedScene g = gen_moving_shapes(script, a.seed, rate);
    save_stream(g.stream, a.out, parse_format(a.format));
    if (!a.truth.empty()) write_file(a.truth, to_jsonl(g.boxes));
    return kExitOk;
}

struct FramesArgs {
    std::string frames;
    double threshold = 0.25;
    bool no_floor = false;
    std::string out;
    std::string format = "text";
};

int cmd_frames(const FramesArgs& a) {
    FrameSequence f;
    try {
        f = FrameSequence::load(a.frames);
    } catch (const Error& e) {
        throw ExitError(kExitConfig, e.what());
    }
    const EventStream s = frames_to_events(f, {a.threshold, !a.no_floor});
    save_stream(s, a.out, parse_format(a.format));
    return kExitOk;
}

struct LabelArgs {
    std::string stream;
    Timestamp window = 10000;
    ExtractOptions opts;
    std::optional<Timestamp> origin;
    std::string out;
};

int cmd_label(LabelArgs a, std::ostream& out) {
    const EventStream s = load_events(nullptr, a.stream);
    a.opts.origin = a.origin;
    const auto boxes = extract_bboxes(s, a.window, a.opts);
    Sink sink(a.out, out);
    sink.get() << to_jsonl(boxes);
    return kExitOk;
}

struct WeightsArgs {
    std::string config;
    std::uint64_t seed = 1;
    bool unscaled = false;
    std::string out;
};

int cmd_weights(const WeightsArgs& a) {
    NetworkArgs n;
    n.config = a.config;
    const NetworkConfig cfg = load_config(n);
    random_weights(cfg, a.seed, !a.unscaled).save(a.out);
    return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Event-driven CNN inference: run, verify against dense recomputation, benchmark, generate data"};
    app.name("evcnn");
    app.require_subcommand(1);

    RunArgs run_a;
    auto* run_cmd = app.add_subcommand("run", "stream events through the network and print detections as JSON lines");
    add_network_options(run_cmd, run_a.net, true);
    run_cmd->add_option("--conf", run_a.conf, "score threshold")->capture_default_str();
    run_cmd->add_option("--nms", run_a.nms_iou, "NMS IoU threshold")->capture_default_str();
    run_cmd->add_option("--out", run_a.out, "output file (default stdout)");

    CompareArgs cmp_a;
    auto* cmp_cmd = app.add_subcommand("compare", "check the event path against dense recomputation per window");
    add_network_options(cmp_cmd, cmp_a.net, true);
    cmp_cmd->add_option("--tolerance", cmp_a.tolerance, "max-abs tolerance (default 1e-4 f32, 1e-9 f64)");
    cmp_cmd->add_option("--out", cmp_a.out, "write the JSON report here");
    cmp_cmd->add_flag("--json", cmp_a.json_only, "print the JSON report instead of the summary");
#ifdef EVCNN_CLI_FAULTS
    cmp_cmd->add_option("--inject-skip-refresh", cmp_a.fault, "BATCH:LAYER whose rate refresh is skipped");
#endif

    BenchArgs bench_a;
    auto* bench_cmd = app.add_subcommand("bench", "time event and dense paths over a sparsity sweep");
    add_network_options(bench_cmd, bench_a.net, false, false);
    bench_cmd->add_option("--repetitions", bench_a.repetitions, "timed repetitions per batch")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    bench_cmd->add_option("--batches", bench_a.batches, "measured batches per sweep point")->capture_default_str();
    bench_cmd->add_option("--warmup", bench_a.warmup, "discarded warm-up batches")->capture_default_str();
    bench_cmd->add_option("--seed", bench_a.seed, "scene seed (and weights if --weights is absent)")->capture_default_str();
    bench_cmd->add_option("--out", bench_a.out, "write the JSON report here");
    bench_cmd->add_option("--csv", bench_a.csv, "write per-batch records as CSV here");
    bench_cmd->add_flag("--json", bench_a.json_only, "print the JSON report instead of the table");

    auto* gen_cmd = app.add_subcommand("gen", "generate or label data");
    gen_cmd->require_subcommand(1);

    ShapesArgs shapes_a;
    auto* shapes_cmd = gen_cmd->add_subcommand("shapes", "synthetic moving shapes with per-window ground truth");
    shapes_cmd->add_option("--script", shapes_a.script, "scene script JSON (default: three seeded objects)");
    shapes_cmd->add_option("--seed", shapes_a.seed, "scene and noise seed")->capture_default_str();
    shapes_cmd->add_option("--noise", shapes_a.noise, "noise events per pixel per window")->capture_default_str();
    shapes_cmd->add_option("--out", shapes_a.out, "stream file")->required();
    shapes_cmd->add_option("--truth", shapes_a.truth, "ground-truth JSON lines");
    shapes_cmd->add_option("--format", shapes_a.format, "stream format")->check(CLI::IsMember({"text", "binary"}))->capture_default_str();

    FramesArgs frames_a;
    auto* frames_cmd = gen_cmd->add_subcommand("frames2ev", "convert an intensity frame sequence to events");
    frames_cmd->add_option("--frames", frames_a.frames, "frame sequence JSON")->required();
    frames_cmd->add_option("--threshold", frames_a.threshold, "log-intensity threshold")->capture_default_str();
    frames_cmd->add_flag("--no-floor", frames_a.no_floor, "reject zero intensities instead of flooring them");
    frames_cmd->add_option("--out", frames_a.out, "stream file")->required();
    frames_cmd->add_option("--format", frames_a.format, "stream format")->check(CLI::IsMember({"text", "binary"}))->capture_default_str();

    LabelArgs label_a;
    auto* label_cmd = gen_cmd->add_subcommand("label", "extract per-window boxes by density clustering");
    label_cmd->add_option("--stream", label_a.stream, "event stream (text or binary)")->required();
    label_cmd->add_option("--window", label_a.window, "window length in microseconds")->capture_default_str()->check(CLI::PositiveNumber);
    label_cmd->add_option("--rho", label_a.opts.rho, "neighbours needed within the radius")->capture_default_str();
    label_cmd->add_option("--radius", label_a.opts.radius, "neighbourhood radius in pixels")->capture_default_str();
    label_cmd->add_option("--min-area", label_a.opts.min_area, "drop boxes with smaller area")->capture_default_str();
    label_cmd->add_option("--lambda", label_a.opts.lambda, "surface decay per microsecond")->capture_default_str();
    label_cmd->add_option("--origin", label_a.origin, "window anchor (default: first event)");
    label_cmd->add_option("--out", label_a.out, "JSON lines output (default stdout)");

    WeightsArgs weights_a;
    auto* weights_cmd = gen_cmd->add_subcommand("weights", "random weights for a config");
    weights_cmd->add_option("--config", weights_a.config, "network config JSON")->required();
    weights_cmd->add_option("--seed", weights_a.seed, "weight seed")->capture_default_str();
    weights_cmd->add_flag("--unscaled", weights_a.unscaled, "plain uniform [-1, 1] without fan-in scaling");
    weights_cmd->add_option("--out", weights_a.out, "output base path")->required();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err);
    }

    try {
        if (run_cmd->parsed()) return cmd_run(run_a, out);
        if (cmp_cmd->parsed()) return cmd_compare(cmp_a, out);
        if (bench_cmd->parsed()) return cmd_bench(bench_a, out);
        if (shapes_cmd->parsed()) return cmd_shapes(shapes_a);
        if (frames_cmd->parsed()) return cmd_frames(frames_a);
        if (label_cmd->parsed()) return cmd_label(label_a, out);
        if (weights_cmd->parsed()) return cmd_weights(weights_a);
    } catch (const ExitError& e) {
        err << "evcnn: " << e.what() << "\n";
        return e.code;
    } catch (const std::exception& e) {
        err << "evcnn: " << e.what() << "\n";
        return kExitFailure;
    }
    return kExitFailure;
}

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run(args, std::cout, std::cerr);
}

}  // namespace evcnn::cli
