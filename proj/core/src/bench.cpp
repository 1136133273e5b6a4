#include "evcnn/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <numeric>
#include <random>

#include <json.hpp>

#include "evcnn/errors.hpp"

namespace evcnn {

std::vector<SweepSetting> BenchOptions::default_sweep() {
    return {
        {"1 object", 1, 12, 3.0, 0.0},
        {"2 objects", 2, 16, 3.0, 0.0},
        {"4 objects", 4, 16, 4.0, 0.0},
        {"8 objects", 8, 20, 4.0, 0.0},
        {"noise 0.05", 2, 16, 3.0, 0.05},
        {"noise 0.2", 2, 16, 3.0, 0.2},
        {"noise 0.5", 0, 16, 3.0, 0.5},
        {"noise 1", 0, 16, 3.0, 1.0},
        {"noise 3", 0, 16, 3.0, 3.0},
    };
}

namespace {

using Clock = std::chrono::steady_clock;

double micros(Clock::duration d) { return std::chrono::duration<double, std::micro>(d).count(); }

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size()); }

// Keeps the optimiser from discarding timed work.
volatile double g_sink = 0;

template <typename Real>
void bench_point(const NetworkConfig& config, const WeightContainer& weights, const BenchOptions& options,
                 const EventStream& stream, std::size_t point, BenchReport& report) {
    Network<Real> net(config, weights);
    net.set_mode(UpdateMode::batched);
    const DenseNetwork<Real> dense(config, weights);
    const Timestamp end = static_cast<Timestamp>(options.warmup_batches + options.batches) * options.window_us;
    const auto batches = window_events(stream, options.window_us, 0, end);
    const double total_pixels = double(config.width) * config.height;

    for (std::size_t b = 0; b < batches.size(); ++b) {
        const EventBatch& batch = batches[b];
        if (b < static_cast<std::size_t>(options.warmup_batches)) {
            net.apply_batch(batch);
            continue;
        }
        std::vector<double> ev_t, dn_t;
        for (int r = 0; r < options.repetitions; ++r) {
            Network<Real> copy = net;
            const auto t0 = Clock::now();
            copy.apply_batch(batch);
            const auto t1 = Clock::now();
            g_sink = g_sink + copy.head_tensor().values()[0];
            ev_t.push_back(micros(t1 - t0));

            LeakySurface<Real> surface = net.surface();
            const auto t2 = Clock::now();
            surface.apply(batch, UpdateMode::batched);
            const Tensor<Real> head = dense.forward(surface.pixels());
            const auto t3 = Clock::now();
            g_sink = g_sink + head.values()[0];
            dn_t.push_back(micros(t3 - t2));
        }
        const BatchResult& res = net.apply_batch(batch);
        BenchRecord rec;
        rec.point = point;
        rec.batch = b;
        rec.events = batch.events.size();
        rec.sparsity = static_cast<double>(res.surface_changed) / total_pixels;
        rec.event_us = median(ev_t);
        rec.dense_us = median(dn_t);
        rec.event_mean_us = mean(ev_t);
        rec.dense_mean_us = mean(dn_t);
        rec.max_abs_err = max_abs_diff(net.head_output(), dense.head(net.surface().pixels()));
        report.records.push_back(rec);
    }
}

}  // namespace

SceneScript bench_scene(const NetworkConfig& config, const SweepSetting& setting, Timestamp window_us, int windows,
                        std::uint64_t seed) {
    SceneScript script;
    script.width = config.width;
    script.height = config.height;
    script.window_us = window_us;
    script.duration_us = static_cast<Timestamp>(windows) * window_us;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ux(setting.size, std::max<double>(setting.size, config.width - setting.size));
    std::uniform_real_distribution<double> uy(setting.size,
                                              std::max<double>(setting.size, config.height - setting.size));
    std::bernoulli_distribution coin(0.5);
    const double v = setting.speed_px_per_window / static_cast<double>(window_us);
    const ShapeKind shapes[] = {ShapeKind::rectangle, ShapeKind::cross, ShapeKind::ring};
    for (int i = 0; i < setting.objects; ++i) {
        SceneObject o;
        o.shape = shapes[i % 3];
        o.size = setting.size;
        o.start_x = ux(rng);
        o.start_y = uy(rng);
        o.velocity_x = coin(rng) ? v : -v;
        o.velocity_y = coin(rng) ? v : -v;
        o.cls = i % 10;
        script.objects.push_back(o);
    }
    return script;
}

BenchReport run_bench(const NetworkConfig& config, const WeightContainer& weights, const BenchOptions& options) {
    if (options.repetitions < 1) throw ConfigError("repetitions must be at least 1");
    if (options.window_us == 0) throw ZeroWindow();
    config.validate();
    check_weights(config, weights);

    BenchReport report;
    report.repetitions = options.repetitions;
    const int windows = options.warmup_batches + options.batches;
    for (std::size_t i = 0; i < options.sweep.size(); ++i) {
        const SweepSetting& s = options.sweep[i];
        const std::uint64_t seed = options.seed * 1000003u + i;
        EventStream stream;
        const double rate = noise_rate_from_density(s.noise_density, config.width, config.height, options.window_us);
        SceneScript script = bench_scene(config, s, options.window_us, windows, seed);
        if (script.objects.empty()) {
            // Noise only: an off-screen object keeps the generator happy.
            SceneObject ghost;
            ghost.start_x = -1000;
            ghost.start_y = -1000;
            script.objects.push_back(ghost);
        }
        stream = gen_moving_shapes(script, seed, rate).stream;

        if (config.arithmetic == Arithmetic::f32) bench_point<float>(config, weights, options, stream, i, report);
        else bench_point<double>(config, weights, options, stream, i, report);

        SweepSummary sum;
        sum.label = s.label;
        std::vector<double> sp, ev, dn;
        for (const BenchRecord& r : report.records)
            if (r.point == i) sp.push_back(r.sparsity), ev.push_back(r.event_us), dn.push_back(r.dense_us);
        if (!sp.empty()) {
            sum.sparsity = mean(sp);
            sum.event_us = mean(ev);
            sum.dense_us = mean(dn);
            sum.speedup = sum.dense_us / sum.event_us;
        }
        report.points.push_back(sum);
    }
    std::vector<double> ev, dn;
    for (const BenchRecord& r : report.records) ev.push_back(r.event_us), dn.push_back(r.dense_us);
    if (!ev.empty()) {
        report.mean_event_us = mean(ev);
        report.mean_dense_us = mean(dn);
        report.speedup = report.mean_dense_us / report.mean_event_us;
    }
    report.crossover = estimate_crossover(report.points);
    return report;
}

std::optional<double> estimate_crossover(std::vector<SweepSummary> points) {
    std::stable_sort(points.begin(), points.end(),
                     [](const SweepSummary& a, const SweepSummary& b) { return a.sparsity < b.sparsity; });
    for (std::size_t i = 0; i + 1 < points.size(); ++i) {
        const SweepSummary& a = points[i];
        const SweepSummary& b = points[i + 1];
        if (a.speedup >= 1.0 && b.speedup < 1.0) {
            return a.sparsity + (a.speedup - 1.0) / (a.speedup - b.speedup) * (b.sparsity - a.sparsity);
        }
    }
    return std::nullopt;
}

std::string BenchReport::to_json() const {
    nlohmann::json j;
    j["repetitions"] = repetitions;
    j["mean_event_us"] = mean_event_us;
    j["mean_dense_us"] = mean_dense_us;
    j["speedup"] = speedup;
    j["crossover_sparsity"] = crossover ? nlohmann::json(*crossover) : nlohmann::json(nullptr);
    j["points"] = nlohmann::json::array();
    for (const SweepSummary& p : points) {
        j["points"].push_back({{"label", p.label}, {"sparsity", p.sparsity}, {"event_us", p.event_us},
                               {"dense_us", p.dense_us}, {"speedup", p.speedup}});
    }
    j["records"] = nlohmann::json::array();
    for (const BenchRecord& r : records) {
        j["records"].push_back({{"point", r.point}, {"batch", r.batch}, {"events", r.events},
                                {"sparsity", r.sparsity}, {"event_us", r.event_us}, {"dense_us", r.dense_us},
                                {"event_mean_us", r.event_mean_us}, {"dense_mean_us", r.dense_mean_us},
                                {"max_abs_err", r.max_abs_err}});
    }
    return j.dump(2) + "\n";
}

std::string BenchReport::to_csv() const {
    std::string out = "point,label,batch,events,sparsity,event_us,dense_us,event_mean_us,dense_mean_us,max_abs_err\n";
    char line[512];
    for (const BenchRecord& r : records) {
        const std::string& label = r.point < points.size() ? points[r.point].label : std::string();
        std::snprintf(line, sizeof line, "%zu,%s,%zu,%zu,%.6f,%.3f,%.3f,%.3f,%.3f,%.3e\n", r.point, label.c_str(),
                      r.batch, r.events, r.sparsity, r.event_us, r.dense_us, r.event_mean_us, r.dense_mean_us,
                      r.max_abs_err);
        out += line;
    }
    return out;
}

}  // namespace evcnn
