#include <benchmark/benchmark.h>

#include "evcnn/bench.hpp"
#include "evcnn/datagen.hpp"
#include "evcnn/network.hpp"
#include "evcnn/weights.hpp"

namespace {

using namespace evcnn;

constexpr Timestamp kWindow = 10000;

// Default detector primed with three windows; the fourth is the timed batch.
struct Fixture {
    NetworkConfig config = NetworkConfig::default_detector();
    WeightContainer weights = random_weights(config, 11);
    std::vector<EventBatch> batches;

    explicit Fixture(double noise_density, int objects) {
        SweepSetting s{"", objects, 16, 3.0, noise_density};
        SceneScript scene = bench_scene(config, s, kWindow, 4, 3);
        if (scene.objects.empty()) scene.objects.push_back(SceneObject{ShapeKind::rectangle, 4, -500, -500});
        const double rate = noise_rate_from_density(noise_density, config.width, config.height, kWindow);
        batches = window_events(gen_moving_shapes(scene, 3, rate).stream, kWindow, 0, 4 * kWindow);
    }
};

void BM_EventBatch(benchmark::State& state) {
    Fixture f(state.range(0) / 100.0, static_cast<int>(state.range(1)));
    Network<float> primed(f.config, f.weights);
    for (int i = 0; i < 3; ++i) primed.apply_batch(f.batches[i]);
    double sparsity = 0;
    for (auto _ : state) {
        state.PauseTiming();
        Network<float> net = primed;
        state.ResumeTiming();
        const BatchResult& r = net.apply_batch(f.batches[3]);
        benchmark::DoNotOptimize(net.head_tensor().data());
        sparsity = double(r.surface_changed) / (f.config.width * f.config.height);
    }
    state.counters["sparsity"] = sparsity;
}

void BM_DenseBatch(benchmark::State& state) {
    Fixture f(state.range(0) / 100.0, static_cast<int>(state.range(1)));
    Network<float> primed(f.config, f.weights);
    for (int i = 0; i < 3; ++i) primed.apply_batch(f.batches[i]);
    const DenseNetwork<float> dense(f.config, f.weights);
    for (auto _ : state) {
        state.PauseTiming();
        LeakySurface<float> surface = primed.surface();
        state.ResumeTiming();
        surface.apply(f.batches[3], UpdateMode::batched);
        auto head = dense.forward(surface.pixels());
        benchmark::DoNotOptimize(head.data());
    }
}

// Args: noise density in events/pixel/window x100, moving objects.
BENCHMARK(BM_EventBatch)->Args({0, 1})->Args({0, 4})->Args({20, 2})->Args({100, 0})->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_DenseBatch)->Args({0, 1})->Args({100, 0})->Unit(benchmark::kMicrosecond);

}  // namespace
BENCHMARK_MAIN();
