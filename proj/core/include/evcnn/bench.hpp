#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "evcnn/config.hpp"
#include "evcnn/datagen.hpp"
#include "evcnn/network.hpp"
#include "evcnn/weights.hpp"

namespace evcnn {

/// One scene family of the sweep: diagonal movers plus uniform noise.
struct SweepSetting {
    std::string label;
    int objects = 1;
    int size = 12;
    /// Pixels per window along each axis.
    double speed_px_per_window = 3.0;
    /// Noise events per pixel per window.
    double noise_density = 0.0;
};

struct BenchOptions {
    int repetitions = 5;
    int warmup_batches = 3;
    /// Measured batches per sweep point (after warm-up).
    int batches = 9;
    Timestamp window_us = 10000;
    std::uint64_t seed = 1;
    std::vector<SweepSetting> sweep = default_sweep();

    static std::vector<SweepSetting> default_sweep();
};

struct BenchRecord {
    std::size_t point = 0;
    std::size_t batch = 0;
    std::size_t events = 0;
    /// Changed surface pixels over all pixels, from the event path's statistics.
    double sparsity = 0;
    double event_us = 0;  // median over repetitions
    double dense_us = 0;
    double event_mean_us = 0;
    double dense_mean_us = 0;
    double max_abs_err = 0;
};

struct SweepSummary {
    std::string label;
    double sparsity = 0;
    double event_us = 0;
    double dense_us = 0;
    double speedup = 0;  // dense / event
};

struct BenchReport {
    std::vector<BenchRecord> records;
    std::vector<SweepSummary> points;
    double mean_event_us = 0;
    double mean_dense_us = 0;
    double speedup = 0;
    /// Sparsity where the speedup curve, sorted by sparsity, first falls through 1.
    std::optional<double> crossover;
    int repetitions = 0;

    std::string to_json() const;
    std::string to_csv() const;
};

/// Generates one stream per sweep setting on the config's sensor, then times
/// the event path and a surface-plus-dense recomputation on every batch.
BenchReport run_bench(const NetworkConfig& config, const WeightContainer& weights, const BenchOptions& options = {});

/// Linear interpolation of the sparsity where speedup crosses 1 between
/// adjacent points (sorted by sparsity).
std::optional<double> estimate_crossover(std::vector<SweepSummary> points);

/// The sweep's scene script for one setting.
SceneScript bench_scene(const NetworkConfig& config, const SweepSetting& setting, Timestamp window_us, int windows,
                        std::uint64_t seed);

}  // namespace evcnn
