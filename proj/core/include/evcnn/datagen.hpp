#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "evcnn/detection.hpp"
#include "evcnn/event.hpp"

namespace evcnn {

enum class ShapeKind { rectangle, cross, ring };

ShapeKind parse_shape(const std::string& name);
std::string to_string(ShapeKind shape);

/// One object moving on a straight line. Positions are the shape centre in
/// pixels; velocity is in pixels per microsecond.
struct SceneObject {
    ShapeKind shape = ShapeKind::rectangle;
    int size = 12;
    /// Line width of the outline in pixels.
    int stroke = 1;
    double start_x = 0, start_y = 0;
    double velocity_x = 0, velocity_y = 0;
    /// Probability that an edge crossing emits its event.
    double intensity = 1.0;
    int cls = 0;
};

struct SceneScript {
    int width = 128;
    int height = 128;
    Timestamp duration_us = 100000;
    Timestamp window_us = 10000;
    /// Fixed rasterisation period. 0 re-renders at every microsecond where an
    /// object's pixel position changes.
    Timestamp micro_step_us = 0;
    std::vector<SceneObject> objects;

    /// Throws ConfigError.
    static SceneScript parse(const std::string& json_text);
    static SceneScript load(const std::string& path);
    std::string to_json() const;
};

struct GeneratedScene {
    EventStream stream;
    /// Rendered extent of every visible object per window; `sample` is the
    /// window index, windows start at 0 with length window_us.
    std::vector<GroundTruth> boxes;
    std::size_t windows = 0;
};

/// Renders the scene at t = 0 and at every later render time, and emits an
/// event wherever a pixel's occupancy changes (ON when it becomes covered).
/// Ground truth is the union of an object's rendered extents while a window
/// is open, including the raster carried over from before it. Uniform noise adds a Poisson number of events with mean
/// noise_rate * duration at uniform pixels and times. Throws EmptyScene.
GeneratedScene gen_moving_shapes(const SceneScript& script, std::uint64_t seed, double noise_rate);

/// events/us equivalent of a per-pixel, per-window noise density.
inline double noise_rate_from_density(double events_per_pixel_window, int width, int height, Timestamp window_us) {
    return events_per_pixel_window * width * height / static_cast<double>(window_us);
}

/// Linear intensity frames sampled every period_us, stored row-major.
struct FrameSequence {
    int width = 0;
    int height = 0;
    Timestamp period_us = 1000;
    std::vector<std::vector<double>> frames;

    double at(std::size_t frame, int x, int y) const {
        return frames[frame][static_cast<std::size_t>(y) * width + x];
    }

    /// JSON: {"width", "height", "period_us", "frames": [[[row], ...], ...]}. Throws ConfigError.
    static FrameSequence parse(const std::string& json_text);
    static FrameSequence load(const std::string& path);
    std::string to_json() const;
};

struct FrameConversionOptions {
    double threshold = 0.25;
    /// Replace zero intensities with max / 255 before the log.
    bool floor_zeros = true;
};

/// Tracks log intensity per pixel as piecewise linear between frames and emits
/// one event per threshold crossing relative to the level of the last event,
/// at the interpolated (rounded) microsecond. Throws NonPositiveIntensity and
/// ConfigError.
EventStream frames_to_events(const FrameSequence& frames, const FrameConversionOptions& options = {});

struct ExtractOptions {
    int rho = 3;
    double radius = 2.0;
    double min_area = 10.0;
    double lambda = 0.0;
    /// Window anchor; the first event when unset.
    std::optional<Timestamp> origin;
};

/// Per window: integrate the events on a fresh leaky surface, keep pixels
/// with at least rho non-zero neighbours within `radius`, join kept pixels
/// closer than `radius` into clusters and emit each cluster's bounding box
/// [x_min, y_min, x_max + 1, y_max + 1] unless it is smaller than min_area.
/// `sample` is the window index and the class is 0. Throws ZeroWindow.
std::vector<GroundTruth> extract_bboxes(const EventStream& events, Timestamp window, const ExtractOptions& options = {});

/// Box extraction on one integrated grid (row-major, width x height).
std::vector<Rect> cluster_boxes(const std::vector<double>& grid, int width, int height, const ExtractOptions& options);

}  // namespace evcnn
