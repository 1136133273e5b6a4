#pragma once

#include <string>
#include <vector>

#include "evcnn/activation.hpp"
#include "evcnn/emaxpool.hpp"
#include "evcnn/geometry.hpp"
#include "evcnn/surface.hpp"
#include "evcnn/tensor.hpp"

namespace evcnn {

enum class Arithmetic { f32, f64 };

Arithmetic parse_arithmetic(const std::string& name);
std::string to_string(Arithmetic arithmetic);

struct ConvLayerSpec {
    int channels = 1;
    int kernel_h = 3;
    int kernel_w = 3;
    int stride = 1;
    Padding padding = Padding::same_zero;
    PiecewiseLinearActivation activation = PiecewiseLinearActivation::leaky_relu();
};

struct LayerSpec {
    enum class Type { conv, pool };
    Type type = Type::conv;
    ConvLayerSpec conv;
    PoolGeometry pool;

    static LayerSpec make_conv(ConvLayerSpec spec) { return {Type::conv, spec, {}}; }
    static LayerSpec make_pool(PoolGeometry pool) { return {Type::pool, {}, pool}; }
};

/// Detection grid: rows x cols cells, each predicting `boxes` boxes of
/// (x, y, w, h, confidence) followed by `classes` class scores.
struct HeadSpec {
    int rows = 4;
    int cols = 4;
    int boxes = 2;
    int classes = 10;

    int channels() const { return boxes * 5 + classes; }
};

struct NetworkConfig {
    int width = 128;
    int height = 128;
    double lambda = 1e-4;
    Arithmetic arithmetic = Arithmetic::f32;
    UpdateMode mode = UpdateMode::batched;
    /// Full recomputation every N batches; 0 disables it.
    int refresh_interval = 0;
    std::vector<LayerSpec> layers;
    HeadSpec head;

    /// Output dims of every layer, in order. Throws ConfigError on an invalid
    /// chain and ShapeMismatch when the last layer does not produce the head grid.
    std::vector<Dims> layer_dims() const;
    void validate() const { (void)layer_dims(); }

    /// Weight tensor names of layer i: "layer<i>.weight" / "layer<i>.bias".
    static std::string weight_name(std::size_t i) { return "layer" + std::to_string(i) + ".weight"; }
    static std::string bias_name(std::size_t i) { return "layer" + std::to_string(i) + ".bias"; }

    /// JSON text I/O. Throws ConfigError.
    static NetworkConfig parse(const std::string& json_text);
    static NetworkConfig load(const std::string& path);
    std::string to_json() const;
    void save(const std::string& path) const;

    /// 128x128 input, five conv/pool stages (16,16,16,32,64 channels), a 1x1
    /// conv and a linear 1x1 head to a 4x4 grid of 2 boxes and 10 classes.
    static NetworkConfig default_detector();
};

}  // namespace evcnn
