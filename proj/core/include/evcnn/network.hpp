#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "evcnn/config.hpp"
#include "evcnn/econv.hpp"
#include "evcnn/emaxpool.hpp"
#include "evcnn/event.hpp"
#include "evcnn/surface.hpp"
#include "evcnn/weights.hpp"

namespace evcnn {

/// Head output laid out [rows][cols][channels].
struct GridOutput {
    int rows = 0;
    int cols = 0;
    int channels = 0;
    std::vector<double> values;

    double at(int r, int c, int ch) const {
        return values[(static_cast<std::size_t>(r) * cols + c) * channels + ch];
    }
    double& at(int r, int c, int ch) { return values[(static_cast<std::size_t>(r) * cols + c) * channels + ch]; }

    template <typename Real>
    static GridOutput from_tensor(const Tensor<Real>& t) {
        GridOutput g{t.height(), t.width(), t.channels(), {}};
        g.values.assign(t.values().begin(), t.values().end());
        return g;
    }
};

double max_abs_diff(const GridOutput& a, const GridOutput& b);

struct BatchResult {
    std::vector<LayerStats> layers;
    /// Per head cell, how many times it was recomputed from its receptive field.
    std::vector<std::uint32_t> head_recomputed;
    /// Distinct surface pixels that received an event or were clamped.
    std::size_t surface_changed = 0;
    /// Surface pixels driven to 0 by the clamp, summed over steps.
    std::size_t surface_clamped = 0;
    std::size_t events = 0;
    /// Network steps taken: one per event in per_event mode, else one.
    std::size_t steps = 0;

    std::size_t total_segment_flips() const;
};

/// Stateful event-driven network: a leaky surface followed by e-conv and
/// e-max-pool layers, initialised by one full inference on a blank surface.
template <typename Real>
class Network {
public:
    using Layer = std::variant<EConvLayer<Real>, EMaxPoolLayer<Real>>;

    /// Throws ConfigError, ShapeMismatch or MissingTensor.
    Network(const NetworkConfig& config, const WeightContainer& weights);

    const NetworkConfig& config() const { return config_; }
    UpdateMode mode() const { return mode_; }
    void set_mode(UpdateMode mode) { mode_ = mode; }

    /// Integrates the batch and updates all layers. An empty batch leaks the
    /// network by the window length. Throws TimestampRegression.
    const BatchResult& apply_batch(const EventBatch& batch);

    /// Recomputes every layer from the current surface.
    void full_refresh();

    GridOutput head_output() const;
    const Tensor<Real>& head_tensor() const;

    const LeakySurface<Real>& surface() const { return surface_; }
    std::optional<Timestamp> clock() const { return surface_.last_ts(); }
    std::size_t layer_count() const { return layers_.size(); }
    const Layer& layer(std::size_t i) const { return layers_[i]; }
    LayerView<Real> layer_view(std::size_t i) const;
    const Tensor<Real>& layer_output(std::size_t i) const { return *layer_view(i).values; }
    const BatchResult& last_result() const { return result_; }

    /// Verification hook: conv layer `i` skips its next rate refresh.
    void inject_skip_rate_refresh(std::size_t i);

private:
    void propagate(const SurfaceDelta<Real>& delta);

    NetworkConfig config_;
    UpdateMode mode_;
    LeakySurface<Real> surface_;
    std::vector<Layer> layers_;
    BatchResult result_;
    CoordSet surface_union_;
    std::size_t batches_ = 0;
};

/// Stateless reference forward pass: plain convolution, activation and max
/// pooling over the whole map.
template <typename Real>
class DenseNetwork {
public:
    DenseNetwork(const NetworkConfig& config, const WeightContainer& weights);

    /// Post-activation output of every layer for the given surface grid
    /// (1 x height x width). Throws ShapeMismatch.
    std::vector<Tensor<Real>> forward_all(const Tensor<Real>& surface) const;
    Tensor<Real> forward(const Tensor<Real>& surface) const;
    GridOutput head(const Tensor<Real>& surface) const { return GridOutput::from_tensor(forward(surface)); }

private:
    struct Conv {
        WindowGeometry geom;
        int in_c, out_c;
        std::vector<Real> weights;  // [ky][kx][in][out]
        std::vector<Real> bias;
        PiecewiseLinearActivation activation;
    };
    struct Pool {
        WindowGeometry geom;
        int channels;
    };
    using Stage = std::variant<Conv, Pool>;

    static Tensor<Real> run(const Conv& c, const Tensor<Real>& in);
    static Tensor<Real> run(const Pool& p, const Tensor<Real>& in);

    NetworkConfig config_;
    std::vector<Stage> stages_;
};

template <typename Real>
GridOutput dense_forward(const NetworkConfig& config, const WeightContainer& weights, const Tensor<Real>& surface) {
    return DenseNetwork<Real>(config, weights).head(surface);
}

struct EquivalenceReport {
    double tolerance = 0.0;
    std::vector<double> max_abs_err;  // per batch
    double worst = 0.0;
    std::optional<std::size_t> first_failure;
    bool pass = true;

    std::string to_json() const;
    std::string summary() const;
};

template <typename Real>
struct EquivalenceOptions {
    std::optional<UpdateMode> mode;
    /// Called after each batch with the event-path network and the batch index.
    std::function<void(const Network<Real>&, std::size_t)> observer;
    /// Fault injection: (batch index, conv layer index) whose rate refresh is skipped.
    std::optional<std::pair<std::size_t, std::size_t>> skip_rate_refresh;
};

/// Runs the event path and the dense path side by side and records the worst
/// head deviation at every window boundary.
template <typename Real>
EquivalenceReport check_equivalence(const NetworkConfig& config, const WeightContainer& weights,
                                    const EventStream& stream, Timestamp window, double tolerance,
                                    const EquivalenceOptions<Real>& options = {});

/// Dispatches on config.arithmetic.
EquivalenceReport check_equivalence(const NetworkConfig& config, const WeightContainer& weights,
                                    const EventStream& stream, Timestamp window, double tolerance);

extern template class Network<float>;
extern template class Network<double>;
extern template class DenseNetwork<float>;
extern template class DenseNetwork<double>;

}  // namespace evcnn
