#include "evcnn/network.hpp"

#include <cmath>
#include <cstdio>

#include <json.hpp>

#include "evcnn/errors.hpp"

namespace evcnn {

double max_abs_diff(const GridOutput& a, const GridOutput& b) {
    if (a.rows != b.rows || a.cols != b.cols || a.channels != b.channels) {
        throw ShapeMismatch("grid outputs differ in shape");
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        const double d = std::fabs(a.values[i] - b.values[i]);
        if (!(d <= worst)) worst = d;  // NaN propagates as a failure
    }
    return worst;
}

std::size_t BatchResult::total_segment_flips() const {
    std::size_t n = 0;
    for (const LayerStats& s : layers) n += s.segment_flips;
    return n;
}

// ---------------------------------------------------------------------------
// Network

template <typename Real>
Network<Real>::Network(const NetworkConfig& config, const WeightContainer& weights)
    : config_(config),
      mode_(config.mode),
      surface_(config.width, config.height, config.lambda),
      surface_union_(config.height, config.width) {
    const auto dims = config_.layer_dims();
    check_weights(config_, weights);
    Dims input{1, config_.height, config_.width};
    layers_.reserve(config_.layers.size());
    for (std::size_t i = 0; i < config_.layers.size(); ++i) {
        const LayerSpec& spec = config_.layers[i];
        if (spec.type == LayerSpec::Type::conv) {
            layers_.emplace_back(std::in_place_type<EConvLayer<Real>>, load_kernel(config_, weights, i),
                                 spec.conv.activation, input);
        } else {
            layers_.emplace_back(std::in_place_type<EMaxPoolLayer<Real>>, spec.pool, input);
        }
        input = dims[i];
    }
    result_.layers.resize(layers_.size());
    result_.head_recomputed.assign(static_cast<std::size_t>(config_.head.rows) * config_.head.cols, 0);
    full_refresh();
}

template <typename Real>
LayerView<Real> Network<Real>::layer_view(std::size_t i) const {
    return std::visit([](const auto& l) { return l.view(); }, layers_[i]);
}

template <typename Real>
void Network<Real>::full_refresh() {
    LayerView<Real> view = surface_.view();
    for (auto& layer : layers_) {
        std::visit([&](auto& l) { l.reset(view); view = l.view(); }, layer);
    }
}

template <typename Real>
void Network<Real>::propagate(const SurfaceDelta<Real>& delta) {
    surface_union_.merge(delta.changed);
    result_.surface_clamped += delta.clamped_coords.size();
    ++result_.steps;
    LayerView<Real> view = surface_.view();
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        std::visit([&](auto& l) {
            l.apply(view);
            result_.layers[i] += l.stats();
            view = l.view();
        }, layers_[i]);
    }
    const auto& head = std::get<EConvLayer<Real>>(layers_.back());
    for (int p : head.recomputed().indices()) ++result_.head_recomputed[static_cast<std::size_t>(p)];
}

template <typename Real>
const BatchResult& Network<Real>::apply_batch(const EventBatch& batch) {
    for (auto& s : result_.layers) s = {};
    std::fill(result_.head_recomputed.begin(), result_.head_recomputed.end(), 0u);
    result_.steps = 0;
    result_.surface_clamped = 0;
    result_.events = batch.events.size();
    surface_union_.clear();

    if (batch.events.empty()) {
        if (surface_.last_ts()) propagate(surface_.advance_to(*surface_.last_ts() + batch.length()));
    } else if (mode_ == UpdateMode::per_event) {
        for (const Event& e : batch.events) propagate(surface_.step(e));
    } else {
        propagate(surface_.apply(batch, UpdateMode::batched));
    }
    result_.surface_changed = surface_union_.size();

    ++batches_;
    if (config_.refresh_interval > 0 && batches_ % static_cast<std::size_t>(config_.refresh_interval) == 0) {
        full_refresh();
    }
    return result_;
}

template <typename Real>
const Tensor<Real>& Network<Real>::head_tensor() const {
    return std::get<EConvLayer<Real>>(layers_.back()).post_activation();
}

template <typename Real>
GridOutput Network<Real>::head_output() const {
    return GridOutput::from_tensor(head_tensor());
}

template <typename Real>
void Network<Real>::inject_skip_rate_refresh(std::size_t i) {
    auto* conv = std::get_if<EConvLayer<Real>>(&layers_.at(i));
    if (!conv) throw ConfigError("layer " + std::to_string(i) + " is not a convolution");
    conv->inject_skip_rate_refresh();
}

// ---------------------------------------------------------------------------
// DenseNetwork

template <typename Real>
DenseNetwork<Real>::DenseNetwork(const NetworkConfig& config, const WeightContainer& weights) : config_(config) {
    const auto dims = config_.layer_dims();
    Dims input{1, config_.height, config_.width};
    for (std::size_t i = 0; i < config_.layers.size(); ++i) {
        const LayerSpec& spec = config_.layers[i];
        if (spec.type == LayerSpec::Type::conv) {
            const ConvKernel k = load_kernel(config_, weights, i);
            Conv c;
            c.geom = WindowGeometry::make(input.height, input.width, k.kernel_h, k.kernel_w, k.stride, k.padding);
            c.in_c = k.in_channels;
            c.out_c = k.out_channels;
            c.activation = spec.conv.activation;
            c.weights.resize(k.weights.size());
            for (int o = 0; o < c.out_c; ++o)
                for (int ci = 0; ci < c.in_c; ++ci)
                    for (int ky = 0; ky < k.kernel_h; ++ky)
                        for (int kx = 0; kx < k.kernel_w; ++kx)
                            c.weights[((static_cast<std::size_t>(ky) * k.kernel_w + kx) * c.in_c + ci) * c.out_c + o] =
                                static_cast<Real>(k.weight(o, ci, ky, kx));
            c.bias.assign(k.bias.begin(), k.bias.end());
            stages_.emplace_back(std::move(c));
        } else {
            Pool p;
            p.geom = WindowGeometry::make(input.height, input.width, spec.pool.pool_h, spec.pool.pool_w,
                                          spec.pool.stride, Padding::valid);
            p.channels = input.channels;
            stages_.emplace_back(p);
        }
        input = dims[i];
    }
}

template <typename Real>
Tensor<Real> DenseNetwork<Real>::run(const Conv& c, const Tensor<Real>& in) {
    const WindowGeometry& g = c.geom;
    Tensor<Real> out(Dims{c.out_c, g.out_h, g.out_w});
    const std::size_t cout = static_cast<std::size_t>(c.out_c);
    for (int oy = 0; oy < g.out_h; ++oy) {
        for (int ox = 0; ox < g.out_w; ++ox) {
            Real* acc = out.at_position(static_cast<std::size_t>(oy) * g.out_w + ox);
            for (std::size_t o = 0; o < cout; ++o) acc[o] = c.bias[o];
            for (int ky = 0; ky < g.kernel_h; ++ky) {
                const int iy = g.row_origin(oy) + ky;
                if (iy < 0 || iy >= g.in_h) continue;
                for (int kx = 0; kx < g.kernel_w; ++kx) {
                    const int ix = g.col_origin(ox) + kx;
                    if (ix < 0 || ix >= g.in_w) continue;
                    const Real* v = in.at_position(static_cast<std::size_t>(iy) * g.in_w + ix);
                    const Real* w = c.weights.data() + (static_cast<std::size_t>(ky) * g.kernel_w + kx) * c.in_c * cout;
                    for (int ci = 0; ci < c.in_c; ++ci, w += cout) {
                        const Real vi = v[ci];
                        for (std::size_t o = 0; o < cout; ++o) acc[o] += vi * w[o];
                    }
                }
            }
            for (std::size_t o = 0; o < cout; ++o) acc[o] = c.activation.eval(acc[o]);
        }
    }
    return out;
}

template <typename Real>
Tensor<Real> DenseNetwork<Real>::run(const Pool& p, const Tensor<Real>& in) {
    const WindowGeometry& g = p.geom;
    Tensor<Real> out(Dims{p.channels, g.out_h, g.out_w});
    for (int oy = 0; oy < g.out_h; ++oy)
        for (int ox = 0; ox < g.out_w; ++ox)
            for (int c = 0; c < p.channels; ++c) {
                const int y0 = g.row_origin(oy), x0 = g.col_origin(ox);
                Real best = in(c, y0, x0);
                for (int y = y0; y < y0 + g.kernel_h; ++y)
                    for (int x = x0; x < x0 + g.kernel_w; ++x) best = std::max(best, in(c, y, x));
                out(c, oy, ox) = best;
            }
    return out;
}

template <typename Real>
std::vector<Tensor<Real>> DenseNetwork<Real>::forward_all(const Tensor<Real>& surface) const {
    if (surface.dims() != Dims{1, config_.height, config_.width}) {
        throw ShapeMismatch("dense input must be a 1x" + std::to_string(config_.height) + "x" +
                            std::to_string(config_.width) + " grid");
    }
    std::vector<Tensor<Real>> outs;
    outs.reserve(stages_.size());
    const Tensor<Real>* current = &surface;
    for (const Stage& s : stages_) {
        outs.push_back(std::visit([&](const auto& stage) { return run(stage, *current); }, s));
        current = &outs.back();
    }
    return outs;
}

template <typename Real>
Tensor<Real> DenseNetwork<Real>::forward(const Tensor<Real>& surface) const {
    if (surface.dims() != Dims{1, config_.height, config_.width}) {
        throw ShapeMismatch("dense input must be a 1x" + std::to_string(config_.height) + "x" +
                            std::to_string(config_.width) + " grid");
    }
    Tensor<Real> current = surface;
    for (const Stage& s : stages_) {
        current = std::visit([&](const auto& stage) { return run(stage, current); }, s);
    }
    return current;
}

// ---------------------------------------------------------------------------
// Equivalence

std::string EquivalenceReport::to_json() const {
    nlohmann::json j;
    j["tolerance"] = tolerance;
    j["batches"] = max_abs_err.size();
    j["max_abs_err"] = max_abs_err;
    j["worst"] = worst;
    j["pass"] = pass;
    if (first_failure) j["first_failure_batch"] = *first_failure;
    else j["first_failure_batch"] = nullptr;
    return j.dump(2) + "\n";
}

std::string EquivalenceReport::summary() const {
    char buf[256];
    if (pass) {
        std::snprintf(buf, sizeof buf, "PASS: %zu batches, worst max-abs error %.3e (tolerance %.1e)",
                      max_abs_err.size(), worst, tolerance);
    } else {
        std::snprintf(buf, sizeof buf,
                      "FAIL: batch %zu exceeds tolerance %.1e (worst max-abs error %.3e over %zu batches)",
                      first_failure.value_or(0), tolerance, worst, max_abs_err.size());
    }
    return buf;
}

template <typename Real>
EquivalenceReport check_equivalence(const NetworkConfig& config, const WeightContainer& weights,
                                    const EventStream& stream, Timestamp window, double tolerance,
                                    const EquivalenceOptions<Real>& options) {
    if (stream.width != config.width || stream.height != config.height) {
        throw ShapeMismatch("stream is " + std::to_string(stream.width) + "x" + std::to_string(stream.height) +
                            ", network input is " + std::to_string(config.width) + "x" +
                            std::to_string(config.height));
    }
    Network<Real> net(config, weights);
    if (options.mode) net.set_mode(*options.mode);
    const DenseNetwork<Real> dense(config, weights);

    EquivalenceReport report;
    report.tolerance = tolerance;
    const auto batches = window_events(stream, window);
    for (std::size_t b = 0; b < batches.size(); ++b) {
        if (options.skip_rate_refresh && options.skip_rate_refresh->first == b) {
            net.inject_skip_rate_refresh(options.skip_rate_refresh->second);
        }
        net.apply_batch(batches[b]);
        const double err = max_abs_diff(net.head_output(), dense.head(net.surface().pixels()));
        report.max_abs_err.push_back(err);
        if (!(err <= report.worst)) report.worst = err;
        if (!(err <= tolerance) && !report.first_failure) report.first_failure = b;
        if (options.observer) options.observer(net, b);
    }
    report.pass = !report.first_failure.has_value();
    return report;
}

EquivalenceReport check_equivalence(const NetworkConfig& config, const WeightContainer& weights,
                                    const EventStream& stream, Timestamp window, double tolerance) {
    if (config.arithmetic == Arithmetic::f32) {
        return check_equivalence<float>(config, weights, stream, window, tolerance);
    }
    return check_equivalence<double>(config, weights, stream, window, tolerance);
}

template class Network<float>;
template class Network<double>;
template class DenseNetwork<float>;
template class DenseNetwork<double>;

template EquivalenceReport check_equivalence<float>(const NetworkConfig&, const WeightContainer&, const EventStream&,
                                                    Timestamp, double, const EquivalenceOptions<float>&);
template EquivalenceReport check_equivalence<double>(const NetworkConfig&, const WeightContainer&, const EventStream&,
                                                     Timestamp, double, const EquivalenceOptions<double>&);

}  // namespace evcnn
