#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "evcnn/activation.hpp"
#include "evcnn/active_set.hpp"
#include "evcnn/geometry.hpp"
#include "evcnn/tensor.hpp"

namespace evcnn {

/// Convolution parameters. Weights are laid out [out, in, kernel_h, kernel_w].
struct ConvKernel {
    int out_channels = 1;
    int in_channels = 1;
    int kernel_h = 1;
    int kernel_w = 1;
    std::vector<double> weights;
    std::vector<double> bias;
    int stride = 1;
    Padding padding = Padding::same_zero;

    double& weight(int o, int i, int ky, int kx) {
        return weights[((static_cast<std::size_t>(o) * in_channels + i) * kernel_h + ky) * kernel_w + kx];
    }
    double weight(int o, int i, int ky, int kx) const {
        return weights[((static_cast<std::size_t>(o) * in_channels + i) * kernel_h + ky) * kernel_w + kx];
    }

    /// Zero weights and bias of the right sizes.
    static ConvKernel zeros(int out_channels, int in_channels, int kernel_h, int kernel_w,
                            int stride = 1, Padding padding = Padding::same_zero);

    /// Throws DimensionMismatch on inconsistent sizes.
    void validate() const;
};

struct LayerStats {
    /// Output positions recomputed from their receptive field.
    std::size_t recomputed = 0;
    /// Positions whose activation segment changed under leak alone.
    std::size_t segment_flips = 0;
    /// Positions forwarded as changed to the next layer.
    std::size_t emitted = 0;
    /// Positions updated by the linear leak rule.
    std::size_t leak_updates = 0;

    LayerStats& operator+=(const LayerStats& o) {
        recomputed += o.recomputed;
        segment_flips += o.segment_flips;
        emitted += o.emitted;
        leak_updates += o.leak_updates;
        return *this;
    }
};

/// Event-based convolution layer.
///
/// Keeps the pre-activation map, the activation segment of every output, and
/// the rate S = sum(F_upstream * W): the amount a unit of input leak removes
/// from each pre-activation. The layer's own rate map is F = slope * S.
///
/// Per step, outputs whose receptive field holds an upstream change are
/// recomputed from scratch (both value and S); every other output moves by
/// -delta_leak * S, and those that cross an activation breakpoint are
/// forwarded downstream as changes. Positions whose S is zero in every channel
/// cannot move and are skipped.
template <typename Real>
class EConvLayer {
public:
    EConvLayer(const ConvKernel& kernel, PiecewiseLinearActivation activation, Dims input);

    Dims input_dims() const { return input_; }
    Dims output_dims() const { return pre_.dims(); }
    const WindowGeometry& geometry() const { return geom_; }
    const PiecewiseLinearActivation& activation() const { return activation_; }

    /// Full inference from the upstream maps.
    void reset(const LayerView<Real>& upstream);

    /// Incremental step. Returns the positions forwarded as changed.
    /// Throws StaleState when `upstream` does not match the input shape.
    const CoordSet& apply(const LayerView<Real>& upstream);

    /// Recomputes S (and F) at the given (y, x) output positions from upstream
    /// rates. Throws CoordinateOutOfBounds.
    void refresh_rate(const LayerView<Real>& upstream, std::span<const std::pair<int, int>> coords);

    LayerView<Real> view() const { return {&post_, &update_rate_, &changed_, delta_leak_}; }

    const Tensor<Real>& pre_activation() const { return pre_; }
    const Tensor<Real>& post_activation() const { return post_; }
    /// S, the pre-activation decay rate.
    const Tensor<Real>& rate() const { return rate_; }
    /// F = slope * S.
    const Tensor<Real>& update_rate() const { return update_rate_; }
    const std::vector<SegmentId>& segments() const { return segment_; }
    const CoordSet& changed() const { return changed_; }
    /// Positions recomputed from their receptive field in the last step.
    const CoordSet& recomputed() const { return affected_; }
    const LayerStats& stats() const { return stats_; }
    std::size_t active_positions() const { return active_.size(); }

    /// Verification hook: the next apply() leaves S stale at recomputed positions.
    void inject_skip_rate_refresh() { skip_rate_refresh_ = true; }

private:
    void check_upstream(const LayerView<Real>& upstream) const;
    void recompute_position(const LayerView<Real>& upstream, std::size_t p, bool refresh_rate);
    void set_outputs(std::size_t p);

    PiecewiseLinearActivation activation_;
    Dims input_;
    WindowGeometry geom_;
    int out_c_;
    int in_c_;
    std::vector<Real> weights_;  // [ky][kx][in][out]
    std::vector<Real> bias_;

    Tensor<Real> pre_;
    Tensor<Real> post_;
    Tensor<Real> rate_;
    Tensor<Real> update_rate_;
    std::vector<SegmentId> segment_;
    ActiveSet active_;

    CoordSet changed_;
    CoordSet affected_;
    Real delta_leak_ = Real(0);
    LayerStats stats_;
    std::vector<Real> acc_value_;
    std::vector<Real> acc_rate_;
    bool skip_rate_refresh_ = false;
};

extern template class EConvLayer<float>;
extern template class EConvLayer<double>;

}  // namespace evcnn
