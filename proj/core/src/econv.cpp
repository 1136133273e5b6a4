#include "evcnn/econv.hpp"

#include <algorithm>

#include "evcnn/errors.hpp"

namespace evcnn {

ConvKernel ConvKernel::zeros(int out_channels, int in_channels, int kernel_h, int kernel_w, int stride,
                             Padding padding) {
    ConvKernel k;
    k.out_channels = out_channels;
    k.in_channels = in_channels;
    k.kernel_h = kernel_h;
    k.kernel_w = kernel_w;
    k.stride = stride;
    k.padding = padding;
    k.weights.assign(static_cast<std::size_t>(out_channels) * in_channels * kernel_h * kernel_w, 0.0);
    k.bias.assign(static_cast<std::size_t>(out_channels), 0.0);
    return k;
}

void ConvKernel::validate() const {
    if (out_channels < 1 || in_channels < 1 || kernel_h < 1 || kernel_w < 1) {
        throw DimensionMismatch("kernel dimensions must be >= 1");
    }
    if (stride < 1) throw DimensionMismatch("stride must be >= 1");
    const std::size_t expected = static_cast<std::size_t>(out_channels) * in_channels * kernel_h * kernel_w;
    if (weights.size() != expected) {
        throw DimensionMismatch("kernel holds " + std::to_string(weights.size()) + " weights, expected " +
                                std::to_string(expected));
    }
    if (bias.size() != static_cast<std::size_t>(out_channels)) {
        throw DimensionMismatch("bias length does not match output channels");
    }
}

template <typename Real>
EConvLayer<Real>::EConvLayer(const ConvKernel& kernel, PiecewiseLinearActivation activation, Dims input)
    : activation_(activation), input_(input), out_c_(kernel.out_channels), in_c_(kernel.in_channels) {
    kernel.validate();
    if (input.channels != kernel.in_channels) {
        throw DimensionMismatch("layer expects " + std::to_string(kernel.in_channels) +
                                " input channels, got " + std::to_string(input.channels));
    }
    geom_ = WindowGeometry::make(input.height, input.width, kernel.kernel_h, kernel.kernel_w,
                                 kernel.stride, kernel.padding);

    weights_.resize(kernel.weights.size());
    for (int o = 0; o < out_c_; ++o)
        for (int i = 0; i < in_c_; ++i)
            for (int ky = 0; ky < kernel.kernel_h; ++ky)
                for (int kx = 0; kx < kernel.kernel_w; ++kx) {
                    const std::size_t t =
                        ((static_cast<std::size_t>(ky) * kernel.kernel_w + kx) * in_c_ + i) * out_c_ + o;
                    weights_[t] = static_cast<Real>(kernel.weight(o, i, ky, kx));
                }
    bias_.assign(kernel.bias.begin(), kernel.bias.end());

    const Dims out{out_c_, geom_.out_h, geom_.out_w};
    pre_ = Tensor<Real>(out);
    post_ = Tensor<Real>(out);
    rate_ = Tensor<Real>(out);
    update_rate_ = Tensor<Real>(out);
    segment_.assign(out.size(), 0);
    active_ = ActiveSet(out.spatial());
    changed_ = CoordSet(out.height, out.width);
    affected_ = CoordSet(out.height, out.width);
    acc_value_.resize(static_cast<std::size_t>(out_c_));
    acc_rate_.resize(static_cast<std::size_t>(out_c_));
}

template <typename Real>
void EConvLayer<Real>::check_upstream(const LayerView<Real>& up) const {
    if (!up.values || !up.rates || up.values->dims() != input_ || up.rates->dims() != input_) {
        throw StaleState("upstream maps do not match the layer input shape");
    }
    if (up.changed && (up.changed->height() != input_.height || up.changed->width() != input_.width)) {
        throw StaleState("upstream change set does not match the layer input shape");
    }
}

template <typename Real>
void EConvLayer<Real>::recompute_position(const LayerView<Real>& up, std::size_t p, bool refresh_rate) {
    const int oy = static_cast<int>(p) / geom_.out_w;
    const int ox = static_cast<int>(p) % geom_.out_w;
    const int iy0 = geom_.row_origin(oy);
    const int ix0 = geom_.col_origin(ox);
    std::copy(bias_.begin(), bias_.end(), acc_value_.begin());
    std::fill(acc_rate_.begin(), acc_rate_.end(), Real(0));
    Real* av = acc_value_.data();
    Real* ar = acc_rate_.data();
    const int cout = out_c_;

    for (int ky = 0; ky < geom_.kernel_h; ++ky) {
        const int iy = iy0 + ky;
        if (iy < 0 || iy >= geom_.in_h) continue;
        for (int kx = 0; kx < geom_.kernel_w; ++kx) {
            const int ix = ix0 + kx;
            if (ix < 0 || ix >= geom_.in_w) continue;
            const std::size_t ip = static_cast<std::size_t>(iy) * geom_.in_w + ix;
            const Real* v = up.values->at_position(ip);
            const Real* f = up.rates->at_position(ip);
            const Real* wtap = weights_.data() +
                               (static_cast<std::size_t>(ky) * geom_.kernel_w + kx) * in_c_ * cout;
            for (int ci = 0; ci < in_c_; ++ci) {
                const Real vi = v[ci];
                const Real fi = f[ci];
                if (vi == Real(0) && fi == Real(0)) continue;
                const Real* w = wtap + static_cast<std::size_t>(ci) * cout;
                for (int o = 0; o < cout; ++o) {
                    av[o] += vi * w[o];
                    ar[o] += fi * w[o];
                }
            }
        }
    }

    Real* pre = pre_.at_position(p);
    Real* s = rate_.at_position(p);
    bool any_rate = false;
    for (int o = 0; o < cout; ++o) {
        pre[o] = av[o];
        if (refresh_rate) s[o] = ar[o];
        any_rate |= s[o] != Real(0);
    }
    active_.set(p, any_rate);
    set_outputs(p);
}

template <typename Real>
void EConvLayer<Real>::set_outputs(std::size_t p) {
    const std::size_t base = p * static_cast<std::size_t>(out_c_);
    for (int o = 0; o < out_c_; ++o) {
        const std::size_t i = base + static_cast<std::size_t>(o);
        const SegmentId seg = activation_.segment_id(pre_.data()[i]);
        const Real slope = activation_.template slope<Real>(seg);
        segment_[i] = seg;
        post_.data()[i] = slope * pre_.data()[i];
        update_rate_.data()[i] = slope * rate_.data()[i];
    }
}

template <typename Real>
void EConvLayer<Real>::reset(const LayerView<Real>& up) {
    check_upstream(up);
    changed_.clear();
    delta_leak_ = Real(0);
    stats_ = {};
    for (std::size_t p = 0; p < pre_.dims().spatial(); ++p) recompute_position(up, p, true);
}

template <typename Real>
const CoordSet& EConvLayer<Real>::apply(const LayerView<Real>& up) {
    check_upstream(up);
    changed_.clear();
    affected_.clear();
    stats_ = {};
    delta_leak_ = up.delta_leak;

    if (up.changed) geom_.affected(*up.changed, affected_);

    // Outputs outside every changed receptive field follow the linear leak.
    const Real d = up.delta_leak;
    if (d != Real(0)) {
        const int cout = out_c_;
        Real* pre = pre_.data();
        Real* post = post_.data();
        Real* fmap = update_rate_.data();
        const Real* s = rate_.data();
        for (std::size_t p : active_.items()) {
            if (affected_.contains_index(static_cast<int>(p))) continue;
            ++stats_.leak_updates;
            const std::size_t base = p * static_cast<std::size_t>(cout);
            bool flipped = false;
            for (int o = 0; o < cout; ++o) {
                const std::size_t i = base + static_cast<std::size_t>(o);
                pre[i] -= d * s[i];
                const SegmentId seg = activation_.segment_id(pre[i]);
                const Real slope = activation_.template slope<Real>(seg);
                if (seg != segment_[i]) {
                    segment_[i] = seg;
                    fmap[i] = slope * s[i];
                    flipped = true;
                }
                post[i] = slope * pre[i];
            }
            if (flipped) {
                ++stats_.segment_flips;
                changed_.insert(static_cast<int>(p) / geom_.out_w, static_cast<int>(p) % geom_.out_w);
            }
        }
    }

    // Outputs whose receptive field saw a change are recomputed exactly.
    const bool refresh = !skip_rate_refresh_;
    skip_rate_refresh_ = false;
    for (int p : affected_.indices()) {
        recompute_position(up, static_cast<std::size_t>(p), refresh);
        changed_.insert(p / geom_.out_w, p % geom_.out_w);
    }
    stats_.recomputed = affected_.size();
    stats_.emitted = changed_.size();
    return changed_;
}

template <typename Real>
void EConvLayer<Real>::refresh_rate(const LayerView<Real>& up,
                                    std::span<const std::pair<int, int>> coords) {
    check_upstream(up);
    for (const auto& [y, x] : coords) {
        if (y < 0 || x < 0 || y >= geom_.out_h || x >= geom_.out_w) {
            throw CoordinateOutOfBounds("rate refresh at (" + std::to_string(y) + "," +
                                        std::to_string(x) + ") outside output map");
        }
    }
    for (const auto& [y, x] : coords) {
        const std::size_t p = static_cast<std::size_t>(y) * geom_.out_w + x;
        // Keep the stored pre-activation; only the rate is refreshed.
        std::vector<Real> saved(pre_.at_position(p), pre_.at_position(p) + out_c_);
        recompute_position(up, p, true);
        std::copy(saved.begin(), saved.end(), pre_.at_position(p));
        set_outputs(p);
    }
}

template class EConvLayer<float>;
template class EConvLayer<double>;

}  // namespace evcnn
