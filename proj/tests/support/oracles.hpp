#pragma once

// Reference implementations written against the plain definitions, sharing no
// code with the library beyond its config and data types.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "evcnn/config.hpp"
#include "evcnn/event.hpp"
#include "evcnn/network.hpp"
#include "evcnn/weights.hpp"

namespace evtest {

/// Channel-major map: data[(c * h + y) * w + x].
struct Map {
    int c = 0, h = 0, w = 0;
    std::vector<double> data;

    Map() = default;
    Map(int c_, int h_, int w_) : c(c_), h(h_), w(w_), data(static_cast<std::size_t>(c_) * h_ * w_, 0.0) {}
    double& at(int ch, int y, int x) { return data[(static_cast<std::size_t>(ch) * h + y) * w + x]; }
    double at(int ch, int y, int x) const { return data[(static_cast<std::size_t>(ch) * h + y) * w + x]; }
};

inline double act(const evcnn::PiecewiseLinearActivation& a, double x) {
    switch (a.kind()) {
        case evcnn::PiecewiseLinearActivation::Kind::identity: return x;
        case evcnn::PiecewiseLinearActivation::Kind::relu: return x > 0 ? x : 0.0;
        case evcnn::PiecewiseLinearActivation::Kind::leaky_relu: return x > 0 ? x : a.negative_slope() * x;
    }
    return x;
}

/// Six nested loops over (out channel, row, col, in channel, ky, kx).
inline Map naive_conv(const Map& in, const std::vector<float>& w, const std::vector<float>& b, int out_c, int kh,
                      int kw, int stride, evcnn::Padding pad, const evcnn::PiecewiseLinearActivation& a) {
    int oh, ow, pt = 0, pl = 0;
    if (pad == evcnn::Padding::valid) {
        oh = (in.h - kh) / stride + 1;
        ow = (in.w - kw) / stride + 1;
    } else {
        oh = (in.h + stride - 1) / stride;
        ow = (in.w + stride - 1) / stride;
        pt = std::max((oh - 1) * stride + kh - in.h, 0) / 2;
        pl = std::max((ow - 1) * stride + kw - in.w, 0) / 2;
    }
    Map out(out_c, oh, ow);
    for (int o = 0; o < out_c; ++o)
        for (int y = 0; y < oh; ++y)
            for (int x = 0; x < ow; ++x) {
                double s = b[static_cast<std::size_t>(o)];
                for (int i = 0; i < in.c; ++i)
                    for (int ky = 0; ky < kh; ++ky)
                        for (int kx = 0; kx < kw; ++kx) {
                            const int iy = y * stride - pt + ky, ix = x * stride - pl + kx;
                            if (iy < 0 || ix < 0 || iy >= in.h || ix >= in.w) continue;
                            s += static_cast<double>(w[((static_cast<std::size_t>(o) * in.c + i) * kh + ky) * kw + kx]) *
                                 in.at(i, iy, ix);
                        }
                out.at(o, y, x) = act(a, s);
            }
    return out;
}

inline Map naive_pool(const Map& in, int ph, int pw, int stride) {
    const int oh = (in.h - ph) / stride + 1, ow = (in.w - pw) / stride + 1;
    Map out(in.c, oh, ow);
    for (int c = 0; c < in.c; ++c)
        for (int y = 0; y < oh; ++y)
            for (int x = 0; x < ow; ++x) {
                double m = in.at(c, y * stride, x * stride);
                for (int dy = 0; dy < ph; ++dy)
                    for (int dx = 0; dx < pw; ++dx) m = std::max(m, in.at(c, y * stride + dy, x * stride + dx));
                out.at(c, y, x) = m;
            }
    return out;
}

/// Every layer's output for a single-channel input grid.
inline std::vector<Map> naive_forward_all(const evcnn::NetworkConfig& cfg, const evcnn::WeightContainer& wc,
                                          const Map& input) {
    std::vector<Map> outs;
    Map cur = input;
    for (std::size_t i = 0; i < cfg.layers.size(); ++i) {
        const auto& l = cfg.layers[i];
        if (l.type == evcnn::LayerSpec::Type::conv) {
            auto w = wc.values(evcnn::NetworkConfig::weight_name(i));
            auto b = wc.values(evcnn::NetworkConfig::bias_name(i));
            cur = naive_conv(cur, {w.begin(), w.end()}, {b.begin(), b.end()}, l.conv.channels, l.conv.kernel_h,
                             l.conv.kernel_w, l.conv.stride, l.conv.padding, l.conv.activation);
        } else {
            cur = naive_pool(cur, l.pool.pool_h, l.pool.pool_w, l.pool.stride);
        }
        outs.push_back(cur);
    }
    return outs;
}

template <typename Real>
Map from_tensor(const evcnn::Tensor<Real>& t) {
    Map m(t.channels(), t.height(), t.width());
    for (int c = 0; c < m.c; ++c)
        for (int y = 0; y < m.h; ++y)
            for (int x = 0; x < m.w; ++x) m.at(c, y, x) = static_cast<double>(t(c, y, x));
    return m;
}

inline double max_abs(const Map& a, const Map& b) {
    double m = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::fabs(a.data[i] - b.data[i]));
    return m;
}

/// Replays events one by one on a row-major grid: decay everything, then add 1.
inline std::vector<double> replay_surface(const evcnn::EventStream& s, double lambda) {
    std::vector<double> g(static_cast<std::size_t>(s.width) * s.height, 0.0);
    bool first = true;
    evcnn::Timestamp last = 0;
    for (const auto& e : s.events) {
        if (!first) {
            const double d = lambda * static_cast<double>(e.ts - last);
            for (double& v : g) v = std::max(v - d, 0.0);
        }
        first = false;
        last = e.ts;
        g[static_cast<std::size_t>(e.y) * s.width + e.x] += 1.0;
    }
    return g;
}

/// Sorted timestamps uniform over [0, span); a fraction of duplicates.
inline evcnn::EventStream random_stream(std::mt19937_64& rng, int w, int h, std::size_t n, evcnn::Timestamp span) {
    evcnn::EventStream s{w, h, {}};
    std::uniform_int_distribution<int> ux(0, w - 1), uy(0, h - 1);
    std::uniform_int_distribution<evcnn::Timestamp> ut(0, span - 1);
    std::vector<evcnn::Timestamp> ts(n);
    for (auto& t : ts) t = ut(rng);
    std::sort(ts.begin(), ts.end());
    for (std::size_t i = 0; i < n; ++i) {
        evcnn::Event e;
        e.x = static_cast<std::uint16_t>(ux(rng));
        e.y = static_cast<std::uint16_t>(uy(rng));
        e.ts = ts[i];
        e.polarity = (rng() & 1) ? 1 : -1;
        s.events.push_back(e);
    }
    return s;
}

inline evcnn::PiecewiseLinearActivation random_activation(std::mt19937_64& rng) {
    switch (rng() % 3) {
        case 0: return evcnn::PiecewiseLinearActivation::relu();
        case 1: return evcnn::PiecewiseLinearActivation::leaky_relu();
        default: return evcnn::PiecewiseLinearActivation::identity();
    }
}

/// 1-4 conv layers (1-8 channels, 1/3/5 kernels), 0-3 2x2 pools, random
/// activations, strides and paddings. The last conv is the head; its grid
/// becomes the head spec with one box per cell.
inline evcnn::NetworkConfig random_config(std::mt19937_64& rng, int size = 64) {
    using namespace evcnn;
    for (;;) {
        NetworkConfig cfg;
        cfg.width = cfg.height = size;
        cfg.lambda = std::uniform_real_distribution<double>(3e-5, 3e-4)(rng);
        const int convs = 1 + static_cast<int>(rng() % 4);
        const int pools = static_cast<int>(rng() % 4);
        // Pools follow distinct non-head convs.
        std::vector<int> slots(static_cast<std::size_t>(convs - 1));
        for (int i = 0; i < convs - 1; ++i) slots[static_cast<std::size_t>(i)] = i;
        std::shuffle(slots.begin(), slots.end(), rng);
        std::vector<bool> pool_after(static_cast<std::size_t>(convs), false);
        for (int i = 0; i < pools && i < convs - 1; ++i) pool_after[static_cast<std::size_t>(slots[i])] = true;
        int hw = size;
        bool ok = true;
        for (int i = 0; i < convs; ++i) {
            ConvLayerSpec c;
            const bool head = i == convs - 1;
            c.channels = head ? 5 + static_cast<int>(rng() % 4) : 1 + static_cast<int>(rng() % 8);
            const int ks[] = {1, 3, 5};
            c.kernel_h = c.kernel_w = ks[rng() % 3];
            c.stride = (rng() % 6 == 0) ? 2 : 1;
            c.padding = (rng() % 3 == 0) ? Padding::valid : Padding::same_zero;
            c.activation = head ? PiecewiseLinearActivation::identity() : random_activation(rng);
            if (c.padding == Padding::valid) {
                if (hw < c.kernel_h) { ok = false; break; }
                hw = (hw - c.kernel_h) / c.stride + 1;
            } else {
                hw = (hw + c.stride - 1) / c.stride;
            }
            cfg.layers.push_back(LayerSpec::make_conv(c));
            if (pool_after[static_cast<std::size_t>(i)] && hw >= 2) {
                cfg.layers.push_back(LayerSpec::make_pool({2, 2, 2}));
                hw = (hw - 2) / 2 + 1;
            }
        }
        if (!ok || hw < 1) continue;
        const int head_c = cfg.layers.back().conv.channels;
        cfg.head = {hw, hw, 1, head_c - 5};
        return cfg;
    }
}

}  // namespace evtest
