#include <gtest/gtest.h>

#include <random>
#include <utility>
#include <vector>

#include "evcnn/econv.hpp"
#include "evcnn/errors.hpp"
#include "evcnn/network.hpp"
#include "oracles.hpp"

using namespace evcnn;
using Act = PiecewiseLinearActivation;

namespace {

// Upstream maps a test can edit between steps.
struct Upstream {
    Tensor<double> values, rates;
    CoordSet changed;
    double leak = 0;

    explicit Upstream(Dims d) : values(d), rates(d), changed(d.height, d.width) {}
    LayerView<double> view() const { return {&values, &rates, &changed, leak}; }
};

ConvKernel kernel_1x1(double w, double b) {
    ConvKernel k = ConvKernel::zeros(1, 1, 1, 1);
    k.weight(0, 0, 0, 0) = w;
    k.bias[0] = b;
    return k;
}

ConvKernel random_kernel(std::mt19937_64& rng, int out_c, int in_c, int k, Padding pad = Padding::same_zero) {
    ConvKernel kern = ConvKernel::zeros(out_c, in_c, k, k, 1, pad);
    std::uniform_real_distribution<double> u(-1, 1);
    for (double& w : kern.weights) w = u(rng);
    for (double& b : kern.bias) b = u(rng);
    return kern;
}

// S recomputed from scratch at one output position.
double rate_at(const ConvKernel& k, const EConvLayer<double>& layer, const Tensor<double>& up_rates, int o, int oy,
               int ox) {
    const WindowGeometry& g = layer.geometry();
    double s = 0;
    for (int i = 0; i < k.in_channels; ++i)
        for (int ky = 0; ky < k.kernel_h; ++ky)
            for (int kx = 0; kx < k.kernel_w; ++kx) {
                const int iy = g.row_origin(oy) + ky, ix = g.col_origin(ox) + kx;
                if (iy < 0 || ix < 0 || iy >= g.in_h || ix >= g.in_w) continue;
                s += up_rates(i, iy, ix) * k.weight(o, i, ky, kx);
            }
    return s;
}

}  // namespace

TEST(EConvInit, PositiveBiasOnBlankInput) {
    Upstream up(Dims{1, 5, 5});
    ConvKernel k = ConvKernel::zeros(1, 1, 3, 3);
    for (double& w : k.weights) w = 0.3;
    k.bias[0] = 0.5;
    EConvLayer<double> layer(k, Act::relu(), up.values.dims());
    layer.reset(up.view());
    for (std::size_t p = 0; p < 25; ++p) {
        EXPECT_EQ(layer.pre_activation().values()[p], 0.5);
        EXPECT_EQ(layer.post_activation().values()[p], 0.5);
        EXPECT_EQ(layer.segments()[p], 1);
        EXPECT_EQ(layer.rate().values()[p], 0.0);
    }
}

TEST(EConvInit, NegativeBiasOnBlankInput) {
    Upstream up(Dims{1, 4, 4});
    EConvLayer<double> layer(kernel_1x1(1.0, -0.5), Act::relu(), up.values.dims());
    layer.reset(up.view());
    for (std::size_t p = 0; p < 16; ++p) {
        EXPECT_EQ(layer.pre_activation().values()[p], -0.5);
        EXPECT_EQ(layer.post_activation().values()[p], 0.0);
        EXPECT_EQ(layer.segments()[p], 0);
        EXPECT_EQ(layer.update_rate().values()[p], 0.0);
    }
}

TEST(EConvInit, KernelValidation) {
    ConvKernel k = ConvKernel::zeros(2, 1, 3, 3);
    k.weights.pop_back();
    EXPECT_THROW(k.validate(), DimensionMismatch);
    EXPECT_THROW(EConvLayer<double>(ConvKernel::zeros(1, 1, 5, 5, 1, Padding::valid), Act::relu(), Dims{1, 3, 3}),
                 DimensionMismatch);
}

TEST(EConvApply, LeakThroughOneByOneKernel) {
    Upstream up(Dims{1, 3, 3});
    up.values(0, 1, 1) = 3.0;
    up.rates(0, 1, 1) = 1.0;
    EConvLayer<double> layer(kernel_1x1(2.0, 0.0), Act::identity(), up.values.dims());
    layer.reset(up.view());
    EXPECT_EQ(layer.pre_activation()(0, 1, 1), 6.0);
    EXPECT_EQ(layer.rate()(0, 1, 1), 2.0);

    up.values(0, 1, 1) = 2.5;
    up.leak = 0.5;
    const CoordSet& out = layer.apply(up.view());
    EXPECT_EQ(layer.pre_activation()(0, 1, 1), 5.0);
    EXPECT_EQ(layer.pre_activation()(0, 0, 0), 0.0);
    EXPECT_TRUE(out.empty());
}

TEST(EConvApply, SegmentFlipUnderLeak) {
    Upstream up(Dims{1, 2, 2});
    up.values(0, 0, 0) = 0.3;
    up.rates(0, 0, 0) = 1.0;
    EConvLayer<double> layer(kernel_1x1(1.0, 0.0), Act::relu(), up.values.dims());
    layer.reset(up.view());
    EXPECT_EQ(layer.segments()[0], 1);

    up.leak = 0.5;
    const CoordSet& out = layer.apply(up.view());
    EXPECT_DOUBLE_EQ(layer.pre_activation()(0, 0, 0), -0.2);
    EXPECT_EQ(layer.segments()[0], 0);
    EXPECT_EQ(layer.post_activation()(0, 0, 0), 0.0);
    EXPECT_EQ(layer.update_rate()(0, 0, 0), 0.0);
    EXPECT_TRUE(out.contains(0, 0));
    EXPECT_EQ(out.size(), 1u);
    EXPECT_EQ(layer.stats().segment_flips, 1u);
}

TEST(EConvApply, NoOpStep) {
    std::mt19937_64 rng(1);
    Upstream up(Dims{2, 6, 6});
    std::uniform_real_distribution<double> u(0, 2);
    for (double& v : up.values.values()) v = u(rng);
    for (double& r : up.rates.values()) r = rng() % 2;
    EConvLayer<double> layer(random_kernel(rng, 3, 2, 3), Act::leaky_relu(), up.values.dims());
    layer.reset(up.view());
    const auto pre = layer.pre_activation();
    const auto rate = layer.rate();
    EXPECT_TRUE(layer.apply(up.view()).empty());
    EXPECT_EQ(layer.pre_activation(), pre);
    EXPECT_EQ(layer.rate(), rate);
}

TEST(EConvApply, StaleUpstreamThrows) {
    Upstream up(Dims{1, 4, 4}), wrong(Dims{1, 5, 4});
    EConvLayer<double> layer(kernel_1x1(1.0, 0.0), Act::relu(), up.values.dims());
    layer.reset(up.view());
    EXPECT_THROW(layer.apply(wrong.view()), StaleState);
}

TEST(EConvRefresh, SumsInBoundsTerms) {
    Upstream up(Dims{1, 5, 5});
    ConvKernel k = ConvKernel::zeros(1, 1, 3, 3);
    for (double& w : k.weights) w = 1.0;
    EConvLayer<double> layer(k, Act::identity(), up.values.dims());
    layer.reset(up.view());
    EXPECT_EQ(layer.rate()(0, 2, 2), 0.0);

    up.rates.fill(1.0);
    const std::vector<std::pair<int, int>> coords{{2, 2}, {0, 0}, {4, 4}, {0, 2}};
    layer.refresh_rate(up.view(), coords);
    EXPECT_EQ(layer.rate()(0, 2, 2), 9.0);
    EXPECT_EQ(layer.rate()(0, 0, 0), 4.0);
    EXPECT_EQ(layer.rate()(0, 4, 4), 4.0);
    EXPECT_EQ(layer.rate()(0, 0, 2), 6.0);
    EXPECT_EQ(layer.rate()(0, 1, 1), 0.0);
    EXPECT_EQ(layer.update_rate()(0, 2, 2), 9.0);

    const std::vector<std::pair<int, int>> bad{{5, 0}};
    EXPECT_THROW(layer.refresh_rate(up.view(), bad), CoordinateOutOfBounds);
}

TEST(EConvProperty, RateStaysConsistentThroughNetwork) {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 6; ++trial) {
        const NetworkConfig cfg = evtest::random_config(rng, 32);
        const WeightContainer w = random_weights(cfg, rng(), false);
        Network<double> net(cfg, w);
        const EventStream st = evtest::random_stream(rng, 32, 32, 400, 80000);
        for (const EventBatch& b : window_events(st, 10000)) {
            net.apply_batch(b);
            for (std::size_t i = 0; i < net.layer_count(); ++i) {
                const auto* conv = std::get_if<EConvLayer<double>>(&net.layer(i));
                if (!conv) continue;
                const ConvKernel k = load_kernel(cfg, w, i);
                const Tensor<double>& up_rates = i == 0 ? net.surface().rates() : *net.layer_view(i - 1).rates;
                const Dims d = conv->output_dims();
                for (int o = 0; o < d.channels; ++o)
                    for (int y = 0; y < d.height; ++y)
                        for (int x = 0; x < d.width; ++x) {
                            const double s = rate_at(k, *conv, up_rates, o, y, x);
                            ASSERT_NEAR(conv->rate()(o, y, x), s, 1e-9);
                            ASSERT_EQ(conv->update_rate()(o, y, x),
                                      conv->activation().slope<double>(conv->segments()[conv->rate().index(o, y, x)]) *
                                          conv->rate()(o, y, x));
                        }
            }
        }
    }
}

TEST(EConvProperty, LeakIsLinearWithoutFlips) {
    std::mt19937_64 rng(8);
    Upstream up(Dims{2, 7, 7});
    std::uniform_real_distribution<double> u(0, 1);
    for (double& v : up.values.values()) v = 5 + u(rng);
    for (double& r : up.rates.values()) r = u(rng);
    const ConvKernel k = random_kernel(rng, 3, 2, 3);
    EConvLayer<double> two(k, Act::identity(), up.values.dims()), one(k, Act::identity(), up.values.dims());
    two.reset(up.view());
    one.reset(up.view());

    up.leak = 0.125;
    two.apply(up.view());
    up.leak = 0.375;
    two.apply(up.view());
    up.leak = 0.5;
    one.apply(up.view());
    for (std::size_t i = 0; i < one.pre_activation().size(); ++i)
        EXPECT_NEAR(one.pre_activation().values()[i], two.pre_activation().values()[i], 1e-12);
}

TEST(EConvProperty, FlipBetweenSplitLeaksIsDetected) {
    Upstream up(Dims{1, 1, 1});
    up.values(0, 0, 0) = 1.0;
    up.rates(0, 0, 0) = 1.0;
    EConvLayer<double> layer(kernel_1x1(1.0, 0.0), Act::leaky_relu(0.1), up.values.dims());
    layer.reset(up.view());
    up.leak = 0.75;
    EXPECT_TRUE(layer.apply(up.view()).empty());
    up.leak = 0.5;
    EXPECT_TRUE(layer.apply(up.view()).contains(0, 0));
    EXPECT_DOUBLE_EQ(layer.pre_activation()(0, 0, 0), -0.25);
    EXPECT_DOUBLE_EQ(layer.update_rate()(0, 0, 0), 0.1);
}

TEST(EConvProperty, BiasShiftsBothPathsAlike) {
    std::mt19937_64 rng(14);
    NetworkConfig cfg;
    cfg.width = cfg.height = 16;
    cfg.arithmetic = Arithmetic::f64;
    cfg.lambda = 1e-4;
    ConvLayerSpec c0;
    c0.channels = 4;
    c0.activation = Act::identity();
    ConvLayerSpec head;
    head.channels = 6;
    head.kernel_h = head.kernel_w = 1;
    head.activation = Act::identity();
    cfg.layers = {LayerSpec::make_conv(c0), LayerSpec::make_pool({2, 2, 2}), LayerSpec::make_conv(head)};
    cfg.head = {8, 8, 1, 1};

    const WeightContainer base = random_weights(cfg, 5, false);
    WeightContainer shifted;
    for (const auto& e : base.entries()) {
        std::vector<float> v(base.values(e.name).begin(), base.values(e.name).end());
        if (e.name == NetworkConfig::bias_name(2))
            for (float& b : v) b += 0.75f;
        shifted.add(e.name, e.shape, v);
    }
    const EventStream st = evtest::random_stream(rng, 16, 16, 300, 50000);
    Network<double> a(cfg, base), b(cfg, shifted);
    DenseNetwork<double> da(cfg, base), db(cfg, shifted);
    for (const EventBatch& batch : window_events(st, 10000)) {
        a.apply_batch(batch);
        b.apply_batch(batch);
        const GridOutput ea = a.head_output(), eb = b.head_output();
        const GridOutput xa = da.head(a.surface().pixels()), xb = db.head(b.surface().pixels());
        for (std::size_t i = 0; i < ea.values.size(); ++i)
            EXPECT_NEAR(eb.values[i] - ea.values[i], xb.values[i] - xa.values[i], 1e-9);
    }
}
