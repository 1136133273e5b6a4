#include "evcnn/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "evcnn/errors.hpp"

namespace evcnn {

using nlohmann::json;

Arithmetic parse_arithmetic(const std::string& name) {
    if (name == "f32") return Arithmetic::f32;
    if (name == "f64") return Arithmetic::f64;
    throw ConfigError("unknown arithmetic '" + name + "' (expected f32 or f64)");
}

std::string to_string(Arithmetic arithmetic) { return arithmetic == Arithmetic::f32 ? "f32" : "f64"; }

std::vector<Dims> NetworkConfig::layer_dims() const {
    if (width < 1 || height < 1) throw ConfigError("input dimensions must be positive");
    if (!(lambda >= 0.0)) throw ConfigError("lambda must be non-negative");
    if (refresh_interval < 0) throw ConfigError("refresh_interval must be >= 0");
    if (layers.empty()) throw ConfigError("network has no layers");
    if (head.rows < 1 || head.cols < 1 || head.boxes < 1 || head.classes < 0) {
        throw ConfigError("invalid head specification");
    }

    std::vector<Dims> dims;
    Dims current{1, height, width};
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const LayerSpec& l = layers[i];
        try {
            if (l.type == LayerSpec::Type::conv) {
                if (l.conv.channels < 1) throw ConfigError("layer " + std::to_string(i) + ": channels must be >= 1");
                const auto g = WindowGeometry::make(current.height, current.width, l.conv.kernel_h,
                                                    l.conv.kernel_w, l.conv.stride, l.conv.padding);
                current = Dims{l.conv.channels, g.out_h, g.out_w};
            } else {
                if (l.pool.pool_h < 1 || l.pool.pool_w < 1 || l.pool.stride < 1) {
                    throw ConfigError("layer " + std::to_string(i) + ": invalid pool geometry");
                }
                const auto g = WindowGeometry::make(current.height, current.width, l.pool.pool_h,
                                                    l.pool.pool_w, l.pool.stride, Padding::valid);
                current = Dims{current.channels, g.out_h, g.out_w};
            }
        } catch (const DimensionMismatch& e) {
            throw ConfigError("layer " + std::to_string(i) + ": " + e.what());
        }
        dims.push_back(current);
    }
    if (layers.back().type != LayerSpec::Type::conv) {
        throw ShapeMismatch("the last layer must be the convolutional head");
    }
    if (current.channels != head.channels()) {
        throw ShapeMismatch("head produces " + std::to_string(current.channels) + " channels, expected boxes*5+classes = " +
                            std::to_string(head.channels()));
    }
    if (current.height != head.rows || current.width != head.cols) {
        throw ShapeMismatch("head grid is " + std::to_string(current.height) + "x" + std::to_string(current.width) +
                            ", expected " + std::to_string(head.rows) + "x" + std::to_string(head.cols));
    }
    return dims;
}

namespace {

void read_pair(const json& j, const char* key, int& a, int& b, int fallback) {
    if (!j.contains(key)) {
        a = b = fallback;
        return;
    }
    const json& v = j.at(key);
    if (v.is_array()) {
        if (v.size() != 2) throw ConfigError(std::string(key) + " must be an int or a pair");
        a = v[0].get<int>();
        b = v[1].get<int>();
    } else {
        a = b = v.get<int>();
    }
}

}  // namespace

NetworkConfig NetworkConfig::parse(const std::string& text) {
    NetworkConfig cfg;
    try {
        const json j = json::parse(text);
        cfg.width = j.at("input").at("w").get<int>();
        cfg.height = j.at("input").at("h").get<int>();
        cfg.lambda = j.value("lambda", cfg.lambda);
        cfg.arithmetic = parse_arithmetic(j.value("arithmetic", std::string("f32")));
        cfg.mode = parse_mode(j.value("mode", std::string("batched")));
        cfg.refresh_interval = j.value("refresh_interval", 0);
        for (const json& l : j.at("layers")) {
            const std::string type = l.at("type").get<std::string>();
            if (type == "conv") {
                ConvLayerSpec c;
                c.channels = l.at("channels").get<int>();
                read_pair(l, "kernel", c.kernel_h, c.kernel_w, 3);
                c.stride = l.value("stride", 1);
                c.padding = parse_padding(l.value("padding", std::string("same")));
                c.activation = PiecewiseLinearActivation::parse(
                    l.value("activation", std::string("leaky_relu")),
                    l.value("negative_slope", PiecewiseLinearActivation::kDefaultNegativeSlope));
                cfg.layers.push_back(LayerSpec::make_conv(c));
            } else if (type == "pool") {
                PoolGeometry p;
                read_pair(l, "size", p.pool_h, p.pool_w, 2);
                p.stride = l.value("stride", p.pool_h);
                cfg.layers.push_back(LayerSpec::make_pool(p));
            } else {
                throw ConfigError("unknown layer type '" + type + "'");
            }
        }
        const json& h = j.at("head");
        cfg.head.rows = h.at("rows").get<int>();
        cfg.head.cols = h.at("cols").get<int>();
        cfg.head.boxes = h.at("boxes").get<int>();
        cfg.head.classes = h.at("classes").get<int>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid network config: ") + e.what());
    }
    return cfg;
}

NetworkConfig NetworkConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

std::string NetworkConfig::to_json() const {
    json j;
    j["input"] = {{"w", width}, {"h", height}};
    j["lambda"] = lambda;
    j["arithmetic"] = to_string(arithmetic);
    j["mode"] = to_string(mode);
    if (refresh_interval) j["refresh_interval"] = refresh_interval;
    j["layers"] = json::array();
    for (const LayerSpec& l : layers) {
        if (l.type == LayerSpec::Type::conv) {
            json c = {{"type", "conv"},
                      {"channels", l.conv.channels},
                      {"kernel", json::array({l.conv.kernel_h, l.conv.kernel_w})},
                      {"stride", l.conv.stride},
                      {"padding", to_string(l.conv.padding)},
                      {"activation", l.conv.activation.name()}};
            if (l.conv.activation.kind() == PiecewiseLinearActivation::Kind::leaky_relu) {
                c["negative_slope"] = l.conv.activation.negative_slope();
            }
            j["layers"].push_back(c);
        } else {
            j["layers"].push_back({{"type", "pool"},
                                   {"size", json::array({l.pool.pool_h, l.pool.pool_w})},
                                   {"stride", l.pool.stride}});
        }
    }
    j["head"] = {{"rows", head.rows}, {"cols", head.cols}, {"boxes", head.boxes}, {"classes", head.classes}};
    return j.dump(2) + "\n";
}

void NetworkConfig::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write config " + path);
    out << to_json();
}

NetworkConfig NetworkConfig::default_detector() {
    NetworkConfig cfg;
    cfg.width = 128;
    cfg.height = 128;
    cfg.lambda = 1e-4;
    const auto leaky = PiecewiseLinearActivation::leaky_relu();
    auto conv = [&](int channels, int k) {
        ConvLayerSpec c;
        c.channels = channels;
        c.kernel_h = c.kernel_w = k;
        c.activation = leaky;
        return LayerSpec::make_conv(c);
    };
    const auto pool = LayerSpec::make_pool(PoolGeometry{2, 2, 2});
    for (int channels : {16, 16, 16, 32, 64}) {
        cfg.layers.push_back(conv(channels, 3));
        cfg.layers.push_back(pool);
    }
    cfg.layers.push_back(conv(64, 1));
    ConvLayerSpec out;
    out.channels = cfg.head.channels();
    out.kernel_h = out.kernel_w = 1;
    out.activation = PiecewiseLinearActivation::identity();
    cfg.layers.push_back(LayerSpec::make_conv(out));
    return cfg;
}

}  // namespace evcnn
