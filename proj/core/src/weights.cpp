#include "evcnn/weights.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>

#include <json.hpp>

#include "evcnn/errors.hpp"

namespace evcnn {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "weight payloads assume a little-endian host");

namespace {

std::size_t element_count(const std::vector<std::int64_t>& shape) {
    std::size_t n = 1;
    for (std::int64_t d : shape) {
        if (d < 0) throw ShapeMismatch("negative tensor dimension");
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

std::string shape_string(const std::vector<std::int64_t>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "," : "") + std::to_string(shape[i]);
    return s + "]";
}

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

void WeightContainer::add(const std::string& name, std::vector<std::int64_t> shape, std::span<const float> values) {
    if (contains(name)) throw ShapeMismatch("duplicate tensor " + name);
    if (element_count(shape) != values.size()) {
        throw ShapeMismatch("tensor " + name + " shape " + shape_string(shape) + " does not match " +
                            std::to_string(values.size()) + " values");
    }
    Entry e{name, std::move(shape), data_.size() * sizeof(float), values.size() * sizeof(float)};
    data_.insert(data_.end(), values.begin(), values.end());
    entries_.push_back(std::move(e));
}

bool WeightContainer::contains(const std::string& name) const {
    for (const Entry& e : entries_)
        if (e.name == name) return true;
    return false;
}

const WeightContainer::Entry& WeightContainer::entry(const std::string& name) const {
    for (const Entry& e : entries_)
        if (e.name == name) return e;
    throw MissingTensor("weight container has no tensor '" + name + "'");
}

std::span<const float> WeightContainer::values(const std::string& name) const {
    const Entry& e = entry(name);
    return {data_.data() + e.offset / sizeof(float), e.length / sizeof(float)};
}

std::string WeightContainer::manifest_json() const {
    json j;
    j["format"] = "evcnn-weights";
    j["version"] = 1;
    j["dtype"] = "float32";
    j["byte_order"] = "little";
    j["total_length"] = payload_bytes();
    j["tensors"] = json::array();
    for (const Entry& e : entries_) {
        j["tensors"].push_back({{"name", e.name}, {"shape", e.shape}, {"offset", e.offset}, {"length", e.length}});
    }
    return j.dump(2) + "\n";
}

std::vector<std::uint8_t> WeightContainer::payload() const {
    std::vector<std::uint8_t> bytes(payload_bytes());
    if (!bytes.empty()) std::memcpy(bytes.data(), data_.data(), bytes.size());
    return bytes;
}

WeightContainer WeightContainer::from_parts(const std::string& manifest, std::span<const std::uint8_t> payload) {
    WeightContainer wc;
    json j;
    try {
        j = json::parse(manifest);
    } catch (const json::exception& e) {
        throw ShapeMismatch(std::string("unreadable weight manifest: ") + e.what());
    }
    if (j.value("dtype", std::string("float32")) != "float32") throw ShapeMismatch("only float32 payloads are supported");
    const std::size_t total = j.value("total_length", payload.size());
    if (total != payload.size()) {
        throw ShapeMismatch("manifest declares " + std::to_string(total) + " payload bytes, file has " +
                            std::to_string(payload.size()));
    }
    if (payload.size() % sizeof(float) != 0) throw ShapeMismatch("payload is not a whole number of floats");

    wc.data_.resize(payload.size() / sizeof(float));
    if (!payload.empty()) std::memcpy(wc.data_.data(), payload.data(), payload.size());

    std::size_t expected_offset = 0;
    try {
        for (const json& t : j.at("tensors")) {
            Entry e;
            e.name = t.at("name").get<std::string>();
            e.shape = t.at("shape").get<std::vector<std::int64_t>>();
            e.offset = t.at("offset").get<std::size_t>();
            e.length = t.at("length").get<std::size_t>();
            if (e.offset != expected_offset) {
                throw ShapeMismatch("tensor " + e.name + " overlaps or leaves a gap (offset " + std::to_string(e.offset) +
                                    ", expected " + std::to_string(expected_offset) + ")");
            }
            if (e.length != element_count(e.shape) * sizeof(float)) {
                throw ShapeMismatch("tensor " + e.name + " length does not match shape " + shape_string(e.shape));
            }
            if (e.offset + e.length > payload.size()) throw ShapeMismatch("tensor " + e.name + " runs past the payload");
            if (wc.contains(e.name)) throw ShapeMismatch("duplicate tensor " + e.name);
            expected_offset += e.length;
            wc.entries_.push_back(std::move(e));
        }
    } catch (const json::exception& e) {
        throw ShapeMismatch(std::string("malformed weight manifest: ") + e.what());
    }
    if (expected_offset != payload.size()) throw ShapeMismatch("payload holds bytes not described by the manifest");
    return wc;
}

std::string WeightContainer::base_path(const std::string& path) {
    if (ends_with(path, ".manifest.json")) return path.substr(0, path.size() - 14);
    if (ends_with(path, ".bin")) return path.substr(0, path.size() - 4);
    return path;
}

WeightContainer WeightContainer::load(const std::string& path) {
    const std::string base = base_path(path);
    std::ifstream m(base + ".manifest.json");
    if (!m) throw MissingTensor("cannot open " + base + ".manifest.json");
    std::stringstream ss;
    ss << m.rdbuf();
    std::ifstream b(base + ".bin", std::ios::binary);
    if (!b) throw MissingTensor("cannot open " + base + ".bin");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
    return from_parts(ss.str(), bytes);
}

void WeightContainer::save(const std::string& path) const {
    const std::string base = base_path(path);
    std::ofstream m(base + ".manifest.json");
    if (!m) throw Error("cannot write " + base + ".manifest.json");
    m << manifest_json();
    std::ofstream b(base + ".bin", std::ios::binary);
    if (!b) throw Error("cannot write " + base + ".bin");
    const auto bytes = payload();
    b.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

namespace {

std::vector<std::int64_t> weight_shape(const NetworkConfig& config, const std::vector<Dims>& dims, std::size_t i) {
    const ConvLayerSpec& c = config.layers[i].conv;
    const int in_c = i == 0 ? 1 : dims[i - 1].channels;
    return {c.channels, in_c, c.kernel_h, c.kernel_w};
}

}  // namespace

ConvKernel load_kernel(const NetworkConfig& config, const WeightContainer& weights, std::size_t index) {
    const auto dims = config.layer_dims();
    if (index >= config.layers.size() || config.layers[index].type != LayerSpec::Type::conv) {
        throw ConfigError("layer " + std::to_string(index) + " is not a convolution");
    }
    const auto shape = weight_shape(config, dims, index);
    const std::string wname = NetworkConfig::weight_name(index);
    const std::string bname = NetworkConfig::bias_name(index);
    if (weights.entry(wname).shape != shape) {
        throw ShapeMismatch(wname + " has shape " + shape_string(weights.entry(wname).shape) + ", expected " +
                            shape_string(shape));
    }
    if (weights.entry(bname).shape != std::vector<std::int64_t>{shape[0]}) {
        throw ShapeMismatch(bname + " has shape " + shape_string(weights.entry(bname).shape) + ", expected [" +
                            std::to_string(shape[0]) + "]");
    }
    const ConvLayerSpec& c = config.layers[index].conv;
    ConvKernel k = ConvKernel::zeros(c.channels, static_cast<int>(shape[1]), c.kernel_h, c.kernel_w, c.stride, c.padding);
    auto w = weights.values(wname);
    auto b = weights.values(bname);
    k.weights.assign(w.begin(), w.end());
    k.bias.assign(b.begin(), b.end());
    return k;
}

void check_weights(const NetworkConfig& config, const WeightContainer& weights) {
    for (std::size_t i = 0; i < config.layers.size(); ++i)
        if (config.layers[i].type == LayerSpec::Type::conv) (void)load_kernel(config, weights, i);
}

namespace {

template <typename Fill>
WeightContainer make_weights(const NetworkConfig& config, Fill fill) {
    const auto dims = config.layer_dims();
    WeightContainer wc;
    for (std::size_t i = 0; i < config.layers.size(); ++i) {
        if (config.layers[i].type != LayerSpec::Type::conv) continue;
        const auto shape = weight_shape(config, dims, i);
        const std::size_t fan_in = static_cast<std::size_t>(shape[1] * shape[2] * shape[3]);
        std::vector<float> w(static_cast<std::size_t>(shape[0]) * fan_in);
        std::vector<float> b(static_cast<std::size_t>(shape[0]));
        fill(w, fan_in);
        fill(b, fan_in);
        wc.add(NetworkConfig::weight_name(i), shape, w);
        wc.add(NetworkConfig::bias_name(i), {shape[0]}, b);
    }
    return wc;
}

}  // namespace

WeightContainer zero_weights(const NetworkConfig& config) {
    return make_weights(config, [](std::vector<float>& v, std::size_t) { std::fill(v.begin(), v.end(), 0.0f); });
}

WeightContainer random_weights(const NetworkConfig& config, std::uint64_t seed, bool fan_in_scaled) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uniform(-1.0, 1.0);
    return make_weights(config, [&](std::vector<float>& v, std::size_t fan_in) {
        const double scale = fan_in_scaled ? 1.0 / std::sqrt(static_cast<double>(fan_in)) : 1.0;
        for (float& x : v) x = static_cast<float>(uniform(rng) * scale);
    });
}

}  // namespace evcnn
