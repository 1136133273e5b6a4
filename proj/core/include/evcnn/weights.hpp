#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "evcnn/config.hpp"
#include "evcnn/econv.hpp"

namespace evcnn {

/// Named float32 tensors plus a JSON manifest.
///
/// On disk: `<base>.manifest.json` lists every tensor (name, shape, byte
/// offset, byte length) and `<base>.bin` holds the little-endian float32
/// payloads, row-major, concatenated in manifest order without padding.
class WeightContainer {
public:
    struct Entry {
        std::string name;
        std::vector<std::int64_t> shape;
        std::size_t offset = 0;  // bytes
        std::size_t length = 0;  // bytes
    };

    void add(const std::string& name, std::vector<std::int64_t> shape, std::span<const float> values);

    bool contains(const std::string& name) const;
    /// Throws MissingTensor.
    const Entry& entry(const std::string& name) const;
    std::span<const float> values(const std::string& name) const;
    const std::vector<Entry>& entries() const { return entries_; }
    std::size_t payload_bytes() const { return data_.size() * sizeof(float); }

    std::string manifest_json() const;
    std::vector<std::uint8_t> payload() const;
    /// Validates offsets, lengths and shapes. Throws ShapeMismatch.
    static WeightContainer from_parts(const std::string& manifest, std::span<const std::uint8_t> payload);

    /// `path` may be the base or either of the two file names.
    static WeightContainer load(const std::string& path);
    void save(const std::string& path) const;
    static std::string base_path(const std::string& path);

private:
    std::vector<Entry> entries_;
    std::vector<float> data_;
};

/// Kernel of conv layer `index` of `config`. Throws MissingTensor / ShapeMismatch.
ConvKernel load_kernel(const NetworkConfig& config, const WeightContainer& weights, std::size_t index);

/// Checks that every conv layer has correctly shaped tensors.
void check_weights(const NetworkConfig& config, const WeightContainer& weights);

WeightContainer zero_weights(const NetworkConfig& config);

/// Uniform weights and biases in [-1, 1]; with `fan_in_scaled` each layer's
/// draws are divided by sqrt(in_channels * kernel_h * kernel_w).
WeightContainer random_weights(const NetworkConfig& config, std::uint64_t seed, bool fan_in_scaled = true);

}  // namespace evcnn
