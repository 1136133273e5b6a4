#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace evcnn {

struct Dims {
    int channels = 0;
    int height = 0;
    int width = 0;

    std::size_t spatial() const { return static_cast<std::size_t>(height) * width; }
    std::size_t size() const { return spatial() * channels; }
    friend bool operator==(const Dims&, const Dims&) = default;
};

/// Dense feature map stored position-major (H, W, C): the channels of one
/// spatial position are contiguous.
template <typename Real>
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Dims dims, Real fill = Real(0)) : dims_(dims), data_(dims.size(), fill) {}

    const Dims& dims() const { return dims_; }
    int channels() const { return dims_.channels; }
    int height() const { return dims_.height; }
    int width() const { return dims_.width; }
    std::size_t size() const { return data_.size(); }

    std::size_t index(int c, int y, int x) const {
        return (static_cast<std::size_t>(y) * dims_.width + x) * dims_.channels + c;
    }
    Real& operator()(int c, int y, int x) { return data_[index(c, y, x)]; }
    Real operator()(int c, int y, int x) const { return data_[index(c, y, x)]; }

    Real* data() { return data_.data(); }
    const Real* data() const { return data_.data(); }
    /// Channels of the position at flat spatial index y * width + x.
    Real* at_position(std::size_t p) { return data_.data() + p * dims_.channels; }
    const Real* at_position(std::size_t p) const { return data_.data() + p * dims_.channels; }
    std::vector<Real>& values() { return data_; }
    const std::vector<Real>& values() const { return data_; }

    void fill(Real v) { data_.assign(data_.size(), v); }

    template <typename Other>
    Tensor<Other> cast() const {
        Tensor<Other> out(dims_);
        for (std::size_t i = 0; i < data_.size(); ++i) out.data()[i] = static_cast<Other>(data_[i]);
        return out;
    }

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    Dims dims_;
    std::vector<Real> data_;
};

/// Set of spatial positions of a map, kept both as a membership mask and as an
/// insertion-ordered list.
class CoordSet {
public:
    CoordSet() = default;
    CoordSet(int height, int width)
        : height_(height), width_(width), mask_(static_cast<std::size_t>(height) * width, 0) {}

    int height() const { return height_; }
    int width() const { return width_; }

    bool insert(int y, int x) {
        const int i = y * width_ + x;
        if (mask_[static_cast<std::size_t>(i)]) return false;
        mask_[static_cast<std::size_t>(i)] = 1;
        list_.push_back(i);
        return true;
    }
    bool contains(int y, int x) const { return mask_[static_cast<std::size_t>(y * width_ + x)] != 0; }
    bool contains_index(int i) const { return mask_[static_cast<std::size_t>(i)] != 0; }

    void clear() {
        for (int i : list_) mask_[static_cast<std::size_t>(i)] = 0;
        list_.clear();
    }
    void merge(const CoordSet& other) {
        for (int i : other.list_) insert(i / width_, i % width_);
    }

    std::size_t size() const { return list_.size(); }
    bool empty() const { return list_.empty(); }
    /// Flat indices y * width + x in insertion order.
    const std::vector<int>& indices() const { return list_; }
    const std::vector<std::uint8_t>& mask() const { return mask_; }

private:
    int height_ = 0;
    int width_ = 0;
    std::vector<std::uint8_t> mask_;
    std::vector<int> list_;
};

/// Read-only view of the layer a consumer reads from: its post-activation map,
/// its update-rate map F, the spatial positions that changed this step, and
/// the leak applied this step.
template <typename Real>
struct LayerView {
    const Tensor<Real>* values = nullptr;
    const Tensor<Real>* rates = nullptr;
    const CoordSet* changed = nullptr;
    Real delta_leak = Real(0);

    const Dims& dims() const { return values->dims(); }
};

}  // namespace evcnn
