#pragma once

#include <cstdint>
#include <vector>

#include "evcnn/active_set.hpp"
#include "evcnn/econv.hpp"
#include "evcnn/geometry.hpp"
#include "evcnn/tensor.hpp"

namespace evcnn {

struct PoolGeometry {
    int pool_h = 2;
    int pool_w = 2;
    int stride = 2;
};

/// Event-based max pooling.
///
/// Stores, per field and channel, the flat upstream position of the field
/// maximum (ties go to the smallest row-major position). Output values and
/// rates are fetched from the upstream maps at those positions. A field whose
/// maximum also has the smallest upstream rate cannot lose its maximum to leak
/// and is marked stable; it is only revisited when a change lands inside it.
/// Unstable fields are re-checked on every leak step. Trailing rows and
/// columns that do not fill a field are dropped.
template <typename Real>
class EMaxPoolLayer {
public:
    EMaxPoolLayer(PoolGeometry pool, Dims input);

    Dims input_dims() const { return input_; }
    Dims output_dims() const { return out_.dims(); }
    const WindowGeometry& geometry() const { return geom_; }

    void reset(const LayerView<Real>& upstream);
    /// Throws StaleState when `upstream` does not match the input shape.
    const CoordSet& apply(const LayerView<Real>& upstream);

    LayerView<Real> view() const { return {&out_, &out_rate_, &changed_, delta_leak_}; }

    const Tensor<Real>& output() const { return out_; }
    const Tensor<Real>& output_rate() const { return out_rate_; }
    /// Upstream flat spatial index of the maximum, laid out like the output map.
    const std::vector<std::int32_t>& indices() const { return index_; }
    const std::vector<std::uint8_t>& stable_flags() const { return stable_; }
    const CoordSet& changed() const { return changed_; }
    const LayerStats& stats() const { return stats_; }

    /// Argmax of one (field, channel) over the given upstream map, tie rule applied.
    std::int32_t field_argmax(const Tensor<Real>& upstream, int oy, int ox, int c) const;

private:
    void check_upstream(const LayerView<Real>& upstream) const;
    /// Recomputes the argmax of every channel at field p. Returns true if any index moved.
    bool recompute_field(const LayerView<Real>& up, std::size_t p, bool& argmax_changed_upstream);
    void fetch(const LayerView<Real>& up, std::size_t p);
    bool field_needs_visit(std::size_t p) const;

    Dims input_;
    WindowGeometry geom_;
    Tensor<Real> out_;
    Tensor<Real> out_rate_;
    std::vector<std::int32_t> index_;
    std::vector<std::uint8_t> stable_;
    ActiveSet active_;
    std::vector<std::size_t> visit_;

    CoordSet changed_;
    CoordSet touched_;
    Real delta_leak_ = Real(0);
    LayerStats stats_;
};

extern template class EMaxPoolLayer<float>;
extern template class EMaxPoolLayer<double>;

}  // namespace evcnn
