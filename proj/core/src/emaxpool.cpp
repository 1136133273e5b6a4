#include "evcnn/emaxpool.hpp"

#include "evcnn/errors.hpp"

namespace evcnn {

template <typename Real>
EMaxPoolLayer<Real>::EMaxPoolLayer(PoolGeometry pool, Dims input) : input_(input) {
    if (pool.pool_h < 1 || pool.pool_w < 1 || pool.stride < 1) {
        throw DimensionMismatch("pool size and stride must be >= 1");
    }
    if (input.channels < 1) throw DimensionMismatch("pool input needs at least one channel");
    geom_ = WindowGeometry::make(input.height, input.width, pool.pool_h, pool.pool_w, pool.stride,
                                 Padding::valid);
    const Dims out{input.channels, geom_.out_h, geom_.out_w};
    out_ = Tensor<Real>(out);
    out_rate_ = Tensor<Real>(out);
    index_.assign(out.size(), 0);
    stable_.assign(out.size(), 1);
    active_ = ActiveSet(out.spatial());
    changed_ = CoordSet(out.height, out.width);
    touched_ = CoordSet(out.height, out.width);
}

template <typename Real>
void EMaxPoolLayer<Real>::check_upstream(const LayerView<Real>& up) const {
    if (!up.values || !up.rates || up.values->dims() != input_ || up.rates->dims() != input_) {
        throw StaleState("upstream maps do not match the pool input shape");
    }
    if (up.changed && (up.changed->height() != input_.height || up.changed->width() != input_.width)) {
        throw StaleState("upstream change set does not match the pool input shape");
    }
}

template <typename Real>
std::int32_t EMaxPoolLayer<Real>::field_argmax(const Tensor<Real>& up, int oy, int ox, int c) const {
    const int y0 = geom_.row_origin(oy);
    const int x0 = geom_.col_origin(ox);
    std::int32_t best = y0 * geom_.in_w + x0;
    Real best_v = up(c, y0, x0);
    for (int y = y0; y < y0 + geom_.kernel_h; ++y)
        for (int x = x0; x < x0 + geom_.kernel_w; ++x) {
            const Real v = up(c, y, x);
            if (v > best_v) {
                best_v = v;
                best = y * geom_.in_w + x;
            }
        }
    return best;
}

namespace {

template <typename Real>
bool has_min_rate(const Tensor<Real>& rates, const WindowGeometry& g, int oy, int ox, int c,
                  std::int32_t argmax) {
    const int y0 = g.row_origin(oy);
    const int x0 = g.col_origin(ox);
    const Real at_max = rates(c, argmax / g.in_w, argmax % g.in_w);
    for (int y = y0; y < y0 + g.kernel_h; ++y)
        for (int x = x0; x < x0 + g.kernel_w; ++x)
            if (rates(c, y, x) < at_max) return false;
    return true;
}

}  // namespace

template <typename Real>
void EMaxPoolLayer<Real>::fetch(const LayerView<Real>& up, std::size_t p) {
    const int channels = input_.channels;
    const std::size_t base = p * static_cast<std::size_t>(channels);
    for (int c = 0; c < channels; ++c) {
        const std::size_t i = base + static_cast<std::size_t>(c);
        const std::size_t src = static_cast<std::size_t>(index_[i]) * channels + static_cast<std::size_t>(c);
        out_.data()[i] = up.values->data()[src];
        out_rate_.data()[i] = up.rates->data()[src];
    }
}

template <typename Real>
bool EMaxPoolLayer<Real>::field_needs_visit(std::size_t p) const {
    const std::size_t base = p * static_cast<std::size_t>(input_.channels);
    for (int c = 0; c < input_.channels; ++c) {
        const std::size_t i = base + static_cast<std::size_t>(c);
        if (!stable_[i] || out_rate_.data()[i] != Real(0)) return true;
    }
    return false;
}

template <typename Real>
bool EMaxPoolLayer<Real>::recompute_field(const LayerView<Real>& up, std::size_t p,
                                          bool& argmax_changed_upstream) {
    const int oy = static_cast<int>(p) / geom_.out_w;
    const int ox = static_cast<int>(p) % geom_.out_w;
    const std::size_t base = p * static_cast<std::size_t>(input_.channels);
    bool moved = false;
    argmax_changed_upstream = false;
    for (int c = 0; c < input_.channels; ++c) {
        const std::size_t i = base + static_cast<std::size_t>(c);
        const std::int32_t idx = field_argmax(*up.values, oy, ox, c);
        moved |= idx != index_[i];
        index_[i] = idx;
        stable_[i] = has_min_rate(*up.rates, geom_, oy, ox, c, idx) ? 1 : 0;
        if (up.changed && up.changed->contains_index(idx)) argmax_changed_upstream = true;
    }
    return moved;
}

template <typename Real>
void EMaxPoolLayer<Real>::reset(const LayerView<Real>& up) {
    check_upstream(up);
    changed_.clear();
    delta_leak_ = Real(0);
    stats_ = {};
    LayerView<Real> no_changes = up;
    no_changes.changed = nullptr;
    for (std::size_t p = 0; p < out_.dims().spatial(); ++p) {
        bool unused = false;
        recompute_field(no_changes, p, unused);
        fetch(up, p);
        active_.set(p, field_needs_visit(p));
    }
}

template <typename Real>
const CoordSet& EMaxPoolLayer<Real>::apply(const LayerView<Real>& up) {
    check_upstream(up);
    changed_.clear();
    touched_.clear();
    stats_ = {};
    delta_leak_ = up.delta_leak;
    if (up.changed) geom_.affected(*up.changed, touched_);

    const int w = geom_.out_w;
    if (up.delta_leak != Real(0)) {
        // Leak can reorder values only inside unstable fields.
        visit_.assign(active_.items().begin(), active_.items().end());
        for (std::size_t p : visit_) {
            if (touched_.contains_index(static_cast<int>(p))) continue;
            ++stats_.leak_updates;
            const int oy = static_cast<int>(p) / w;
            const int ox = static_cast<int>(p) % w;
            const std::size_t base = p * static_cast<std::size_t>(input_.channels);
            bool moved = false;
            for (int c = 0; c < input_.channels; ++c) {
                const std::size_t i = base + static_cast<std::size_t>(c);
                if (stable_[i]) continue;
                const std::int32_t idx = field_argmax(*up.values, oy, ox, c);
                if (idx != index_[i]) {
                    index_[i] = idx;
                    stable_[i] = has_min_rate(*up.rates, geom_, oy, ox, c, idx) ? 1 : 0;
                    moved = true;
                }
            }
            fetch(up, p);
            active_.set(p, field_needs_visit(p));
            if (moved) changed_.insert(oy, ox);
        }
    }

    for (int p : touched_.indices()) {
        bool hit = false;
        const bool moved = recompute_field(up, static_cast<std::size_t>(p), hit);
        fetch(up, static_cast<std::size_t>(p));
        active_.set(static_cast<std::size_t>(p), field_needs_visit(static_cast<std::size_t>(p)));
        if (moved || hit) changed_.insert(p / w, p % w);
    }
    stats_.recomputed = touched_.size();
    stats_.emitted = changed_.size();
    return changed_;
}

template class EMaxPoolLayer<float>;
template class EMaxPoolLayer<double>;

}  // namespace evcnn
