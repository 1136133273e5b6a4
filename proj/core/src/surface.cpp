#include "evcnn/surface.hpp"

#include <algorithm>

#include "evcnn/errors.hpp"

namespace evcnn {

UpdateMode parse_mode(const std::string& name) {
    if (name == "per_event") return UpdateMode::per_event;
    if (name == "batched") return UpdateMode::batched;
    throw ConfigError("unknown mode '" + name + "'");
}

std::string to_string(UpdateMode mode) {
    return mode == UpdateMode::per_event ? "per_event" : "batched";
}

template <typename Real>
LeakySurface<Real>::LeakySurface(int width, int height, double lambda)
    : lambda_(lambda), pixels_(Dims{1, height, width}), rates_(Dims{1, height, width}) {
    if (width <= 0 || height <= 0) throw DimensionMismatch("surface dimensions must be positive");
    if (!(lambda >= 0.0)) throw ConfigError("lambda must be non-negative");
    reset_delta();
}

template <typename Real>
void LeakySurface<Real>::reset_delta() {
    if (delta_.changed.height() != height() || delta_.changed.width() != width()) {
        delta_.event_coords = CoordSet(height(), width());
        delta_.clamped_coords = CoordSet(height(), width());
        delta_.changed = CoordSet(height(), width());
    } else {
        delta_.event_coords.clear();
        delta_.clamped_coords.clear();
        delta_.changed.clear();
    }
    delta_.delta_leak = Real(0);
    delta_.event_count = 0;
}

template <typename Real>
Real LeakySurface<Real>::leak_for(Timestamp from, Timestamp to) const {
    return static_cast<Real>(lambda_ * static_cast<double>(to - from));
}

template <typename Real>
void LeakySurface<Real>::leak_all(Real amount) {
    if (amount <= Real(0)) return;
    Real* p = pixels_.data();
    const int w = width();
    for (std::size_t i = 0; i < pixels_.size(); ++i) {
        if (p[i] > Real(0)) {
            const Real q = p[i] - amount;
            if (q <= Real(0)) {
                p[i] = Real(0);
                delta_.clamped_coords.insert(static_cast<int>(i) / w, static_cast<int>(i) % w);
            } else {
                p[i] = q;
            }
        }
    }
}

template <typename Real>
void LeakySurface<Real>::increment(int x, int y) {
    pixels_(0, y, x) += kIncrement;
    delta_.event_coords.insert(y, x);
    ++delta_.event_count;
}

template <typename Real>
void LeakySurface<Real>::finish_delta() {
    delta_.changed.merge(delta_.event_coords);
    delta_.changed.merge(delta_.clamped_coords);
    for (int i : delta_.changed.indices()) {
        rates_.data()[i] = pixels_.data()[i] > Real(0) ? Real(1) : Real(0);
    }
}

template <typename Real>
const SurfaceDelta<Real>& LeakySurface<Real>::step(const Event& e) {
    if (last_ts_ && e.ts < *last_ts_) {
        throw TimestampRegression("event at " + std::to_string(e.ts) + " precedes surface clock " +
                                  std::to_string(*last_ts_));
    }
    if (e.x >= width() || e.y >= height()) throw CoordinateOutOfBounds("event outside surface");
    reset_delta();
    const Real d = last_ts_ ? leak_for(*last_ts_, e.ts) : Real(0);
    leak_all(d);
    increment(e.x, e.y);
    last_ts_ = e.ts;
    delta_.delta_leak = d;
    finish_delta();
    return delta_;
}

template <typename Real>
const SurfaceDelta<Real>& LeakySurface<Real>::advance_to(Timestamp t) {
    reset_delta();
    if (!last_ts_) {
        last_ts_ = t;
        return delta_;
    }
    if (t < *last_ts_) {
        throw TimestampRegression("advance to " + std::to_string(t) + " precedes surface clock");
    }
    const Real d = leak_for(*last_ts_, t);
    leak_all(d);
    last_ts_ = t;
    delta_.delta_leak = d;
    finish_delta();
    return delta_;
}

template <typename Real>
const SurfaceDelta<Real>& LeakySurface<Real>::apply(const EventBatch& batch, UpdateMode mode) {
    reset_delta();
    if (batch.events.empty()) return delta_;

    if (last_ts_ && batch.events.front().ts < *last_ts_) {
        throw TimestampRegression("batch starts at " + std::to_string(batch.events.front().ts) +
                                  " before surface clock " + std::to_string(*last_ts_));
    }
    for (std::size_t i = 0; i < batch.events.size(); ++i) {
        const Event& e = batch.events[i];
        if (i && e.ts < batch.events[i - 1].ts) throw TimestampRegression("batch not sorted");
        if (e.x >= width() || e.y >= height()) throw CoordinateOutOfBounds("event outside surface");
    }

    const Timestamp start = last_ts_ ? *last_ts_ : batch.events.front().ts;
    const Timestamp end = batch.events.back().ts;

    if (mode == UpdateMode::per_event) {
        Timestamp prev = start;
        for (const Event& e : batch.events) {
            leak_all(leak_for(prev, e.ts));
            increment(e.x, e.y);
            prev = e.ts;
        }
    } else {
        // Group events by pixel, keeping stream order within a pixel.
        scratch_.clear();
        scratch_.reserve(batch.events.size());
        for (std::size_t i = 0; i < batch.events.size(); ++i) {
            const Event& e = batch.events[i];
            scratch_.emplace_back(e.y * width() + e.x, static_cast<int>(i));
        }
        std::stable_sort(scratch_.begin(), scratch_.end(),
                         [](const auto& a, const auto& b) { return a.first < b.first; });

        const Real total = leak_for(start, end);
        Real* p = pixels_.data();
        const int w = width();
        // Untouched pixels: one leak by the total.
        std::size_t k = 0;
        for (std::size_t i = 0; i < pixels_.size(); ++i) {
            if (k < scratch_.size() && scratch_[k].first == static_cast<int>(i)) {
                // Touched pixel: replay its own events exactly.
                Real v = p[i];
                Timestamp t = start;
                bool clamped = false;
                while (k < scratch_.size() && scratch_[k].first == static_cast<int>(i)) {
                    const Event& e = batch.events[static_cast<std::size_t>(scratch_[k].second)];
                    const Real d = leak_for(t, e.ts);
                    if (v > Real(0) && d > Real(0)) {
                        const Real q = v - d;
                        if (q <= Real(0)) {
                            v = Real(0);
                            clamped = true;
                        } else {
                            v = q;
                        }
                    }
                    v += kIncrement;
                    t = e.ts;
                    ++delta_.event_count;
                    ++k;
                }
                const Real d = leak_for(t, end);
                if (v > Real(0) && d > Real(0)) {
                    const Real q = v - d;
                    if (q <= Real(0)) {
                        v = Real(0);
                        clamped = true;
                    } else {
                        v = q;
                    }
                }
                p[i] = v;
                delta_.event_coords.insert(static_cast<int>(i) / w, static_cast<int>(i) % w);
                if (clamped) delta_.clamped_coords.insert(static_cast<int>(i) / w, static_cast<int>(i) % w);
            } else if (p[i] > Real(0) && total > Real(0)) {
                const Real q = p[i] - total;
                if (q <= Real(0)) {
                    p[i] = Real(0);
                    delta_.clamped_coords.insert(static_cast<int>(i) / w, static_cast<int>(i) % w);
                } else {
                    p[i] = q;
                }
            }
        }
    }
    last_ts_ = end;
    delta_.delta_leak = leak_for(start, end);
    finish_delta();
    return delta_;
}

template <typename Real>
void LeakySurface<Real>::set_pixel(int x, int y, Real value) {
    if (x < 0 || y < 0 || x >= width() || y >= height()) throw CoordinateOutOfBounds("pixel outside surface");
    if (value < Real(0)) throw Error("surface values are non-negative");
    pixels_(0, y, x) = value;
    rates_(0, y, x) = value > Real(0) ? Real(1) : Real(0);
}

template class LeakySurface<float>;
template class LeakySurface<double>;

}  // namespace evcnn
