#pragma once

#include <optional>

#include "evcnn/event.hpp"
#include "evcnn/tensor.hpp"

namespace evcnn {

enum class UpdateMode { per_event, batched };

UpdateMode parse_mode(const std::string& name);
std::string to_string(UpdateMode mode);

/// What the surface forwards to the first network layer after a step.
template <typename Real>
struct SurfaceDelta {
    CoordSet event_coords;
    /// Pixels that went from a positive value to 0 through the max clamp.
    CoordSet clamped_coords;
    /// event_coords united with clamped_coords.
    CoordSet changed;
    /// lambda * elapsed time over the step; every unchanged positive pixel
    /// dropped by exactly this amount.
    Real delta_leak = Real(0);
    std::size_t event_count = 0;
};

/// Leaky event integrator: every event adds 1 at its pixel while the whole grid
/// decays linearly with elapsed time, floored at 0. Polarity is ignored.
template <typename Real>
class LeakySurface {
public:
    static constexpr Real kIncrement = Real(1);

    LeakySurface(int width, int height, double lambda);

    int width() const { return pixels_.width(); }
    int height() const { return pixels_.height(); }
    double lambda() const { return lambda_; }
    std::optional<Timestamp> last_ts() const { return last_ts_; }

    /// Integrates a batch. per_event leaks the grid before every event;
    /// batched leaks untouched pixels once by the total amount and replays the
    /// events of each touched pixel individually, which yields the same grid.
    /// Throws TimestampRegression.
    const SurfaceDelta<Real>& apply(const EventBatch& batch, UpdateMode mode);

    /// One event as its own step.
    const SurfaceDelta<Real>& step(const Event& event);

    /// Leak-only step up to time `t` (no-op before the first event).
    const SurfaceDelta<Real>& advance_to(Timestamp t);

    const SurfaceDelta<Real>& last_delta() const { return delta_; }

    const Tensor<Real>& pixels() const { return pixels_; }
    /// Indicator of positive pixels: how a unit of leak reaches each pixel.
    const Tensor<Real>& rates() const { return rates_; }
    Tensor<Real> snapshot() const { return pixels_; }

    LayerView<Real> view() const { return {&pixels_, &rates_, &delta_.changed, delta_.delta_leak}; }

    /// Overwrites a pixel value (testing and warm starts). Does not touch the clock.
    void set_pixel(int x, int y, Real value);
    void set_last_ts(std::optional<Timestamp> ts) { last_ts_ = ts; }

private:
    void reset_delta();
    Real leak_for(Timestamp from, Timestamp to) const;
    void leak_all(Real amount);
    void increment(int x, int y);
    void finish_delta();

    double lambda_;
    Tensor<Real> pixels_;
    Tensor<Real> rates_;
    std::optional<Timestamp> last_ts_;
    SurfaceDelta<Real> delta_;
    std::vector<std::pair<int, int>> scratch_;
};

extern template class LeakySurface<float>;
extern template class LeakySurface<double>;

}  // namespace evcnn
