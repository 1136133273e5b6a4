#include "evcnn/activation.hpp"

#include <cmath>

#include "evcnn/errors.hpp"

namespace evcnn {

PiecewiseLinearActivation PiecewiseLinearActivation::parse(const std::string& name,
                                                           double negative_slope) {
    if (name == "identity" || name == "linear") return identity();
    if (name == "relu") return relu();
    if (name == "leaky_relu") return leaky_relu(negative_slope);
    throw ConfigError("unknown activation '" + name + "'");
}

std::string PiecewiseLinearActivation::name() const {
    switch (kind_) {
        case Kind::identity: return "identity";
        case Kind::relu: return "relu";
        case Kind::leaky_relu: return "leaky_relu";
    }
    return "identity";
}

double PiecewiseLinearActivation::apply(double x) const {
    const Segment s = segment_of(x);
    return s.slope * x + s.intercept;
}

Segment PiecewiseLinearActivation::segment_of(double x) const {
    if (!std::isfinite(x)) throw NonFiniteInput("activation input is not finite");
    const SegmentId id = segment_id(x);
    return Segment{id, slope<double>(id), 0.0};
}

}  // namespace evcnn
