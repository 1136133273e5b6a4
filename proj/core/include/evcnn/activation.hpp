#pragma once

#include <cstdint>
#include <string>

namespace evcnn {

/// Identifies one linear piece of an activation. Segment 0 covers x <= 0 for
/// the two-piece kinds; identity has a single segment 0.
using SegmentId = std::uint8_t;

struct Segment {
    SegmentId id = 0;
    double slope = 1.0;
    double intercept = 0.0;
};

/// Continuous piecewise-linear activation. The breakpoint x = 0 belongs to
/// the non-positive segment, so relu has slope 0 at exactly 0.
class PiecewiseLinearActivation {
public:
    enum class Kind { identity, relu, leaky_relu };

    static constexpr double kDefaultNegativeSlope = 0.1;

    constexpr PiecewiseLinearActivation() = default;
    constexpr explicit PiecewiseLinearActivation(Kind kind,
                                                 double negative_slope = kDefaultNegativeSlope)
        : kind_(kind), negative_slope_(kind == Kind::leaky_relu ? negative_slope : 0.0) {}

    static constexpr PiecewiseLinearActivation identity() { return PiecewiseLinearActivation(Kind::identity); }
    static constexpr PiecewiseLinearActivation relu() { return PiecewiseLinearActivation(Kind::relu); }
    static constexpr PiecewiseLinearActivation leaky_relu(double negative_slope = kDefaultNegativeSlope) {
        return PiecewiseLinearActivation(Kind::leaky_relu, negative_slope);
    }

    /// Parses "identity" / "linear", "relu", "leaky_relu". Throws ConfigError.
    static PiecewiseLinearActivation parse(const std::string& name,
                                           double negative_slope = kDefaultNegativeSlope);

    Kind kind() const { return kind_; }
    double negative_slope() const { return negative_slope_; }
    int segment_count() const { return kind_ == Kind::identity ? 1 : 2; }
    std::string name() const;

    /// g(x). Throws NonFiniteInput.
    double apply(double x) const;
    /// Segment containing x. Throws NonFiniteInput.
    Segment segment_of(double x) const;

    // Unchecked variants for inner loops.
    template <typename Real>
    SegmentId segment_id(Real x) const {
        return kind_ != Kind::identity && x > Real(0) ? 1 : 0;
    }
    template <typename Real>
    Real slope(SegmentId id) const {
        if (kind_ == Kind::identity || id == 1) return Real(1);
        return static_cast<Real>(negative_slope_);
    }
    template <typename Real>
    Real eval(Real x) const {
        return slope<Real>(segment_id(x)) * x;
    }

    friend bool operator==(const PiecewiseLinearActivation&, const PiecewiseLinearActivation&) = default;

private:
    Kind kind_ = Kind::identity;
    double negative_slope_ = 0.0;
};

}  // namespace evcnn
