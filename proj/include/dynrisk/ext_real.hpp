#pragma once

#include <limits>
#include <stdexcept>

namespace dynrisk {

/// A real number or +infinity.
///
/// Penalties are infinite for measures outside the representing set. That is
/// a structural fact, so it is carried as a flag and never as a large float.
class ExtendedReal {
public:
    constexpr ExtendedReal() = default;
    constexpr ExtendedReal(double v) : value_(v) {}

    static constexpr ExtendedReal infinity() {
        ExtendedReal r;
        r.infinite_ = true;
        return r;
    }

    constexpr bool is_finite() const noexcept { return !infinite_; }
    constexpr bool is_infinite() const noexcept { return infinite_; }

    double value() const {
        if (infinite_) throw std::logic_error("value() of an infinite ExtendedReal");
        return value_;
    }

    /// IEEE view, +inf for the infinite marker. Only for printing and comparisons.
    double to_double() const noexcept {
        return infinite_ ? std::numeric_limits<double>::infinity() : value_;
    }

    friend constexpr bool operator==(const ExtendedReal& a, const ExtendedReal& b) {
        return a.infinite_ == b.infinite_ && (a.infinite_ || a.value_ == b.value_);
    }

private:
    double value_ = 0.0;
    bool infinite_ = false;
};

} // namespace dynrisk
