#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace dynrisk {

/// Portable seeded generator. std::mt19937_64 is fully specified by the
/// standard; the mapping to doubles is done here (top 53 bits) rather than by
/// std::uniform_real_distribution, whose output is implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform on [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform index in [0, n).
    std::size_t index(std::size_t n) {
        auto k = static_cast<std::size_t>(uniform() * static_cast<double>(n));
        return k < n ? k : n - 1;
    }

    bool coin(double p_true = 0.5) { return uniform() < p_true; }

private:
    std::mt19937_64 engine_;
};

} // namespace dynrisk
