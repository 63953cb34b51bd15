#pragma once

// Finite falsification batteries. Definitions quantify over every bounded
// position; checkers fix a finite, seeded battery and say so in their reports.

#include "dynrisk/probspace.hpp"
#include "dynrisk/rng.hpp"

#include <array>
#include <cstdint>
#include <utility>
#include <string>
#include <vector>

namespace dynrisk {

struct Position {
    std::string label;
    RandomVariable value;
};

struct BatteryOptions {
    std::uint64_t seed = 0;
    std::size_t random_count = 4;
    double bound = 8.0; ///< corner value and range of the random positions
};

/// Default battery at anchor tau: the constants 0 and +-1, the corners +-bound,
/// +-indicators of every tau-atom, and `random_count` uniform positions in
/// [-bound, bound].
std::vector<Position> default_battery(const StoppingTime& tau, const BatteryOptions& opts = {});

/// `count` uniform random positions in [-bound, bound] at anchor tau.
std::vector<Position> random_battery(const StoppingTime& tau, std::size_t count,
                                     std::uint64_t seed, double bound = 8.0);

/// Elements of `battery` anchored at tau.
std::vector<const Position*> anchored_at(const std::vector<Position>& battery,
                                         const StoppingTime& tau);

/// All deterministic triples r <= s <= t on the grid 0..T.
std::vector<std::array<StoppingTime, 3>> deterministic_triples(const TreePtr& tree);

/// All deterministic pairs s <= t on the grid 0..T.
std::vector<std::pair<StoppingTime, StoppingTime>> deterministic_pairs(const TreePtr& tree);

/// The pointwise minimum of two stopping times.
StoppingTime earliest(const StoppingTime& a, const StoppingTime& b);

/// A random stopping time: each node stops with probability `p_stop`, leaves always stop.
StoppingTime random_stopping_time(const TreePtr& tree, Rng& rng, double p_stop = 0.4);

} // namespace dynrisk
