#include "dynrisk/battery.hpp"

#include "dynrisk/rng.hpp"

#include <cstdio>

namespace dynrisk {

namespace {

std::string short_number(double c) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", c);
    return buf;
}

} // namespace

std::vector<Position> default_battery(const StoppingTime& tau, const BatteryOptions& opts) {
    std::vector<Position> out;
    const auto& tree = *tau.tree();
    for (double c : {0.0, 1.0, -1.0, opts.bound, -opts.bound})
        out.push_back({"const:" + short_number(c), RandomVariable::constant(tau, c)});
    for (std::size_t a = 0; a < tau.atom_count(); ++a) {
        const std::size_t one[] = {a};
        out.push_back({"+1{" + tree.id(tau.atom(a)) + "}", indicator(tau, one, 1.0)});
        out.push_back({"-1{" + tree.id(tau.atom(a)) + "}", indicator(tau, one, -1.0)});
    }
    auto rnd = random_battery(tau, opts.random_count, opts.seed, opts.bound);
    out.insert(out.end(), rnd.begin(), rnd.end());
    return out;
}

std::vector<Position> random_battery(const StoppingTime& tau, std::size_t count,
                                     std::uint64_t seed, double bound) {
    Rng rng(seed);
    std::vector<Position> out;
    out.reserve(count);
    for (std::size_t k = 0; k < count; ++k) {
        std::vector<double> v(tau.atom_count());
        for (auto& x : v) x = rng.uniform(-bound, bound);
        out.push_back({"rand#" + std::to_string(k), RandomVariable(tau, std::move(v))});
    }
    return out;
}

std::vector<const Position*> anchored_at(const std::vector<Position>& battery,
                                         const StoppingTime& tau) {
    std::vector<const Position*> out;
    for (const auto& p : battery)
        if (p.value.anchor() == tau) out.push_back(&p);
    return out;
}

std::vector<std::array<StoppingTime, 3>> deterministic_triples(const TreePtr& tree) {
    std::vector<std::array<StoppingTime, 3>> out;
    const int T = tree->horizon();
    for (int r = 0; r <= T; ++r)
        for (int s = r; s <= T; ++s)
            for (int t = s; t <= T; ++t)
                out.push_back({StoppingTime::at(tree, r), StoppingTime::at(tree, s),
                               StoppingTime::at(tree, t)});
    return out;
}

std::vector<std::pair<StoppingTime, StoppingTime>> deterministic_pairs(const TreePtr& tree) {
    std::vector<std::pair<StoppingTime, StoppingTime>> out;
    const int T = tree->horizon();
    for (int s = 0; s <= T; ++s)
        for (int t = s; t <= T; ++t)
            out.emplace_back(StoppingTime::at(tree, s), StoppingTime::at(tree, t));
    return out;
}

StoppingTime earliest(const StoppingTime& a, const StoppingTime& b) {
    const auto& tree = a.tree();
    if (b.tree() != tree) throw ValidationError("stopping times on different trees");
    std::vector<NodeIndex> stops;
    for (NodeIndex n = 0; n < tree->size(); ++n) {
        const bool is_stop = (!a.before(n) && a.atom(*a.atom_of(n)) == n) ||
                             (!b.before(n) && b.atom(*b.atom_of(n)) == n);
        const auto parent = tree->node(n).parent;
        if (is_stop && (!parent || (a.before(*parent) && b.before(*parent)))) stops.push_back(n);
    }
    return StoppingTime::from_nodes(tree, std::move(stops));
}

StoppingTime random_stopping_time(const TreePtr& tree, Rng& rng, double p_stop) {
    std::vector<NodeIndex> stops;
    std::vector<NodeIndex> stack{ScenarioTree::root()};
    while (!stack.empty()) {
        const NodeIndex n = stack.back();
        stack.pop_back();
        if (tree->is_leaf(n) || rng.coin(p_stop)) {
            stops.push_back(n);
            continue;
        }
        for (auto c : tree->node(n).children) stack.push_back(c);
    }
    return StoppingTime::from_nodes(tree, std::move(stops));
}

} // namespace dynrisk
