#pragma once

#include "dynrisk/probspace.hpp"
#include "dynrisk/rng.hpp"

#include <cmath>
#include <vector>

namespace testing {

using namespace dynrisk;

inline TreePtr one_period(double p = 0.5) { return ScenarioTree::binomial(1, p); }

/// A random measure with transitions bounded away from zero.
inline Measure random_measure(const TreePtr& tree, Rng& rng, double floor = 0.05) {
    std::vector<double> trans(tree->size(), 1.0);
    for (NodeIndex n = 0; n < tree->size(); ++n) {
        const auto& kids = tree->node(n).children;
        if (kids.empty()) continue;
        double s = 0.0;
        for (NodeIndex k : kids) s += (trans[k] = rng.uniform(floor, 1.0));
        for (NodeIndex k : kids) trans[k] /= s;
    }
    return Measure::from_transitions(tree, std::move(trans));
}

/// A random tree: each non-terminal node gets 2 or 3 children with random P.
inline TreePtr random_tree(int periods, Rng& rng) {
    std::vector<NodeSpec> specs{{"r", 0, std::nullopt, std::nullopt}};
    std::vector<std::size_t> frontier{0};
    for (int t = 1; t <= periods; ++t) {
        std::vector<std::size_t> next;
        for (std::size_t f : frontier) {
            const int k = rng.coin() ? 2 : 3;
            std::vector<double> w(k);
            double s = 0.0;
            for (auto& x : w) s += (x = rng.uniform(0.1, 1.0));
            for (int c = 0; c < k; ++c) {
                specs.push_back({specs[f].id + std::to_string(c), t, specs[f].id, w[c] / s});
                next.push_back(specs.size() - 1);
            }
        }
        frontier = std::move(next);
    }
    return ScenarioTree::build(periods + 1, specs);
}

/// Independent brute-force conditional expectation over leaves.
inline double brute_cond(const RandomVariable& x, const Measure& q, NodeIndex n) {
    const auto& tree = *q.tree();
    double num = 0.0, den = 0.0;
    for (NodeIndex leaf : tree.leaves()) {
        if (!tree.contains(n, leaf)) continue;
        const double m = q.mass(leaf);
        num += m * x.at_node(leaf);
        den += m;
    }
    return den > 0 ? num / den : 0.0;
}

} // namespace testing
