#include "helpers.hpp"

#include "dynrisk/consistency.hpp"
#include "dynrisk/stableset.hpp"

#include <doctest.h>

#include <cmath>

using namespace dynrisk;
using testing::random_measure;

namespace {

Measure homogeneous(const TreePtr& tree, double q_up) {
    std::vector<double> trans(tree->size(), 1.0);
    for (NodeIndex n = 0; n < tree->size(); ++n) {
        const auto& kids = tree->node(n).children;
        if (kids.size() == 2) {
            trans[kids[0]] = q_up;
            trans[kids[1]] = 1.0 - q_up;
        }
    }
    return Measure::from_transitions(tree, std::move(trans));
}

RectangularFamily everywhere(const TreePtr& tree, const OneStepSet& set) {
    std::map<NodeIndex, OneStepSet> sets;
    for (NodeIndex n = 0; n < tree->size(); ++n)
        if (!tree->is_leaf(n)) sets.emplace(n, set);
    return RectangularFamily(tree, std::move(sets));
}

/// Random finite one-step sets with random penalties and one zero-penalty choice per node.
RectangularFamily random_finite(const TreePtr& tree, Rng& rng) {
    std::map<NodeIndex, OneStepSet> sets;
    for (NodeIndex n = 0; n < tree->size(); ++n) {
        const auto k = tree->node(n).children.size();
        if (k == 0) continue;
        const std::size_t count = 1 + rng.index(3);
        std::vector<std::vector<double>> choices;
        std::vector<double> values;
        for (std::size_t c = 0; c < count; ++c) {
            std::vector<double> law(k);
            double s = 0.0;
            for (auto& v : law) s += (v = rng.uniform(0.05, 1.0));
            for (auto& v : law) v /= s;
            choices.push_back(std::move(law));
            values.push_back(c == 0 ? 0.0 : rng.uniform(0.0, 0.5));
        }
        sets.emplace(n, OneStepSet::finite(std::move(choices), std::move(values)));
    }
    return RectangularFamily(tree, std::move(sets));
}

} // namespace

TEST_CASE("paste examples") {
    const auto tree = ScenarioTree::binomial(2);
    const auto t0 = StoppingTime::at(tree, 0), t1 = StoppingTime::at(tree, 1);
    Rng rng(1);
    const auto q = random_measure(tree, rng);
    CHECK(paste(q, q, t0, t1).max_transition_diff(q) == 0.0);

    const auto r = Measure::with_overrides(tree, {{"u", 0.3}, {"d", 0.7}});
    const auto s = paste(homogeneous(tree, 0.7), r, t0, t1);
    CHECK(s.mass(tree->index_of("uu")) == doctest::Approx(0.21).epsilon(1e-15));
    CHECK(s.mass(tree->index_of("dd")) == doctest::Approx(0.7 * 0.3).epsilon(1e-15));

    CHECK(paste(q, random_measure(tree, rng), t0, t0).max_transition_diff(q) == 0.0);
}

TEST_CASE("property: pasting identity holds on leaf indicators") {
    Rng rng(2);
    for (int trial = 0; trial < 40; ++trial) {
        const auto tree = testing::random_tree(1 + static_cast<int>(rng.index(3)), rng);
        const auto sigma = random_stopping_time(tree, rng);
        const auto nu = earliest(random_stopping_time(tree, rng), sigma);
        const auto q = random_measure(tree, rng), r = random_measure(tree, rng);
        const auto s = paste(q, r, nu, sigma);
        CHECK(paste_identity_residual(s, q, r, nu, sigma) <= 1e-15);
        // Independent check at the root through leaf masses.
        const auto& tr = *tree;
        for (NodeIndex leaf : tr.leaves()) {
            const NodeIndex a = sigma.atom(*sigma.atom_of(leaf));
            CHECK(s.mass(leaf) == doctest::Approx(r.mass(a) * q.kernel(a, leaf)).epsilon(1e-14));
        }
    }
}

TEST_CASE("check_stable examples") {
    const auto tree = ScenarioTree::binomial(2);
    const auto pairs = deterministic_pairs(tree);
    CHECK(check_stable({{"P", Measure::reference(tree)}}, pairs).stable);

    const auto rect = everywhere(tree, OneStepSet::finite({{0.3, 0.7}, {0.5, 0.5}, {0.8, 0.2}}));
    std::vector<LabelledMeasure> sel;
    for (auto& s : selection_measures(rect)) sel.push_back({"s", s.measure});
    CHECK(sel.size() == 27);
    const auto ok = check_stable(sel, pairs);
    CHECK(ok.stable);
    CHECK(ok.pastes_checked > 0);

    const auto bad = check_stable({{"q03", homogeneous(tree, 0.3)}, {"q07", homogeneous(tree, 0.7)}}, pairs);
    CHECK_FALSE(bad.stable);
    bool witness = false;
    for (const auto& m : bad.missing) {
        const auto& p = m.pasted;
        if (std::abs(p.transition(tree->index_of("u")) - 0.3) < 1e-15 &&
            std::abs(p.transition(tree->index_of("uu")) - 0.7) < 1e-15)
            witness = true;
    }
    CHECK(witness);

    CHECK_THROWS_AS(check_stable({{"dirac", Measure::dirac(tree, tree->index_of("uu"))}}, pairs),
                    ValidationError);
}

TEST_CASE("check_local examples") {
    const auto tree = ScenarioTree::binomial(2);
    const auto t0 = StoppingTime::at(tree, 0), t1 = StoppingTime::at(tree, 1), t2 = StoppingTime::at(tree, 2);
    const auto q1 = Measure::with_overrides(tree, {{"uu", 0.6}, {"ud", 0.4}, {"du", 0.2}, {"dd", 0.8}});
    const auto q2 = Measure::with_overrides(tree, {{"uu", 0.6}, {"ud", 0.4}, {"du", 0.7}, {"dd", 0.3}});
    const std::vector<std::pair<LabelledMeasure, LabelledMeasure>> pairs{{{"q1", q1}, {"q2", q2}}};

    const auto rect = everywhere(tree, OneStepSet::interval(0.1, 0.9, 2.0));
    CHECK(check_local(stable_penalty_function(rect), pairs, t1, t2).passed());

    const PenaltyFunction zero = [](const Measure&, const StoppingTime& s, const StoppingTime&) {
        return PenaltyVariable{s, std::vector<ExtendedReal>(s.atom_count(), 0.0)};
    };
    CHECK(check_local(zero, pairs, t1, t2).passed());

    const PenaltyFunction tv = [t0](const Measure& q, const StoppingTime& s, const StoppingTime&) {
        const auto p = Measure::reference(q.tree());
        const auto qm = q.leaf_masses(), pm = p.leaf_masses();
        double d = 0.0;
        for (std::size_t i = 0; i < qm.size(); ++i) d += 0.5 * std::abs(qm[i] - pm[i]);
        return PenaltyVariable{s, std::vector<ExtendedReal>(s.atom_count(), 3.0 * d)};
    };
    const auto rep = check_local(tv, pairs, t1, t2);
    CHECK_FALSE(rep.passed());
    REQUIRE(rep.worst() != nullptr);
    CHECK(rep.worst()->witness_atom == "u");
}

TEST_CASE("stable-set risk examples") {
    const auto tree = ScenarioTree::binomial(2);
    const auto t1 = StoppingTime::at(tree, 1), t2 = StoppingTime::at(tree, 2);
    const auto battery = random_battery(t2, 8, 4);
    const auto p = Measure::reference(tree);

    const StableSetRisk plain(RectangularFamily(tree, {}));
    for (const auto& pos : battery)
        for (int t = 0; t <= 2; ++t) {
            const auto s = StoppingTime::at(tree, t);
            CHECK(max_abs_diff(plain(pos.value, s), cond_expectation(-pos.value, p, s)) <= 1e-15);
        }

    const auto interval = everywhere(tree, OneStepSet::interval(0.2, 0.7));
    const StableSetRisk worst(interval);
    for (const auto& pos : battery)
        for (int t = 0; t <= 1; ++t) {
            const auto s = StoppingTime::at(tree, t);
            CHECK(max_abs_diff(worst(pos.value, s), brute_force_esssup(interval, pos.value, s)) <= 1e-12);
        }

    // Quadratic bracket penalty against a fine brute-force grid: DP is exact, the grid a lower bound.
    const auto bracket = everywhere(tree, OneStepSet::interval(0.3, 0.7, 1.0));
    const StableSetRisk dp(bracket);
    for (const auto& pos : random_battery(t2, 4, 5, 1.0)) {
        const double exact = dp(pos.value, StoppingTime::at(tree, 0))[0];
        const double grid = brute_force_esssup(bracket, pos.value, StoppingTime::at(tree, 0), 41)[0];
        CHECK(grid <= exact + 1e-12);
        CHECK(exact - grid <= 1e-3);
    }
    CHECK(dp(RandomVariable::constant(t2, 0.0), t1).max_abs() == 0.0);
}

TEST_CASE("one-step step maximizes the penalized expectation") {
    const auto tree = ScenarioTree::binomial(1);
    const StableSetRisk rho(everywhere(tree, OneStepSet::interval(0.2, 0.9, 0.5)));
    const std::vector<double> cv{1.0, -1.0};
    double best = -1e300;
    for (int i = 0; i <= 70000; ++i) {
        const double q = 0.2 + 0.7 * i / 70000.0;
        const double h = 2 * q - 1;
        best = std::max(best, q * cv[0] + (1 - q) * cv[1] - 0.5 * h * h);
    }
    CHECK(rho.step(0, cv) == doctest::Approx(best).epsilon(1e-9));
    CHECK(rho.step(0, cv) >= best);
}

TEST_CASE("local penalty of arbitrary one-step laws") {
    const auto tree = ScenarioTree::binomial(1);
    const auto fin = everywhere(tree, OneStepSet::finite({{0.2, 0.8}, {0.6, 0.4}}, {0.0, 1.0}));
    const std::vector<double> mid{0.4, 0.6};
    CHECK(fin.local_penalty(0, mid).value() == doctest::Approx(0.5).epsilon(1e-12));
    const std::vector<double> out{0.9, 0.1};
    CHECK(fin.local_penalty(0, out).is_infinite());

    const auto iv = everywhere(tree, OneStepSet::interval(0.3, 0.7, 2.0));
    const std::vector<double> in{0.6, 0.4};
    CHECK(iv.local_penalty(0, in).value() == doctest::Approx(2.0 * 0.04).epsilon(1e-12));
    CHECK(iv.local_penalty(0, out).is_infinite());
    CHECK(iv.normalized());
    CHECK(everywhere(tree, OneStepSet::interval(0.6, 0.7)).normalized());
    CHECK_FALSE(everywhere(tree, OneStepSet::interval(0.6, 0.7, 1.0)).normalized());
    CHECK(iv.interval_penalty(0, 0.7) == doctest::Approx(0.32));
}

TEST_CASE("rectangular family validation") {
    const auto tree = ScenarioTree::binomial(1);
    CHECK_THROWS_AS(everywhere(tree, OneStepSet::finite({})), ValidationError);
    CHECK_THROWS_AS(everywhere(tree, OneStepSet::finite({{0.6, 0.6}})), ValidationError);
    CHECK_THROWS_AS(everywhere(tree, OneStepSet::finite({{0.5, 0.5}}, {-1.0})), ValidationError);
    CHECK_THROWS_AS(everywhere(tree, OneStepSet::interval(0.7, 0.3)), ValidationError);
    CHECK_THROWS_AS(everywhere(tree, OneStepSet::interval(0.3, 0.7, -1.0)), ValidationError);
    const auto tri = ScenarioTree::build(
        2, {{"r", 0, std::nullopt, std::nullopt}, {"a", 1, "r", 0.25}, {"b", 1, "r", 0.25}, {"c", 1, "r", 0.5}});
    CHECK_THROWS_AS(everywhere(tri, OneStepSet::interval(0.3, 0.7)), ValidationError);
    CHECK_THROWS_AS(selection_measures(everywhere(ScenarioTree::binomial(3), OneStepSet::interval(0.3, 0.7)), 2, 10),
                    ValidationError);
}

TEST_CASE("from_martingale_family examples") {
    const auto tree = ScenarioTree::binomial(2);
    const auto zero = from_martingale_family(DiscreteMartingaleFamily::constant(tree, 0.0, 0.0));
    CHECK(selection_measures(zero).size() == 1);
    CHECK(selection_measures(zero)[0].measure.max_transition_diff(Measure::reference(tree)) == 0.0);

    const auto coherent = from_martingale_family(DiscreteMartingaleFamily::constant(tree, 0.4, 0.0));
    const auto& set = coherent.at(0);
    CHECK(set.kind == OneStepSet::Kind::interval);
    CHECK(set.lo == doctest::Approx(0.3).epsilon(1e-15));
    CHECK(set.hi == doctest::Approx(0.7).epsilon(1e-15));

    const auto bracket = from_martingale_family(DiscreteMartingaleFamily::constant(tree, 0.4, 1.0));
    CHECK(bracket.interval_penalty(0, 0.5 * (1.0 + 0.4)) == doctest::Approx(0.16).epsilon(1e-14));

    CHECK_THROWS_AS(from_martingale_family(DiscreteMartingaleFamily::constant(tree, 1.0, 0.0)), ValidationError);

    const std::vector<double> h(tree->size(), 0.4);
    const auto tilted = tilted_measure(tree, h);
    CHECK(tilted.mass(tree->index_of("uu")) == doctest::Approx(0.49).epsilon(1e-15));
}

TEST_CASE("property: dynamic programming equals vertex enumeration") {
    Rng rng(5);
    for (int trial = 0; trial < 30; ++trial) {
        const int periods = 1 + static_cast<int>(rng.index(3));
        const auto tree = trial % 2 == 0 ? testing::random_tree(periods, rng) : ScenarioTree::binomial(periods);
        const auto family = trial % 4 == 1 ? everywhere(tree, OneStepSet::interval(rng.uniform(0.05, 0.5),
                                                                                      rng.uniform(0.5, 0.95)))
                                           : random_finite(tree, rng);
        const StableSetRisk rho(family);
        const auto tT = StoppingTime::at(tree, periods);
        for (const auto& pos : random_battery(tT, 3, trial)) {
            for (int t = 0; t < periods; ++t) {
                const auto s = StoppingTime::at(tree, t);
                CHECK(max_abs_diff(rho(pos.value, s), brute_force_esssup(family, pos.value, s)) <= 1e-10);
            }
            const auto s = earliest(random_stopping_time(tree, rng), tT);
            CHECK(max_abs_diff(rho(pos.value, s), brute_force_esssup(family, pos.value, s)) <= 1e-10);
        }
    }
}

TEST_CASE("property: induced penalty satisfies the cocycle condition exactly") {
    Rng rng(6);
    for (int trial = 0; trial < 10; ++trial) {
        const auto tree = ScenarioTree::binomial(2 + static_cast<int>(rng.index(2)));
        const auto family = trial % 2 ? everywhere(tree, OneStepSet::interval(0.2, 0.8, rng.uniform(0.1, 3.0)))
                                      : random_finite(tree, rng);
        std::vector<LabelledMeasure> samples;
        for (auto& s : selection_measures(family, 3)) samples.push_back({"s", std::move(s.measure)});
        std::vector<Triple> triples = deterministic_triples(tree);
        for (int k = 0; k < 4; ++k) {
            const auto tau = random_stopping_time(tree, rng);
            const auto sigma = earliest(random_stopping_time(tree, rng), tau);
            triples.push_back({earliest(random_stopping_time(tree, rng), sigma), sigma, tau});
        }
        CHECK(check_cocycle(stable_penalty_function(family), samples, triples, 1e-12).passed());
    }
}

TEST_CASE("property: zero-penalty families containing P are coherent") {
    Rng rng(7);
    const auto tree = ScenarioTree::binomial(3);
    const StableSetRisk rho(everywhere(tree, OneStepSet::finite({{0.5, 0.5}, {0.2, 0.8}, {0.9, 0.1}})));
    const auto tT = StoppingTime::at(tree, 3);
    for (int t = 0; t < 3; ++t)
        CHECK(rho(RandomVariable::constant(tT, 0.0), StoppingTime::at(tree, t)).max_abs() == 0.0);
    for (const auto& pos : random_battery(tT, 10, 8)) {
        const auto s = random_stopping_time(tree, rng);
        const double lambda = rng.uniform(0.1, 5.0);
        CHECK(max_abs_diff(rho(lambda * pos.value, s), lambda * rho(pos.value, s)) <= 1e-12);
    }
}
