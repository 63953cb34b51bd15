#include "helpers.hpp"

#include "dynrisk/riskcore.hpp"

#include <doctest.h>

#include <algorithm>

using namespace dynrisk;
using testing::random_measure;

namespace {

DualFamily diracs(const TreePtr& tree, std::vector<double> c) {
    std::vector<DualMember> m;
    for (std::size_t i = 0; i < c.size(); ++i)
        m.push_back({Measure::dirac(tree, tree->leaves()[i]), {}, c[i], "d" + std::to_string(i)});
    return DualFamily(std::move(m));
}

Measure one_step(const TreePtr& tree, double q_up) {
    return Measure::with_overrides(tree, {{"u", q_up}, {"d", 1.0 - q_up}});
}

/// Random family on a tree; per-node penalties with a zero-penalty member at every node.
DualFamily random_family(const TreePtr& tree, Rng& rng, std::size_t members, bool normalized) {
    std::vector<DualMember> m;
    for (std::size_t k = 0; k < members; ++k) m.push_back({random_measure(tree, rng), {}, 0.0, {}});
    for (NodeIndex n = 0; n < tree->size(); ++n) {
        const std::size_t zero = rng.index(members);
        for (std::size_t k = 0; k < members; ++k)
            m[k].penalty[n] = (normalized && k == zero) ? 0.0 : rng.uniform(0.0, 1.0);
    }
    return DualFamily(std::move(m));
}

} // namespace

TEST_CASE("evaluate_dual examples") {
    const auto tree = ScenarioTree::binomial(1);
    const auto t0 = StoppingTime::at(tree, 0);
    const RandomVariable x(StoppingTime::at(tree, 1), {1.0, -1.0});
    CHECK(evaluate_dual(DualFamily::from_measures({Measure::reference(tree)}), x, t0)[0] == 0.0);
    CHECK(evaluate_dual(diracs(tree, {0, 0}), x, t0)[0] == 1.0);
    CHECK(evaluate_dual(diracs(tree, {0, 1}), RandomVariable::constant(x.anchor(), 0.0), t0)[0] ==
          0.0);
}

TEST_CASE("evaluate_dual rejects an atom where every penalty is infinite") {
    const auto tree = ScenarioTree::binomial(1);
    DualFamily f({DualMember{Measure::reference(tree), {}, ExtendedReal::infinity(), "P"}});
    CHECK_THROWS_AS(evaluate_dual(f, RandomVariable::constant(StoppingTime::at(tree, 1), 0.0),
                                  StoppingTime::at(tree, 0)),
                    ValidationError);
}

TEST_CASE("dual family validation") {
    CHECK_THROWS_AS(DualFamily(std::vector<DualMember>{}), ValidationError);
    const auto a = ScenarioTree::binomial(1);
    const auto b = ScenarioTree::binomial(1);
    CHECK_THROWS_AS(DualFamily::from_measures({Measure::reference(a), Measure::reference(b)}),
                    ValidationError);
    CHECK(DualFamily::from_measures({Measure::reference(a)}).members()[0].label == "Q0");
}

TEST_CASE("check_axioms: dual family passes, squared expectation fails translation") {
    const auto tree = ScenarioTree::binomial(2);
    Rng rng(5);
    const DualFamilyRisk rho(random_family(tree, rng, 3, false));
    std::vector<Position> battery;
    for (int t = 0; t <= 2; ++t) {
        auto b = default_battery(StoppingTime::at(tree, t), {static_cast<std::uint64_t>(t), 4, 8.0});
        battery.insert(battery.end(), b.begin(), b.end());
    }
    const auto rep = check_axioms(rho, battery, deterministic_pairs(tree));
    CHECK(rep.passed());
    CHECK(rep.max_residual() <= 1e-9);
    CHECK(rep.metrics.at("battery_size") == static_cast<double>(battery.size()));

    const auto p = Measure::reference(tree);
    const FunctionRisk squared(tree, [p](const RandomVariable& x, const StoppingTime& s) {
        auto e = cond_expectation(-x, p, s);
        return RandomVariable::from_nodes(s, [&](NodeIndex n) { return e.at_node(n) * e.at_node(n); });
    });
    const auto bad = check_axioms(squared, battery, deterministic_pairs(tree));
    CHECK_FALSE(bad.passed());
    double translation = 0.0;
    for (const auto& c : bad.cases)
        if (c.x_label.rfind("translation", 0) == 0) {
            translation = std::max(translation, c.residual);
            if (c.residual > 1e-9) CHECK_FALSE(c.witness_atom.empty());
        }
    CHECK(translation > 1e-9);
}

TEST_CASE("check_axioms: battery {0} gives exact translation") {
    const auto tree = ScenarioTree::binomial(2);
    Rng rng(6);
    const DualFamilyRisk rho(random_family(tree, rng, 3, false));
    const auto t2 = StoppingTime::at(tree, 2);
    AxiomOptions opts;
    opts.constant_shifts = false;
    const auto rep = check_axioms(rho, {{"0", RandomVariable::constant(t2, 0.0)}},
                                  {{StoppingTime::at(tree, 1), t2}}, opts);
    for (const auto& c : rep.cases)
        if (c.x_label.rfind("translation", 0) == 0) CHECK(c.residual == 0.0);
}

TEST_CASE("is_acceptable examples") {
    const auto tree = ScenarioTree::binomial(2);
    Rng rng(7);
    const DualFamilyRisk rho(random_family(tree, rng, 3, true));
    const auto t1 = StoppingTime::at(tree, 1);
    const auto t2 = StoppingTime::at(tree, 2);
    const auto p = Measure::reference(tree);
    for (bool b : is_acceptable(rho, RandomVariable::constant(t2, 0.0), p, t1)) CHECK(b);

    const auto x0 = random_battery(t2, 1, 9)[0].value;
    const auto x = x0 + lift(rho(x0, t1), t2);
    for (bool b : is_acceptable(rho, x, p, t1)) CHECK(b);
    for (bool b : is_acceptable(rho, x + (-0.01), p, t1)) CHECK_FALSE(b);

    const auto q = Measure::with_overrides(tree, {{"u", 0.0}, {"d", 1.0}});
    const auto acc = is_acceptable(rho, x + (-0.01), q, t1);
    CHECK(acc[0]);
    CHECK_FALSE(acc[1]);
}

TEST_CASE("minimal_penalty_lp examples") {
    const auto tree = ScenarioTree::binomial(1);
    const auto t0 = StoppingTime::at(tree, 0);
    const auto t1 = StoppingTime::at(tree, 1);

    const auto d = diracs(tree, {0.25, 1.0});
    CHECK(minimal_penalty_lp(d, d.members()[0].measure, t0, t1).values[0] == ExtendedReal(0.25));

    const auto half = minimal_penalty_lp(diracs(tree, {0.0, 1.0}), one_step(tree, 0.5), t0, t1);
    CHECK(half.values[0].value() == doctest::Approx(0.5).epsilon(1e-12));

    const auto only_u = diracs(tree, {0.0});
    CHECK(minimal_penalty_lp(only_u, one_step(tree, 0.5), t0, t1).values[0].is_infinite());
}

TEST_CASE("minimal_penalty_oracle examples") {
    const auto tree = ScenarioTree::binomial(1);
    const auto t0 = StoppingTime::at(tree, 0);
    const auto t1 = StoppingTime::at(tree, 1);
    const DualFamilyRisk rho(diracs(tree, {0.0, 1.0}));
    const auto q = one_step(tree, 0.5);

    const std::vector<RandomVariable> zero{RandomVariable::constant(t1, 0.0)};
    CHECK(minimal_penalty_oracle(rho, q, t0, zero)[0] == 0.0);

    double previous = -1.0;
    for (std::size_t points : {5, 51, 501, 5001}) {
        const auto grid = scaled_indicator_grid(t1, 4.0, points);
        const double v = minimal_penalty_oracle(rho, q, t0, grid)[0];
        CHECK(v <= 0.5 + 1e-12);
        CHECK(v >= previous - 1e-12);
        previous = v;
    }
    CHECK(previous >= 0.5 - 1e-3);
}

TEST_CASE("argmax_measure examples") {
    const auto one = ScenarioTree::binomial(1);
    const auto t0 = StoppingTime::at(one, 0);
    const RandomVariable x(StoppingTime::at(one, 1), {1.0, -1.0});
    const auto p = Measure::reference(one);

    const auto single = argmax_measure(DualFamily::from_measures({one_step(one, 0.3)}), x, t0, p);
    CHECK(single.measure.max_transition_diff(one_step(one, 0.3)) == 0.0);

    const auto dirac = argmax_measure(diracs(one, {0, 0}), x, t0, p);
    CHECK(dirac.member[0] == 1);
    CHECK(dirac.measure.mass(one->index_of("d")) == 1.0);

    const auto tie = argmax_measure(diracs(one, {0, 0}), RandomVariable::constant(x.anchor(), 0.0),
                                    t0, p);
    CHECK(tie.member[0] == 0);
}

TEST_CASE("argmax_measure pastes different maximizers at time-1 atoms") {
    const auto tree = ScenarioTree::binomial(2);
    const auto up = Measure::with_overrides(tree, {{"uu", 0.9}, {"ud", 0.1}, {"du", 0.9}, {"dd", 0.1}});
    const auto down = Measure::with_overrides(tree, {{"uu", 0.1}, {"ud", 0.9}, {"du", 0.1}, {"dd", 0.9}});
    const auto family = DualFamily::from_measures({up, down});
    const auto t1 = StoppingTime::at(tree, 1);
    const RandomVariable x(StoppingTime::at(tree, 2), {-3.0, 0.0, 0.0, -3.0});
    const auto r = argmax_measure(family, x, t1, Measure::reference(tree));
    CHECK(r.member == std::vector<std::size_t>{0, 1});

    const auto rho = evaluate_dual(family, x, t1);
    const auto attained = kernel_expectation(-x, r.measure, t1);
    for (std::size_t a = 0; a < 2; ++a) {
        CHECK(attained[a] == doctest::Approx(rho[a]).epsilon(1e-15));
        CHECK(r.attained[a] == doctest::Approx(rho[a]).epsilon(1e-15));
    }
}

TEST_CASE("property: random dual families") {
    Rng rng(21);
    for (int trial = 0; trial < 25; ++trial) {
        const auto tree = testing::random_tree(2, rng);
        const auto family = random_family(tree, rng, 2 + rng.index(3), true);
        const DualFamilyRisk rho(family);
        const auto t0 = StoppingTime::at(tree, 0);
        const auto tT = StoppingTime::at(tree, tree->horizon());
        const auto sigma = random_stopping_time(tree, rng);
        const auto battery = random_battery(tT, 6, trial);

        SUBCASE("domination") {
            for (const auto& pos : battery) {
                const auto r = rho(pos.value, sigma);
                for (const auto& m : family.members()) {
                    const auto e = kernel_expectation(-pos.value, m.measure, sigma);
                    for (std::size_t a = 0; a < sigma.atom_count(); ++a)
                        CHECK(r[a] >= e[a] - m.penalty_at(sigma.atom(a)).value() - 1e-12);
                }
            }
        }

        SUBCASE("nonnegativity of the minimal penalty") {
            for (int k = 0; k < 4; ++k) {
                const auto q = k == 0 ? family.members()[0].measure : random_measure(tree, rng);
                for (const auto& v : minimal_penalty_lp(family, q, sigma, tT).values)
                    if (v.is_finite()) CHECK(v.value() >= -1e-9);
            }
        }

        SUBCASE("biconjugation") {
            std::vector<DualMember> replaced;
            for (const auto& m : family.members()) {
                DualMember r{m.measure, {}, 0.0, m.label};
                for (int t = 0; t < tree->horizon(); ++t) {
                    const auto s = StoppingTime::at(tree, t);
                    const auto pv = minimal_penalty_lp(family, m.measure, s, tT);
                    for (std::size_t a = 0; a < s.atom_count(); ++a) r.penalty[s.atom(a)] = pv.values[a];
                }
                replaced.push_back(std::move(r));
            }
            const DualFamily bi(std::move(replaced));
            for (const auto& pos : battery)
                for (int t = 0; t < tree->horizon(); ++t) {
                    const auto s = StoppingTime::at(tree, t);
                    CHECK(max_abs_diff(evaluate_dual(bi, pos.value, s), rho(pos.value, s)) <= 1e-9);
                }
        }

        SUBCASE("sandwich") {
            const auto grid = default_oracle_grid(tT, trial);
            for (int k = 0; k < 3; ++k) {
                const auto q = random_measure(tree, rng);
                const auto lo = minimal_penalty_oracle(rho, q, t0, grid);
                const auto hi = minimal_penalty_lp(family, q, t0, tT);
                if (hi.values[0].is_finite()) CHECK(lo[0] <= hi.values[0].value() + 1e-9);
            }
        }
    }
}

TEST_CASE("property: conjugacy gap closes on two-leaf instances") {
    const auto tree = ScenarioTree::binomial(1);
    const auto t0 = StoppingTime::at(tree, 0);
    const auto t1 = StoppingTime::at(tree, 1);
    const auto grid = scaled_indicator_grid(t1, 4.0, 5000);
    Rng rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<DualMember> members;
        std::vector<double> qs;
        while (qs.size() < 3) {
            const double q = rng.uniform(0.05, 0.95);
            if (std::all_of(qs.begin(), qs.end(), [&](double o) { return std::abs(o - q) >= 0.2; }))
                qs.push_back(q);
        }
        for (double q : qs) members.push_back({one_step(tree, q), {}, rng.uniform(0.0, 0.5), {}});
        const DualFamily family(std::move(members));
        const DualFamilyRisk rho(family);
        const auto [lo_q, hi_q] = std::minmax_element(qs.begin(), qs.end());
        const auto q = one_step(tree, rng.uniform(*lo_q, *hi_q));
        const double exact = minimal_penalty_lp(family, q, t0, t1).values[0].value();
        const double oracle = minimal_penalty_oracle(rho, q, t0, grid)[0];
        CHECK(oracle <= exact + 1e-9);
        CHECK(exact - oracle <= 1e-3);
    }
}
