#include "helpers.hpp"

#include "dynrisk/consistency.hpp"
#include "dynrisk/models.hpp"
#include "dynrisk/riskcore.hpp"
#include "dynrisk/stableset.hpp"

#include <doctest.h>

#include <cmath>

using namespace dynrisk;

namespace {

/// Terminal Brownian value of a leaf of a symmetric binomial tree (first child = up).
double brownian_value(const ScenarioTree& tree, NodeIndex leaf, double dt) {
    int ups = 0;
    for (NodeIndex k = leaf; k != 0; k = *tree.node(k).parent)
        if (tree.node(*tree.node(k).parent).children[0] == k) ++ups;
    return (2 * ups - tree.horizon()) * std::sqrt(dt);
}

RandomVariable on_leaves(const TreePtr& tree, double dt, const LatticePayoff& f) {
    return RandomVariable::from_nodes(StoppingTime::at(tree, tree->horizon()),
                                      [&](NodeIndex n) { return f(brownian_value(*tree, n, dt)); });
}

std::vector<Position> full_battery(const TreePtr& tree) {
    std::vector<Position> out;
    for (int t = 0; t <= tree->horizon(); ++t) {
        auto b = default_battery(StoppingTime::at(tree, t), {static_cast<std::uint64_t>(t), 6, 8.0});
        out.insert(out.end(), b.begin(), b.end());
    }
    return out;
}

} // namespace

TEST_CASE("entropic risk examples") {
    const auto one = ScenarioTree::binomial(1);
    const auto t0 = StoppingTime::at(one, 0);
    const auto t1 = StoppingTime::at(one, 1);
    const EntropicRisk plain(one, EntropicSpec::exponential(1.0, 0.0));
    CHECK(plain(RandomVariable::constant(t1, 2.0), t0)[0] == doctest::Approx(-2.0).epsilon(1e-15));

    const RandomVariable x(t1, {1.0, -1.0});
    const double lncosh = std::log(std::cosh(1.0));
    CHECK(plain(x, t0)[0] == doctest::Approx(lncosh).epsilon(1e-14));
    CHECK(std::abs(plain(x, t0)[0] - 0.433781) <= 5e-7);

    const EntropicRisk shifted(one, EntropicSpec::pairs(1.0, {{{0, 1}, 0.5}}));
    CHECK(shifted(x, t0)[0] == doctest::Approx(lncosh - 0.5).epsilon(1e-14));
    CHECK(std::abs(shifted(x, t0)[0] + 0.066219) <= 5e-7);

    CHECK_FALSE(is_acceptable(plain, x, Measure::reference(one), t0)[0]);
}

TEST_CASE("entropic risk with alpha scales as expected") {
    const auto tree = ScenarioTree::binomial(2);
    const auto t2 = StoppingTime::at(tree, 2);
    const RandomVariable x(t2, {2.0, -1.0, 0.5, -3.0});
    const double alpha = 2.5;
    const EntropicRisk rho(tree, EntropicSpec::exponential(alpha, 0.0));
    double s = 0.0;
    for (std::size_t i = 0; i < 4; ++i) s += 0.25 * std::exp(-alpha * x[i]);
    CHECK(rho(x, StoppingTime::at(tree, 0))[0] == doctest::Approx(std::log(s) / alpha).epsilon(1e-14));
    CHECK_THROWS_AS(EntropicSpec::exponential(0.0, 0.1), ValidationError);
    CHECK_THROWS_AS(EntropicSpec::exponential(-1.0, 0.1), ValidationError);
}

TEST_CASE("entropic penalty examples") {
    const auto one = ScenarioTree::binomial(1);
    const auto t0 = StoppingTime::at(one, 0);
    const auto t1 = StoppingTime::at(one, 1);
    const auto plain = EntropicSpec::exponential(1.0, 0.0);
    CHECK(entropic_penalty(plain, Measure::reference(one), t0, t1).values[0] == ExtendedReal(0.0));

    const auto q = Measure::with_overrides(one, {{"u", 0.75}, {"d", 0.25}});
    const double h = 0.75 * std::log(1.5) + 0.25 * std::log(0.5);
    const double v = entropic_penalty(plain, q, t0, t1).values[0].value();
    CHECK(v == doctest::Approx(h).epsilon(1e-14));
    CHECK(std::abs(v - 0.130812) <= 1e-6);

    // The threshold enters with the sign of the conjugate: alpha_m(Q) >= E_Q(0) - rho(0) = ln g / alpha.
    const auto spec = EntropicSpec::pairs(1.0, {{{0, 1}, 0.05}});
    const double vg = entropic_penalty(spec, q, t0, t1).values[0].value();
    CHECK(vg == doctest::Approx(h + 0.05).epsilon(1e-14));
    const EntropicRisk rho(one, spec);
    const std::vector<RandomVariable> zero{RandomVariable::constant(t1, 0.0)};
    CHECK(minimal_penalty_oracle(rho, q, t0, zero)[0] == doctest::Approx(0.05).epsilon(1e-14));
}

TEST_CASE("entropic penalty is pinned by the conjugate oracle") {
    const auto one = ScenarioTree::binomial(1);
    const auto t0 = StoppingTime::at(one, 0);
    const auto t1 = StoppingTime::at(one, 1);
    const auto grid = scaled_indicator_grid(t1, 4.0, 5000);
    for (const auto& spec : {EntropicSpec::exponential(1.0, 0.0), EntropicSpec::pairs(1.0, {{{0, 1}, 0.05}}),
                             EntropicSpec::exponential(2.0, -0.3)}) {
        const EntropicRisk rho(one, spec);
        for (double qu : {0.75, 0.5, 0.2, 0.9}) {
            const auto q = Measure::with_overrides(one, {{"u", qu}, {"d", 1.0 - qu}});
            const double exact = entropic_penalty(spec, q, t0, t1).values[0].value();
            const double lower = minimal_penalty_oracle(rho, q, t0, grid)[0];
            CHECK(lower <= exact + 1e-9);
            CHECK(exact - lower <= 1e-3);
        }
    }
}

TEST_CASE("threshold consistency examples") {
    const auto e = threshold_is_consistent(EntropicSpec::exponential(1.0, 0.1), 2);
    CHECK(e.consistent);
    CHECK(e.defect <= 1e-12);

    const auto a = threshold_is_consistent(EntropicSpec::affine(1.0), 2);
    CHECK_FALSE(a.consistent);
    CHECK(a.defect == doctest::Approx(2.0 * std::log(2.0) - std::log(3.0)).epsilon(1e-14));
    CHECK(std::abs(a.defect - 0.287682) <= 1e-6);
    CHECK(a.witness == std::array<int, 3>{0, 1, 2});

    const auto one = threshold_is_consistent(EntropicSpec::exponential(1.0, 0.0), 5);
    CHECK(one.consistent);
    CHECK(one.defect == 0.0);
}

TEST_CASE("entropic time consistency residual equals defect over alpha") {
    const auto tree = ScenarioTree::binomial(2);
    const auto battery = default_battery(StoppingTime::at(tree, 2), {0, 20, 8.0});
    const std::vector<Triple> t012{
        Triple{StoppingTime::at(tree, 0), StoppingTime::at(tree, 1), StoppingTime::at(tree, 2)}};
    for (double alpha : {0.5, 1.0, 3.0}) {
        const auto spec = EntropicSpec::affine(alpha);
        const auto rep = check_time_consistency(EntropicRisk(tree, spec), battery, t012);
        const double expected = threshold_is_consistent(spec, 2).defect / alpha;
        for (const auto& c : rep.cases) CHECK(c.residual == doctest::Approx(expected).epsilon(1e-10));
    }
    const EntropicRisk rho(tree, EntropicSpec::exponential(1.0, -0.5));
    CHECK(check_axioms(rho, full_battery(tree), deterministic_pairs(tree)).max_residual() <= 1e-9);
}

TEST_CASE("driver specs") {
    const auto abs = DriverSpec::abs(0.5, 0.1);
    CHECK(abs(0, -2.0) == 1.0);
    CHECK(abs.value_at_zero(4) == 0.0);
    CHECK(abs.convexity_defect(4) <= 1e-12);
    CHECK(DriverSpec::quad(2.0, 0.1)(1, 3.0) == 9.0);
    CHECK(DriverSpec::quad(2.0, 0.1).convexity_defect(3) <= 1e-12);

    const auto table = DriverSpec::table({-1.0, 0.0, 1.0}, {{1.0, 0.0, 1.0}}, 0.1);
    CHECK(table(0, 0.5) == doctest::Approx(0.5));
    CHECK(table(0, -2.0) == doctest::Approx(2.0));
    CHECK(table.convexity_defect(1) <= 1e-12);
    const auto concave = DriverSpec::table({-1.0, 0.0, 1.0}, {{0.0, 1.0, 0.0}}, 0.1);
    CHECK(concave.convexity_defect(1) > 0.1);
    CHECK(concave.value_at_zero(1) == 1.0);

    CHECK_THROWS_AS(DriverSpec::zero(0.0), ValidationError);
    CHECK_THROWS_AS(DriverSpec::table({1.0, 0.0}, {{0.0, 0.0}}, 0.1), ValidationError);
}

TEST_CASE("bsde requires a symmetric binomial tree") {
    CHECK_NOTHROW(require_symmetric_binomial(*ScenarioTree::binomial(3)));
    CHECK_THROWS_AS(require_symmetric_binomial(*ScenarioTree::binomial(2, 0.3)), ValidationError);
    const auto tri = ScenarioTree::build(
        2, {{"r", 0, std::nullopt, std::nullopt}, {"a", 1, "r", 0.25}, {"b", 1, "r", 0.25}, {"c", 1, "r", 0.5}});
    CHECK_THROWS_AS(BsdeRisk(tri, DriverSpec::zero(1.0)), ValidationError);
}

TEST_CASE("bsde sign convention") {
    const auto one = ScenarioTree::binomial(1);
    const auto t1 = StoppingTime::at(one, 1);
    const auto driver = DriverSpec::abs(0.3, 1.0);
    const BsdeRisk rho(one, driver);
    const RandomVariable x(t1, {1.0, -1.0});
    // Terminal -X = (-1, 1): Z = -1, Y_0 = 0 + 0.3 |Z| dt. A fair bet carries positive risk.
    const auto sol = rho.risk_of(x);
    CHECK(sol.z[0] == -1.0);
    CHECK(sol.y[0] == doctest::Approx(0.3).epsilon(1e-15));
    CHECK(rho(x, StoppingTime::at(one, 0))[0] == sol.y[0]);
    // The recursion on terminal value X computes the risk of -X.
    CHECK(solve_bsde(one, driver, x).y[0] == rho.risk_of(-x).y[0]);
    CHECK(rho.risk_of(RandomVariable::constant(t1, 2.0)).y[0] == -2.0);
}

TEST_CASE("bsde with zero driver is the P expectation") {
    const auto tree = ScenarioTree::binomial(4);
    const BsdeRisk rho(tree, DriverSpec::zero(0.25));
    const auto battery = random_battery(StoppingTime::at(tree, 4), 5, 3);
    const auto p = Measure::reference(tree);
    for (const auto& pos : battery)
        for (int t = 0; t <= 4; ++t) {
            const auto s = StoppingTime::at(tree, t);
            CHECK(max_abs_diff(rho(pos.value, s), cond_expectation(-pos.value, p, s)) <= 1e-12);
        }
}

TEST_CASE("bsde with mu|z| equals the rectangular worst case node by node") {
    Rng rng(8);
    for (int trial = 0; trial < 10; ++trial) {
        const int periods = 2 + static_cast<int>(rng.index(4));
        const auto tree = ScenarioTree::binomial(periods);
        const double dt = rng.uniform(0.01, 0.5), mu = rng.uniform(0.0, 0.9 / std::sqrt(dt));
        const auto x = random_battery(StoppingTime::at(tree, periods), 1, trial)[0].value;
        const auto y = BsdeRisk(tree, DriverSpec::abs(mu, dt)).risk_of(x).y;
        const double h = mu * std::sqrt(dt);
        const StableSetRisk rect(from_martingale_family(DiscreteMartingaleFamily::constant(tree, h, 0.0)));
        const auto v = backward_induction(-x, StoppingTime::at(tree, 0),
                                          [&](NodeIndex n, std::span<const double> cv) { return rect.step(n, cv); });
        for (NodeIndex n = 0; n < tree->size(); ++n) {
            CHECK(std::abs(y[n] - v[n]) <= 1e-12);
            if (tree->is_leaf(n)) continue;
            const auto& kids = tree->node(n).children;
            const double yu = y[kids[0]], yd = y[kids[1]];
            CHECK(std::abs(y[n] - (0.5 * (yu + yd) + 0.5 * h * std::abs(yu - yd))) <= 1e-12);
        }
    }
}

TEST_CASE("bsde risk is time consistent and satisfies the axioms") {
    const auto tree = ScenarioTree::binomial(3);
    Rng rng(9);
    std::vector<Triple> triples = deterministic_triples(tree);
    for (int k = 0; k < 6; ++k) {
        const auto tau = random_stopping_time(tree, rng);
        const auto sigma = earliest(random_stopping_time(tree, rng), tau);
        triples.push_back({earliest(random_stopping_time(tree, rng), sigma), sigma, tau});
    }
    // The explicit step is monotone while |g_z| sqrt(dt) <= 1; for the quadratic
    // driver that bounds the spread of the battery by 2 / alpha.
    const std::vector<std::pair<DriverSpec, double>> cases{
        {DriverSpec::quad(1.0, 1.0 / 3), 0.5},
        {DriverSpec::abs(0.7, 1.0 / 3), 8.0},
        {DriverSpec::table({-1.0, 0.0, 2.0}, {{1.0, 0.0, 3.0}}, 0.2), 8.0}};
    for (const auto& [driver, bound] : cases) {
        std::vector<Position> battery, extra;
        for (int t = 0; t <= tree->horizon(); ++t) {
            auto b = default_battery(StoppingTime::at(tree, t), {static_cast<std::uint64_t>(t), 6, bound});
            battery.insert(battery.end(), b.begin(), b.end());
        }
        for (const auto& t : triples) {
            auto b = random_battery(t[2], 2, 5, bound);
            extra.insert(extra.end(), b.begin(), b.end());
        }
        const BsdeRisk rho(tree, driver);
        CHECK(check_time_consistency(rho, battery, triples).max_residual() <= 1e-12);
        CHECK(check_time_consistency(rho, extra, triples).max_residual() <= 1e-12);
        AxiomOptions opts;
        opts.tolerance = 1e-12;
        const auto rep = check_axioms(rho, battery, deterministic_pairs(tree), opts);
        double mono = 0.0, trans = 0.0;
        for (const auto& c : rep.cases) {
            if (c.x_label.rfind("monotonicity", 0) == 0) mono = std::max(mono, c.residual);
            if (c.x_label.rfind("translation", 0) == 0) trans = std::max(trans, c.residual);
        }
        CHECK(mono <= 1e-12);
        CHECK(trans <= 1e-12);
        CHECK(rep.max_residual() <= 1e-9);
    }
}

TEST_CASE("recombining lattices agree with the full tree") {
    const int n = 6;
    const double dt = 1.0 / n;
    const auto tree = ScenarioTree::binomial(n);
    const LatticePayoff f = [](double b) { return std::sin(2.0 * b) + 0.3 * b * b; };
    const auto x = on_leaves(tree, dt, f);
    const auto driver = DriverSpec::quad(1.5, dt);
    CHECK(bsde_lattice_risk(n, driver, f) == doctest::Approx(BsdeRisk(tree, driver).risk_of(x).y[0]).epsilon(1e-13));
    const EntropicRisk ent(tree, EntropicSpec::exponential(1.5, 0.0));
    CHECK(entropic_lattice_risk(n, 1.5, f) == doctest::Approx(ent(x, StoppingTime::at(tree, 0))[0]).epsilon(1e-13));
}

TEST_CASE("quadratic driver converges to entropic risk at first order for smooth payoffs") {
    for (const LatticePayoff& f : {LatticePayoff([](double b) { return std::max(b, 0.0); }),
                                   LatticePayoff([](double b) { return std::tanh(b); })}) {
        std::vector<double> err;
        for (int n : {8, 16, 32}) {
            const auto driver = DriverSpec::quad(1.0, 1.0 / n);
            err.push_back(std::abs(bsde_lattice_risk(n, driver, f) - entropic_lattice_risk(n, 1.0, f)));
        }
        for (std::size_t i = 0; i + 1 < err.size(); ++i) {
            CHECK(err[i] / err[i + 1] >= 1.6);
            CHECK(err[i] / err[i + 1] <= 2.4);
        }
    }
}
