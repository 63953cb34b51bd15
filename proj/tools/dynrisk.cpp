// dynrisk: command-line checkers for dynamic convex risk measures.
//
// Every subcommand writes a JSON report and exits 0 on pass, 2 on a certified
// violation and 1 on an input error (no report written).

#include "dynrisk/consistency.hpp"
#include "dynrisk/io.hpp"
#include "dynrisk/models.hpp"
#include "dynrisk/riskcore.hpp"
#include "dynrisk/rng.hpp"
#include "dynrisk/stableset.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdlib>
#include <iostream>
#include <memory>
#include <optional>

using namespace dynrisk;

namespace {

struct Config {
    std::string tree, model, payoff, out;
    std::vector<std::string> measures;
    double tolerance = default_tolerance;
    std::optional<std::uint64_t> seed;
    std::string lattice_payoff = "indicator";
    std::vector<int> steps{8, 16, 32};
};

struct Model {
    io::ModelKind kind{};
    std::unique_ptr<DynamicRiskMeasure> rho;
    PenaltyFunction penalty; ///< empty when no closed-form penalty is available
    std::vector<LabelledMeasure> generators;
    std::optional<DualFamily> family;
    std::optional<RectangularFamily> rectangular;
    std::optional<EntropicSpec> entropic;
    std::optional<DriverSpec> driver;
};

class Failure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::uint64_t resolve_seed(const Config& c) {
    if (c.seed) return *c.seed;
    if (const char* env = std::getenv("DYNRISK_SEED")) {
        char* end = nullptr;
        const auto v = std::strtoull(env, &end, 10);
        if (end && *end == '\0' && end != env) return v;
        throw Failure("DYNRISK_SEED must be a nonnegative integer");
    }
    return 0;
}

TreePtr load_tree(const Config& c) {
    if (c.tree.empty()) throw Failure("--tree is required");
    return io::parse_tree(io::read_source(c.tree));
}

Measure random_measure(const TreePtr& tree, Rng& rng) {
    std::vector<double> trans(tree->size(), 1.0);
    for (NodeIndex n = 0; n < tree->size(); ++n) {
        const auto& kids = tree->node(n).children;
        if (kids.empty()) continue;
        double s = 0.0;
        for (NodeIndex k : kids) s += (trans[k] = rng.uniform(0.05, 1.0));
        for (NodeIndex k : kids) trans[k] /= s;
    }
    return Measure::from_transitions(tree, std::move(trans));
}

Model load_model(const Config& c, const TreePtr& tree) {
    if (c.model.empty()) throw Failure("--model is required");
    const auto src = io::read_source(c.model);
    Model m;
    m.kind = io::detect_model(src);
    switch (m.kind) {
    case io::ModelKind::dual_family: {
        m.family = io::parse_dual_family(src, tree);
        m.rho = std::make_unique<DualFamilyRisk>(*m.family);
        m.penalty = [fam = *m.family](const Measure& q, const StoppingTime& s,
                                      const StoppingTime& t) {
            return minimal_penalty_lp(fam, q, s, t);
        };
        for (const auto& mem : m.family->members()) m.generators.push_back({mem.label, mem.measure});
        break;
    }
    case io::ModelKind::entropic: {
        m.entropic = io::parse_entropic(src);
        m.rho = std::make_unique<EntropicRisk>(tree, *m.entropic);
        m.penalty = entropic_penalty_function(*m.entropic);
        m.generators.push_back({"P", Measure::reference(tree)});
        break;
    }
    case io::ModelKind::rectangular: {
        m.rectangular = io::parse_rectangular(src, tree);
        m.rho = std::make_unique<StableSetRisk>(*m.rectangular);
        m.penalty = stable_penalty_function(*m.rectangular);
        try {
            std::size_t k = 0;
            for (auto& s : selection_measures(*m.rectangular, 2, 4096))
                m.generators.push_back({"sel#" + std::to_string(k++), std::move(s.measure)});
        } catch (const ValidationError&) {
            m.generators.push_back({"P", Measure::reference(tree)});
        }
        break;
    }
    case io::ModelKind::driver: {
        m.driver = io::parse_driver(src);
        m.rho = std::make_unique<BsdeRisk>(tree, *m.driver);
        m.generators.push_back({"P", Measure::reference(tree)});
        break;
    }
    }
    return m;
}

std::vector<LabelledMeasure> load_measures(const Config& c, const TreePtr& tree) {
    std::vector<LabelledMeasure> out;
    for (const auto& path : c.measures) out.push_back({path, io::parse_measure(io::read_source(path), tree)});
    return out;
}

// Generators, P, random pastes of generators and random perturbations.
std::vector<LabelledMeasure> sample_measures(const Model& m, const TreePtr& tree,
                                             std::uint64_t seed) {
    std::vector<LabelledMeasure> out = m.generators;
    out.push_back({"P", Measure::reference(tree)});
    Rng rng(seed);
    for (int k = 0; k < 20 && !m.generators.empty(); ++k) {
        const auto& q = m.generators[rng.index(m.generators.size())];
        const auto& r = m.generators[rng.index(m.generators.size())];
        const auto sigma = random_stopping_time(tree, rng);
        out.push_back({"paste(" + q.label + "," + r.label + ")@" + sigma.label(),
                       paste(q.measure, r.measure, StoppingTime::at(tree, 0), sigma)});
    }
    for (int k = 0; k < 4; ++k) out.push_back({"random#" + std::to_string(k), random_measure(tree, rng)});
    return out;
}

std::vector<Position> battery_at(const StoppingTime& tau, std::uint64_t seed,
                                 std::size_t target = 50) {
    BatteryOptions bo;
    bo.seed = seed;
    const std::size_t base = 5 + 2 * tau.atom_count();
    bo.random_count = target > base + 4 ? target - base : 4;
    return default_battery(tau, bo);
}

int finish(const Report& rep, const Config& c) {
    io::write_text(io::report_to_json(rep), c.out);
    return rep.passed() ? 0 : 2;
}

int cmd_check_axioms(const Config& c) {
    const auto tree = load_tree(c);
    const auto m = load_model(c, tree);
    const auto seed = resolve_seed(c);
    std::vector<Position> battery;
    for (int t = 0; t <= tree->horizon(); ++t) {
        BatteryOptions bo;
        bo.seed = seed + static_cast<std::uint64_t>(t);
        auto b = default_battery(StoppingTime::at(tree, t), bo);
        battery.insert(battery.end(), b.begin(), b.end());
    }
    AxiomOptions opts;
    opts.tolerance = c.tolerance;
    auto rep = check_axioms(*m.rho, battery, deterministic_pairs(tree), opts);
    rep.notes.push_back("model: " + io::to_string(m.kind) + " (" + m.rho->provenance() + ")");
    return finish(rep, c);
}

int cmd_check_consistency(const Config& c) {
    const auto tree = load_tree(c);
    const auto m = load_model(c, tree);
    const auto battery = battery_at(StoppingTime::at(tree, tree->horizon()), resolve_seed(c));
    auto rep = check_time_consistency(*m.rho, battery, deterministic_triples(tree), c.tolerance);
    rep.metrics["battery_size"] = static_cast<double>(battery.size());
    if (m.entropic) {
        const auto th = threshold_is_consistent(*m.entropic, tree->horizon());
        rep.metrics["threshold_defect"] = th.defect;
        rep.metrics["threshold_defect_over_alpha"] = th.defect / m.entropic->alpha();
    }
    rep.notes.push_back("model: " + io::to_string(m.kind));
    return finish(rep, c);
}

int cmd_check_cocycle(const Config& c) {
    const auto tree = load_tree(c);
    const auto m = load_model(c, tree);
    if (!m.penalty) throw Failure("model kind '" + io::to_string(m.kind) + "' has no penalty function");
    auto samples = load_measures(c, tree);
    if (samples.empty()) samples = sample_measures(m, tree, resolve_seed(c));
    auto rep = check_cocycle(m.penalty, samples, deterministic_triples(tree), c.tolerance);
    rep.metrics["samples"] = static_cast<double>(samples.size());
    return finish(rep, c);
}

int cmd_min_penalty(const Config& c) {
    const auto tree = load_tree(c);
    const auto m = load_model(c, tree);
    if (!m.penalty) throw Failure("model kind '" + io::to_string(m.kind) + "' has no penalty function");
    const auto qs = load_measures(c, tree);
    if (qs.empty()) throw Failure("--measure is required");
    const auto sigma = StoppingTime::at(tree, 0);
    const auto tau = StoppingTime::at(tree, tree->horizon());
    const auto grid = default_oracle_grid(tau, resolve_seed(c));

    Report rep;
    rep.check = "min-penalty";
    rep.tolerance = c.tolerance;
    for (const auto& [label, q] : qs) {
        const auto exact = m.penalty(q, sigma, tau);
        const auto oracle = minimal_penalty_oracle(*m.rho, q, sigma, grid);
        for (std::size_t a = 0; a < sigma.atom_count(); ++a) {
            const auto id = tree->id(sigma.atom(a));
            const double e = exact.values[a].to_double();
            rep.metrics["exact[" + label + "][" + id + "]"] = e;
            rep.metrics["oracle[" + label + "][" + id + "]"] = oracle[a];
            // The oracle is a lower bound; exceeding the exact value is a violation.
            rep.cases.push_back({{sigma.label(), tau.label()}, label,
                                 std::max(oracle[a] - e, 0.0), id});
        }
    }
    rep.metrics["grid_size"] = static_cast<double>(grid.size());
    return finish(rep, c);
}

int cmd_risk_process(const Config& c) {
    const auto tree = load_tree(c);
    const auto m = load_model(c, tree);
    if (!m.penalty) throw Failure("model kind '" + io::to_string(m.kind) + "' has no penalty function");
    if (c.payoff.empty()) throw Failure("--payoff is required");
    const auto x = io::parse_payoff(io::read_source(c.payoff), tree);
    const auto qs = load_measures(c, tree);
    const auto q = qs.empty() ? Measure::reference(tree) : qs.front().measure;
    const auto rp = risk_process(*m.rho, x, q, m.penalty, resolve_seed(c), c.tolerance);

    Report rep = rp.supermartingale;
    rep.check = "risk-process";
    for (const auto& cs : rp.convergence.cases) rep.cases.push_back(cs);
    rep.cases.push_back({{"t=0"}, "V(root) - rho_{0,T}(X)", rp.root_error, tree->id(0)});
    rep.cases.push_back({{"t=" + std::to_string(tree->horizon())}, "V(leaf) + X", rp.leaf_error, ""});
    for (NodeIndex n = 0; n < tree->size(); ++n) rep.metrics["V[" + tree->id(n) + "]"] = rp.values[n];
    return finish(rep, c);
}

double lattice_payoff(const std::string& kind, double b) {
    if (kind == "indicator") return b > 0.0 ? 1.0 : 0.0;
    if (kind == "linear") return b;
    if (kind == "call") return std::max(b, 0.0);
    throw Failure("unknown lattice payoff '" + kind + "'");
}

int cmd_bsde_compare(const Config& c) {
    if (c.model.empty()) throw Failure("--model is required");
    const auto driver = io::parse_driver(io::read_source(c.model));
    Report rep;
    rep.check = "bsde-compare";
    rep.tolerance = c.tolerance;
    const auto payoff = [&](double b) { return lattice_payoff(c.lattice_payoff, b); };

    if (driver.kind() == DriverSpec::Kind::quad) {
        std::vector<double> err;
        for (int n : c.steps) {
            const double e = std::abs(bsde_lattice_risk(n, driver, payoff) -
                                      entropic_lattice_risk(n, driver.parameter(), payoff));
            err.push_back(e);
            rep.metrics["error[N=" + std::to_string(n) + "]"] = e;
        }
        for (std::size_t i = 0; i + 1 < err.size(); ++i) {
            const double ratio = err[i] / err[i + 1];
            const auto tag = std::to_string(c.steps[i]) + "->" + std::to_string(c.steps[i + 1]);
            rep.metrics["ratio[" + tag + "]"] = ratio;
            // Distance of the observed ratio from the first-order window [1.6, 2.4].
            const double miss = std::isfinite(ratio) ? std::max({1.6 - ratio, ratio - 2.4, 0.0})
                                                     : std::numeric_limits<double>::infinity();
            rep.cases.push_back({{tag}, c.lattice_payoff + " payoff, ratio window [1.6, 2.4]", miss, ""});
        }
        rep.tolerance = 0.0;
        return finish(rep, c);
    }

    const auto tree = c.tree.empty() ? ScenarioTree::binomial(8) : load_tree(c);
    const auto end = StoppingTime::at(tree, tree->horizon());
    const auto x = RandomVariable::from_nodes(end, [&](NodeIndex n) {
        int ups = 0;
        for (auto k = n; k != 0; k = *tree->node(k).parent)
            if (tree->node(*tree->node(k).parent).children[0] == k) ++ups;
        return payoff((2 * ups - tree->horizon()) * std::sqrt(driver.dt()));
    });
    const BsdeRisk bsde(tree, driver);
    const auto y = bsde.risk_of(x).y;

    std::vector<double> ref;
    std::string against;
    if (driver.kind() == DriverSpec::Kind::abs) {
        const double h = driver.parameter() * std::sqrt(driver.dt());
        const StableSetRisk rect(from_martingale_family(DiscreteMartingaleFamily::constant(tree, h, 0.0)));
        ref = backward_induction(-x, StoppingTime::at(tree, 0),
                                 [&](NodeIndex n, std::span<const double> cv) { return rect.step(n, cv); });
        against = "rectangular worst case";
    } else if (driver.kind() == DriverSpec::Kind::zero) {
        const auto p = Measure::reference(tree);
        ref.assign(tree->size(), 0.0);
        for (int t = 0; t <= tree->horizon(); ++t) {
            const auto st = StoppingTime::at(tree, t);
            const auto e = kernel_expectation(-x, p, st);
            for (std::size_t a = 0; a < st.atom_count(); ++a) ref[st.atom(a)] = e[a];
        }
        against = "P-expectation";
    } else {
        throw Failure("bsde-compare supports the quad, abs and zero drivers");
    }
    double worst = 0.0;
    NodeIndex where = 0;
    for (NodeIndex n = 0; n < tree->size(); ++n)
        if (std::abs(y[n] - ref[n]) > worst) {
            worst = std::abs(y[n] - ref[n]);
            where = n;
        }
    rep.tolerance = c.tolerance < 1e-12 ? c.tolerance : 1e-12;
    rep.cases.push_back({{"nodes"}, "BSDE vs " + against, worst, tree->id(where)});
    return finish(rep, c);
}

int cmd_stable_check(const Config& c) {
    const auto tree = load_tree(c);
    const auto m = load_model(c, tree);
    Report rep;
    rep.check = "stable-check";
    rep.tolerance = 1e-12;
    std::vector<std::pair<StoppingTime, StoppingTime>> pairs = deterministic_pairs(tree);

    std::vector<LabelledMeasure> members;
    if (m.rectangular) {
        for (auto& s : selection_measures(*m.rectangular, 2, 4096))
            members.push_back({"sel#" + std::to_string(members.size()), std::move(s.measure)});
        const auto end = StoppingTime::at(tree, tree->horizon());
        const auto battery = battery_at(end, resolve_seed(c));
        auto tc = check_time_consistency(*m.rho, battery, deterministic_triples(tree), 1e-12);
        const auto worst_tc = tc.worst();
        if (worst_tc) rep.cases.push_back(*worst_tc);
        for (int t = 0; t <= tree->horizon(); ++t) {
            const auto st = StoppingTime::at(tree, t);
            double worst = -1.0;
            std::string where, label;
            for (const auto& pos : battery) {
                const auto dp = (*m.rho)(pos.value, st);
                const auto bf = brute_force_esssup(*m.rectangular, pos.value, st);
                for (std::size_t a = 0; a < st.atom_count(); ++a)
                    if (std::abs(dp[a] - bf[a]) > worst) {
                        worst = std::abs(dp[a] - bf[a]);
                        where = tree->id(st.atom(a));
                        label = pos.label;
                    }
            }
            rep.cases.push_back({{st.label(), end.label()}, "DP vs vertex enumeration: " + label, worst, where});
        }
        rep.tolerance = 1e-10;
    } else if (m.family) {
        for (const auto& mem : m.family->members()) members.push_back({mem.label, mem.measure});
    } else {
        throw Failure("stable-check needs a rectangular or dual-family model");
    }

    const auto st = check_stable(members, pairs);
    rep.metrics["pastes_checked"] = static_cast<double>(st.pastes_checked);
    rep.metrics["members"] = static_cast<double>(members.size());
    for (const auto& miss : st.missing) {
        double closest = std::numeric_limits<double>::infinity();
        for (const auto& mem : members)
            closest = std::min(closest, mem.measure.max_transition_diff(miss.pasted));
        std::string trans;
        for (NodeIndex n = 1; n < tree->size(); ++n)
            trans += (n > 1 ? "," : "") + tree->id(n) + "=" + io::format_number(miss.pasted.transition(n));
        rep.cases.push_back({{miss.nu, miss.sigma},
                             "missing paste of " + miss.q_label + " after " + miss.r_label + ": " + trans,
                             closest, miss.sigma});
    }
    if (st.missing.empty())
        rep.cases.push_back({{"all pairs"}, "every paste is a member", 0.0, ""});
    return finish(rep, c);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Checkers for dynamic convex risk measures on scenario trees"};
    app.require_subcommand(1);
    Config cfg;
    std::uint64_t seed_value = 0;

    auto common = [&](CLI::App* sub, bool model = true) {
        sub->add_option("--tree", cfg.tree, "Tree spec (JSON)");
        if (model) sub->add_option("--model", cfg.model, "Model spec (JSON)");
        sub->add_option("--tolerance", cfg.tolerance, "Residual tolerance")->check(CLI::PositiveNumber);
        sub->add_option("--seed", seed_value, "Battery seed (default: DYNRISK_SEED or 0)");
        sub->add_option("--out", cfg.out, "Report path (default: stdout)");
    };

    auto* axioms = app.add_subcommand("check-axioms", "Monotonicity, translation, convexity, regularity");
    common(axioms);
    auto* consistency = app.add_subcommand("check-consistency", "Time consistency over deterministic triples");
    common(consistency);
    auto* cocycle = app.add_subcommand("check-cocycle", "Cocycle condition of the penalty");
    common(cocycle);
    cocycle->add_option("--measure", cfg.measures, "Measure spec(s) to test (default: sampled)");
    auto* minpen = app.add_subcommand("min-penalty", "Exact minimal penalty against the conjugate oracle");
    common(minpen);
    minpen->add_option("--measure", cfg.measures, "Measure spec(s)")->required();
    auto* process = app.add_subcommand("risk-process", "Risk process and its supermartingale property");
    common(process);
    process->add_option("--payoff", cfg.payoff, "Payoff spec at T (JSON)")->required();
    process->add_option("--measure", cfg.measures, "Zero-penalty measure (default: P)");
    auto* bsde = app.add_subcommand("bsde-compare", "BSDE recursion against closed forms");
    common(bsde);
    bsde->add_option("--lattice-payoff", cfg.lattice_payoff, "indicator, linear or call")
        ->check(CLI::IsMember({"indicator", "linear", "call"}));
    bsde->add_option("--steps", cfg.steps, "Lattice step counts for the convergence study");
    auto* stable = app.add_subcommand("stable-check", "Stability under pasting and DP vs enumeration");
    common(stable);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }
    for (auto* sub : app.get_subcommands())
        if (sub->count("--seed") > 0) cfg.seed = seed_value;

    try {
        if (*axioms) return cmd_check_axioms(cfg);
        if (*consistency) return cmd_check_consistency(cfg);
        if (*cocycle) return cmd_check_cocycle(cfg);
        if (*minpen) return cmd_min_penalty(cfg);
        if (*process) return cmd_risk_process(cfg);
        if (*bsde) return cmd_bsde_compare(cfg);
        if (*stable) return cmd_stable_check(cfg);
    } catch (const std::exception& e) {
        std::cerr << "dynrisk: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
