#include "dynrisk/riskcore.hpp"

#include "dynrisk/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace dynrisk {

ExtendedReal DualMember::penalty_at(NodeIndex n) const {
    auto it = penalty.find(n);
    return it == penalty.end() ? default_penalty : it->second;
}

DualFamily::DualFamily(std::vector<DualMember> members) : members_(std::move(members)) {
    if (members_.empty()) throw ValidationError("dual family must be nonempty");
    const auto& tree = members_.front().measure.tree();
    for (std::size_t k = 0; k < members_.size(); ++k) {
        auto& m = members_[k];
        if (m.measure.tree() != tree)
            throw ValidationError("dual family members live on different trees");
        if (m.label.empty()) m.label = "Q" + std::to_string(k);
        for (const auto& [n, c] : m.penalty) {
            if (n >= tree->size()) throw ValidationError("penalty names an unknown node");
            if (c.is_finite() && !std::isfinite(c.value()))
                throw ValidationError("penalty must be finite or +inf", tree->id(n));
        }
    }
}

DualFamily DualFamily::from_measures(std::vector<Measure> measures) {
    std::vector<DualMember> members;
    members.reserve(measures.size());
    for (auto& q : measures) members.push_back(DualMember{std::move(q), {}, 0.0, {}});
    return DualFamily(std::move(members));
}

namespace {

struct AtomMax {
    std::vector<double> value;
    std::vector<std::size_t> member;
};

AtomMax maximize(const DualFamily& family, const RandomVariable& x, const StoppingTime& sigma) {
    const auto neg = -x;
    AtomMax out;
    out.value.assign(sigma.atom_count(), -std::numeric_limits<double>::infinity());
    out.member.assign(sigma.atom_count(), family.size());
    for (std::size_t k = 0; k < family.size(); ++k) {
        const auto& m = family.members()[k];
        const auto e = kernel_expectation(neg, m.measure, sigma);
        for (std::size_t a = 0; a < sigma.atom_count(); ++a) {
            const auto c = m.penalty_at(sigma.atom(a));
            if (c.is_infinite()) continue;
            const double v = e[a] - c.value();
            if (v > out.value[a]) {
                out.value[a] = v;
                out.member[a] = k;
            }
        }
    }
    for (std::size_t a = 0; a < sigma.atom_count(); ++a)
        if (out.member[a] == family.size())
            throw ValidationError("every member has infinite penalty at the atom",
                                  sigma.tree()->id(sigma.atom(a)));
    return out;
}

void require_pair(const RandomVariable& x, const StoppingTime& sigma, const TreePtr& tree) {
    if (x.anchor().tree() != tree || sigma.tree() != tree)
        throw ValidationError("position and stopping time belong to a different tree");
    if (!precedes(sigma, x.anchor())) throw ValidationError("sigma <= tau required");
}

} // namespace

RandomVariable evaluate_dual(const DualFamily& family, const RandomVariable& x,
                             const StoppingTime& sigma) {
    require_pair(x, sigma, family.tree());
    return RandomVariable(sigma, maximize(family, x, sigma).value);
}

DualFamilyRisk::DualFamilyRisk(DualFamily family)
    : DynamicRiskMeasure(family.tree()), family_(std::move(family)) {}

RandomVariable DualFamilyRisk::do_evaluate(const RandomVariable& x,
                                           const StoppingTime& sigma) const {
    return RandomVariable(sigma, maximize(family_, x, sigma).value);
}

namespace {

// Running worst case for one axiom on one (sigma, tau) pair.
struct Worst {
    double residual = 0.0;
    std::string label;
    std::string atom;
    bool seen = false;

    void offer(double r, const std::string& what, const std::string& at) {
        if (!seen || r > residual || std::isnan(r)) {
            if (seen && std::isnan(residual)) return;
            residual = r;
            label = what;
            atom = at;
            seen = true;
        }
    }
};

RandomVariable abs_value(const RandomVariable& x) {
    std::vector<double> v(x.values().begin(), x.values().end());
    for (auto& e : v) e = std::abs(e);
    return RandomVariable(x.anchor(), std::move(v));
}

// Largest entry of f(a) over sigma-atoms, with the atom id.
template <class F>
std::pair<double, std::string> atom_max(const StoppingTime& sigma, F&& f) {
    double best = -std::numeric_limits<double>::infinity();
    std::size_t where = 0;
    for (std::size_t a = 0; a < sigma.atom_count(); ++a) {
        const double r = f(a);
        if (std::isnan(r)) return {r, sigma.tree()->id(sigma.atom(a))};
        if (r > best) {
            best = r;
            where = a;
        }
    }
    return {best, sigma.tree()->id(sigma.atom(where))};
}

std::string short_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

} // namespace

Report check_axioms(const DynamicRiskMeasure& rho, const std::vector<Position>& battery,
                    const std::vector<std::pair<StoppingTime, StoppingTime>>& pairs,
                    const AxiomOptions& opts) {
    Report rep;
    rep.check = "axioms";
    rep.tolerance = opts.tolerance;
    if (battery.empty()) throw std::invalid_argument("check_axioms: empty battery");
    const auto p = Measure::reference(rho.tree());

    for (const auto& [sigma, tau] : pairs) {
        const auto elems = anchored_at(battery, tau);
        if (elems.empty()) {
            ++rep.skipped;
            rep.notes.push_back("no battery element anchored at " + tau.label());
            continue;
        }
        const std::vector<std::string> triple{sigma.label(), tau.label()};
        std::vector<RandomVariable> r;
        r.reserve(elems.size());
        for (const auto* e : elems) r.push_back(rho(e->value, sigma));

        Worst mono, trans, conv, reg;
        for (std::size_t i = 0; i < elems.size(); ++i) {
            const auto& xi = elems[i]->value;
            for (std::size_t j = 0; j < elems.size(); ++j) {
                const auto& xj = elems[j]->value;

                const auto ry = rho(xi + abs_value(xj), sigma);
                auto [m, ma] = atom_max(sigma, [&](std::size_t a) { return ry[a] - r[i][a]; });
                mono.offer(std::max(m, 0.0),
                           elems[i]->label + " <= " + elems[i]->label + "+|" + elems[j]->label + "|",
                           ma);

                for (double lam : opts.lambdas) {
                    const auto rc = rho(lam * xi + (1.0 - lam) * xj, sigma);
                    auto [c, ca] = atom_max(sigma, [&](std::size_t a) {
                        return rc[a] - lam * r[i][a] - (1.0 - lam) * r[j][a];
                    });
                    conv.offer(std::max(c, 0.0),
                               short_number(lam) + "*" + elems[i]->label + " + " +
                                   short_number(1.0 - lam) + "*" + elems[j]->label,
                               ca);
                }

                for (std::size_t s = 0; s < sigma.atom_count(); ++s) {
                    const NodeIndex an = sigma.atom(s);
                    const auto w = RandomVariable::from_nodes(tau, [&](NodeIndex n) {
                        return tau.tree()->contains(an, n) ? xi.at_node(n) : xj.at_node(n);
                    });
                    const auto rw = rho(w, sigma);
                    auto [g, ga] = atom_max(sigma, [&](std::size_t a) {
                        return std::abs(rw[a] - (a == s ? r[i][a] : r[j][a]));
                    });
                    reg.offer(g,
                              elems[i]->label + " on " + tau.tree()->id(an) + ", " +
                                  elems[j]->label + " elsewhere",
                              ga);
                }
            }
        }

        std::vector<std::pair<std::string, RandomVariable>> shifts;
        for (const auto* e : elems)
            shifts.emplace_back("E_P[" + e->label + "]", cond_expectation(e->value, p, sigma));
        if (opts.constant_shifts) {
            shifts.emplace_back("1", RandomVariable::constant(sigma, 1.0));
            shifts.emplace_back("-1", RandomVariable::constant(sigma, -1.0));
        }
        for (std::size_t i = 0; i < elems.size(); ++i) {
            for (const auto& [zl, z] : shifts) {
                const auto rz = rho(elems[i]->value + lift(z, tau), sigma);
                auto [t, ta] = atom_max(sigma, [&](std::size_t a) {
                    return std::abs(rz[a] - (r[i][a] - z[a]));
                });
                trans.offer(t, elems[i]->label + " + " + zl, ta);
            }
        }

        auto push = [&](const char* axiom, const Worst& w) {
            rep.cases.push_back(
                ReportCase{triple, std::string(axiom) + ": " + w.label, w.residual, w.atom});
        };
        push("monotonicity", mono);
        push("translation", trans);
        push("convexity", conv);
        push("regularity", reg);
    }
    rep.metrics["battery_size"] = static_cast<double>(battery.size());
    return rep;
}

std::vector<bool> is_acceptable(const DynamicRiskMeasure& rho, const RandomVariable& x,
                                const Measure& q, const StoppingTime& sigma, double tol) {
    const auto r = rho(x, sigma);
    const auto mass = restrict_measure(q, sigma);
    std::vector<bool> out(sigma.atom_count());
    for (std::size_t a = 0; a < out.size(); ++a) out[a] = mass[a] <= 0.0 || r[a] <= tol;
    return out;
}

PenaltyVariable minimal_penalty_lp(const DualFamily& family, const Measure& q,
                                   const StoppingTime& sigma, const StoppingTime& tau) {
    if (q.tree() != family.tree() || sigma.tree() != family.tree() || tau.tree() != family.tree())
        throw ValidationError("measure or stopping times belong to a different tree");
    if (!precedes(sigma, tau)) throw ValidationError("sigma <= tau required");

    PenaltyVariable out{sigma, {}};
    out.values.reserve(sigma.atom_count());
    std::vector<std::ptrdiff_t> row_of(tau.atom_count(), -1);

    for (NodeIndex n : sigma.atoms()) {
        const auto target = conditional_law(q, n, tau);
        std::size_t rows = 0;
        for (auto& r : row_of) r = -1;
        for (const auto& [a, w] : target) row_of[a] = static_cast<std::ptrdiff_t>(rows++);

        lp::Problem prob;
        prob.a.assign(rows + 1, {});
        prob.b.assign(rows + 1, 0.0);
        for (const auto& [a, w] : target) prob.b[static_cast<std::size_t>(row_of[a])] = w;
        prob.b[rows] = 1.0;
        for (const auto& m : family.members()) {
            const auto c = m.penalty_at(n);
            if (c.is_infinite()) continue;
            prob.c.push_back(c.value());
            for (auto& row : prob.a) row.push_back(0.0);
            for (const auto& [a, w] : conditional_law(m.measure, n, tau))
                prob.a[static_cast<std::size_t>(row_of[a])].back() = w;
            prob.a[rows].back() = 1.0;
        }
        if (prob.c.empty()) {
            out.values.push_back(ExtendedReal::infinity());
            continue;
        }
        const auto res = lp::solve(prob);
        if (res.status == lp::Status::infeasible) {
            out.values.push_back(ExtendedReal::infinity());
        } else if (res.status == lp::Status::optimal) {
            out.values.push_back(res.objective);
        } else {
            throw lp::SolverError(res.status, "minimal penalty LP at node '" +
                                                  family.tree()->id(n) +
                                                  "': " + lp::to_string(res.status));
        }
    }
    return out;
}

RandomVariable minimal_penalty_oracle(const DynamicRiskMeasure& rho, const Measure& q,
                                      const StoppingTime& sigma,
                                      std::span<const RandomVariable> grid) {
    if (grid.empty()) throw std::invalid_argument("minimal_penalty_oracle: empty grid");
    std::vector<double> best(sigma.atom_count(), -std::numeric_limits<double>::infinity());
    for (const auto& x : grid) {
        const auto e = kernel_expectation(-x, q, sigma);
        const auto r = rho(x, sigma);
        for (std::size_t a = 0; a < best.size(); ++a) best[a] = std::max(best[a], e[a] - r[a]);
    }
    return RandomVariable(sigma, std::move(best));
}

std::vector<RandomVariable> default_oracle_grid(const StoppingTime& tau, std::uint64_t seed,
                                                std::size_t random_count) {
    const std::size_t k = tau.atom_count();
    std::vector<std::vector<std::size_t>> sets;
    if (k <= 10) {
        for (std::size_t mask = 1; mask < (std::size_t{1} << k); ++mask) {
            std::vector<std::size_t> s;
            for (std::size_t a = 0; a < k; ++a)
                if (mask >> a & 1U) s.push_back(a);
            sets.push_back(std::move(s));
        }
    } else {
        for (std::size_t a = 0; a < k; ++a) {
            sets.push_back({a});
            std::vector<std::size_t> c;
            for (std::size_t b = 0; b < k; ++b)
                if (b != a) c.push_back(b);
            sets.push_back(std::move(c));
        }
    }
    std::vector<RandomVariable> grid;
    grid.push_back(RandomVariable::constant(tau, 0.0));
    for (const auto& s : sets)
        for (double lam : {1.0, 2.0, 4.0, 8.0}) {
            grid.push_back(indicator(tau, s, lam));
            grid.push_back(indicator(tau, s, -lam));
        }
    Rng rng(seed);
    for (std::size_t i = 0; i < random_count; ++i) {
        std::vector<double> v(k);
        for (auto& e : v) e = rng.uniform(-8.0, 8.0);
        grid.emplace_back(tau, std::move(v));
    }
    return grid;
}

std::vector<RandomVariable> scaled_indicator_grid(const StoppingTime& tau, double bound,
                                                  std::size_t points_per_indicator) {
    if (points_per_indicator < 2) throw std::invalid_argument("need at least two grid points");
    const auto d = static_cast<double>(points_per_indicator - 1);
    std::vector<RandomVariable> grid;
    grid.reserve(tau.atom_count() * points_per_indicator);
    for (std::size_t a = 0; a < tau.atom_count(); ++a) {
        const std::size_t one[] = {a};
        for (std::size_t i = 0; i < points_per_indicator; ++i) {
            const auto di = static_cast<double>(i);
            const double s = (bound * di - bound * (d - di)) / d;
            grid.push_back(indicator(tau, one, s));
        }
    }
    return grid;
}

ArgmaxResult argmax_measure(const DualFamily& family, const RandomVariable& x,
                            const StoppingTime& sigma, const Measure& base) {
    require_pair(x, sigma, family.tree());
    if (base.tree() != family.tree()) throw ValidationError("base measure on a different tree");
    const auto best = maximize(family, x, sigma);
    const auto& tree = *family.tree();
    std::vector<double> trans(base.transitions().begin(), base.transitions().end());
    for (std::size_t a = 0; a < sigma.atom_count(); ++a) {
        const NodeIndex n = sigma.atom(a);
        const auto& q = family.members()[best.member[a]].measure;
        for (NodeIndex m = n + 1; m < n + tree.subtree_size(n); ++m) trans[m] = q.transition(m);
    }
    return ArgmaxResult{Measure::from_transitions(family.tree(), std::move(trans)), best.member,
                        RandomVariable(sigma, best.value)};
}

} // namespace dynrisk
