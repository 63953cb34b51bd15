#include "dynrisk/consistency.hpp"

#include "dynrisk/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace dynrisk {

namespace {

std::vector<std::string> labels(const Triple& t) {
    return {t[0].label(), t[1].label(), t[2].label()};
}

void require_ordered(const Triple& t) {
    if (!precedes(t[0], t[1]) || !precedes(t[1], t[2]))
        throw ValidationError("triple must satisfy nu <= sigma <= tau: (" + t[0].label() + ", " +
                              t[1].label() + ", " + t[2].label() + ")");
}

// E_Q(v | n) for an extended-real variable anchored at sigma; empty when an
// infinite value carries positive conditional mass.
std::optional<double> cond_extended(const PenaltyVariable& v, const Measure& q, NodeIndex n) {
    double s = 0.0;
    for (const auto& [a, w] : conditional_law(q, n, v.anchor)) {
        if (w <= 0.0) continue;
        if (v.values[a].is_infinite()) return std::nullopt;
        s += w * v.values[a].value();
    }
    return s;
}

struct AtomWorst {
    double residual = -1.0;
    std::string atom;

    void offer(double r, const std::string& at) {
        if (std::isnan(residual)) return;
        if (std::isnan(r) || r > residual) {
            residual = r;
            atom = at;
        }
    }
};

} // namespace

Report check_time_consistency(const DynamicRiskMeasure& rho, const std::vector<Position>& battery,
                              const std::vector<Triple>& triples, double tol) {
    Report rep;
    rep.check = "time-consistency";
    rep.tolerance = tol;
    for (const auto& tr : triples) {
        require_ordered(tr);
        const auto& [nu, sigma, tau] = tr;
        const auto elems = anchored_at(battery, tau);
        if (elems.empty()) {
            ++rep.skipped;
            continue;
        }
        for (const auto* e : elems) {
            const auto direct = rho(e->value, nu);
            const auto nested = rho(-rho(e->value, sigma), nu);
            AtomWorst w;
            for (std::size_t a = 0; a < nu.atom_count(); ++a)
                w.offer(std::abs(direct[a] - nested[a]), nu.tree()->id(nu.atom(a)));
            rep.cases.push_back({labels(tr), e->label, w.residual, w.atom});
        }
    }
    return rep;
}

Report check_cocycle(const PenaltyFunction& penalty, const std::vector<LabelledMeasure>& samples,
                     const std::vector<Triple>& triples, double tol) {
    Report rep;
    rep.check = "cocycle";
    rep.tolerance = tol;
    double skipped_atoms = 0.0;
    for (const auto& tr : triples) {
        require_ordered(tr);
        const auto& [nu, sigma, tau] = tr;
        for (const auto& [label, q] : samples) {
            const auto a_nt = penalty(q, nu, tau);
            const auto a_ns = penalty(q, nu, sigma);
            const auto a_st = penalty(q, sigma, tau);
            AtomWorst w;
            for (std::size_t a = 0; a < nu.atom_count(); ++a) {
                const NodeIndex n = nu.atom(a);
                if (q.mass(n) <= 0.0) continue;
                const auto tail = cond_extended(a_st, q, n);
                if (a_nt.values[a].is_infinite() || a_ns.values[a].is_infinite() || !tail) {
                    skipped_atoms += 1.0;
                    continue;
                }
                w.offer(std::abs(a_nt.values[a].value() - a_ns.values[a].value() - *tail),
                        nu.tree()->id(n));
            }
            if (w.residual < 0.0) {
                ++rep.skipped;
                continue;
            }
            rep.cases.push_back({labels(tr), label, w.residual, w.atom});
        }
    }
    rep.metrics["skipped_atoms"] = skipped_atoms;
    return rep;
}

Decomposition decompose_acceptable(const DynamicRiskMeasure& rho, const RandomVariable& x,
                                   const StoppingTime& nu, const StoppingTime& sigma,
                                   const Measure& q, double tol) {
    const auto& tau = x.anchor();
    if (!precedes(nu, sigma) || !precedes(sigma, tau))
        throw ValidationError("decomposition requires nu <= sigma <= tau");
    const auto r = rho(x, nu);
    for (std::size_t a = 0; a < nu.atom_count(); ++a)
        if (q.mass(nu.atom(a)) > 0.0 && r[a] > tol)
            throw NotAcceptable(nu.tree()->id(nu.atom(a)), r[a]);
    // Y is snapped to the grid of spacing 2^(E-52), 2^E above every magnitude on
    // its atom, so X - Y is exact (and Y + Z == X) whenever X lies on that grid.
    const auto r_sigma = rho(x, sigma);
    std::vector<double> ys(sigma.atom_count());
    for (std::size_t a = 0; a < sigma.atom_count(); ++a) {
        double m = std::abs(r_sigma[a]);
        for (std::size_t i = 0; i < tau.atom_count(); ++i)
            if (*sigma.atom_of(tau.atom(i)) == a) m = std::max(m, std::abs(x[i]));
        ys[a] = -r_sigma[a];
        if (m > 0.0) {
            const double g = std::ldexp(1.0, std::ilogb(m) + 1 - 52);
            ys[a] = std::nearbyint(ys[a] / g) * g;
        }
    }
    auto y = lift(RandomVariable(sigma, std::move(ys)), tau);
    auto z = x - y;
    return Decomposition{std::move(y), std::move(z)};
}

Report check_supermartingale_inequality(const DynamicRiskMeasure& rho,
                                        const PenaltyFunction& penalty,
                                        const std::vector<LabelledMeasure>& measures,
                                        const std::vector<Position>& battery,
                                        const std::vector<Triple>& triples, double tol) {
    Report rep;
    rep.check = "supermartingale";
    rep.tolerance = tol;
    double skipped_atoms = 0.0;
    for (const auto& tr : triples) {
        require_ordered(tr);
        const auto& [nu, sigma, tau] = tr;
        const auto elems = anchored_at(battery, tau);
        if (elems.empty()) {
            ++rep.skipped;
            continue;
        }
        std::vector<RandomVariable> r_nt, r_st;
        for (const auto* e : elems) {
            r_nt.push_back(rho(e->value, nu));
            r_st.push_back(rho(e->value, sigma));
        }
        for (const auto& [label, q] : measures) {
            const auto a_nt = penalty(q, nu, tau);
            const auto a_st = penalty(q, sigma, tau);
            AtomWorst w;
            std::string worst_x;
            for (std::size_t a = 0; a < nu.atom_count(); ++a) {
                const NodeIndex n = nu.atom(a);
                if (q.mass(n) <= 0.0) continue;
                const auto tail = cond_extended(a_st, q, n);
                if (a_nt.values[a].is_infinite() || !tail) {
                    skipped_atoms += 1.0;
                    continue;
                }
                const auto law = conditional_law(q, n, sigma);
                for (std::size_t i = 0; i < elems.size(); ++i) {
                    double lhs = *tail;
                    for (const auto& [m, p] : law)
                        if (p > 0.0) lhs += p * r_st[i][m];
                    const double gap = lhs - r_nt[i][a] - a_nt.values[a].value();
                    const double before = w.residual;
                    w.offer(std::max(gap, 0.0), nu.tree()->id(n));
                    if (w.residual != before || worst_x.empty()) worst_x = elems[i]->label;
                }
            }
            if (w.residual < 0.0) {
                ++rep.skipped;
                continue;
            }
            rep.cases.push_back({labels(tr), label + ": " + worst_x, w.residual, w.atom});
        }
    }
    rep.metrics["skipped_atoms"] = skipped_atoms;
    return rep;
}

Report check_restriction(const DynamicRiskMeasure& rho, const std::vector<Position>& battery,
                         const std::vector<Triple>& triples, double tol) {
    Report rep;
    rep.check = "restriction";
    rep.tolerance = tol;
    for (const auto& tr : triples) {
        require_ordered(tr);
        const auto& [nu, sigma, tau] = tr;
        const auto elems = anchored_at(battery, sigma);
        if (elems.empty()) {
            ++rep.skipped;
            continue;
        }
        const auto shift0 = lift(rho(RandomVariable::constant(tau, 0.0), sigma), tau);
        for (const auto* e : elems) {
            const auto lhs = rho(e->value, nu);
            const auto rhs = rho(lift(e->value, tau) + shift0, nu);
            AtomWorst w;
            for (std::size_t a = 0; a < nu.atom_count(); ++a)
                w.offer(std::abs(lhs[a] - rhs[a]), nu.tree()->id(nu.atom(a)));
            rep.cases.push_back({labels(tr), e->label, w.residual, w.atom});
        }
    }
    return rep;
}

std::vector<LabelledMeasure> zero_penalty_set(const DualFamily& family,
                                              const std::vector<LabelledMeasure>& candidates,
                                              double tol) {
    const auto& tree = family.tree();
    const auto root = StoppingTime::at(tree, 0);
    const auto end = StoppingTime::at(tree, tree->horizon());
    std::vector<LabelledMeasure> out;
    for (const auto& m : family.members()) {
        const auto c = m.penalty_at(ScenarioTree::root());
        if (c.is_finite() && std::abs(c.value()) <= tol) out.push_back({m.label, m.measure});
    }
    for (const auto& cand : candidates) {
        const auto a = minimal_penalty_lp(family, cand.measure, root, end);
        if (a.values[0].is_finite() && a.values[0].value() <= tol) out.push_back(cand);
    }
    return out;
}

std::vector<LabelledMeasure> zero_penalty_set(const PenaltyFunction& penalty, const TreePtr& tree,
                                              const std::vector<LabelledMeasure>& candidates,
                                              double tol) {
    const auto root = StoppingTime::at(tree, 0);
    const auto end = StoppingTime::at(tree, tree->horizon());
    std::vector<LabelledMeasure> out;
    for (const auto& cand : candidates) {
        const auto a = penalty(cand.measure, root, end);
        if (a.values[0].is_finite() && a.values[0].value() <= tol) out.push_back(cand);
    }
    return out;
}

NondegeneracyResult check_nondegenerate(const DynamicRiskMeasure& rho,
                                        const std::vector<double>& lambdas, double tol) {
    const auto& tree = rho.tree();
    const auto root = StoppingTime::at(tree, 0);
    const auto end = StoppingTime::at(tree, tree->horizon());
    NondegeneracyResult res;
    for (std::size_t a = 0; a < end.atom_count(); ++a) {
        const std::size_t one[] = {a};
        double best = std::numeric_limits<double>::infinity();
        for (double lam : lambdas) best = std::min(best, rho(indicator(end, one, lam), root)[0]);
        res.min_risk.push_back(best);
        if (best >= -tol && res.nondegenerate) {
            res.nondegenerate = false;
            res.witness_leaf = tree->id(end.atom(a));
        }
    }
    return res;
}

std::string to_string(M0Verdict v) {
    switch (v) {
    case M0Verdict::equivalent: return "equivalent";
    case M0Verdict::hypotheses_violated: return "hypotheses_violated";
    case M0Verdict::lemma_failure: return "lemma_failure";
    }
    return "unknown";
}

M0Result check_M0_equivalence(const DynamicRiskMeasure& rho,
                              const std::vector<LabelledMeasure>& zero_set, std::uint64_t seed,
                              double tol) {
    const auto& tree = rho.tree();
    M0Result res;

    double norm = 0.0;
    for (const auto& [s, t] : deterministic_pairs(tree))
        norm = std::max(norm, rho(RandomVariable::constant(t, 0.0), s).max_abs());
    if (norm > tol) res.reasons.push_back("not normalized");

    const auto end = StoppingTime::at(tree, tree->horizon());
    BatteryOptions bo;
    bo.seed = seed;
    const auto tc = check_time_consistency(rho, default_battery(end, bo),
                                           deterministic_triples(tree), tol);
    if (!tc.passed()) res.reasons.push_back("not time consistent");

    const auto nd = check_nondegenerate(rho, {1, 4, 16, 64}, tol);
    if (!nd.nondegenerate) res.reasons.push_back("degenerate (witness " + *nd.witness_leaf + ")");

    for (const auto& [label, q] : zero_set) {
        for (NodeIndex leaf : tree->leaves()) {
            if (q.mass(leaf) <= 0.0) {
                res.non_equivalent.push_back(label);
                break;
            }
        }
    }
    if (res.non_equivalent.empty())
        res.verdict = M0Verdict::equivalent;
    else if (!res.reasons.empty())
        res.verdict = M0Verdict::hypotheses_violated;
    else
        res.verdict = M0Verdict::lemma_failure;
    return res;
}

StoppingTime shift(const StoppingTime& sigma, int k) {
    const auto& tree = sigma.tree();
    std::vector<NodeIndex> stops;
    for (NodeIndex a : sigma.atoms()) {
        const int t = std::min(tree->time(a) + k, tree->horizon());
        for (NodeIndex m = a; m < a + tree->subtree_size(a); ++m)
            if (tree->time(m) == t) stops.push_back(m);
    }
    return StoppingTime::from_nodes(tree, std::move(stops));
}

RiskProcess risk_process(const DynamicRiskMeasure& rho, const RandomVariable& x, const Measure& q,
                         const PenaltyFunction& penalty, std::uint64_t seed, double tol) {
    const auto& tree = rho.tree();
    const int T = tree->horizon();
    const auto end = StoppingTime::at(tree, T);
    const auto root = StoppingTime::at(tree, 0);
    if (!(x.anchor() == end)) throw ValidationError("risk process requires X anchored at T");
    const auto a0 = penalty(q, root, end);
    if (a0.values[0].is_infinite() || a0.values[0].value() > tol)
        throw NotZeroPenalty("measure is not in the zero-penalty set (alpha_{0,T} = " +
                             std::to_string(a0.values[0].to_double()) + ")");

    RiskProcess out;
    out.values.assign(tree->size(), 0.0);
    for (int t = 0; t <= T; ++t) {
        const auto st = StoppingTime::at(tree, t);
        const auto r = rho(x, st);
        for (std::size_t a = 0; a < st.atom_count(); ++a) out.values[st.atom(a)] = r[a];
    }
    out.root_error = std::abs(out.values[ScenarioTree::root()] - rho(x, root)[0]);
    for (std::size_t a = 0; a < end.atom_count(); ++a)
        out.leaf_error = std::max(out.leaf_error, std::abs(out.values[end.atom(a)] + x[a]));

    out.supermartingale.check = "risk-process-supermartingale";
    out.supermartingale.tolerance = tol;
    for (int t = 0; t < T; ++t) {
        AtomWorst w;
        for (NodeIndex n : tree->level(t)) {
            if (q.mass(n) <= 0.0) continue;
            double e = 0.0;
            for (NodeIndex c : tree->node(n).children)
                if (q.transition(c) > 0.0) e += q.transition(c) * out.values[c];
            w.offer(std::max(e - out.values[n], 0.0), tree->id(n));
        }
        if (w.residual < 0.0) continue;
        out.supermartingale.cases.push_back(
            {{"t=" + std::to_string(t), "t=" + std::to_string(t + 1)}, "node inequality",
             w.residual, w.atom});
    }

    out.convergence.check = "risk-process-convergence";
    out.convergence.tolerance = tol;
    Rng rng(seed);
    std::vector<StoppingTime> sigmas{root};
    for (int k = 0; k < 4; ++k) sigmas.push_back(random_stopping_time(tree, rng));
    for (const auto& sigma : sigmas) {
        auto mean_at = [&](const StoppingTime& s) {
            double m = 0.0;
            for (NodeIndex a : s.atoms()) m += q.mass(a) * out.values[a];
            return m;
        };
        // sigma_m = shift(sigma, T - m) decreases to sigma as m runs up to T.
        double worst = 0.0;
        std::string where = "m=0";
        double prev = mean_at(shift(sigma, T));
        for (int m = 1; m <= T; ++m) {
            const double cur = mean_at(shift(sigma, T - m));
            if (prev - cur > worst) {
                worst = prev - cur;
                where = "m=" + std::to_string(m);
            }
            prev = cur;
        }
        const double limit = std::abs(prev - mean_at(sigma));
        if (limit > worst) {
            worst = limit;
            where = "limit";
        }
        out.convergence.cases.push_back({{sigma.label()}, "E_Q V(sigma_m)", worst, where});
    }
    return out;
}

} // namespace dynrisk
