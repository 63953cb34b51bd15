#include "dynrisk/stableset.hpp"

#include "dynrisk/lp.hpp"
#include "dynrisk/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace dynrisk {

namespace {

constexpr double law_tol = 1e-12;

void require_law(std::span<const double> q, std::size_t n_children, const std::string& node) {
    if (q.size() != n_children)
        throw ValidationError("one-step law has the wrong number of entries", node);
    double s = 0.0;
    for (double v : q) {
        if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("one-step law outside [0,1]", node);
        s += v;
    }
    if (std::abs(s - 1.0) > law_tol) throw ValidationError("one-step law does not sum to 1", node);
}

} // namespace

OneStepSet OneStepSet::finite(std::vector<std::vector<double>> choices) {
    OneStepSet s;
    s.kind = Kind::finite;
    s.choices = std::move(choices);
    return s;
}

OneStepSet OneStepSet::finite(std::vector<std::vector<double>> choices, std::vector<double> values) {
    OneStepSet s = finite(std::move(choices));
    s.penalty = Penalty::values;
    s.values = std::move(values);
    return s;
}

OneStepSet OneStepSet::interval(double lo, double hi, double b) {
    OneStepSet s;
    s.kind = Kind::interval;
    s.lo = lo;
    s.hi = hi;
    s.b = b;
    s.penalty = b == 0.0 ? Penalty::zero : Penalty::quadratic;
    return s;
}

RectangularFamily::RectangularFamily(TreePtr tree, std::map<NodeIndex, OneStepSet> sets)
    : tree_(std::move(tree)), sets_(std::move(sets)) {
    const auto& t = *tree_;
    for (const auto& [n, s] : sets_) {
        if (n >= t.size()) throw ValidationError("one-step set for an unknown node");
        if (t.is_leaf(n)) throw ValidationError("one-step set attached to a leaf", t.id(n));
    }
    for (NodeIndex n = 0; n < t.size(); ++n) {
        if (t.is_leaf(n)) continue;
        const auto& kids = t.node(n).children;
        auto it = sets_.find(n);
        if (it == sets_.end()) {
            std::vector<double> p;
            for (NodeIndex c : kids) p.push_back(t.node(c).edge_prob);
            sets_.emplace(n, OneStepSet::finite({std::move(p)}));
            continue;
        }
        const auto& s = it->second;
        if (s.penalty == OneStepSet::Penalty::quadratic && !(s.b >= 0.0))
            throw ValidationError("penalty weight b must be nonnegative", t.id(n));
        if (s.kind == OneStepSet::Kind::finite) {
            if (s.choices.empty()) throw ValidationError("empty choice set", t.id(n));
            for (const auto& q : s.choices) require_law(q, kids.size(), t.id(n));
            if (s.penalty == OneStepSet::Penalty::values) {
                if (s.values.size() != s.choices.size())
                    throw ValidationError("one penalty value per choice required", t.id(n));
                for (double v : s.values)
                    if (!(v >= 0.0) || !std::isfinite(v))
                        throw ValidationError("choice penalties must be finite and >= 0", t.id(n));
            }
            if (s.penalty == OneStepSet::Penalty::quadratic && kids.size() != 2)
                throw ValidationError("quadratic penalty needs a binary node", t.id(n));
        } else {
            if (kids.size() != 2) throw ValidationError("interval set needs a binary node", t.id(n));
            if (!(0.0 <= s.lo && s.lo <= s.hi && s.hi <= 1.0))
                throw ValidationError("interval must satisfy 0 <= lo <= hi <= 1", t.id(n));
            if (s.penalty == OneStepSet::Penalty::values)
                throw ValidationError("interval sets take a zero or quadratic penalty", t.id(n));
        }
    }
}

double RectangularFamily::choice_penalty(NodeIndex n, std::size_t choice) const {
    const auto& s = at(n);
    switch (s.penalty) {
    case OneStepSet::Penalty::zero: return 0.0;
    case OneStepSet::Penalty::values: return s.values.at(choice);
    case OneStepSet::Penalty::quadratic: {
        const double h = 2.0 * s.choices.at(choice)[0] - 1.0;
        return s.b * h * h;
    }
    }
    return 0.0;
}

double RectangularFamily::interval_penalty(NodeIndex n, double q_first) const {
    const auto& s = at(n);
    if (s.penalty != OneStepSet::Penalty::quadratic) return 0.0;
    const double h = 2.0 * q_first - 1.0;
    return s.b * h * h;
}

bool RectangularFamily::normalized(double tol) const {
    for (const auto& [n, s] : sets_) {
        bool found = false;
        if (s.kind == OneStepSet::Kind::finite) {
            for (std::size_t k = 0; k < s.choices.size() && !found; ++k)
                found = choice_penalty(n, k) <= tol;
        } else {
            found = s.penalty == OneStepSet::Penalty::zero || (s.lo <= 0.5 && 0.5 <= s.hi);
        }
        if (!found) return false;
    }
    return true;
}

ExtendedReal RectangularFamily::local_penalty(NodeIndex n, std::span<const double> law) const {
    const auto& s = at(n);
    if (s.kind == OneStepSet::Kind::interval) {
        if (law.size() != 2) throw ValidationError("one-step law has the wrong size", tree_->id(n));
        if (law[0] < s.lo - law_tol || law[0] > s.hi + law_tol) return ExtendedReal::infinity();
        return interval_penalty(n, std::clamp(law[0], s.lo, s.hi));
    }
    const std::size_t rows = law.size();
    lp::Problem prob;
    prob.a.assign(rows + 1, std::vector<double>(s.choices.size(), 0.0));
    prob.b.assign(law.begin(), law.end());
    prob.b.push_back(1.0);
    for (std::size_t k = 0; k < s.choices.size(); ++k) {
        for (std::size_t r = 0; r < rows; ++r) prob.a[r][k] = s.choices[k].at(r);
        prob.a[rows][k] = 1.0;
        prob.c.push_back(choice_penalty(n, k));
    }
    lp::Options opts;
    opts.feasibility_tol = law_tol;
    const auto res = lp::solve(prob, opts);
    if (res.status == lp::Status::infeasible) return ExtendedReal::infinity();
    if (res.status != lp::Status::optimal)
        throw lp::SolverError(res.status, "local penalty LP at node '" + tree_->id(n) +
                                              "': " + lp::to_string(res.status));
    return res.objective;
}

StableSetRisk::StableSetRisk(RectangularFamily family)
    : DynamicRiskMeasure(family.tree()), family_(std::move(family)) {}

double StableSetRisk::step(NodeIndex n, std::span<const double> cv) const {
    const auto& s = family_.at(n);
    if (s.kind == OneStepSet::Kind::finite) {
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < s.choices.size(); ++k) {
            double v = -family_.choice_penalty(n, k);
            for (std::size_t c = 0; c < cv.size(); ++c)
                if (s.choices[k][c] > 0.0) v += s.choices[k][c] * cv[c];
            best = std::max(best, v);
        }
        return best;
    }
    if (s.penalty == OneStepSet::Penalty::zero) {
        auto at_q = [&](double q) { return q * cv[0] + (1.0 - q) * cv[1]; };
        return std::max(at_q(s.lo), at_q(s.hi));
    }
    // f(H) = mean + H (v_up - v_down)/2 - b H^2 is concave; clamp its vertex.
    const double h = std::clamp((cv[0] - cv[1]) / (4.0 * s.b), 2.0 * s.lo - 1.0, 2.0 * s.hi - 1.0);
    return 0.5 * (cv[0] + cv[1]) + 0.5 * h * (cv[0] - cv[1]) - s.b * h * h;
}

RandomVariable StableSetRisk::do_evaluate(const RandomVariable& x, const StoppingTime& sigma) const {
    return read_atoms(backward_induction(-x, sigma,
                                         [&](NodeIndex n, std::span<const double> cv) {
                                             return step(n, cv);
                                         }),
                      sigma);
}

std::vector<double> one_step_law(const Measure& q, NodeIndex n) {
    std::vector<double> law;
    for (NodeIndex c : q.tree()->node(n).children) law.push_back(q.transition(c));
    return law;
}

PenaltyVariable minimal_penalty(const RectangularFamily& family, const Measure& q,
                                const StoppingTime& sigma, const StoppingTime& tau) {
    if (q.tree() != family.tree() || sigma.tree() != family.tree() || tau.tree() != family.tree())
        throw ValidationError("operands live on different trees");
    if (!precedes(sigma, tau)) throw ValidationError("sigma <= tau required");
    const auto& tree = *family.tree();
    constexpr double inf = std::numeric_limits<double>::infinity();
    // Infinity marks an infinite local penalty reached with positive probability.
    const auto v = backward_induction(
        RandomVariable::constant(tau, 0.0), sigma, [&](NodeIndex n, std::span<const double> cv) {
            const auto local = family.local_penalty(n, one_step_law(q, n));
            if (local.is_infinite()) return inf;
            double s = local.value();
            const auto& kids = tree.node(n).children;
            for (std::size_t c = 0; c < kids.size(); ++c)
                if (q.transition(kids[c]) > 0.0) s += q.transition(kids[c]) * cv[c];
            return s;
        });
    PenaltyVariable out{sigma, {}};
    for (NodeIndex a : sigma.atoms())
        out.values.push_back(std::isinf(v[a]) ? ExtendedReal::infinity() : ExtendedReal(v[a]));
    return out;
}

PenaltyFunction stable_penalty_function(RectangularFamily family) {
    return [family = std::move(family)](const Measure& q, const StoppingTime& s,
                                        const StoppingTime& t) {
        return minimal_penalty(family, q, s, t);
    };
}

std::vector<Selection> selection_measures(const RectangularFamily& family,
                                          std::size_t interval_points, std::size_t limit) {
    const auto& tree = *family.tree();
    struct Vertex {
        std::vector<double> law;
        double penalty;
    };
    std::vector<NodeIndex> nodes;
    std::vector<std::vector<Vertex>> options;
    std::size_t count = 1;
    for (NodeIndex n = 0; n < tree.size(); ++n) {
        if (tree.is_leaf(n)) continue;
        const auto& s = family.at(n);
        std::vector<Vertex> v;
        if (s.kind == OneStepSet::Kind::finite) {
            for (std::size_t k = 0; k < s.choices.size(); ++k)
                v.push_back({s.choices[k], family.choice_penalty(n, k)});
        } else {
            std::vector<double> qs{s.lo};
            if (s.hi > s.lo) {
                const std::size_t pts =
                    s.penalty == OneStepSet::Penalty::quadratic ? std::max<std::size_t>(interval_points, 2) : 2;
                for (std::size_t i = 1; i < pts; ++i)
                    qs.push_back(s.lo + (s.hi - s.lo) * static_cast<double>(i) /
                                            static_cast<double>(pts - 1));
            }
            for (double q : qs) v.push_back({{q, 1.0 - q}, family.interval_penalty(n, q)});
        }
        if (count > limit / v.size()) throw ValidationError("too many selection measures");
        count *= v.size();
        nodes.push_back(n);
        options.push_back(std::move(v));
    }

    std::vector<Selection> out;
    out.reserve(count);
    std::vector<std::size_t> idx(nodes.size(), 0);
    for (;;) {
        std::vector<double> trans(tree.size(), 1.0);
        std::vector<double> pen(tree.size(), 0.0);
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            const auto& v = options[i][idx[i]];
            const auto& kids = tree.node(nodes[i]).children;
            for (std::size_t c = 0; c < kids.size(); ++c) trans[kids[c]] = v.law[c];
            pen[nodes[i]] = v.penalty;
        }
        out.push_back({Measure::from_transitions(family.tree(), std::move(trans)), std::move(pen)});
        std::size_t i = 0;
        while (i < idx.size() && ++idx[i] == options[i].size()) idx[i++] = 0;
        if (i == idx.size()) break;
    }
    return out;
}

RandomVariable brute_force_esssup(const RectangularFamily& family, const RandomVariable& x,
                                  const StoppingTime& sigma, std::size_t interval_points) {
    const auto& tau = x.anchor();
    const auto& tree = *family.tree();
    std::vector<double> best(sigma.atom_count(), -std::numeric_limits<double>::infinity());
    for (const auto& sel : selection_measures(family, interval_points)) {
        const auto e = kernel_expectation(-x, sel.measure, sigma);
        const auto pen = backward_induction(
            RandomVariable::constant(tau, 0.0), sigma,
            [&](NodeIndex n, std::span<const double> cv) {
                double s = sel.step_penalty[n];
                const auto& kids = tree.node(n).children;
                for (std::size_t c = 0; c < kids.size(); ++c)
                    if (sel.measure.transition(kids[c]) > 0.0)
                        s += sel.measure.transition(kids[c]) * cv[c];
                return s;
            });
        for (std::size_t a = 0; a < best.size(); ++a)
            best[a] = std::max(best[a], e[a] - pen[sigma.atom(a)]);
    }
    return RandomVariable(sigma, std::move(best));
}

Measure paste(const Measure& q, const Measure& r, const StoppingTime& nu,
              const StoppingTime& sigma) {
    if (q.tree() != r.tree() || nu.tree() != q.tree() || sigma.tree() != q.tree())
        throw ValidationError("operands live on different trees");
    if (!precedes(nu, sigma)) throw ValidationError("pasting requires nu <= sigma");
    const auto& tree = *q.tree();
    std::vector<double> trans(tree.size(), 1.0);
    for (NodeIndex m = 1; m < tree.size(); ++m)
        trans[m] = sigma.before(*tree.node(m).parent) ? r.transition(m) : q.transition(m);
    return Measure::from_transitions(q.tree(), std::move(trans));
}

double paste_identity_residual(const Measure& s, const Measure& q, const Measure& r,
                               const StoppingTime& nu, const StoppingTime& sigma) {
    const auto& tree = s.tree();
    const auto end = StoppingTime::at(tree, tree->horizon());
    double worst = 0.0;
    for (std::size_t a = 0; a < end.atom_count(); ++a) {
        const std::size_t one[] = {a};
        const auto f = indicator(end, one);
        const auto lhs = kernel_expectation(f, s, nu);
        const auto rhs = kernel_expectation(kernel_expectation(f, q, sigma), r, nu);
        worst = std::max(worst, max_abs_diff(lhs, rhs));
    }
    return worst;
}

StabilityResult check_stable(const std::vector<LabelledMeasure>& measures,
                             const std::vector<std::pair<StoppingTime, StoppingTime>>& pairs) {
    if (measures.empty()) throw ValidationError("stability check needs at least one measure");
    for (const auto& m : measures)
        if (!m.measure.equivalent_to_reference())
            throw ValidationError("member '" + m.label + "' is not equivalent to P");
    const auto& tree = *measures.front().measure.tree();
    StabilityResult res;
    for (const auto& [nu, sigma] : pairs) {
        std::vector<NodeIndex> compared;
        for (NodeIndex m = 1; m < tree.size(); ++m)
            if (!nu.before(*tree.node(m).parent)) compared.push_back(m);
        for (const auto& q : measures)
            for (const auto& r : measures) {
                auto s = paste(q.measure, r.measure, nu, sigma);
                ++res.pastes_checked;
                const bool found =
                    std::any_of(measures.begin(), measures.end(), [&](const LabelledMeasure& c) {
                        return std::all_of(compared.begin(), compared.end(), [&](NodeIndex m) {
                            return std::abs(c.measure.transition(m) - s.transition(m)) <= law_tol;
                        });
                    });
                if (!found) {
                    res.stable = false;
                    res.missing.push_back({q.label, r.label, nu.label(), sigma.label(), std::move(s)});
                }
            }
    }
    return res;
}

Report check_local(const PenaltyFunction& penalty,
                   const std::vector<std::pair<LabelledMeasure, LabelledMeasure>>& pairs,
                   const StoppingTime& sigma, const StoppingTime& tau, double tol) {
    Report rep;
    rep.check = "locality";
    rep.tolerance = tol;
    const auto& tree = *sigma.tree();
    for (const auto& [q1, q2] : pairs) {
        const auto a1 = penalty(q1.measure, sigma, tau);
        const auto a2 = penalty(q2.measure, sigma, tau);
        for (std::size_t a = 0; a < sigma.atom_count(); ++a) {
            const NodeIndex n = sigma.atom(a);
            const auto l1 = conditional_law(q1.measure, n, tau);
            const auto l2 = conditional_law(q2.measure, n, tau);
            bool same = l1.size() == l2.size();
            for (std::size_t i = 0; same && i < l1.size(); ++i)
                same = std::abs(l1[i].second - l2[i].second) <= law_tol;
            if (!same) continue;
            const auto& v1 = a1.values[a];
            const auto& v2 = a2.values[a];
            double r = 0.0;
            if (v1.is_infinite() != v2.is_infinite())
                r = std::numeric_limits<double>::infinity();
            else if (v1.is_finite())
                r = std::abs(v1.value() - v2.value());
            rep.cases.push_back({{sigma.label(), tau.label()}, q1.label + " vs " + q2.label, r,
                                 tree.id(n)});
        }
    }
    return rep;
}

DiscreteMartingaleFamily DiscreteMartingaleFamily::constant(TreePtr tree, double phi, double b) {
    const auto n = tree->size();
    return {std::move(tree), std::vector<double>(n, phi), std::vector<double>(n, b)};
}

RectangularFamily from_martingale_family(const DiscreteMartingaleFamily& m) {
    const auto& tree = *m.tree;
    require_symmetric_binomial(tree);
    if (m.phi.size() != tree.size() || m.b.size() != tree.size())
        throw ValidationError("martingale family needs one phi and one b per node");
    std::map<NodeIndex, OneStepSet> sets;
    for (NodeIndex n = 0; n < tree.size(); ++n) {
        if (tree.is_leaf(n)) continue;
        const double phi = m.phi[n];
        if (!(phi >= 0.0)) throw ValidationError("phi must be nonnegative", tree.id(n));
        if (phi >= 1.0) throw ValidationError("phi must be below 1 for positive densities", tree.id(n));
        if (!(m.b[n] >= 0.0)) throw ValidationError("b must be nonnegative", tree.id(n));
        sets.emplace(n, OneStepSet::interval(0.5 * (1.0 - phi), 0.5 * (1.0 + phi), m.b[n]));
    }
    return RectangularFamily(m.tree, std::move(sets));
}

Measure tilted_measure(const TreePtr& tree, const std::vector<double>& h) {
    require_symmetric_binomial(*tree);
    if (h.size() != tree->size()) throw ValidationError("one tilt per node required");
    std::vector<double> trans(tree->size(), 1.0);
    for (NodeIndex n = 0; n < tree->size(); ++n) {
        if (tree->is_leaf(n)) continue;
        const auto& kids = tree->node(n).children;
        if (!(std::abs(h[n]) <= 1.0)) throw ValidationError("tilt must satisfy |H| <= 1", tree->id(n));
        trans[kids[0]] = 0.5 * (1.0 + h[n]);
        trans[kids[1]] = 0.5 * (1.0 - h[n]);
    }
    return Measure::from_transitions(tree, std::move(trans));
}

} // namespace dynrisk
