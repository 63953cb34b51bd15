#pragma once

// Stable (pasting-closed) families of measures given node by node, local
// penalties, and the time-consistent risk measure they generate by backward
// dynamic programming.

#include "dynrisk/consistency.hpp"
#include "dynrisk/report.hpp"
#include "dynrisk/risk.hpp"

#include <map>
#include <string>
#include <utility>
#include <vector>

namespace dynrisk {

/// The one-step laws allowed at a node and their penalty.
struct OneStepSet {
    enum class Kind { finite, interval };
    enum class Penalty { zero, quadratic, values };

    Kind kind = Kind::finite;
    std::vector<std::vector<double>> choices; ///< finite: laws over the children
    double lo = 0.5, hi = 0.5;                ///< interval: probability of the first child
    Penalty penalty = Penalty::zero;
    double b = 0.0;             ///< quadratic: b H^2 with q = (1 + H) / 2
    std::vector<double> values; ///< values: one per finite choice

    static OneStepSet finite(std::vector<std::vector<double>> choices);
    static OneStepSet finite(std::vector<std::vector<double>> choices, std::vector<double> values);
    static OneStepSet interval(double lo, double hi, double b = 0.0);
};

class RectangularFamily {
public:
    /// Nodes without an entry allow only P's one-step law, at zero penalty.
    RectangularFamily(TreePtr tree, std::map<NodeIndex, OneStepSet> sets);

    const TreePtr& tree() const noexcept { return tree_; }
    const OneStepSet& at(NodeIndex n) const { return sets_.at(n); }

    /// Penalty of a choice in the set (finite index or interval probability).
    double choice_penalty(NodeIndex n, std::size_t choice) const;
    double interval_penalty(NodeIndex n, double q_first) const;

    /// Every non-leaf node has a zero-penalty choice.
    bool normalized(double tol = 1e-12) const;

    /// Local penalty of an arbitrary one-step law: the lower convex envelope of
    /// the choice penalties (finite sets), b H^2 inside an interval, +infinity
    /// outside the set.
    ExtendedReal local_penalty(NodeIndex n, std::span<const double> law) const;

private:
    TreePtr tree_;
    std::map<NodeIndex, OneStepSet> sets_;
};

/// V(n) = max over one-step choices q of (sum_c q(c) V(c) - c(n, q)), with
/// V = -X on tau-atoms.
class StableSetRisk final : public DynamicRiskMeasure {
public:
    explicit StableSetRisk(RectangularFamily family);
    std::string provenance() const override { return "stable-set"; }
    const RectangularFamily& family() const noexcept { return family_; }

    /// One backward step at node n.
    double step(NodeIndex n, std::span<const double> child_values) const;

protected:
    RandomVariable do_evaluate(const RandomVariable& x, const StoppingTime& sigma) const override;

private:
    RectangularFamily family_;
};

/// Q's one-step law at a node.
std::vector<double> one_step_law(const Measure& q, NodeIndex n);

/// E_Q(sum of local penalties at nodes between sigma and tau | F_sigma).
PenaltyVariable minimal_penalty(const RectangularFamily& family, const Measure& q,
                                const StoppingTime& sigma, const StoppingTime& tau);

PenaltyFunction stable_penalty_function(RectangularFamily family);

struct Selection {
    Measure measure;
    std::vector<double> step_penalty; ///< per node, 0 at leaves
};

/// Every measure choosing one vertex per node: finite choices, interval
/// endpoints, or `interval_points` evenly spaced points of intervals with a
/// quadratic penalty. Throws when the count would exceed `limit`.
std::vector<Selection> selection_measures(const RectangularFamily& family,
                                          std::size_t interval_points = 2,
                                          std::size_t limit = 1'000'000);

/// Per sigma-atom maximum over selection measures of
/// E_Q(-X | n) - E_Q(sum of step penalties between n and tau | n).
RandomVariable brute_force_esssup(const RectangularFamily& family, const RandomVariable& x,
                                  const StoppingTime& sigma, std::size_t interval_points = 2);

/// S with R's transitions strictly before sigma and Q's from sigma on.
Measure paste(const Measure& q, const Measure& r, const StoppingTime& nu,
              const StoppingTime& sigma);

/// max over leaf indicators f of |E_S(f | F_nu) - E_R(E_Q(f | F_sigma) | F_nu)|.
double paste_identity_residual(const Measure& s, const Measure& q, const Measure& r,
                               const StoppingTime& nu, const StoppingTime& sigma);

struct MissingPaste {
    std::string q_label, r_label;
    std::string nu, sigma;
    Measure pasted;
};

struct StabilityResult {
    bool stable = true;
    std::vector<MissingPaste> missing;
    std::size_t pastes_checked = 0;
};

/// Pastes every ordered pair of members at every (nu, sigma) and looks for a
/// member agreeing with the paste at and below the nu-atoms (transitions within
/// 1e-12). Members must be equivalent to P.
StabilityResult check_stable(const std::vector<LabelledMeasure>& measures,
                             const std::vector<std::pair<StoppingTime, StoppingTime>>& pairs);

/// For each pair of measures and sigma-atom A where their conditional laws
/// agree, |alpha(Q1) - alpha(Q2)| on A. Tolerance 1e-12.
Report check_local(const PenaltyFunction& penalty,
                   const std::vector<std::pair<LabelledMeasure, LabelledMeasure>>& pairs,
                   const StoppingTime& sigma, const StoppingTime& tau, double tol = 1e-12);

/// Tilts H with |H| <= phi of a symmetric binomial reference, with bracket
/// penalty weight b, all attached to non-terminal nodes.
struct DiscreteMartingaleFamily {
    TreePtr tree;
    std::vector<double> phi; ///< per node
    std::vector<double> b;   ///< per node

    static DiscreteMartingaleFamily constant(TreePtr tree, double phi, double b);
};

/// Per node the interval {q = (1 + H)/2 : |H| <= phi} with penalty b H^2.
RectangularFamily from_martingale_family(const DiscreteMartingaleFamily& m);

/// The measure with one-step densities 1 + H dM (dM = +1 on the first child).
Measure tilted_measure(const TreePtr& tree, const std::vector<double>& h);

} // namespace dynrisk
