#pragma once

// Conditional convex risk measures generated by a finite dual family,
//
//     rho_{sigma,tau}(X)(n) = max_k ( E_{Q_k}(-X | n) - c_k(n) ),
//
// together with the axiom checker, acceptance sets, and two routes to the
// minimal penalty: the exact linear program (lower convex envelope of the
// penalties) and the brute-force conjugate over a grid of positions, which is
// a certified lower bound.

#include "dynrisk/battery.hpp"
#include "dynrisk/lp.hpp"
#include "dynrisk/report.hpp"
#include "dynrisk/risk.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace dynrisk {

struct DualMember {
    Measure measure;
    /// Penalty per atom node; nodes not listed carry `default_penalty`.
    std::unordered_map<NodeIndex, ExtendedReal> penalty;
    ExtendedReal default_penalty = 0.0;
    std::string label;

    ExtendedReal penalty_at(NodeIndex n) const;
};

class DualFamily {
public:
    explicit DualFamily(std::vector<DualMember> members);

    const TreePtr& tree() const noexcept { return members_.front().measure.tree(); }
    std::span<const DualMember> members() const noexcept { return members_; }
    std::size_t size() const noexcept { return members_.size(); }

    /// Zero-penalty family built from measures alone.
    static DualFamily from_measures(std::vector<Measure> measures);

private:
    std::vector<DualMember> members_;
};

/// Per sigma-atom maximum over members of E_{Q_k}(-X|n) - c_k(n), each Q_k
/// conditioned at the atom. Throws when every member is infinite at an atom.
RandomVariable evaluate_dual(const DualFamily& family, const RandomVariable& x,
                             const StoppingTime& sigma);

class DualFamilyRisk final : public DynamicRiskMeasure {
public:
    explicit DualFamilyRisk(DualFamily family);
    std::string provenance() const override { return "dual-family"; }
    const DualFamily& family() const noexcept { return family_; }

protected:
    RandomVariable do_evaluate(const RandomVariable& x, const StoppingTime& sigma) const override;

private:
    DualFamily family_;
};

struct AxiomOptions {
    std::vector<double> lambdas{0.25, 0.5, 0.75};
    /// Add the constant shifts +-1 to the sigma-measurable shifts derived from
    /// the battery (P-conditional expectations of its elements).
    bool constant_shifts = true;
    double tolerance = default_tolerance;
};

/// Maximal violations of monotonicity, translation invariance, convexity and
/// regularity over a battery. Case labels start with the axiom name.
Report check_axioms(const DynamicRiskMeasure& rho, const std::vector<Position>& battery,
                    const std::vector<std::pair<StoppingTime, StoppingTime>>& pairs,
                    const AxiomOptions& opts = {});

/// Membership in A_{sigma,tau}(Q), per sigma-atom. Q-null atoms are vacuously true.
std::vector<bool> is_acceptable(const DynamicRiskMeasure& rho, const RandomVariable& x,
                                const Measure& q, const StoppingTime& sigma,
                                double tol = default_tolerance);

/// Exact minimal penalty of the family at Q: per sigma-atom,
/// min { sum_k l_k c_k(n) : l in the simplex, sum_k l_k Q_k(.|n) = Q(.|n) },
/// +infinity when Q(.|n) is outside the conditional hull. Throws
/// lp::SolverError when the solver fails.
PenaltyVariable minimal_penalty_lp(const DualFamily& family, const Measure& q,
                                   const StoppingTime& sigma, const StoppingTime& tau);

/// Lower bound on the minimal penalty: per sigma-atom, the maximum over the
/// grid of E_Q(-X|n) - rho(X)(n). Grid positions share one anchor tau.
RandomVariable minimal_penalty_oracle(const DynamicRiskMeasure& rho, const Measure& q,
                                      const StoppingTime& sigma,
                                      std::span<const RandomVariable> grid);

/// +-l * indicators of unions of tau-atoms for l in {1, 2, 4, 8} (all unions
/// when there are at most 10 atoms, singletons and complements otherwise) plus
/// `random_count` random positions in [-8, 8].
std::vector<RandomVariable> default_oracle_grid(const StoppingTime& tau, std::uint64_t seed,
                                                std::size_t random_count = 16);

/// s * 1_{atom} for every tau-atom and s on an even grid of [-bound, bound].
std::vector<RandomVariable> scaled_indicator_grid(const StoppingTime& tau, double bound,
                                                  std::size_t points_per_indicator);

struct ArgmaxResult {
    Measure measure;
    std::vector<std::size_t> member; ///< maximizing member per sigma-atom
    RandomVariable attained;         ///< E_R(-X|F_sigma) - c_{member}(n)
};

/// Pastes the per-atom maximizers into one measure: `base` strictly before
/// sigma, the maximizing member's transitions below each sigma-atom. Ties go
/// to the lowest member index.
ArgmaxResult argmax_measure(const DualFamily& family, const RandomVariable& x,
                            const StoppingTime& sigma, const Measure& base);

} // namespace dynrisk
