#pragma once

// Checkers for the structural theorems about dynamic risk measures: time
// consistency, the cocycle condition of penalties, the constructive
// decomposition of acceptable positions, the supermartingale and restriction
// properties, zero-penalty measures, non-degeneracy and risk processes.
//
// Every checker reports residuals over a finite battery. A pass is evidence,
// a failure carries a certified counterexample.

#include "dynrisk/battery.hpp"
#include "dynrisk/report.hpp"
#include "dynrisk/risk.hpp"
#include "dynrisk/riskcore.hpp"

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace dynrisk {

using Triple = std::array<StoppingTime, 3>; ///< (nu, sigma, tau), nu <= sigma <= tau

struct LabelledMeasure {
    std::string label;
    Measure measure;
};

/// max over atoms of |rho_{nu,tau}(X) - rho_{nu,sigma}(-rho_{sigma,tau}(X))|, one
/// case per triple and battery element anchored at tau.
Report check_time_consistency(const DynamicRiskMeasure& rho, const std::vector<Position>& battery,
                              const std::vector<Triple>& triples,
                              double tol = default_tolerance);

/// max over Q-positive nu-atoms of
/// |alpha_{nu,tau}(Q) - alpha_{nu,sigma}(Q) - E_Q(alpha_{sigma,tau}(Q) | F_nu)|.
/// Atoms where a term is infinite are skipped and counted.
Report check_cocycle(const PenaltyFunction& penalty, const std::vector<LabelledMeasure>& samples,
                     const std::vector<Triple>& triples, double tol = default_tolerance);

struct Decomposition {
    RandomVariable y; ///< -rho_{sigma,tau}(X), F_sigma-measurable, anchored at tau
    RandomVariable z; ///< X - Y, with rho_{sigma,tau}(Z) = 0
};

/// Thrown when X is not in A_{nu,tau}(Q).
class NotAcceptable : public std::invalid_argument {
public:
    NotAcceptable(const std::string& atom, double value)
        : std::invalid_argument("position is not acceptable at atom '" + atom + "'"),
          atom_(atom), value_(value) {}
    const std::string& atom() const noexcept { return atom_; }
    double value() const noexcept { return value_; }

private:
    std::string atom_;
    double value_;
};

/// Splits X in A_{nu,tau}(Q) into Y in A_{nu,sigma}(Q) plus Z in A_{sigma,tau}.
Decomposition decompose_acceptable(const DynamicRiskMeasure& rho, const RandomVariable& x,
                                   const StoppingTime& nu, const StoppingTime& sigma,
                                   const Measure& q, double tol = default_tolerance);

/// Positive part of E_Q(rho_{sigma,tau}(X) + alpha_{sigma,tau}(Q) | F_nu)
/// - rho_{nu,tau}(X) - alpha_{nu,tau}(Q) over Q-positive nu-atoms; one case per
/// measure and triple, labelled with the worst battery element.
Report check_supermartingale_inequality(const DynamicRiskMeasure& rho,
                                        const PenaltyFunction& penalty,
                                        const std::vector<LabelledMeasure>& measures,
                                        const std::vector<Position>& battery,
                                        const std::vector<Triple>& triples,
                                        double tol = default_tolerance);

/// |rho_{nu,sigma}(Z) - rho_{nu,tau}(Z + rho_{sigma,tau}(0))| for battery
/// elements Z anchored at sigma.
Report check_restriction(const DynamicRiskMeasure& rho, const std::vector<Position>& battery,
                         const std::vector<Triple>& triples, double tol = default_tolerance);

/// Members with zero penalty at the root plus candidates whose minimal penalty
/// (LP) at (0, T) is within tol. A partial enumeration of the zero-penalty set.
std::vector<LabelledMeasure> zero_penalty_set(const DualFamily& family,
                                              const std::vector<LabelledMeasure>& candidates = {},
                                              double tol = default_tolerance);

/// Candidates whose penalty alpha_{0,T} at the root is within tol.
std::vector<LabelledMeasure> zero_penalty_set(const PenaltyFunction& penalty, const TreePtr& tree,
                                              const std::vector<LabelledMeasure>& candidates,
                                              double tol = default_tolerance);

struct NondegeneracyResult {
    bool nondegenerate = true;
    std::optional<std::string> witness_leaf;
    /// min over lambda of rho_{0,T}(lambda 1_leaf), per leaf.
    std::vector<double> min_risk;
};

NondegeneracyResult check_nondegenerate(const DynamicRiskMeasure& rho,
                                        const std::vector<double>& lambdas = {1, 4, 16, 64},
                                        double tol = default_tolerance);

enum class M0Verdict { equivalent, hypotheses_violated, lemma_failure };
std::string to_string(M0Verdict v);

struct M0Result {
    M0Verdict verdict = M0Verdict::equivalent;
    std::vector<std::string> reasons;
    /// Labels of zero-penalty measures that charge some leaf with zero mass.
    std::vector<std::string> non_equivalent;
};

/// Checks that every zero-penalty measure is equivalent to P. The hypotheses
/// (normalization, time consistency on the default battery, non-degeneracy)
/// are checked first so that a non-equivalent measure under violated
/// hypotheses is not mistaken for a failure of the lemma.
M0Result check_M0_equivalence(const DynamicRiskMeasure& rho,
                              const std::vector<LabelledMeasure>& zero_set,
                              std::uint64_t seed = 0, double tol = default_tolerance);

struct RiskProcess {
    std::vector<double> values; ///< V(n) = rho_{t(n),T}(X)(n) per node
    Report supermartingale;     ///< node inequality V(n) >= E_Q(V(children) | n), per level
    double root_error = 0.0;    ///< |V(root) - rho_{0,T}(X)|
    double leaf_error = 0.0;    ///< max |V(leaf) + X(leaf)|
    /// E_Q(V at sigma_m) along sigma_m = min(sigma + m, T) decreasing to sigma:
    /// residuals of monotonicity and of the limit.
    Report convergence;
};

/// Thrown when Q is outside the zero-penalty set.
class NotZeroPenalty : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// X must be anchored at T. Requires alpha_{0,T}(Q) = 0 at the root.
RiskProcess risk_process(const DynamicRiskMeasure& rho, const RandomVariable& x, const Measure& q,
                         const PenaltyFunction& penalty, std::uint64_t seed = 0,
                         double tol = default_tolerance);

/// sigma + k truncated at T: stop k steps after sigma or at a leaf.
StoppingTime shift(const StoppingTime& sigma, int k);

} // namespace dynrisk
