#pragma once

// The evaluator interface shared by every dynamic risk measure:
// (X anchored at tau, sigma) -> rho_{sigma,tau}(X) anchored at sigma.

#include "dynrisk/probspace.hpp"

#include <functional>
#include <string>

namespace dynrisk {

class DynamicRiskMeasure {
public:
    explicit DynamicRiskMeasure(TreePtr tree);
    virtual ~DynamicRiskMeasure() = default;

    /// rho_{sigma,tau}(X) where tau is the anchor of X. Requires sigma <= tau.
    RandomVariable evaluate(const RandomVariable& x, const StoppingTime& sigma) const;
    RandomVariable operator()(const RandomVariable& x, const StoppingTime& sigma) const {
        return evaluate(x, sigma);
    }

    /// "dual-family", "entropic", "bsde", "stable-set" or "custom".
    virtual std::string provenance() const = 0;

    const TreePtr& tree() const noexcept { return tree_; }

protected:
    virtual RandomVariable do_evaluate(const RandomVariable& x, const StoppingTime& sigma) const = 0;

private:
    TreePtr tree_;
};

/// (Q, sigma, tau) -> alpha_{sigma,tau}(Q), one extended real per sigma-atom.
using PenaltyFunction =
    std::function<PenaltyVariable(const Measure&, const StoppingTime&, const StoppingTime&)>;

/// Wraps an arbitrary evaluator, e.g. a non-example for the axiom checker.
class FunctionRisk final : public DynamicRiskMeasure {
public:
    using Fn = std::function<RandomVariable(const RandomVariable&, const StoppingTime&)>;
    FunctionRisk(TreePtr tree, Fn fn, std::string tag = "custom");
    std::string provenance() const override { return tag_; }

protected:
    RandomVariable do_evaluate(const RandomVariable& x, const StoppingTime& sigma) const override;

private:
    Fn fn_;
    std::string tag_;
};

} // namespace dynrisk
