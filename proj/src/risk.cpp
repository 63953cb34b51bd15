#include "dynrisk/risk.hpp"

namespace dynrisk {

DynamicRiskMeasure::DynamicRiskMeasure(TreePtr tree) : tree_(std::move(tree)) {
    if (!tree_) throw ValidationError("risk measure without a tree");
}

RandomVariable DynamicRiskMeasure::evaluate(const RandomVariable& x,
                                            const StoppingTime& sigma) const {
    if (x.anchor().tree() != tree_ || sigma.tree() != tree_)
        throw ValidationError("position and stopping time must live on the measure's tree");
    if (!precedes(sigma, x.anchor()))
        throw ValidationError("rho_{sigma,tau} requires sigma <= tau");
    RandomVariable r = do_evaluate(x, sigma);
    if (!(r.anchor() == sigma)) throw std::logic_error("evaluator returned a mis-anchored value");
    return r;
}

FunctionRisk::FunctionRisk(TreePtr tree, Fn fn, std::string tag)
    : DynamicRiskMeasure(std::move(tree)), fn_(std::move(fn)), tag_(std::move(tag)) {}

RandomVariable FunctionRisk::do_evaluate(const RandomVariable& x, const StoppingTime& sigma) const {
    return fn_(x, sigma);
}

} // namespace dynrisk
