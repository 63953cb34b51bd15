#pragma once

// Concrete dynamic risk measures: entropic risk with threshold families and
// discrete-time g-expectations (backward recursion on binomial trees).

#include "dynrisk/risk.hpp"

#include <array>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace dynrisk {

/// Risk aversion alpha > 0 and thresholds g_{s,t} > 0, stored as ln g_{s,t}.
class EntropicSpec {
public:
    using LogG = std::function<double(int s, int t)>;

    EntropicSpec(double alpha, LogG log_g, std::string description);

    /// g_{s,t} = exp(lambda (t - s)).
    static EntropicSpec exponential(double alpha, double lambda);
    /// g_{s,t} = 1 + slope (t - s).
    static EntropicSpec affine(double alpha, double slope = 1.0);
    /// Explicit ln g_{s,t} for s < t; g_{s,s} = 1.
    static EntropicSpec pairs(double alpha, std::map<std::pair<int, int>, double> log_g);

    double alpha() const noexcept { return alpha_; }
    /// ln g_{s,t}; zero when s == t.
    double log_g(int s, int t) const;
    const std::string& description() const noexcept { return description_; }

private:
    double alpha_;
    LogG log_g_;
    std::string description_;
};

/// rho_{sigma,tau}(X)(n) = (1/alpha) ln E_P(exp(-alpha X - ln g_{t(n),t(m)}) | n),
/// where m runs over the tau-atoms below n.
class EntropicRisk final : public DynamicRiskMeasure {
public:
    EntropicRisk(TreePtr tree, EntropicSpec spec);
    std::string provenance() const override { return "entropic"; }
    const EntropicSpec& spec() const noexcept { return spec_; }

protected:
    RandomVariable do_evaluate(const RandomVariable& x, const StoppingTime& sigma) const override;

private:
    EntropicSpec spec_;
};

/// (1/alpha) E_Q(ln(dQ/dP) + ln g_{t(n),t(m)} | n) per sigma-atom, through
/// transition kernels.
PenaltyVariable entropic_penalty(const EntropicSpec& spec, const Measure& q,
                                 const StoppingTime& sigma, const StoppingTime& tau);

PenaltyFunction entropic_penalty_function(EntropicSpec spec);

struct ThresholdCheck {
    bool consistent = true;
    double defect = 0.0;           ///< max |ln g_{r,t} - ln g_{r,s} - ln g_{s,t}|
    std::array<int, 3> witness{};  ///< (r, s, t) attaining the defect
};

ThresholdCheck threshold_is_consistent(const EntropicSpec& spec, int horizon, double tol = 1e-12);

/// Driver g(t, z) of the backward recursion and the step dt.
class DriverSpec {
public:
    enum class Kind { zero, abs, quad, table, custom };

    static DriverSpec zero(double dt);
    /// g(z) = mu |z|.
    static DriverSpec abs(double mu, double dt);
    /// g(z) = (alpha / 2) z^2.
    static DriverSpec quad(double alpha, double dt);
    /// Piecewise-linear in z through (knots[i], values[t][i]) per time t,
    /// extended linearly beyond the end knots.
    static DriverSpec table(std::vector<double> knots, std::vector<std::vector<double>> values,
                            double dt);
    static DriverSpec custom(std::function<double(int, double)> g, double dt,
                             std::string description = "custom");

    double operator()(int t, double z) const { return g_(t, z); }
    double dt() const noexcept { return dt_; }
    Kind kind() const noexcept { return kind_; }
    double parameter() const noexcept { return parameter_; }
    const std::string& description() const noexcept { return description_; }

    /// max_t |g(t, 0)| over 0..horizon-1.
    double value_at_zero(int horizon) const;
    /// Largest midpoint-convexity violation on a z grid, per time.
    double convexity_defect(int horizon, double z_range = 8.0, int points = 65) const;

private:
    DriverSpec(Kind kind, std::function<double(int, double)> g, double dt, double parameter,
               std::string description);

    Kind kind_;
    std::function<double(int, double)> g_;
    double dt_;
    double parameter_;
    std::string description_;
};

struct BsdeSolution {
    std::vector<double> y; ///< per node
    std::vector<double> z; ///< per non-terminal node, NaN at leaves
};

/// Throws unless every non-leaf node has two children with probability 1/2.
void require_symmetric_binomial(const ScenarioTree& tree);

/// Y_T = terminal, Z = (Y_up - Y_down) / (2 sqrt(dt)),
/// Y = (Y_up + Y_down) / 2 + g(t, Z) dt. The first child is the up move.
BsdeSolution solve_bsde(const TreePtr& tree, const DriverSpec& driver,
                        const RandomVariable& terminal);

/// rho_{sigma,tau}(X) = Y_sigma for the recursion with terminal value -X at tau.
class BsdeRisk final : public DynamicRiskMeasure {
public:
    BsdeRisk(TreePtr tree, DriverSpec driver);
    std::string provenance() const override { return "bsde"; }
    const DriverSpec& driver() const noexcept { return driver_; }

    /// Full solution for terminal value -X at T.
    BsdeSolution risk_of(const RandomVariable& x) const;

protected:
    RandomVariable do_evaluate(const RandomVariable& x, const StoppingTime& sigma) const override;

private:
    DriverSpec driver_;
};

/// Position on the recombining lattice as a function of the terminal
/// Brownian value b = (2j - N) sqrt(dt), j up-moves out of N.
using LatticePayoff = std::function<double(double b)>;

/// Y_0 of the recursion on the N-step recombining lattice with dt = horizon / N,
/// terminal value -X; the risk of X at time 0.
double bsde_lattice_risk(int steps, const DriverSpec& driver, const LatticePayoff& x,
                         double horizon = 1.0);

/// (1/alpha) ln E(exp(-alpha X)) under the symmetric N-step random walk.
double entropic_lattice_risk(int steps, double alpha, const LatticePayoff& x,
                             double horizon = 1.0);

} // namespace dynrisk
