#include "dynrisk/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace dynrisk {

EntropicSpec::EntropicSpec(double alpha, LogG log_g, std::string description)
    : alpha_(alpha), log_g_(std::move(log_g)), description_(std::move(description)) {
    if (!(alpha_ > 0.0) || !std::isfinite(alpha_))
        throw ValidationError("entropic alpha must be positive");
    if (!log_g_) throw ValidationError("entropic thresholds missing");
}

EntropicSpec EntropicSpec::exponential(double alpha, double lambda) {
    std::ostringstream d;
    d << "g_{s,t} = exp(" << lambda << " (t - s))";
    return EntropicSpec(
        alpha, [lambda](int s, int t) { return lambda * static_cast<double>(t - s); }, d.str());
}

EntropicSpec EntropicSpec::affine(double alpha, double slope) {
    if (slope < 0.0) throw ValidationError("affine threshold slope must be nonnegative");
    std::ostringstream d;
    d << "g_{s,t} = 1 + " << slope << " (t - s)";
    return EntropicSpec(
        alpha, [slope](int s, int t) { return std::log1p(slope * static_cast<double>(t - s)); },
        d.str());
}

EntropicSpec EntropicSpec::pairs(double alpha, std::map<std::pair<int, int>, double> log_g) {
    for (const auto& [k, v] : log_g) {
        if (k.first > k.second) throw ValidationError("threshold pair with s > t");
        if (!std::isfinite(v)) throw ValidationError("threshold ln g must be finite");
        if (k.first == k.second && v != 0.0) throw ValidationError("g_{s,s} must be 1");
    }
    auto table = std::make_shared<const std::map<std::pair<int, int>, double>>(std::move(log_g));
    return EntropicSpec(
        alpha,
        [table](int s, int t) {
            auto it = table->find({s, t});
            if (it == table->end())
                throw ValidationError("threshold g_{" + std::to_string(s) + "," +
                                      std::to_string(t) + "} not given");
            return it->second;
        },
        "explicit thresholds");
}

double EntropicSpec::log_g(int s, int t) const {
    if (s > t) throw ValidationError("threshold requested with s > t");
    if (s == t) return 0.0;
    return log_g_(s, t);
}

EntropicRisk::EntropicRisk(TreePtr tree, EntropicSpec spec)
    : DynamicRiskMeasure(std::move(tree)), spec_(std::move(spec)) {}

RandomVariable EntropicRisk::do_evaluate(const RandomVariable& x,
                                         const StoppingTime& sigma) const {
    const auto& tau = x.anchor();
    const auto& tr = *tree();
    const auto p = Measure::reference(tree());
    const double alpha = spec_.alpha();
    std::vector<double> out;
    out.reserve(sigma.atom_count());
    std::vector<std::pair<double, double>> terms;
    for (NodeIndex n : sigma.atoms()) {
        const int s = tr.time(n);
        terms.clear();
        double top = -std::numeric_limits<double>::infinity();
        for (const auto& [m, w] : conditional_law(p, n, tau)) {
            const double e = -alpha * x[m] - spec_.log_g(s, tr.time(tau.atom(m)));
            terms.emplace_back(w, e);
            top = std::max(top, e);
        }
        double sum = 0.0;
        for (const auto& [w, e] : terms) sum += w * std::exp(e - top);
        out.push_back((top + std::log(sum)) / alpha);
    }
    return RandomVariable(sigma, std::move(out));
}

PenaltyVariable entropic_penalty(const EntropicSpec& spec, const Measure& q,
                                 const StoppingTime& sigma, const StoppingTime& tau) {
    if (q.tree() != sigma.tree() || sigma.tree() != tau.tree())
        throw ValidationError("operands live on different trees");
    if (!precedes(sigma, tau)) throw ValidationError("sigma <= tau required");
    const auto& tree = *sigma.tree();
    const auto p = Measure::reference(sigma.tree());
    PenaltyVariable out{sigma, {}};
    for (NodeIndex n : sigma.atoms()) {
        const int s = tree.time(n);
        const auto lp = conditional_law(p, n, tau);
        const auto lq = conditional_law(q, n, tau);
        double v = 0.0;
        for (std::size_t i = 0; i < lq.size(); ++i) {
            const double w = lq[i].second;
            if (w <= 0.0) continue;
            v += w * (std::log(w / lp[i].second) + spec.log_g(s, tree.time(tau.atom(lq[i].first))));
        }
        out.values.emplace_back(v / spec.alpha());
    }
    return out;
}

PenaltyFunction entropic_penalty_function(EntropicSpec spec) {
    return [spec = std::move(spec)](const Measure& q, const StoppingTime& s,
                                    const StoppingTime& t) { return entropic_penalty(spec, q, s, t); };
}

ThresholdCheck threshold_is_consistent(const EntropicSpec& spec, int horizon, double tol) {
    ThresholdCheck res;
    for (int r = 0; r <= horizon; ++r)
        for (int s = r; s <= horizon; ++s)
            for (int t = s; t <= horizon; ++t) {
                const double d =
                    std::abs(spec.log_g(r, t) - spec.log_g(r, s) - spec.log_g(s, t));
                if (d > res.defect) {
                    res.defect = d;
                    res.witness = {r, s, t};
                }
            }
    res.consistent = res.defect <= tol;
    return res;
}

// ---------------------------------------------------------------------------
// Drivers

DriverSpec::DriverSpec(Kind kind, std::function<double(int, double)> g, double dt,
                       double parameter, std::string description)
    : kind_(kind), g_(std::move(g)), dt_(dt), parameter_(parameter),
      description_(std::move(description)) {
    if (!(dt_ > 0.0) || !std::isfinite(dt_)) throw ValidationError("driver dt must be positive");
}

DriverSpec DriverSpec::zero(double dt) {
    return DriverSpec(Kind::zero, [](int, double) { return 0.0; }, dt, 0.0, "g = 0");
}

DriverSpec DriverSpec::abs(double mu, double dt) {
    if (!(mu >= 0.0)) throw ValidationError("driver mu must be nonnegative");
    return DriverSpec(Kind::abs, [mu](int, double z) { return mu * std::abs(z); }, dt, mu,
                      "g = mu |z|");
}

DriverSpec DriverSpec::quad(double alpha, double dt) {
    if (!(alpha > 0.0)) throw ValidationError("driver alpha must be positive");
    return DriverSpec(Kind::quad, [alpha](int, double z) { return 0.5 * alpha * z * z; }, dt,
                      alpha, "g = (alpha/2) z^2");
}

DriverSpec DriverSpec::table(std::vector<double> knots, std::vector<std::vector<double>> values,
                             double dt) {
    if (knots.size() < 2) throw ValidationError("driver table needs at least two knots");
    if (!std::is_sorted(knots.begin(), knots.end()) ||
        std::adjacent_find(knots.begin(), knots.end()) != knots.end())
        throw ValidationError("driver table knots must be strictly increasing");
    if (values.empty()) throw ValidationError("driver table has no rows");
    for (const auto& row : values)
        if (row.size() != knots.size()) throw ValidationError("driver table row length mismatch");
    auto k = std::make_shared<const std::vector<double>>(std::move(knots));
    auto v = std::make_shared<const std::vector<std::vector<double>>>(std::move(values));
    auto g = [k, v](int t, double z) {
        const auto& row = (*v)[std::min<std::size_t>(static_cast<std::size_t>(std::max(t, 0)),
                                                     v->size() - 1)];
        auto it = std::upper_bound(k->begin(), k->end(), z);
        std::size_t i = it == k->begin() ? 0 : static_cast<std::size_t>(it - k->begin()) - 1;
        i = std::min(i, k->size() - 2);
        const double w = (z - (*k)[i]) / ((*k)[i + 1] - (*k)[i]);
        return row[i] + w * (row[i + 1] - row[i]);
    };
    return DriverSpec(Kind::table, g, dt, 0.0, "tabulated g(t, z)");
}

DriverSpec DriverSpec::custom(std::function<double(int, double)> g, double dt,
                              std::string description) {
    if (!g) throw ValidationError("custom driver missing");
    return DriverSpec(Kind::custom, std::move(g), dt, 0.0, std::move(description));
}

double DriverSpec::value_at_zero(int horizon) const {
    double m = 0.0;
    for (int t = 0; t < std::max(horizon, 1); ++t) m = std::max(m, std::abs(g_(t, 0.0)));
    return m;
}

double DriverSpec::convexity_defect(int horizon, double z_range, int points) const {
    double worst = 0.0;
    const double h = 2.0 * z_range / (points - 1);
    for (int t = 0; t < std::max(horizon, 1); ++t)
        for (int i = 1; i + 1 < points; ++i) {
            const double z = -z_range + h * i;
            const double mid = g_(t, z);
            const double chord = 0.5 * (g_(t, z - h) + g_(t, z + h));
            worst = std::max(worst, mid - chord);
        }
    return worst;
}

void require_symmetric_binomial(const ScenarioTree& tree) {
    for (NodeIndex n = 0; n < tree.size(); ++n) {
        const auto& kids = tree.node(n).children;
        if (kids.empty()) continue;
        if (kids.size() != 2)
            throw ValidationError("binomial tree required: node must have two children", tree.id(n));
        for (NodeIndex c : kids)
            if (std::abs(tree.node(c).edge_prob - 0.5) > 1e-12)
                throw ValidationError("symmetric binomial tree required: edge probability 1/2",
                                      tree.id(c));
    }
}

namespace {

std::vector<double> bsde_sweep(const ScenarioTree& tree, const DriverSpec& driver,
                               const RandomVariable& terminal, const StoppingTime& sigma,
                               std::vector<double>* z_out) {
    const double sdt = std::sqrt(driver.dt());
    const double dt = driver.dt();
    return backward_induction(terminal, sigma, [&](NodeIndex n, std::span<const double> cv) {
        const double z = (cv[0] - cv[1]) / (2.0 * sdt);
        if (z_out) (*z_out)[n] = z;
        return 0.5 * (cv[0] + cv[1]) + driver(tree.time(n), z) * dt;
    });
}

} // namespace

BsdeSolution solve_bsde(const TreePtr& tree, const DriverSpec& driver,
                        const RandomVariable& terminal) {
    require_symmetric_binomial(*tree);
    if (terminal.anchor().tree() != tree) throw ValidationError("terminal value on another tree");
    BsdeSolution sol;
    sol.z.assign(tree->size(), std::numeric_limits<double>::quiet_NaN());
    sol.y = bsde_sweep(*tree, driver, terminal, StoppingTime::at(tree, 0), &sol.z);
    return sol;
}

BsdeRisk::BsdeRisk(TreePtr tree, DriverSpec driver)
    : DynamicRiskMeasure(std::move(tree)), driver_(std::move(driver)) {
    require_symmetric_binomial(*DynamicRiskMeasure::tree());
}

BsdeSolution BsdeRisk::risk_of(const RandomVariable& x) const {
    return solve_bsde(tree(), driver_, -x);
}

RandomVariable BsdeRisk::do_evaluate(const RandomVariable& x, const StoppingTime& sigma) const {
    return read_atoms(bsde_sweep(*tree(), driver_, -x, sigma, nullptr), sigma);
}

double bsde_lattice_risk(int steps, const DriverSpec& driver, const LatticePayoff& x,
                         double horizon) {
    if (steps < 1) throw ValidationError("lattice needs at least one step");
    const double dt = horizon / steps;
    const double sdt = std::sqrt(dt);
    std::vector<double> y(static_cast<std::size_t>(steps) + 1);
    for (int j = 0; j <= steps; ++j) y[static_cast<std::size_t>(j)] = -x((2 * j - steps) * sdt);
    for (int t = steps - 1; t >= 0; --t)
        for (int j = 0; j <= t; ++j) {
            const auto ju = static_cast<std::size_t>(j) + 1, jd = static_cast<std::size_t>(j);
            const double z = (y[ju] - y[jd]) / (2.0 * sdt);
            y[jd] = 0.5 * (y[ju] + y[jd]) + driver(t, z) * dt;
        }
    return y[0];
}

double entropic_lattice_risk(int steps, double alpha, const LatticePayoff& x, double horizon) {
    if (steps < 1) throw ValidationError("lattice needs at least one step");
    const double sdt = std::sqrt(horizon / steps);
    std::vector<double> e(static_cast<std::size_t>(steps) + 1);
    double top = -std::numeric_limits<double>::infinity();
    for (int j = 0; j <= steps; ++j) {
        const double logw = std::lgamma(steps + 1.0) - std::lgamma(j + 1.0) -
                            std::lgamma(steps - j + 1.0) - steps * std::log(2.0);
        e[static_cast<std::size_t>(j)] = logw - alpha * x((2 * j - steps) * sdt);
        top = std::max(top, e[static_cast<std::size_t>(j)]);
    }
    double sum = 0.0;
    for (double v : e) sum += std::exp(v - top);
    return (top + std::log(sum)) / alpha;
}

} // namespace dynrisk
