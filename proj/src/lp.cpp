#include "dynrisk/lp.hpp"

#include <cmath>
#include <limits>

namespace dynrisk::lp {

std::string to_string(Status s) {
    switch (s) {
    case Status::optimal: return "optimal";
    case Status::infeasible: return "infeasible";
    case Status::unbounded: return "unbounded";
    case Status::iteration_limit: return "iteration_limit";
    }
    return "unknown";
}

namespace {

struct Tableau {
    std::vector<std::vector<double>> rows; // each row: columns..., rhs
    std::vector<double> z;                 // reduced costs, z.back() = -objective
    std::vector<std::size_t> basis;
    std::size_t cols = 0;                  // structural + artificial columns

    double rhs(std::size_t i) const { return rows[i][cols]; }

    void pivot(std::size_t r, std::size_t j) {
        auto& pr = rows[r];
        const double inv = 1.0 / pr[j];
        for (auto& v : pr) v *= inv;
        pr[j] = 1.0;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (i == r) continue;
            const double f = rows[i][j];
            if (f == 0.0) continue;
            for (std::size_t k = 0; k <= cols; ++k) rows[i][k] -= f * pr[k];
            rows[i][j] = 0.0;
        }
        const double f = z[j];
        if (f != 0.0) {
            for (std::size_t k = 0; k <= cols; ++k) z[k] -= f * pr[k];
            z[j] = 0.0;
        }
        basis[r] = j;
    }
};

// Bland's rule simplex on columns [0, allowed). Returns optimal/unbounded/iteration_limit.
Status run(Tableau& t, std::size_t allowed, const Options& opts) {
    for (std::size_t it = 0; it < opts.max_iterations; ++it) {
        std::size_t enter = allowed;
        for (std::size_t j = 0; j < allowed; ++j) {
            if (t.z[j] < -opts.pivot_tol) {
                enter = j;
                break;
            }
        }
        if (enter == allowed) return Status::optimal;

        std::size_t leave = t.rows.size();
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < t.rows.size(); ++i) {
            const double a = t.rows[i][enter];
            if (a <= opts.pivot_tol) continue;
            const double ratio = t.rhs(i) / a;
            if (ratio < best - 1e-14 ||
                (std::abs(ratio - best) <= 1e-14 && leave < t.rows.size() &&
                 t.basis[i] < t.basis[leave])) {
                best = ratio;
                leave = i;
            }
        }
        if (leave == t.rows.size()) return Status::unbounded;
        t.pivot(leave, enter);
    }
    return Status::iteration_limit;
}

} // namespace

Result solve(const Problem& p, const Options& opts) {
    const std::size_t m = p.b.size();
    const std::size_t n = p.c.size();
    if (p.a.size() != m) throw std::invalid_argument("lp: row count mismatch");
    for (const auto& row : p.a)
        if (row.size() != n) throw std::invalid_argument("lp: column count mismatch");

    Tableau t;
    t.cols = n + m;
    t.rows.assign(m, std::vector<double>(t.cols + 1, 0.0));
    t.basis.resize(m);
    double scale = 1.0;
    for (std::size_t i = 0; i < m; ++i) {
        const double sign = p.b[i] < 0.0 ? -1.0 : 1.0;
        for (std::size_t j = 0; j < n; ++j) t.rows[i][j] = sign * p.a[i][j];
        t.rows[i][n + i] = 1.0;
        t.rows[i][t.cols] = sign * p.b[i];
        t.basis[i] = n + i;
        scale += std::abs(p.b[i]);
    }

    // Phase one: minimize the sum of artificials.
    t.z.assign(t.cols + 1, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) t.z[j] -= t.rows[i][j];
        t.z[t.cols] -= t.rows[i][t.cols];
    }
    Result res;
    if (auto s = run(t, t.cols, opts); s == Status::iteration_limit) {
        res.status = s;
        return res;
    }
    if (-t.z[t.cols] > opts.feasibility_tol * scale) {
        res.status = Status::infeasible;
        return res;
    }

    // Drive artificials out of the basis; rows where that is impossible are redundant.
    for (std::size_t i = 0; i < t.rows.size();) {
        if (t.basis[i] < n) {
            ++i;
            continue;
        }
        std::size_t j = 0;
        while (j < n && std::abs(t.rows[i][j]) <= opts.pivot_tol) ++j;
        if (j < n) {
            t.pivot(i, j);
            ++i;
        } else {
            t.rows.erase(t.rows.begin() + static_cast<std::ptrdiff_t>(i));
            t.basis.erase(t.basis.begin() + static_cast<std::ptrdiff_t>(i));
        }
    }

    // Phase two on the structural columns.
    t.z.assign(t.cols + 1, 0.0);
    for (std::size_t j = 0; j < n; ++j) t.z[j] = p.c[j];
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        const double cb = p.c[t.basis[i]];
        if (cb == 0.0) continue;
        for (std::size_t k = 0; k <= t.cols; ++k) t.z[k] -= cb * t.rows[i][k];
    }
    res.status = run(t, n, opts);
    if (res.status != Status::optimal) return res;

    res.x.assign(n, 0.0);
    for (std::size_t i = 0; i < t.rows.size(); ++i) res.x[t.basis[i]] = t.rhs(i);
    res.objective = 0.0;
    for (std::size_t j = 0; j < n; ++j) res.objective += p.c[j] * res.x[j];
    return res;
}

} // namespace dynrisk::lp
