#pragma once

// Dense two-phase simplex for small equality-form linear programs:
//
//     minimize c'x  subject to  A x = b,  x >= 0.
//
// Bland's rule is used throughout, so the method terminates on degenerate
// problems. Redundant equality rows are detected after phase one and dropped.

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace dynrisk::lp {

enum class Status { optimal, infeasible, unbounded, iteration_limit };

std::string to_string(Status s);

struct Problem {
    std::vector<std::vector<double>> a; ///< rows x cols
    std::vector<double> b;              ///< one entry per row
    std::vector<double> c;              ///< one entry per column
};

struct Result {
    Status status = Status::infeasible;
    double objective = 0.0;
    std::vector<double> x;
};

struct Options {
    double pivot_tol = 1e-11;
    double feasibility_tol = 1e-9;
    std::size_t max_iterations = 10000;
};

Result solve(const Problem& p, const Options& opts = {});

/// The solver itself failed (as opposed to the program being infeasible).
class SolverError : public std::runtime_error {
public:
    SolverError(Status s, const std::string& what) : std::runtime_error(what), status_(s) {}
    Status status() const noexcept { return status_; }

private:
    Status status_;
};

} // namespace dynrisk::lp
