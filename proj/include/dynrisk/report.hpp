#pragma once

#include "dynrisk/probspace.hpp"

#include <map>
#include <string>
#include <vector>

namespace dynrisk {

/// One checked case: a stopping-time tuple, a battery element (or measure)
/// label, the residual and the atom where it was attained.
struct ReportCase {
    std::vector<std::string> triple;
    std::string x_label;
    double residual = 0.0;
    std::string witness_atom;
};

/// Residual report shared by every checker. The verdict passes iff the largest
/// residual is within tolerance; a pass is evidence on a finite battery, a
/// failure carries its witness.
struct Report {
    std::string check;
    double tolerance = default_tolerance;
    std::vector<ReportCase> cases;
    std::size_t skipped = 0;
    std::vector<std::string> notes;
    std::map<std::string, double> metrics;

    double max_residual() const;
    /// The case with the largest residual, or nullptr for an empty report.
    const ReportCase* worst() const;
    bool passed() const;
};

} // namespace dynrisk
