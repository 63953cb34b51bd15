#include "dynrisk/report.hpp"

#include <cmath>

namespace dynrisk {

double Report::max_residual() const {
    double m = 0.0;
    for (const auto& c : cases) {
        if (std::isnan(c.residual)) return c.residual;
        m = std::max(m, c.residual);
    }
    return m;
}

const ReportCase* Report::worst() const {
    const ReportCase* w = nullptr;
    for (const auto& c : cases)
        if (!w || std::isnan(c.residual) || c.residual > w->residual) w = &c;
    return w;
}

bool Report::passed() const {
    const double m = max_residual();
    return !std::isnan(m) && m <= tolerance;
}

} // namespace dynrisk
