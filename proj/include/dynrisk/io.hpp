#pragma once

// JSON input formats and deterministic report output.

#include "dynrisk/models.hpp"
#include "dynrisk/report.hpp"
#include "dynrisk/riskcore.hpp"
#include "dynrisk/stableset.hpp"

#include <stdexcept>
#include <string>

namespace dynrisk::io {

/// Malformed input. The message has the form "file:line: field 'f': reason".
class InputError : public std::runtime_error {
public:
    InputError(std::string file, int line, std::string field, const std::string& reason);

    const std::string& file() const noexcept { return file_; }
    int line() const noexcept { return line_; }
    const std::string& field() const noexcept { return field_; }

private:
    std::string file_;
    int line_;
    std::string field_;
};

struct Source {
    std::string name; ///< file path or a label for in-memory text
    std::string text;
};

Source read_source(const std::string& path);

TreePtr parse_tree(const Source& src);
Measure parse_measure(const Source& src, const TreePtr& tree);
DualFamily parse_dual_family(const Source& src, const TreePtr& tree);
EntropicSpec parse_entropic(const Source& src);
DriverSpec parse_driver(const Source& src);
RectangularFamily parse_rectangular(const Source& src, const TreePtr& tree);
/// {"values": {node_id: v}}; the listed nodes form the anchor.
RandomVariable parse_payoff(const Source& src, const TreePtr& tree);

enum class ModelKind { dual_family, entropic, driver, rectangular };
std::string to_string(ModelKind k);

/// Recognizes a model file by its top-level keys: "members", "alpha" with
/// "log_g", "kind", or "nodes".
ModelKind detect_model(const Source& src);

/// %.17g, with "inf", "-inf" and "nan" emitted as strings.
std::string format_number(double v);

/// Sorted keys, two-space indentation, numbers through format_number.
std::string report_to_json(const Report& report);

/// Writes to `path`, or to stdout when path is empty or "-".
void write_text(const std::string& text, const std::string& path);

} // namespace dynrisk::io
