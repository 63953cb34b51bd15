#include "dynrisk/io.hpp"

#include <json.hpp>

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

namespace dynrisk::io {

using nlohmann::json;

InputError::InputError(std::string file, int line, std::string field, const std::string& reason)
    : std::runtime_error(file + ":" + std::to_string(line) + ": field '" + field + "': " + reason),
      file_(std::move(file)), line_(line), field_(std::move(field)) {}

namespace {

int line_at(const std::string& text, std::size_t offset) {
    offset = std::min(offset, text.size());
    int line = 1;
    for (std::size_t i = 0; i < offset; ++i)
        if (text[i] == '\n') ++line;
    return line;
}

std::size_t skip_ws(const std::string& t, std::size_t i) {
    while (i < t.size() && std::isspace(static_cast<unsigned char>(t[i]))) ++i;
    return i;
}

// Offset just past the JSON string starting at t[i] == '"'; the decoded text goes to `out`.
std::size_t scan_string(const std::string& t, std::size_t i, std::string* out) {
    for (++i; i < t.size() && t[i] != '"'; ++i) {
        if (t[i] == '\\' && i + 1 < t.size()) ++i;
        if (out) out->push_back(t[i]);
    }
    return i + 1;
}

std::size_t skip_value(const std::string& t, std::size_t i) {
    i = skip_ws(t, i);
    if (i >= t.size()) return i;
    if (t[i] == '"') return scan_string(t, i, nullptr);
    if (t[i] == '{' || t[i] == '[') {
        int depth = 0;
        for (; i < t.size(); ++i) {
            if (t[i] == '"') {
                i = scan_string(t, i, nullptr) - 1;
            } else if (t[i] == '{' || t[i] == '[') {
                ++depth;
            } else if (t[i] == '}' || t[i] == ']') {
                if (--depth == 0) return i + 1;
            }
        }
        return i;
    }
    while (i < t.size() && t[i] != ',' && t[i] != '}' && t[i] != ']') ++i;
    return i;
}

// "nodes[2].p" -> {"nodes", "[2]", "p"}
std::vector<std::string> split_path(const std::string& field) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : field) {
        if (c == '.' || c == '[') {
            if (!cur.empty()) out.push_back(cur);
            cur = c == '[' ? "[" : "";
        } else if (c == ']') {
            out.push_back(cur + "]");
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

// Line of the value named by the field path, or of its deepest existing ancestor.
int line_of(const Source& src, const std::string& field) {
    const auto& t = src.text;
    std::size_t pos = skip_ws(t, 0), found = pos;
    for (const auto& part : split_path(field)) {
        pos = skip_ws(t, pos);
        if (pos >= t.size()) break;
        std::size_t next = std::string::npos;
        if (part.front() == '[' && t[pos] == '[') {
            const auto want = std::strtoul(part.c_str() + 1, nullptr, 10);
            std::size_t i = skip_ws(t, pos + 1);
            for (unsigned long k = 0; i < t.size() && t[i] != ']'; ++k) {
                if (k == want) {
                    next = i;
                    break;
                }
                i = skip_ws(t, skip_value(t, i));
                if (i < t.size() && t[i] == ',') i = skip_ws(t, i + 1);
            }
        } else if (part.front() != '[' && t[pos] == '{') {
            std::size_t i = skip_ws(t, pos + 1);
            while (i < t.size() && t[i] == '"') {
                std::string key;
                const std::size_t key_at = i;
                i = skip_ws(t, scan_string(t, i, &key));
                if (i < t.size() && t[i] == ':') ++i;
                if (key == part) {
                    found = key_at;
                    next = skip_ws(t, i);
                    break;
                }
                i = skip_ws(t, skip_value(t, i));
                if (i < t.size() && t[i] == ',') i = skip_ws(t, i + 1);
            }
        }
        if (next == std::string::npos) break;
        pos = next;
        if (part.front() == '[') found = pos;
    }
    return line_at(t, found);
}

[[noreturn]] void fail(const Source& src, const std::string& field, const std::string& reason) {
    throw InputError(src.name, line_of(src, field), field, reason);
}

json parse(const Source& src) {
    try {
        return json::parse(src.text);
    } catch (const json::parse_error& e) {
        throw InputError(src.name, line_at(src.text, e.byte == 0 ? 0 : e.byte - 1), "<document>",
                         "malformed JSON");
    }
}

const json& member(const Source& src, const json& obj, const std::string& key,
                   const std::string& path) {
    if (!obj.is_object()) fail(src, path, "expected an object");
    auto it = obj.find(key);
    if (it == obj.end()) fail(src, path.empty() ? key : path + "." + key, "missing");
    return *it;
}

double number(const Source& src, const json& v, const std::string& field) {
    if (!v.is_number()) fail(src, field, "expected a number");
    return v.get<double>();
}

ExtendedReal extended(const Source& src, const json& v, const std::string& field) {
    if (v.is_string() && v.get<std::string>() == "inf") return ExtendedReal::infinity();
    if (!v.is_number()) fail(src, field, "expected a number or \"inf\"");
    return v.get<double>();
}

NodeIndex node_of(const Source& src, const TreePtr& tree, const std::string& id,
                  const std::string& field) {
    auto n = tree->find(id);
    if (!n) fail(src, field, "unknown node '" + id + "'");
    return *n;
}

Measure measure_from(const Source& src, const json& m, const TreePtr& tree,
                     const std::string& path) {
    if (!m.is_object()) fail(src, path, "expected a measure object");
    if (auto d = m.find("dirac"); d != m.end()) {
        if (!d->is_string()) fail(src, path + ".dirac", "expected a leaf id");
        const auto leaf = node_of(src, tree, d->get<std::string>(), path + ".dirac");
        try {
            return Measure::dirac(tree, leaf);
        } catch (const ValidationError& e) {
            fail(src, path + ".dirac", e.what());
        }
    }
    const auto& edges = member(src, m, "edges", path);
    if (!edges.is_object()) fail(src, path + ".edges", "expected an object of node id -> probability");
    std::vector<std::pair<std::string, double>> overrides;
    for (auto it = edges.begin(); it != edges.end(); ++it) {
        const auto field = path + ".edges." + it.key();
        node_of(src, tree, it.key(), field);
        overrides.emplace_back(it.key(), number(src, it.value(), field));
    }
    try {
        return Measure::with_overrides(tree, overrides);
    } catch (const ValidationError& e) {
        fail(src, path + ".edges" + (e.node_id().empty() ? "" : "." + e.node_id()), e.what());
    }
}

} // namespace

Source read_source(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError(path, 0, "<file>", "cannot open file");
    std::ostringstream ss;
    ss << in.rdbuf();
    return {path, ss.str()};
}

TreePtr parse_tree(const Source& src) {
    const auto doc = parse(src);
    const auto& levels = member(src, doc, "levels", "");
    if (!levels.is_number_integer()) fail(src, "levels", "expected an integer");
    const auto& nodes = member(src, doc, "nodes", "");
    if (!nodes.is_array()) fail(src, "nodes", "expected an array");
    std::vector<NodeSpec> specs;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const auto path = "nodes[" + std::to_string(i) + "]";
        const auto& n = nodes[i];
        NodeSpec s;
        const auto& id = member(src, n, "id", path);
        if (!id.is_string()) fail(src, path + ".id", "expected a string");
        s.id = id.get<std::string>();
        const auto& t = member(src, n, "time", path);
        if (!t.is_number_integer()) fail(src, path + ".time", "expected an integer");
        s.time = t.get<int>();
        if (auto p = n.find("parent"); p != n.end() && !p->is_null()) {
            if (!p->is_string()) fail(src, path + ".parent", "expected a string or null");
            s.parent = p->get<std::string>();
        }
        if (auto p = n.find("p"); p != n.end() && !p->is_null()) s.p = number(src, *p, path + ".p");
        specs.push_back(std::move(s));
    }
    try {
        return ScenarioTree::build(levels.get<int>(), specs);
    } catch (const ValidationError& e) {
        // Point at the offending node's entry when the error names one.
        if (!e.node_id().empty()) {
            const auto pos = src.text.find("\"" + e.node_id() + "\"");
            throw InputError(src.name, pos == std::string::npos ? 1 : line_at(src.text, pos),
                             "nodes." + e.node_id(), e.what());
        }
        fail(src, "nodes", e.what());
    }
}

Measure parse_measure(const Source& src, const TreePtr& tree) {
    return measure_from(src, parse(src), tree, "");
}

DualFamily parse_dual_family(const Source& src, const TreePtr& tree) {
    const auto doc = parse(src);
    const auto& members = member(src, doc, "members", "");
    if (!members.is_array() || members.empty()) fail(src, "members", "expected a nonempty array");
    std::vector<DualMember> out;
    for (std::size_t i = 0; i < members.size(); ++i) {
        const auto path = "members[" + std::to_string(i) + "]";
        const auto& m = members[i];
        DualMember dm{measure_from(src, member(src, m, "measure", path), tree, path + ".measure"),
                      {},
                      0.0,
                      {}};
        if (auto l = m.find("label"); l != m.end()) {
            if (!l->is_string()) fail(src, path + ".label", "expected a string");
            dm.label = l->get<std::string>();
        }
        if (auto d = m.find("default_penalty"); d != m.end())
            dm.default_penalty = extended(src, *d, path + ".default_penalty");
        if (auto p = m.find("penalty"); p != m.end()) {
            if (!p->is_object()) fail(src, path + ".penalty", "expected an object of atom -> value");
            for (auto it = p->begin(); it != p->end(); ++it) {
                const auto field = path + ".penalty." + it.key();
                dm.penalty[node_of(src, tree, it.key(), field)] = extended(src, it.value(), field);
            }
        }
        out.push_back(std::move(dm));
    }
    try {
        return DualFamily(std::move(out));
    } catch (const ValidationError& e) {
        fail(src, "members", e.what());
    }
}

EntropicSpec parse_entropic(const Source& src) {
    const auto doc = parse(src);
    const double alpha = number(src, member(src, doc, "alpha", ""), "alpha");
    if (!(alpha > 0.0)) fail(src, "alpha", "must be positive");
    const auto& lg = member(src, doc, "log_g", "");
    if (!lg.is_object()) fail(src, "log_g", "expected {\"lambda\": x} or {\"pairs\": {...}}");
    if (auto l = lg.find("lambda"); l != lg.end())
        return EntropicSpec::exponential(alpha, number(src, *l, "log_g.lambda"));
    if (auto p = lg.find("pairs"); p != lg.end()) {
        if (!p->is_object()) fail(src, "log_g.pairs", "expected an object of \"s,t\" -> ln g");
        std::map<std::pair<int, int>, double> table;
        for (auto it = p->begin(); it != p->end(); ++it) {
            const auto field = "log_g.pairs." + it.key();
            int s = 0, t = 0;
            char tail = 0;
            if (std::sscanf(it.key().c_str(), "%d,%d%c", &s, &t, &tail) != 2 || s < 0 || t < s)
                fail(src, field, "key must be \"s,t\" with 0 <= s <= t");
            table[{s, t}] = number(src, it.value(), field);
        }
        try {
            return EntropicSpec::pairs(alpha, std::move(table));
        } catch (const ValidationError& e) {
            fail(src, "log_g.pairs", e.what());
        }
    }
    fail(src, "log_g", "expected \"lambda\" or \"pairs\"");
}

DriverSpec parse_driver(const Source& src) {
    const auto doc = parse(src);
    const auto& kind = member(src, doc, "kind", "");
    if (!kind.is_string()) fail(src, "kind", "expected a string");
    const auto k = kind.get<std::string>();
    const double dt = number(src, member(src, doc, "dt", ""), "dt");
    if (!(dt > 0.0)) fail(src, "dt", "must be positive");
    try {
        if (k == "zero") return DriverSpec::zero(dt);
        if (k == "abs") return DriverSpec::abs(number(src, member(src, doc, "mu", ""), "mu"), dt);
        if (k == "quad")
            return DriverSpec::quad(number(src, member(src, doc, "alpha", ""), "alpha"), dt);
        if (k == "table") {
            const auto& knots = member(src, doc, "knots", "");
            const auto& values = member(src, doc, "values", "");
            if (!knots.is_array()) fail(src, "knots", "expected an array of z values");
            if (!values.is_array()) fail(src, "values", "expected an array of rows, one per time");
            std::vector<double> kv;
            for (std::size_t i = 0; i < knots.size(); ++i)
                kv.push_back(number(src, knots[i], "knots[" + std::to_string(i) + "]"));
            std::vector<std::vector<double>> rows;
            for (std::size_t t = 0; t < values.size(); ++t) {
                if (!values[t].is_array()) fail(src, "values", "expected an array of rows");
                std::vector<double> row;
                for (const auto& v : values[t]) row.push_back(number(src, v, "values"));
                rows.push_back(std::move(row));
            }
            return DriverSpec::table(std::move(kv), std::move(rows), dt);
        }
    } catch (const ValidationError& e) {
        fail(src, "kind", e.what());
    }
    fail(src, "kind", "expected \"zero\", \"abs\", \"quad\" or \"table\"");
}

RectangularFamily parse_rectangular(const Source& src, const TreePtr& tree) {
    const auto doc = parse(src);
    const auto& nodes = member(src, doc, "nodes", "");
    if (!nodes.is_object()) fail(src, "nodes", "expected an object of node id -> one-step set");
    std::map<NodeIndex, OneStepSet> sets;
    for (auto it = nodes.begin(); it != nodes.end(); ++it) {
        const auto path = "nodes." + it.key();
        const auto n = node_of(src, tree, it.key(), path);
        const auto& spec = it.value();
        if (!spec.is_object()) fail(src, path, "expected an object");

        const json* interval = nullptr;
        const json* choices = nullptr;
        if (auto c = spec.find("choices"); c != spec.end()) {
            if (c->is_object()) {
                interval = &member(src, *c, "interval", path + ".choices");
            } else {
                choices = &*c;
            }
        } else if (auto iv = spec.find("interval"); iv != spec.end()) {
            interval = &*iv;
        } else {
            fail(src, path, "expected \"choices\"");
        }

        double b = 0.0;
        const json* values = nullptr;
        if (auto p = spec.find("penalty"); p != spec.end()) {
            if (p->is_string()) {
                if (p->get<std::string>() != "zero") fail(src, path + ".penalty", "expected \"zero\"");
            } else if (p->is_object() && p->contains("b")) {
                b = number(src, (*p)["b"], path + ".penalty.b");
                if (b < 0.0) fail(src, path + ".penalty.b", "must be nonnegative");
            } else if (p->is_object() && p->contains("values")) {
                values = &(*p)["values"];
            } else {
                fail(src, path + ".penalty", "expected \"zero\" or {\"b\": x}");
            }
        }

        OneStepSet set;
        if (interval) {
            if (!interval->is_array() || interval->size() != 2)
                fail(src, path + ".interval", "expected [lo, hi]");
            if (values) fail(src, path + ".penalty", "interval sets take \"zero\" or {\"b\": x}");
            set = OneStepSet::interval(number(src, (*interval)[0], path + ".interval"),
                                       number(src, (*interval)[1], path + ".interval"), b);
        } else {
            if (!choices->is_array() || choices->empty())
                fail(src, path + ".choices", "expected a nonempty array of probability vectors");
            std::vector<std::vector<double>> qs;
            for (const auto& q : *choices) {
                if (!q.is_array()) fail(src, path + ".choices", "expected probability vectors");
                std::vector<double> v;
                for (const auto& e : q) v.push_back(number(src, e, path + ".choices"));
                qs.push_back(std::move(v));
            }
            if (values) {
                if (!values->is_array()) fail(src, path + ".penalty.values", "expected an array");
                std::vector<double> vs;
                for (const auto& e : *values) vs.push_back(number(src, e, path + ".penalty.values"));
                set = OneStepSet::finite(std::move(qs), std::move(vs));
            } else {
                set = OneStepSet::finite(std::move(qs));
                if (b > 0.0) {
                    set.penalty = OneStepSet::Penalty::quadratic;
                    set.b = b;
                }
            }
        }
        sets.emplace(n, std::move(set));
    }
    try {
        return RectangularFamily(tree, std::move(sets));
    } catch (const ValidationError& e) {
        fail(src, e.node_id().empty() ? "nodes" : "nodes." + e.node_id(), e.what());
    }
}

RandomVariable parse_payoff(const Source& src, const TreePtr& tree) {
    const auto doc = parse(src);
    const auto& values = member(src, doc, "values", "");
    if (!values.is_object() || values.empty())
        fail(src, "values", "expected an object of node id -> value");
    std::vector<NodeIndex> nodes;
    std::vector<std::pair<NodeIndex, double>> entries;
    for (auto it = values.begin(); it != values.end(); ++it) {
        const auto field = "values." + it.key();
        const auto n = node_of(src, tree, it.key(), field);
        const double v = number(src, it.value(), field);
        if (!std::isfinite(v)) fail(src, field, "must be finite");
        nodes.push_back(n);
        entries.emplace_back(n, v);
    }
    try {
        auto tau = StoppingTime::from_nodes(tree, nodes);
        return RandomVariable::from_nodes(tau, [&](NodeIndex n) {
            for (const auto& [m, v] : entries)
                if (m == n) return v;
            return 0.0;
        });
    } catch (const ValidationError& e) {
        fail(src, e.node_id().empty() ? "values" : "values." + e.node_id(), e.what());
    }
}

std::string to_string(ModelKind k) {
    switch (k) {
    case ModelKind::dual_family: return "dual-family";
    case ModelKind::entropic: return "entropic";
    case ModelKind::driver: return "driver";
    case ModelKind::rectangular: return "rectangular";
    }
    return "unknown";
}

ModelKind detect_model(const Source& src) {
    const auto doc = parse(src);
    if (!doc.is_object()) fail(src, "<document>", "expected an object");
    if (doc.contains("members")) return ModelKind::dual_family;
    if (doc.contains("log_g")) return ModelKind::entropic;
    if (doc.contains("kind")) return ModelKind::driver;
    if (doc.contains("nodes")) return ModelKind::rectangular;
    fail(src, "<document>",
         "not a model: expected \"members\", \"alpha\"/\"log_g\", \"kind\" or \"nodes\"");
}

std::string format_number(double v) {
    if (std::isnan(v)) return "\"nan\"";
    if (std::isinf(v)) return v > 0 ? "\"inf\"" : "\"-inf\"";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

namespace {

std::string quote(const std::string& s) {
    std::string out = "\"";
    for (unsigned char c : s) {
        switch (c) {
        case '"': out += "\\\""; break;
        case '\\': out += "\\\\"; break;
        case '\n': out += "\\n"; break;
        case '\t': out += "\\t"; break;
        default:
            if (c < 0x20) {
                char buf[8];
                std::snprintf(buf, sizeof buf, "\\u%04x", c);
                out += buf;
            } else {
                out += static_cast<char>(c);
            }
        }
    }
    return out + "\"";
}

} // namespace

std::string report_to_json(const Report& r) {
    std::ostringstream o;
    o << "{\n  \"cases\": [";
    for (std::size_t i = 0; i < r.cases.size(); ++i) {
        const auto& c = r.cases[i];
        o << (i ? ",\n" : "\n") << "    {\"X\": " << quote(c.x_label)
          << ", \"residual\": " << format_number(c.residual) << ", \"triple\": [";
        for (std::size_t k = 0; k < c.triple.size(); ++k) o << (k ? ", " : "") << quote(c.triple[k]);
        o << "], \"witness_atom\": " << quote(c.witness_atom) << "}";
    }
    o << (r.cases.empty() ? "]" : "\n  ]") << ",\n";
    o << "  \"check\": " << quote(r.check) << ",\n";
    o << "  \"max_residual\": " << format_number(r.cases.empty() ? 0.0 : r.max_residual()) << ",\n";
    o << "  \"metrics\": {";
    std::size_t i = 0;
    for (const auto& [k, v] : r.metrics)
        o << (i++ ? ",\n" : "\n") << "    " << quote(k) << ": " << format_number(v);
    o << (r.metrics.empty() ? "}" : "\n  }") << ",\n";
    o << "  \"notes\": [";
    for (std::size_t k = 0; k < r.notes.size(); ++k) o << (k ? ", " : "") << quote(r.notes[k]);
    o << "],\n";
    o << "  \"skipped\": " << r.skipped << ",\n";
    o << "  \"tolerance\": " << format_number(r.tolerance) << ",\n";
    o << "  \"verdict\": " << (r.passed() ? "\"pass\"" : "\"fail\"") << "\n}\n";
    return o.str();
}

void write_text(const std::string& text, const std::string& path) {
    if (path.empty() || path == "-") {
        std::cout << text;
        std::cout.flush();
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << text;
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
}

} // namespace dynrisk::io
