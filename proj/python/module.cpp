#include "dynrisk/consistency.hpp"
#include "dynrisk/io.hpp"

#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <map>
#include <memory>
#include <string>

namespace py = pybind11;
using namespace dynrisk;

namespace {

struct Tree {
    TreePtr ptr;

    std::vector<std::string> ids() const {
        std::vector<std::string> out;
        for (NodeIndex n = 0; n < ptr->size(); ++n) out.push_back(ptr->id(n));
        return out;
    }
};

struct Model {
    TreePtr tree;
    io::ModelKind kind;
    std::shared_ptr<DynamicRiskMeasure> rho;

    RandomVariable payoff(const std::map<std::string, double>& values) const {
        std::vector<std::string> ids;
        for (const auto& [id, v] : values) ids.push_back(id);
        const auto tau = StoppingTime::from_ids(tree, ids);
        return RandomVariable::from_nodes(tau, [&](NodeIndex n) { return values.at(tree->id(n)); });
    }

    std::map<std::string, double> risk(const std::map<std::string, double>& x, int t) const {
        const auto x_rv = payoff(x);
        const auto sigma = earliest(StoppingTime::at(tree, t), x_rv.anchor());
        const auto r = (*rho)(x_rv, sigma);
        std::map<std::string, double> out;
        for (std::size_t a = 0; a < sigma.atom_count(); ++a) out[tree->id(sigma.atom(a))] = r[a];
        return out;
    }

    std::string check_consistency(std::uint64_t seed, double tolerance) const {
        const auto tau = StoppingTime::at(tree, tree->horizon());
        BatteryOptions bo;
        bo.seed = seed;
        const auto battery = default_battery(tau, bo);
        return io::report_to_json(check_time_consistency(*rho, battery, deterministic_triples(tree), tolerance));
    }
};

Model load_model(const Tree& tree, const std::string& text, const std::string& name) {
    const io::Source src{name, text};
    Model m{tree.ptr, io::detect_model(src), nullptr};
    switch (m.kind) {
    case io::ModelKind::dual_family:
        m.rho = std::make_shared<DualFamilyRisk>(io::parse_dual_family(src, tree.ptr));
        break;
    case io::ModelKind::entropic:
        m.rho = std::make_shared<EntropicRisk>(tree.ptr, io::parse_entropic(src));
        break;
    case io::ModelKind::rectangular:
        m.rho = std::make_shared<StableSetRisk>(io::parse_rectangular(src, tree.ptr));
        break;
    case io::ModelKind::driver:
        m.rho = std::make_shared<BsdeRisk>(tree.ptr, io::parse_driver(src));
        break;
    }
    return m;
}

} // namespace

PYBIND11_MODULE(_dynrisk, m) {
    m.doc() = "Dynamic convex risk measures on finite scenario trees";

    py::register_exception<io::InputError>(m, "InputError", PyExc_ValueError);
    py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);

    py::class_<Tree>(m, "Tree")
        .def_static("binomial", [](int periods, double p_up) { return Tree{ScenarioTree::binomial(periods, p_up)}; },
                    py::arg("periods"), py::arg("p_up") = 0.5)
        .def_static("from_json",
                    [](const std::string& text, const std::string& name) {
                        return Tree{io::parse_tree({name, text})};
                    },
                    py::arg("text"), py::arg("name") = "<string>")
        .def_property_readonly("horizon", [](const Tree& t) { return t.ptr->horizon(); })
        .def_property_readonly("size", [](const Tree& t) { return t.ptr->size(); })
        .def("ids", &Tree::ids)
        .def("leaves", [](const Tree& t) {
            std::vector<std::string> out;
            for (NodeIndex n : t.ptr->leaves()) out.push_back(t.ptr->id(n));
            return out;
        });

    py::class_<Model>(m, "Model")
        .def_static("from_json", &load_model, py::arg("tree"), py::arg("text"), py::arg("name") = "<string>")
        .def_property_readonly("kind", [](const Model& md) { return io::to_string(md.kind); })
        .def("risk", &Model::risk, py::arg("payoff"), py::arg("t") = 0,
             "rho_{t,tau}(X) per atom; payoff maps node ids of a stopping time to values.")
        .def("check_consistency", &Model::check_consistency, py::arg("seed") = 0, py::arg("tolerance") = 1e-9,
             "Time-consistency report as JSON text.");

    m.def("bsde_lattice_risk",
          [](int steps, const std::string& driver_json, const LatticePayoff& payoff) {
              return bsde_lattice_risk(steps, io::parse_driver({"<string>", driver_json}), payoff);
          },
          py::arg("steps"), py::arg("driver_json"), py::arg("payoff"));
    m.def("entropic_lattice_risk",
          [](int steps, double alpha, const LatticePayoff& payoff) {
              return entropic_lattice_risk(steps, alpha, payoff);
          },
          py::arg("steps"), py::arg("alpha"), py::arg("payoff"));
    m.def("format_number", &io::format_number);
}
