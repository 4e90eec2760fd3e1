#include <pybind11/pybind11.h>

#include <string>

#include "xvakit/scenario.hpp"
#include "xvakit/verify.hpp"

namespace py = pybind11;

PYBIND11_MODULE(_xvakit, m) {
    m.doc() = "Valuation of collateralized bilateral contracts under differential funding rates";

    py::register_exception<xvakit::ScenarioError>(m, "ScenarioError", PyExc_ValueError);

    m.def(
        "run_scenario_json",
        [](const std::string& scenario_json) {
            const xvakit::Scenario sc = xvakit::parse_scenario(scenario_json);
            return xvakit::report_to_json(xvakit::run_scenario(sc));
        },
        py::arg("scenario_json"), py::call_guard<py::gil_scoped_release>(),
        "Price a scenario JSON document and return the report as JSON text.");

    m.def(
        "scenario_canonical_json",
        [](const std::string& scenario_json) {
            return xvakit::scenario_to_json(xvakit::parse_scenario(scenario_json));
        },
        py::arg("scenario_json"), py::call_guard<py::gil_scoped_release>(),
        "Validate a scenario document and return its canonical serialization.");

    m.def(
        "report_csv_from_json",
        [](const std::string& report_json) {
            return xvakit::report_to_csv(xvakit::report_from_json(report_json));
        },
        py::arg("report_json"), py::call_guard<py::gil_scoped_release>(),
        "Convert a report JSON document to its CSV rendering.");

    m.def(
        "verify_json",
        []() { return xvakit::verify_to_json(xvakit::run_acceptance(nullptr)); },
        py::call_guard<py::gil_scoped_release>(),
        "Run the acceptance matrix and return the results as JSON text.");
}
