#pragma once
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "xvakit/problem.hpp"
#include "xvakit/report.hpp"

namespace xvakit {

/// Schema or content failure, carrying the JSON path of the offending field
/// (empty for document-level problems such as malformed JSON).
struct ScenarioError : std::runtime_error {
    std::string path;
    ScenarioError(std::string p, const std::string& msg)
        : std::runtime_error(p.empty() ? msg : p + ": " + msg), path(std::move(p)) {}
};

/// A fully validated run request: the pricing problem, the numeric
/// configuration, and the requested pricer.
struct Scenario {
    PricingProblem problem;
    RunConfig run;
    std::string mode = "linear";              // linear | nonlinear | incomplete | verify
    std::string nonlinear_solver = "picard";  // picard | bsde (mode == nonlinear only)
    std::vector<std::string> warnings;        // defaulted-field notices, forwarded into reports
};

/// Parse and validate scenario JSON text. Malformed JSON reports line and
/// column; schema violations report the JSON path of the field.
Scenario parse_scenario(const std::string& json_text);
Scenario load_scenario(const std::string& file_path);

/// Price per the scenario's mode and solver; scenario warnings lead the
/// report's warning list. The "verify" mode is not a pricing mode and is
/// rejected here; drive the acceptance matrix through run_acceptance.
ValuationReport run_scenario(const Scenario& sc);

/// Canonical serializations. Reports must be byte-identical for a fixed
/// scenario + seed, so nothing time- or host-dependent is emitted here;
/// wall-clock metadata belongs in the side file the CLI writes.
std::string scenario_to_json(const Scenario& sc);
std::string report_to_json(const ValuationReport& rep);
std::string report_to_csv(const ValuationReport& rep);

/// Strict inverse of report_to_json; throws ScenarioError on any deviation
/// from the published layout. Exists so every emitted report can be proven to
/// re-parse under the schema.
ValuationReport report_from_json(const std::string& json_text);

}  // namespace xvakit
