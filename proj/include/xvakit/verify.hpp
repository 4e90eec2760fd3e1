#pragma once
#include <iosfwd>
#include <string>
#include <vector>

namespace xvakit {

/// One row of the acceptance matrix: an arbitration between the engine and an
/// independent reference (oracle, closed form, or cross-route identity), with
/// its tolerance pinned in code.
struct CriterionResult {
    int number = 0;
    std::string name;
    bool passed = false;
    std::string detail;  // measured quantity vs tolerance
    double seconds = 0.0;
};

struct VerifySummary {
    std::vector<CriterionResult> criteria;
    double seconds = 0.0;

    bool all_passed() const {
        for (const auto& c : criteria)
            if (!c.passed) return false;
        return !criteria.empty();
    }
};

/// Runs the full acceptance matrix. When `log` is given, each criterion
/// prints one pass/fail line as it completes.
VerifySummary run_acceptance(std::ostream* log = nullptr);

std::string verify_to_json(const VerifySummary& summary);

}  // namespace xvakit
