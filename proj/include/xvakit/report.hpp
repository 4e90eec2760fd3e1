#pragma once
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace xvakit {

struct TermEstimate {
    double value = 0.0;
    double se = 0.0;
};

/// Price, standard error, and the full adjustment breakdown. All terms are in
/// the canonical receive-the-stream orientation: the decomposition identity is
/// price = clean - cva + dva + lva + fva_f + sum(fva_h) + external - dva_f_plus ...,
/// assembled exactly pathwise (decomposition_residual records the defect).
struct ValuationReport {
    TermEstimate price;
    TermEstimate clean;              // stopped-stream estimator: flows to tau plus closeout clean value
    double clean_analytic = 0.0;     // unstopped analytic value of the full stream

    TermEstimate cva, dva, lva;
    TermEstimate fva_f, fba_f, fca_f;
    std::vector<TermEstimate> fva_h, fba_h, fca_h;

    // external funding splits (zero unless the external block is active)
    TermEstimate dva_f, cva_f;           // independent convention
    TermEstimate dva_f_minus, dva_f_plus;  // net-borrower convention
    TermEstimate psi;                     // total external leg

    // incomplete-market diagnostics
    TermEstimate j0;
    double j0_marginalized = 0.0;
    double j0_integrand_max = 0.0;
    double wealth_gap = 0.0;  // price difference across the two synthetic wealth paths

    double decomposition_residual = 0.0;

    std::string mode;     // which pricer produced this
    std::string measure;  // deflator/measure preset label
    std::size_t paths = 0, steps = 0, grid_cells = 0;
    std::uint64_t seed = 0;
    std::size_t workers = 0, basis_degree = 0;

    bool converged = true;
    std::size_t picard_iterations = 0;
    double picard_residual = 0.0;
    std::vector<std::pair<std::size_t, double>> convergence_log;  // (iteration, sup-norm residual)
    double stated_bias = 0.0;  // discretization/regression bias statement when measured

    std::vector<std::string> warnings;

    // per-path leg values, populated only when RunConfig::keep_path_terms is set
    struct PathTerms {
        std::vector<double> total, clean, cva, dva, lva, fva_f;
        std::vector<std::vector<double>> fva_h;
        std::vector<double> psi, dva_f_minus_leg, dva_f_plus_leg;
    };
    PathTerms path_terms;
};

}  // namespace xvakit
