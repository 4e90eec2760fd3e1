#pragma once
#include <cstddef>
#include <vector>

#include "xvakit/problem.hpp"
#include "xvakit/report.hpp"
#include "xvakit/simulation.hpp"

namespace xvakit {

/// Two-valued effective-rate branches of the nonlinear driver. Both ties
/// resolve to the lend branch; the driver multiplies the tied value by zero
/// there, so the choice cannot move the price.
inline double effective_funding_rate(double y_hat, double f_l, double f_b) {
    return y_hat >= 0.0 ? f_l : f_b;
}
inline double effective_repo_rate(double zs, double h_l, double h_b) {
    return zs <= 0.0 ? h_l : h_b;
}

/// Backward-Euler solution in the replication sign convention: y is the
/// portfolio value (price = C_0 - y_0), z the hedge ratios in units of the
/// underlying asset.
struct BSDEState {
    std::size_t nodes = 0, n_assets = 0, n_paths = 0;
    std::vector<double> y;  // [node * n_paths + path]
    std::vector<double> z;  // [(node * n_assets + asset) * n_paths + path]

    double* y_row(std::size_t k) { return y.data() + k * n_paths; }
    const double* y_row(std::size_t k) const { return y.data() + k * n_paths; }
    double* z_row(std::size_t k, std::size_t i) { return z.data() + (k * n_assets + i) * n_paths; }
    const double* z_row(std::size_t k, std::size_t i) const {
        return z.data() + (k * n_assets + i) * n_paths;
    }
};

struct BSDESolution {
    BSDEState state;
    ValuationReport report;
};

/// Backward Euler on the nonlinear pricing equation with assets drifting at
/// the repo lend rate. Defaults are marginalized: on each cell the intensity
/// weights the closeout branch evaluated at the left node, so no default
/// times are simulated and the route stays methodologically independent of
/// the pathwise Picard route. The implicit funding branch is resolved by the
/// sign of the numerator (the implicit factor is positive, so the branch is
/// unique and consistent). The reported price se tracks an unsmoothed
/// companion chain, since the fitted node-0 values collapse to their mean.
BSDESolution solve_bsde(const PricingProblem& prob, const RunConfig& run);

/// Picard iteration on the adjusted-cash-flow representation under the
/// risk-free preset with pathwise defaults; differential treasury, repo and
/// collateral pairs are all admitted. Reports the canonical decomposition.
ValuationReport picard_price(const PricingProblem& prob, const RunConfig& run);

/// Ensemble-injecting variants for refinement studies: the caller supplies
/// paths already drifted at the route's gamma (repo lend rates for the
/// backward scheme, the risk-free rate for Picard), typically a coarse
/// restriction of a finer grid so discretization error is measured on common
/// draws. run.steps is reporting metadata here; the grid comes from the
/// ensemble.
BSDESolution solve_bsde(const PricingProblem& prob, const RunConfig& run, const PathEnsemble& ens);
ValuationReport picard_price(const PricingProblem& prob, const RunConfig& run, const PathEnsemble& ens);

}  // namespace xvakit
