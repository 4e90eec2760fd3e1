#pragma once
#include <vector>

#include "xvakit/legs.hpp"
#include "xvakit/problem.hpp"
#include "xvakit/report.hpp"
#include "xvakit/simulation.hpp"

namespace xvakit {

/// Uniform base grid with run.steps cells, refined so every payment date is
/// a node.
TimeGrid problem_grid(const PricingProblem& prob, const RunConfig& run);

/// Asset paths drifting at the choice's gamma, default times appended.
/// Asset and default draws come from disjoint streams of run.seed, so two
/// choices over the same run share default times (and share asset paths
/// whenever their gammas agree).
PathEnsemble simulate_problem(const PricingProblem& prob, const DeflatorChoice& choice, const RunConfig& run);

/// Analytic pi^r_0(A): the clean value of the full stream at time zero.
double clean_price(const PricingProblem& prob);

/// Deflator preset selected by run.measure (Custom reads run.custom_eta).
DeflatorChoice deflator_for(const PricingProblem& prob, const RunConfig& run);

/// Linear pricers: adjusted-cash-flow representation at a fixed preset,
/// solved by Picard iteration on a shared engine, reported in the canonical
/// receive-the-stream decomposition. Treasury and repo pairs must be
/// degenerate here (the collateral pair may stay asymmetric: its effective
/// rate is driven by the exogenous collateral sign, which keeps the pricing
/// recursion linear). Asymmetric treasury/repo belongs to the nonlinear
/// pricer.
ValuationReport price_funding_measure(const PricingProblem& prob, const RunConfig& run);
ValuationReport price_risk_neutral(const PricingProblem& prob, const RunConfig& run);
ValuationReport price_custom_measure(const PricingProblem& prob, const RunConfig& run, const RateCurve& eta);
ValuationReport price_linear(const PricingProblem& prob, const RunConfig& run);

/// Node-wise E[Y_t] for the replication-side value Y = -pi under the funding
/// measure, evaluated from the explicit solution of the associated linear
/// BSDE: Y_t = B^f_t E[-X/B^f_T + int_t^T (c_bar - f) C / B^f du].
/// Requires zero default intensities, degenerate pairs, and a single
/// terminal payoff.
std::vector<double> linear_bsde_explicit(const PricingProblem& prob, const RunConfig& run);

/// Reassembles clean + DVA - CVA + LVA + FVA^f + sum FVA^h + psi from a
/// report; the gap to the reported price is the decomposition residual.
double reassemble_price(const ValuationReport& rep);

}  // namespace xvakit
