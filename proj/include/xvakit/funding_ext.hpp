#pragma once
#include <cmath>
#include <vector>

#include "xvakit/legs.hpp"
#include "xvakit/problem.hpp"
#include "xvakit/report.hpp"
#include "xvakit/simulation.hpp"

namespace xvakit {

/// Treasury borrowing account written down once at the trader's default:
/// dB = f^b B dt - L_I B_- d1{t >= tau_I}. value() composes exact exponential
/// growth with the single writedown, so B(tau)/B(tau-) == 1 - L_I to the bit.
struct DefaultableAccount {
    RateCurve borrow_rate;
    double loss_trader = 0.0;

    double value(double t, double tau_trader) const {
        const double grown = std::exp(borrow_rate.integral(0.0, t));
        return t >= tau_trader ? grown * (1.0 - loss_trader) : grown;
    }
    double jump_ratio() const { return 1.0 - loss_trader; }
};

/// Discounted external-funding legs for an explicit treasury funding schedule
/// F(t), evaluated on the ensemble's default draws with exact risk-free
/// discounting. Under Independent the legs are the trader-default benefit on
/// borrowed funds and the funder-default loss on lent funds; under NetBorrower
/// both legs sit at the trader's default, split by the sign of F. Each leg is
/// a mean of nonnegative path values.
struct ExternalAdjustments {
    TermEstimate dva_f, cva_f;             // Independent convention
    TermEstimate dva_f_minus, dva_f_plus;  // NetBorrower convention
};
ExternalAdjustments external_adjustments(const PathEnsemble& ens, const RateCurve& funding,
                                         const PricingProblem& prob);

/// Net benefit of the trader's own default on the residual borrowing need:
/// the default-benefit leg L_I * Y_{tau-} minus the spread-carry leg
/// int s^f Y du, as an MC estimate, plus the intensity-marginalized integrand
/// profile (L_I lambda_I - s^f)(t) * E[Y_t alive]. y is node-major
/// [node * n_paths + path], already deflated and >= 0; entries at and after a
/// path's death cell right edge are ignored. Both legs freeze Y and the rates
/// at cell left nodes, so they cancel in conditional expectation cell by cell
/// when the spread equals L_I * lambda_I there, and the marginalized integrand
/// is bitwise zero when the spread curve stores those same products.
struct NetBenefit {
    TermEstimate j0;
    double j0_marginalized = 0.0;
    double j0_integrand_max = 0.0;
};
NetBenefit net_benefit_J(const PathEnsemble& ens, const std::vector<double>& y_deflated,
                         const RateCurve& spread, const DefaultModel& credit);

/// Risk-neutral valuation of a single terminal payoff with the external
/// funding legs switched on. Requires repo rates equal to the risk-free rate
/// in both directions; under NetBorrower the external funder must be
/// default-free and the bank-wide borrowing path is sign-checked against the
/// converged trade funding need. Sign-definite payoffs get their expected
/// degeneracies verified (nonnegative: no lending benefit, no borrowed-funds
/// default benefit; nonpositive with f^l = r: the counterparty-facing and
/// external debit benefits coincide and the total collapses to the clean
/// price); violations are reported as warnings, never silently repriced.
ValuationReport price_with_external(const PricingProblem& prob, const RunConfig& run);

/// Buy-and-hold valuation when the treasury gap is closed by unsecured
/// borrowing at eta + s^f: deflate at eta = f.lend, drift every asset at the
/// single shared repo rate, and mark closeout and collateral on the
/// (eta, h)-clean surface. The wealth-dependent borrowing need
/// (W - pi + C)^- enters the fixed point only through the net coefficient
/// L_I * lambda_I - s^f, which is stored as an exact zero at the fair spread;
/// the price is then wealth-independent to the bit, verified here by pricing
/// against two distinct synthetic wealth paths (wealth_gap in the report). An
/// off-fair spread keeps the full wealth-coupled iteration and reports the
/// honest gap. The trader-default writedown of the borrowing account is
/// folded into the borrowing-need benefit leg; a treasury that nets only part
/// of its book would split that leg differently.
ValuationReport price_incomplete(const PricingProblem& prob, const RunConfig& run);

}  // namespace xvakit
