#pragma once
#include <cstddef>

#include "xvakit/contracts.hpp"
#include "xvakit/problem.hpp"

/// Independent reference values for arbitration. Everything here runs on its
/// own numeric kernels (normal CDF, closed-form lognormal pieces, adaptive
/// Simpson quadrature, recombining tree): no curve-integration or valuation
/// helper is shared with the pricing engine, so an agreement between the two
/// is evidence rather than tautology. Scalar flat-rate inputs only.
namespace xvakit::oracle {

/// Lognormal terminal value with separate carry and discount rates.
struct TwoRateBSInput {
    double s0 = 0.0;
    double strike = 0.0;
    double sigma = 0.0;
    double T = 0.0;
    double carry = 0.0;     // drift of the asset under the pricing measure
    double discount = 0.0;  // deflation rate
};

/// Closed form e^{-rho T}(F N(d1) - K N(d2)) with F = s0 e^{carry T}; put by
/// the complementary tails, forward exact. sigma^2 T = 0 falls back to the
/// deterministic limit. Unit notional.
double bs_carry_discount(const TwoRateBSInput& in, PayoffKind kind);

/// Same value by adaptive quadrature of the lognormal density; validates the
/// closed form (and nothing else uses it).
double lognormal_quadrature_price(const TwoRateBSInput& in, PayoffKind kind, double rel_tol = 1e-10);

/// Adjustment decomposition for a single terminal payoff under fractional
/// collateral and deterministic flat intensities, stated in the measure that
/// deflates at the (direction-free, flat) treasury rate f and drifts the
/// asset at its repo rate h. There the treasury and hedge funding legs vanish
/// identically and everything left closes over the composed lognormal:
///   clean = int lambda e^{-Lambda} E[D_f Q_u] du + e^{-Lambda T} E[D_f X]
///   cva   = L_C (1-alpha) int lambda_C e^{-Lambda} E[D_f Q^+] du
///   dva   = L_I (1-alpha) int lambda_I e^{-Lambda} E[D_f Q^-] du
///   lva   = alpha int e^{-Lambda} ((f - c_b) E[D_f Q^+] - (f - c_l) E[D_f Q^-]) du
///   total = clean + dva - cva + lva
/// clean is the stopped stream (flows to default plus the closeout mark),
/// matching the estimator convention. E[D_f Q^{+/-}] come from the two-rate
/// closed form composed over [0,u] at h and [u,T] at r; the deflated-clean
/// identity E[D_f Q_u] = composed forward value is checked on the fly.
struct XvaQuadrature {
    double clean = 0.0, cva = 0.0, dva = 0.0, lva = 0.0, total = 0.0;
};
XvaQuadrature quadrature_xva(const PricingProblem& prob, double rel_tol = 1e-10);

/// One-asset differential-borrowing valuation: terminal payoff, no defaults,
/// no collateral, asset carried at a single repo rate, discounting switched
/// between f_lend and f_borrow by the sign of the value (lend while the desk
/// deposits, borrow while it funds).
struct TreeInput {
    double s0 = 0.0;
    double strike = 0.0;
    double sigma = 0.0;
    double T = 0.0;
    double amount = 1.0;
    PayoffKind kind = PayoffKind::Call;
    double f_lend = 0.0;
    double f_borrow = 0.0;
    double carry = 0.0;
};

/// Backward induction on a recombining binomial tree at three step counts
/// (steps/2, steps, 2*steps): value = first-order Richardson extrapolation
/// 2 t(2M) - t(M), error_bar = |t(2M) - t(M)|, ratio = the observed
/// step-halving contraction (close to 2 when the scheme is first order).
struct TreeReference {
    double value = 0.0;
    double error_bar = 0.0;
    double ratio = 0.0;
    double coarse = 0.0, mid = 0.0, fine = 0.0;
};
TreeReference brute_force_bsde(const TreeInput& in, std::size_t steps);

/// Flat borrowing spread f^b - r at which the unsecured funding cost of a
/// nonnegative payoff equals the trader-default benefit on the borrowed
/// funds: root of the quadrature leg difference, bracketed and bisected.
double fair_borrow_spread(const PricingProblem& prob, double rel_tol = 1e-10);

}  // namespace xvakit::oracle
