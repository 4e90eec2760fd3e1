#pragma once
#include "xvakit/problem.hpp"

namespace xvakit::testing {

/// One-asset flat-rate problem used across the test suite. Defaults mirror
/// the reference desk setup: GBM at-the-money call, split funding stack,
/// both names defaultable, no collateral.
struct FlatSpec {
    double s0 = 100.0, vol = 0.2, strike = 100.0, T = 1.0;
    double r = 0.02;
    double f_l = 0.03, f_b = 0.03;
    double h_l = 0.025, h_b = 0.025;
    double c_l = 0.015, c_b = 0.015;
    double lam_i = 0.01, lam_c = 0.02;
    double loss_i = 0.6, loss_c = 0.6;
    double alpha = 0.0;
    PayoffKind kind = PayoffKind::Call;
    double amount = 1.0;
};

inline PricingProblem make_problem(const FlatSpec& s) {
    PricingProblem p;
    p.rates.r = RateCurve::flat(s.r);
    p.rates.f = RatePair::flat(s.f_l, s.f_b);
    p.rates.h = {RatePair::flat(s.h_l, s.h_b)};
    p.rates.c = RatePair::flat(s.c_l, s.c_b);
    p.assets = AssetModel({s.s0}, {s.vol});
    p.credit.lambda_trader = RateCurve::flat(s.lam_i);
    p.credit.lambda_cpty = RateCurve::flat(s.lam_c);
    p.credit.loss_trader = s.loss_i;
    p.credit.loss_cpty = s.loss_c;
    p.contract.terminal = Payment{s.T, s.kind, s.amount, s.strike, 0};
    p.collateral = s.alpha != 0.0 ? CollateralSpec::fraction(s.alpha) : CollateralSpec::none();
    return p;
}

inline FlatSpec all_rates_equal(double r = 0.02) {
    FlatSpec s;
    s.r = r;
    s.f_l = s.f_b = r;
    s.h_l = s.h_b = r;
    s.c_l = s.c_b = r;
    return s;
}

}  // namespace xvakit::testing
