#include "xvakit/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace xvakit::oracle {
namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;

double norm_cdf(double x) { return 0.5 * std::erfc(-x * kInvSqrt2); }

double norm_pdf(double x) { return 0.39894228040143267794 * std::exp(-0.5 * x * x); }

void check_input(const TwoRateBSInput& in) {
    if (!(in.s0 > 0.0)) throw std::invalid_argument("oracle: spot must be positive");
    if (in.sigma < 0.0) throw std::invalid_argument("oracle: volatility must be nonnegative");
    if (in.T < 0.0) throw std::invalid_argument("oracle: maturity must be nonnegative");
    for (double v : {in.s0, in.strike, in.sigma, in.T, in.carry, in.discount})
        if (!std::isfinite(v)) throw std::invalid_argument("oracle: non-finite input");
}

/// Adaptive Simpson with the classic 1/15 Richardson acceptance test. The
/// tolerance is absolute; callers derive it from a coarse pass. tol halves per
/// split so the accepted panel errors sum below the request.
template <typename Fn>
double simpson_panel(Fn&& f, double a, double fa, double b, double fb, double m, double fm, double whole,
                     double tol, int depth) {
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = f(lm), frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const double delta = left + right - whole;
    // second clause: the refinement gain is at rounding level, nothing left to resolve
    if (depth <= 0 || std::fabs(delta) <= 15.0 * tol ||
        std::fabs(delta) <= 1e-14 * (std::fabs(left) + std::fabs(right)))
        return left + right + delta / 15.0;
    return simpson_panel(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1) +
           simpson_panel(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1);
}

/// Integral of f over [a, b] to a relative target. abs_scale sets the size of
/// a result that counts as zero: the coarse three-point estimate can vanish on
/// integrands concentrated far from the samples, and an absolute floor keeps
/// the refinement honest there without chasing roundoff.
template <typename Fn>
double integrate(Fn&& f, double a, double b, double rel_tol, double abs_scale) {
    if (!(b > a)) return 0.0;
    const double fa = f(a), fb = f(b), m = 0.5 * (a + b), fm = f(m);
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    const double tol = rel_tol * std::max(std::fabs(whole), abs_scale);
    return simpson_panel(f, a, fa, b, fb, m, fm, whole, tol, 32);
}

double deterministic_value(double fwd, double strike, double df, PayoffKind kind) {
    switch (kind) {
        case PayoffKind::Cash: return df;
        case PayoffKind::Forward: return df * (fwd - strike);
        case PayoffKind::Call: return df * std::max(fwd - strike, 0.0);
        case PayoffKind::Put: return df * std::max(strike - fwd, 0.0);
        case PayoffKind::CashOrNothing: return df * (fwd > strike ? 1.0 : 0.0);
    }
    return 0.0;
}

/// Flat value of a piecewise-constant curve, rejecting anything date-dependent.
double flat_value(const RateCurve& curve, const char* what) {
    const auto& vals = curve.values();
    for (double v : vals)
        if (v != vals.front())
            throw std::invalid_argument(std::string("oracle: ") + what + " must be a flat rate");
    return vals.front();
}

double tree_payoff(double spot, const TreeInput& in) {
    switch (in.kind) {
        case PayoffKind::Call: return in.amount * std::max(spot - in.strike, 0.0);
        case PayoffKind::Put: return in.amount * std::max(in.strike - spot, 0.0);
        case PayoffKind::Forward: return in.amount * (spot - in.strike);
        default: throw std::invalid_argument("oracle: tree payoff must be call, put or forward");
    }
}

/// One backward induction pass at a fixed step count. The discount rate per
/// node is two-valued; exactly one branch is sign-consistent with its own
/// result (both scale the same expectation by a positive factor), and the
/// zero tie carries no rate at all.
double tree_value(const TreeInput& in, std::size_t m) {
    const double dt = in.T / static_cast<double>(m);
    const double up = std::exp(in.sigma * std::sqrt(dt));
    const double dn = 1.0 / up;
    const double grow = std::exp(in.carry * dt);
    const double p = (grow - dn) / (up - dn);
    if (!(p > 0.0 && p < 1.0))
        throw std::invalid_argument("oracle: step count too small for the carry/volatility combination");
    const double disc_lend = std::exp(-in.f_lend * dt);
    const double disc_borrow = std::exp(-in.f_borrow * dt);
    const double sqdt = in.sigma * std::sqrt(dt);

    std::vector<double> y(m + 1);
    for (std::size_t j = 0; j <= m; ++j) {
        const double s = in.s0 * std::exp(sqdt * (2.0 * static_cast<double>(j) - static_cast<double>(m)));
        y[j] = tree_payoff(s, in);
    }
    for (std::size_t n = m; n-- > 0;) {
        for (std::size_t j = 0; j <= n; ++j) {
            const double e = p * y[j + 1] + (1.0 - p) * y[j];
            const double lend_value = disc_lend * e;      // desk deposits: requires value <= 0
            const double borrow_value = disc_borrow * e;  // desk borrows: requires value > 0
            y[j] = lend_value <= 0.0 ? lend_value : borrow_value;
        }
    }
    return y[0];
}

struct FlatScenario {
    double s0, sigma, T, strike, amount;
    PayoffKind kind;
    std::size_t asset;
    double r, f, h, c_lend, c_borrow, alpha;
    double lam_trader, lam_cpty, loss_trader, loss_cpty;
};

FlatScenario extract_flat(const PricingProblem& prob) {
    prob.validate();
    if (!prob.contract.payments.empty() || !prob.contract.terminal)
        throw std::invalid_argument("oracle: contract must be a single terminal payoff");
    const Payment& p = *prob.contract.terminal;
    if (p.kind != PayoffKind::Call && p.kind != PayoffKind::Put && p.kind != PayoffKind::Forward)
        throw std::invalid_argument("oracle: payoff outside the call/put/forward menu");
    if (prob.collateral.kind != CollateralSpec::Kind::Fraction)
        throw std::invalid_argument("oracle: collateral must be a clean-value fraction");
    if (prob.collateral.alpha < 0.0 || prob.collateral.alpha > 1.0)
        throw std::invalid_argument("oracle: collateral fraction outside [0,1]");
    if (prob.closeout.settlement != CloseoutSettlement::Csa)
        throw std::invalid_argument("oracle: closeout must settle at the haircut value");
    if (prob.external.enabled) throw std::invalid_argument("oracle: external funding outside the menu");
    if (!prob.rates.f.degenerate())
        throw std::invalid_argument("oracle: treasury pair must be direction-free");

    FlatScenario sc;
    sc.asset = p.asset;
    if (!prob.rates.h[sc.asset].degenerate())
        throw std::invalid_argument("oracle: repo pair must be direction-free");
    if (!(p.time > 0.0)) throw std::invalid_argument("oracle: terminal date must be positive");
    sc.s0 = prob.assets.spot(sc.asset);
    sc.sigma = prob.assets.vol(sc.asset);
    sc.T = p.time;
    sc.strike = p.strike;
    sc.amount = p.amount;
    sc.kind = p.kind;
    sc.r = flat_value(prob.rates.r, "risk-free rate");
    sc.f = flat_value(prob.rates.f.lend, "treasury rate");
    sc.h = flat_value(prob.rates.h[sc.asset].lend, "repo rate");
    sc.c_lend = flat_value(prob.rates.c.lend, "collateral lend rate");
    sc.c_borrow = flat_value(prob.rates.c.borrow, "collateral borrow rate");
    sc.alpha = prob.collateral.alpha;
    sc.lam_trader = flat_value(prob.credit.lambda_trader, "trader intensity");
    sc.lam_cpty = flat_value(prob.credit.lambda_cpty, "counterparty intensity");
    sc.loss_trader = prob.credit.loss_trader;
    sc.loss_cpty = prob.credit.loss_cpty;
    return sc;
}

/// Deflated positive/negative parts E[e^{-defl u} Q_u^{+/-}] of the (r,r)
/// clean mark at an intermediate date when the asset drifts at `drift`. The
/// composition stays closed-form: one-signed payoffs carry drift*u + r*(T-u)
/// against discount defl*u + r*(T-u) over the full variance sigma^2 T;
/// forwards are calls on S_u struck at the discounted strike. Signed amounts
/// swap the parts.
struct SignedParts {
    double plus = 0.0, minus = 0.0;
};

SignedParts clean_parts(const FlatScenario& sc, double u, double drift, double defl) {
    double unit_plus, unit_minus;
    if (sc.kind == PayoffKind::Forward) {
        // Q_u = S_u - K e^{-r(T-u)}; its positive part is a call on S_u struck
        // at the discounted strike, observed at u.
        const double ku = sc.strike * std::exp(-sc.r * (sc.T - u));
        unit_plus = bs_carry_discount({sc.s0, ku, sc.sigma, u, drift, defl}, PayoffKind::Call);
        const double v0 = std::exp(-defl * u) * (sc.s0 * std::exp(drift * u) - ku);
        unit_minus = unit_plus - v0;  // identity E[e^{-defl u} Q_u] = composed forward value
        if (std::fabs(unit_minus) > 1e30) throw std::logic_error("oracle: forward decomposition overflow");
        if (unit_minus < 0.0) {
            if (unit_minus < -1e-9 * (std::fabs(v0) + sc.s0))
                throw std::logic_error("oracle: martingale identity violated in the forward decomposition");
            unit_minus = 0.0;
        }
    } else {
        // Nonnegative payoffs have nonnegative clean value at every date, so
        // the positive part IS the deflated mark: the terminal draw composes
        // the drift over [0,u] with the mark's r-carry over [u,T], and the
        // full variance sigma^2 T accrues either way.
        unit_plus = bs_carry_discount({sc.s0, sc.strike, sc.sigma, sc.T,
                                       (drift * u + sc.r * (sc.T - u)) / sc.T,
                                       (defl * u + sc.r * (sc.T - u)) / sc.T},
                                      sc.kind);
        unit_minus = 0.0;
    }
    SignedParts out;
    if (sc.amount >= 0.0) {
        out.plus = sc.amount * unit_plus;
        out.minus = sc.amount * unit_minus;
    } else {
        out.plus = -sc.amount * unit_minus;
        out.minus = -sc.amount * unit_plus;
    }
    return out;
}

}  // namespace

double bs_carry_discount(const TwoRateBSInput& in, PayoffKind kind) {
    check_input(in);
    const double fwd = in.s0 * std::exp(in.carry * in.T);
    const double df = std::exp(-in.discount * in.T);
    const double var = in.sigma * in.sigma * in.T;
    if (var <= 0.0) return deterministic_value(fwd, in.strike, df, kind);
    if (in.strike <= 0.0) {
        // exercised with certainty (calls/forwards) or worthless (puts)
        switch (kind) {
            case PayoffKind::Cash: return df;
            case PayoffKind::Forward:
            case PayoffKind::Call: return df * (fwd - in.strike);
            case PayoffKind::Put: return 0.0;
            case PayoffKind::CashOrNothing: return df;
        }
    }
    const double sd = std::sqrt(var);
    const double d1 = (std::log(fwd / in.strike) + 0.5 * var) / sd;
    const double d2 = d1 - sd;
    switch (kind) {
        case PayoffKind::Cash: return df;
        case PayoffKind::Forward: return df * (fwd - in.strike);
        case PayoffKind::Call: return df * (fwd * norm_cdf(d1) - in.strike * norm_cdf(d2));
        case PayoffKind::Put: return df * (in.strike * norm_cdf(-d2) - fwd * norm_cdf(-d1));
        case PayoffKind::CashOrNothing: return df * norm_cdf(d2);
    }
    return 0.0;
}

double lognormal_quadrature_price(const TwoRateBSInput& in, PayoffKind kind, double rel_tol) {
    check_input(in);
    const double fwd = in.s0 * std::exp(in.carry * in.T);
    const double df = std::exp(-in.discount * in.T);
    const double var = in.sigma * in.sigma * in.T;
    if (var <= 0.0) return deterministic_value(fwd, in.strike, df, kind);
    const double sd = std::sqrt(var);
    // S_T = fwd * exp(sd*z - var/2), z standard normal; truncation at |z| = 12
    // discards less than 1e-31 of the mass.
    auto spot_at = [&](double z) { return fwd * std::exp(sd * z - 0.5 * var); };
    auto payoff = [&](double z) {
        const double s = spot_at(z);
        switch (kind) {
            case PayoffKind::Cash: return 1.0;
            case PayoffKind::Forward: return s - in.strike;
            case PayoffKind::Call: return std::max(s - in.strike, 0.0);
            case PayoffKind::Put: return std::max(in.strike - s, 0.0);
            case PayoffKind::CashOrNothing: return s > in.strike ? 1.0 : 0.0;
        }
        return 0.0;
    };
    auto integrand = [&](double z) { return payoff(z) * norm_pdf(z); };
    const double zmax = 12.0;
    // split at the payoff kink so every panel sees a smooth integrand
    double zk = -zmax;
    if (in.strike > 0.0) zk = std::clamp((std::log(in.strike / fwd) + 0.5 * var) / sd, -zmax, zmax);
    const double scale = 1e-2 * (in.s0 + std::fabs(in.strike));
    const double lo = integrate(integrand, -zmax, zk, rel_tol, scale);
    const double hi = integrate(integrand, zk, zmax, rel_tol, scale);
    return df * (lo + hi);
}

XvaQuadrature quadrature_xva(const PricingProblem& prob, double rel_tol) {
    const FlatScenario sc = extract_flat(prob);
    const double lam_total = sc.lam_trader + sc.lam_cpty;

    const double scale = 1e-2 * sc.s0 * std::max(std::fabs(sc.amount), 1.0);
    auto survival = [&](double u) { return std::exp(-lam_total * u); };
    auto parts = [&](double u) { return clean_parts(sc, u, sc.h, sc.f); };
    auto cva_integrand = [&](double u) { return survival(u) * parts(u).plus; };
    auto dva_integrand = [&](double u) { return survival(u) * parts(u).minus; };

    const double exposure_plus = integrate(cva_integrand, 0.0, sc.T, rel_tol, scale);
    const double exposure_minus = integrate(dva_integrand, 0.0, sc.T, rel_tol, scale);

    XvaQuadrature out;
    // stopped stream: closeout marks over the default density plus the
    // surviving terminal flow
    const SignedParts at_T = parts(sc.T);
    const double surviving = survival(sc.T) * (at_T.plus - at_T.minus);
    if (lam_total > 0.0) {
        auto mark_integrand = [&](double u) {
            const SignedParts pu = parts(u);
            return survival(u) * (pu.plus - pu.minus);
        };
        out.clean = lam_total * integrate(mark_integrand, 0.0, sc.T, rel_tol, scale) + surviving;
    } else {
        out.clean = surviving;
    }

    out.cva = sc.loss_cpty * (1.0 - sc.alpha) * sc.lam_cpty * exposure_plus;
    out.dva = sc.loss_trader * (1.0 - sc.alpha) * sc.lam_trader * exposure_minus;
    // the trader holds C = alpha Q^+ at rate c^b and posts alpha Q^- at c^l
    out.lva = sc.alpha * ((sc.f - sc.c_borrow) * exposure_plus - (sc.f - sc.c_lend) * exposure_minus);
    out.total = out.clean + out.dva - out.cva + out.lva;
    return out;
}

TreeReference brute_force_bsde(const TreeInput& in, std::size_t steps) {
    if (!(in.s0 > 0.0)) throw std::invalid_argument("oracle: spot must be positive");
    if (!(in.sigma > 0.0)) throw std::invalid_argument("oracle: tree requires positive volatility");
    if (!(in.T > 0.0)) throw std::invalid_argument("oracle: maturity must be positive");
    if (in.kind != PayoffKind::Forward && in.strike < 0.0)
        throw std::invalid_argument("oracle: option strike must be nonnegative");
    for (double v : {in.s0, in.strike, in.sigma, in.T, in.amount, in.f_lend, in.f_borrow, in.carry})
        if (!std::isfinite(v)) throw std::invalid_argument("oracle: non-finite input");
    if (steps < 8 || steps % 2 != 0)
        throw std::invalid_argument("oracle: step count must be even and at least 8");
    if (2 * steps > 2000) throw std::invalid_argument("oracle: step count exceeds the 2000-step budget");

    TreeReference out;
    out.coarse = tree_value(in, steps / 2);
    out.mid = tree_value(in, steps);
    out.fine = tree_value(in, 2 * steps);
    out.value = 2.0 * out.fine - out.mid;
    out.error_bar = std::fabs(out.fine - out.mid);
    const double denom = out.mid - out.fine;
    out.ratio = denom != 0.0 ? (out.coarse - out.mid) / denom : std::numeric_limits<double>::infinity();
    return out;
}

double fair_borrow_spread(const PricingProblem& prob, double rel_tol) {
    const FlatScenario sc = extract_flat(prob);
    if (sc.kind == PayoffKind::Forward || sc.amount < 0.0)
        throw std::invalid_argument("oracle: fair borrow spread needs a nonnegative payoff");
    const double lam_total = sc.lam_trader + sc.lam_cpty;
    const double scale = 1e-2 * sc.s0 * std::max(std::fabs(sc.amount), 1.0);
    // Borrowed funds track the (positive) value, so both the carry cost and
    // the trader-default benefit weight the same discounted exposure profile;
    // the root is the hazard charge under any common weighting, so the
    // risk-free profile serves.
    auto weight = [&](double u) { return std::exp(-lam_total * u) * clean_parts(sc, u, sc.r, sc.r).plus; };
    const double exposure = integrate(weight, 0.0, sc.T, rel_tol, scale);
    if (!(exposure > 0.0)) throw std::invalid_argument("oracle: payoff carries no positive exposure");
    const double benefit = sc.loss_trader * sc.lam_trader * exposure;
    if (benefit <= 0.0) return 0.0;
    auto gap = [&](double sp) { return sp * exposure - benefit; };
    double lo = 0.0, hi = 2.0 * sc.loss_trader * sc.lam_trader + 0.01;
    while (gap(hi) < 0.0) hi *= 2.0;
    for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
        const double mid = 0.5 * (lo + hi);
        (gap(mid) < 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace xvakit::oracle
