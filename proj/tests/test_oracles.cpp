#include <cmath>
#include <stdexcept>

#include "doctest.h"
#include "helpers.hpp"
#include "xvakit/oracles.hpp"

using namespace xvakit;
using namespace xvakit::testing;
namespace orc = xvakit::oracle;

namespace {

double annuity(double lam, double T) { return lam > 0.0 ? (1.0 - std::exp(-lam * T)) / lam : T; }

orc::TwoRateBSInput bs_in(double s0, double k, double sigma, double T, double carry, double discount) {
    return {s0, k, sigma, T, carry, discount};
}

}  // namespace

TEST_CASE("closed form agrees with the lognormal quadrature across the menu") {
    const PayoffKind kinds[] = {PayoffKind::Call, PayoffKind::Put, PayoffKind::Forward,
                                PayoffKind::CashOrNothing, PayoffKind::Cash};
    for (double k : {80.0, 100.0, 130.0})
        for (double carry : {0.0, 0.03})
            for (double disc : {0.0, 0.05})
                for (double t : {0.5, 2.5})
                    for (PayoffKind kind : kinds) {
                        const auto in = bs_in(100.0, k, 0.2, t, carry, disc);
                        const double closed = orc::bs_carry_discount(in, kind);
                        const double quad = orc::lognormal_quadrature_price(in, kind);
                        CHECK(std::fabs(closed - quad) <= 1e-9 * std::max(std::fabs(closed), 1.0));
                    }
    // the reference at-the-money point
    const auto atm = bs_in(100.0, 100.0, 0.2, 1.0, 0.0, 0.0);
    const double closed = orc::bs_carry_discount(atm, PayoffKind::Call);
    CHECK(std::fabs(closed - orc::lognormal_quadrature_price(atm, PayoffKind::Call)) <= 1e-9 * closed);
    CHECK(closed == doctest::Approx(7.965567455405804).epsilon(1e-12));
}

TEST_CASE("put-call parity holds to machine precision") {
    for (double sigma : {0.0, 0.1, 0.4})
        for (double t : {0.25, 1.0, 3.0})
            for (double k : {50.0, 100.0, 150.0})
                for (double carry : {-0.02, 0.04})
                    for (double disc : {0.0, 0.06}) {
                        const auto in = bs_in(100.0, k, sigma, t, carry, disc);
                        const double call = orc::bs_carry_discount(in, PayoffKind::Call);
                        const double put = orc::bs_carry_discount(in, PayoffKind::Put);
                        const double fwd = orc::bs_carry_discount(in, PayoffKind::Forward);
                        CHECK(std::fabs(call - put - fwd) <= 1e-12 * (100.0 + k));
                    }
}

TEST_CASE("deterministic and degenerate limits of the closed form") {
    // zero volatility, forward above the strike: discounted intrinsic
    const auto itm = bs_in(100.0, 80.0, 0.0, 2.0, 0.03, 0.05);
    const double fwd = 100.0 * std::exp(0.03 * 2.0);
    CHECK(orc::bs_carry_discount(itm, PayoffKind::Call) ==
          doctest::Approx(std::exp(-0.05 * 2.0) * (fwd - 80.0)).epsilon(1e-15));
    CHECK(orc::bs_carry_discount(bs_in(100.0, 120.0, 0.0, 2.0, 0.0, 0.05), PayoffKind::Call) == 0.0);
    // vanishing strike: pure asset carried and discounted
    CHECK(orc::bs_carry_discount(bs_in(100.0, 0.0, 0.2, 1.5, 0.04, 0.01), PayoffKind::Call) ==
          doctest::Approx(100.0 * std::exp((0.04 - 0.01) * 1.5)).epsilon(1e-15));
    // zero maturity: intrinsic value
    CHECK(orc::bs_carry_discount(bs_in(100.0, 90.0, 0.2, 0.0, 0.03, 0.05), PayoffKind::Call) ==
          doctest::Approx(10.0).epsilon(1e-15));
    // invalid inputs rejected
    CHECK_THROWS_AS(orc::bs_carry_discount(bs_in(-1.0, 100.0, 0.2, 1.0, 0.0, 0.0), PayoffKind::Call),
                    std::invalid_argument);
    CHECK_THROWS_AS(orc::bs_carry_discount(bs_in(100.0, 100.0, -0.2, 1.0, 0.0, 0.0), PayoffKind::Call),
                    std::invalid_argument);
    CHECK_THROWS_AS(orc::bs_carry_discount(bs_in(100.0, 100.0, 0.2, -1.0, 0.0, 0.0), PayoffKind::Call),
                    std::invalid_argument);
}

TEST_CASE("xva quadrature reproduces the constant-intensity closed forms") {
    // with the treasury and repo rates pinned to r the deflated exposure
    // profile is constant in u and every leg closes in the annuity
    FlatSpec spec;
    spec.r = 0.02;
    spec.f_l = spec.f_b = spec.r;
    spec.h_l = spec.h_b = spec.r;
    spec.c_l = 0.01;
    spec.c_b = 0.015;
    spec.lam_i = 0.02;
    spec.lam_c = 0.03;
    spec.loss_i = 0.4;
    spec.loss_c = 0.6;
    const double lam = spec.lam_i + spec.lam_c;
    const double u0 =
        orc::bs_carry_discount(bs_in(spec.s0, spec.strike, spec.vol, spec.T, spec.r, spec.r), PayoffKind::Call);

    SUBCASE("uncollateralized call: pure counterparty leg") {
        const auto out = orc::quadrature_xva(make_problem(spec));
        // the stopped stream matches the unstopped value when the deflated
        // mark is constant: the survival annuity telescopes to one
        CHECK(out.clean == doctest::Approx(u0).epsilon(1e-9));
        CHECK(out.dva == 0.0);
        CHECK(out.lva == 0.0);
        const double want = spec.loss_c * spec.lam_c * u0 * annuity(lam, spec.T);
        CHECK(out.cva == doctest::Approx(want).epsilon(1e-9));
        CHECK(out.total == doctest::Approx(out.clean - out.cva).epsilon(1e-12));
    }

    SUBCASE("full collateralization kills both default legs") {
        spec.alpha = 1.0;
        const auto out = orc::quadrature_xva(make_problem(spec));
        CHECK(out.cva == 0.0);
        CHECK(out.dva == 0.0);
        const double want = (spec.r - spec.c_b) * u0 * annuity(lam, spec.T);
        CHECK(out.lva == doctest::Approx(want).epsilon(1e-9));
    }

    SUBCASE("partial collateral scales the default legs by 1 - alpha") {
        spec.alpha = 0.8;
        const auto out = orc::quadrature_xva(make_problem(spec));
        const double ann = annuity(lam, spec.T);
        CHECK(out.cva == doctest::Approx(0.2 * spec.loss_c * spec.lam_c * u0 * ann).epsilon(1e-9));
        CHECK(out.lva == doctest::Approx(0.8 * (spec.r - spec.c_b) * u0 * ann).epsilon(1e-9));
        // halving the tolerance must not move the result
        const auto tight = orc::quadrature_xva(make_problem(spec), 0.5e-10);
        CHECK(std::fabs(tight.total - out.total) <= 1e-9 * (std::fabs(out.total) + 1.0));
    }

    SUBCASE("written put: exposure flips to the trader side") {
        spec.kind = PayoffKind::Put;
        spec.amount = -3.0;
        const auto out = orc::quadrature_xva(make_problem(spec));
        const double p0 =
            orc::bs_carry_discount(bs_in(spec.s0, spec.strike, spec.vol, spec.T, spec.r, spec.r), PayoffKind::Put);
        CHECK(out.cva == 0.0);
        CHECK(out.dva == doctest::Approx(spec.loss_i * spec.lam_i * 3.0 * p0 * annuity(lam, spec.T)).epsilon(1e-9));
        CHECK(out.clean == doctest::Approx(-3.0 * p0).epsilon(1e-9));
    }

    SUBCASE("forward: both parts populated and consistent with the martingale split") {
        spec.kind = PayoffKind::Forward;
        spec.strike = 101.0;
        spec.alpha = 0.5;
        const auto out = orc::quadrature_xva(make_problem(spec));
        CHECK(out.clean == doctest::Approx(spec.s0 - spec.strike * std::exp(-spec.r * spec.T)).epsilon(1e-9));
        CHECK(out.cva > 0.0);
        CHECK(out.dva > 0.0);
        CHECK(out.total == doctest::Approx(out.clean + out.dva - out.cva + out.lva).epsilon(1e-12));
    }

    SUBCASE("differential treasury and repo rates: legs match a direct fine integration") {
        spec.f_l = spec.f_b = 0.035;
        spec.h_l = spec.h_b = 0.025;
        spec.alpha = 0.4;
        const auto out = orc::quadrature_xva(make_problem(spec));
        // trapezoid the composed-lognormal exposure profile independently
        const std::size_t n = 20000;
        double plus_int = 0.0, mark_int = 0.0;
        for (std::size_t i = 0; i <= n; ++i) {
            const double u = spec.T * static_cast<double>(i) / static_cast<double>(n);
            const double w = (i == 0 || i == n) ? 0.5 : 1.0;
            const double mark = orc::bs_carry_discount(
                bs_in(spec.s0, spec.strike, spec.vol, spec.T,
                      (0.025 * u + spec.r * (spec.T - u)) / spec.T,
                      (0.035 * u + spec.r * (spec.T - u)) / spec.T),
                PayoffKind::Call);
            plus_int += w * std::exp(-lam * u) * mark;
            mark_int += w * std::exp(-lam * u) * mark;
        }
        const double du = spec.T / static_cast<double>(n);
        plus_int *= du;
        mark_int *= du;
        const double uT = orc::bs_carry_discount(
            bs_in(spec.s0, spec.strike, spec.vol, spec.T, 0.025, 0.035), PayoffKind::Call);
        const double clean_ref = lam * mark_int + std::exp(-lam * spec.T) * uT;
        const double cva_ref = spec.loss_c * (1.0 - spec.alpha) * spec.lam_c * plus_int;
        const double lva_ref = spec.alpha * (0.035 - spec.c_b) * plus_int;
        CHECK(out.clean == doctest::Approx(clean_ref).epsilon(1e-6));
        CHECK(out.cva == doctest::Approx(cva_ref).epsilon(1e-6));
        CHECK(out.lva == doctest::Approx(lva_ref).epsilon(1e-6));
        CHECK(out.dva == 0.0);
    }
}

TEST_CASE("xva quadrature rejects scenarios outside its menu") {
    FlatSpec spec;
    SUBCASE("digital payoff") {
        spec.kind = PayoffKind::CashOrNothing;
        CHECK_THROWS_AS(orc::quadrature_xva(make_problem(spec)), std::invalid_argument);
    }
    SUBCASE("schedule collateral") {
        auto prob = make_problem(spec);
        prob.collateral = CollateralSpec::constant(5.0);
        CHECK_THROWS_AS(orc::quadrature_xva(prob), std::invalid_argument);
    }
    SUBCASE("walk-away closeout") {
        auto prob = make_problem(spec);
        prob.closeout.settlement = CloseoutSettlement::None;
        CHECK_THROWS_AS(orc::quadrature_xva(prob), std::invalid_argument);
    }
    SUBCASE("dated coupons") {
        auto prob = make_problem(spec);
        prob.contract.payments.push_back(Payment{0.5, PayoffKind::Cash, 1.0, 0.0, 0});
        CHECK_THROWS_AS(orc::quadrature_xva(prob), std::invalid_argument);
    }
    SUBCASE("date-dependent risk-free rate") {
        auto prob = make_problem(spec);
        prob.rates.r = RateCurve({0.5}, {0.02, 0.03});
        CHECK_THROWS_AS(orc::quadrature_xva(prob), std::invalid_argument);
    }
    SUBCASE("external funding enabled") {
        auto prob = make_problem(spec);
        prob.external.enabled = true;
        CHECK_THROWS_AS(orc::quadrature_xva(prob), std::invalid_argument);
    }
    SUBCASE("split treasury pair") {
        spec.f_l = 0.02;
        spec.f_b = 0.04;
        CHECK_THROWS_AS(orc::quadrature_xva(make_problem(spec)), std::invalid_argument);
    }
    SUBCASE("split repo pair") {
        spec.h_l = 0.02;
        spec.h_b = 0.03;
        CHECK_THROWS_AS(orc::quadrature_xva(make_problem(spec)), std::invalid_argument);
    }
}

TEST_CASE("tree reference: symmetric rates collapse to the closed form") {
    orc::TreeInput in;
    in.s0 = 100.0;
    in.strike = 100.0;
    in.sigma = 0.2;
    in.T = 1.0;
    in.f_lend = 0.04;
    in.f_borrow = 0.04;
    in.carry = 0.01;
    const auto ref = orc::brute_force_bsde(in, 256);
    const double closed = orc::bs_carry_discount(bs_in(100.0, 100.0, 0.2, 1.0, 0.01, 0.04), PayoffKind::Call);
    CHECK(std::fabs(ref.value - closed) <= ref.error_bar + 1e-5 * in.s0);
    CHECK(ref.error_bar < 0.01);
    CHECK(ref.ratio == doctest::Approx(2.0).epsilon(0.15));
}

TEST_CASE("tree reference: differential borrowing") {
    orc::TreeInput in;
    in.s0 = 100.0;
    in.sigma = 0.2;
    in.T = 1.0;
    in.carry = 0.03;
    in.f_lend = 0.02;
    in.f_borrow = 0.04;

    SUBCASE("zero-strike call carries the asset at the borrowing rate, exactly") {
        in.strike = 0.0;
        const auto ref = orc::brute_force_bsde(in, 64);
        const double want = in.s0 * std::exp((in.carry - in.f_borrow) * in.T);
        CHECK(std::fabs(ref.value - want) <= 1e-10 * in.s0);
        CHECK(ref.error_bar <= 1e-10 * in.s0);
    }

    SUBCASE("held option never lends: price equals the borrow-discounted closed form") {
        in.strike = 100.0;
        const auto ref = orc::brute_force_bsde(in, 500);
        const double closed =
            orc::bs_carry_discount(bs_in(in.s0, in.strike, in.sigma, in.T, in.carry, in.f_borrow), PayoffKind::Call);
        CHECK(std::fabs(ref.value - closed) <= ref.error_bar + 1e-5 * in.s0);
        CHECK(ref.ratio > 1.7);
        CHECK(ref.ratio < 2.3);
    }

    SUBCASE("written option never borrows: price equals minus the lend-discounted closed form") {
        in.strike = 100.0;
        in.amount = -1.0;
        const auto ref = orc::brute_force_bsde(in, 500);
        const double closed =
            orc::bs_carry_discount(bs_in(in.s0, in.strike, in.sigma, in.T, in.carry, in.f_lend), PayoffKind::Call);
        CHECK(std::fabs(ref.value + closed) <= ref.error_bar + 1e-5 * in.s0);
    }

    SUBCASE("mixed-sign forward prices below every single-rate value and falls as borrowing widens") {
        in.kind = PayoffKind::Forward;
        in.strike = in.s0 * std::exp(in.carry * in.T);  // zero-value strike under symmetric rates
        const auto ref = orc::brute_force_bsde(in, 256);
        const double lend_only =
            orc::bs_carry_discount(bs_in(in.s0, in.strike, in.sigma, in.T, in.carry, in.f_lend), PayoffKind::Forward);
        const double borrow_only = orc::bs_carry_discount(
            bs_in(in.s0, in.strike, in.sigma, in.T, in.carry, in.f_borrow), PayoffKind::Forward);
        // the driver charges the costlier rate on each side of zero, so the
        // held position is worth less than under either rate alone
        CHECK(ref.value < std::min(lend_only, borrow_only));
        CHECK(ref.value < -1e-3);  // the asymmetry genuinely bites
        auto wider = in;
        wider.f_borrow = 0.06;
        CHECK(orc::brute_force_bsde(wider, 256).value < ref.value);
    }
}

TEST_CASE("tree reference rejects invalid resolutions") {
    orc::TreeInput in;
    in.s0 = 100.0;
    in.strike = 100.0;
    in.sigma = 0.2;
    in.T = 1.0;
    CHECK_THROWS_AS(orc::brute_force_bsde(in, 13), std::invalid_argument);   // odd
    CHECK_THROWS_AS(orc::brute_force_bsde(in, 4), std::invalid_argument);    // too few
    CHECK_THROWS_AS(orc::brute_force_bsde(in, 1200), std::invalid_argument); // beyond the budget
    auto flat = in;
    flat.sigma = 0.0;
    CHECK_THROWS_AS(orc::brute_force_bsde(flat, 64), std::invalid_argument);
    auto steep = in;
    steep.sigma = 0.05;
    steep.carry = 5.0;  // per-step growth escapes the lattice
    CHECK_THROWS_AS(orc::brute_force_bsde(steep, 8), std::invalid_argument);
}

TEST_CASE("fair borrowing spread equals the trader hazard charge") {
    FlatSpec spec;
    spec.lam_i = 0.05;
    spec.loss_i = 0.4;
    CHECK(orc::fair_borrow_spread(make_problem(spec)) == doctest::Approx(0.02).epsilon(1e-9));
    spec.loss_i = 0.0;
    CHECK(orc::fair_borrow_spread(make_problem(spec)) == 0.0);
    spec.loss_i = 0.4;
    spec.kind = PayoffKind::Forward;
    CHECK_THROWS_AS(orc::fair_borrow_spread(make_problem(spec)), std::invalid_argument);
    spec.kind = PayoffKind::Call;
    spec.amount = -1.0;
    CHECK_THROWS_AS(orc::fair_borrow_spread(make_problem(spec)), std::invalid_argument);
}
