#include <algorithm>
#include <cmath>
#include <string>

#include "doctest.h"
#include "helpers.hpp"
#include "xvakit/funding_ext.hpp"
#include "xvakit/pricer_linear.hpp"

using namespace xvakit;
using namespace xvakit::testing;

namespace {

RunConfig fx_run(std::size_t paths = 30000, std::size_t steps = 32, std::uint64_t seed = 11) {
    RunConfig run;
    run.paths = paths;
    run.steps = steps;
    run.seed = seed;
    run.workers = 1;
    return run;
}

bool has_warning(const ValuationReport& rep, const std::string& needle) {
    return std::any_of(rep.warnings.begin(), rep.warnings.end(),
                       [&](const std::string& w) { return w.find(needle) != std::string::npos; });
}

/// Flat-rate benefit integral L * lam * int_0^T exp(-(decay + r) u) du for the
/// constant-schedule external legs.
double flat_leg(double loss, double lam, double decay, double r, double T) {
    const double k = decay + r;
    return loss * lam * (1.0 - std::exp(-k * T)) / k;
}

}  // namespace

TEST_CASE("defaultable account jumps once by exactly 1 - L_I") {
    DefaultableAccount acct{RateCurve::flat(0.04), 0.6};
    const double tau = 0.7;
    const double before = acct.value(std::nextafter(tau, 0.0), tau);
    const double at = acct.value(tau, tau);
    CHECK(at / before == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(acct.value(1.0, tau) / acct.value(tau, tau) ==
          doctest::Approx(std::exp(0.04 * 0.3)).epsilon(1e-12));
    CHECK(acct.value(0.5, tau) == doctest::Approx(std::exp(0.04 * 0.5)).epsilon(1e-14));
    CHECK(acct.jump_ratio() == 0.4);
    DefaultableAccount lossless{RateCurve::flat(0.04), 0.0};
    CHECK(lossless.value(tau, tau) == doctest::Approx(std::exp(0.04 * tau)).epsilon(1e-14));
}

TEST_CASE("external adjustments on constant schedules match the flat-rate integrals") {
    FlatSpec s;
    s.lam_i = 0.05;
    s.lam_c = 0.0;
    PricingProblem prob = make_problem(s);
    prob.external.enabled = true;
    prob.external.convention = ExternalConvention::NetBorrower;
    const RunConfig run = fx_run(200000, 16, 3);
    const DeflatorChoice choice = DeflatorChoice::risk_free(prob.rates, 1);
    const PathEnsemble ens = simulate_problem(prob, choice, run);

    const double want = flat_leg(s.loss_i, s.lam_i, s.lam_i, s.r, s.T);

    SUBCASE("borrowed funds: F = -1 pays the trader-default benefit") {
        const ExternalAdjustments legs = external_adjustments(ens, RateCurve::flat(-1.0), prob);
        CHECK(std::fabs(legs.dva_f_minus.value - want) <= 3.0 * legs.dva_f_minus.se);
        CHECK(legs.dva_f_plus.value == 0.0);
        CHECK(legs.dva_f_plus.se == 0.0);
    }
    SUBCASE("lent funds: F = +1 moves the benefit to the plus leg") {
        const ExternalAdjustments legs = external_adjustments(ens, RateCurve::flat(1.0), prob);
        CHECK(legs.dva_f_minus.value == 0.0);
        CHECK(std::fabs(legs.dva_f_plus.value - want) <= 3.0 * legs.dva_f_plus.se);
    }
    SUBCASE("no writedown, no benefit") {
        PricingProblem zero = prob;
        zero.credit.loss_trader = 0.0;
        const ExternalAdjustments legs = external_adjustments(ens, RateCurve::flat(-1.0), zero);
        CHECK(legs.dva_f_minus.value == 0.0);
        CHECK(legs.dva_f_plus.value == 0.0);
    }
}

TEST_CASE("independent convention splits the legs between the two defaulters") {
    FlatSpec s;
    s.lam_i = 0.04;
    s.lam_c = 0.0;
    PricingProblem prob = make_problem(s);
    prob.external.enabled = true;
    prob.external.convention = ExternalConvention::Independent;
    prob.credit.lambda_external = RateCurve::flat(0.03);
    prob.credit.loss_external = 0.5;
    const RunConfig run = fx_run(200000, 16, 5);
    const DeflatorChoice choice = DeflatorChoice::risk_free(prob.rates, 1);
    const PathEnsemble ens = simulate_problem(prob, choice, run);

    const double decay = 0.04 + 0.03;
    const ExternalAdjustments borrow = external_adjustments(ens, RateCurve::flat(-1.0), prob);
    CHECK(std::fabs(borrow.dva_f.value - flat_leg(s.loss_i, 0.04, decay, s.r, s.T)) <=
          3.0 * borrow.dva_f.se);
    CHECK(borrow.cva_f.value == 0.0);

    const ExternalAdjustments lend = external_adjustments(ens, RateCurve::flat(1.0), prob);
    CHECK(lend.dva_f.value == 0.0);
    CHECK(std::fabs(lend.cva_f.value - flat_leg(0.5, 0.03, decay, s.r, s.T)) <= 3.0 * lend.cva_f.se);
}

TEST_CASE("net benefit J: signs and the fair-spread cancellation") {
    FlatSpec s;
    s.lam_i = 0.05;
    s.lam_c = 0.02;
    PricingProblem prob = make_problem(s);
    const RunConfig run = fx_run(100000, 16, 7);
    const DeflatorChoice choice = DeflatorChoice::risk_free(prob.rates, 1);
    const PathEnsemble ens = simulate_problem(prob, choice, run);

    // unit residual while alive, deflated at r
    const std::size_t M = ens.grid.cells(), n = ens.n_paths;
    std::vector<double> y(M * n, 0.0);
    for (std::size_t k = 0; k < M; ++k) {
        const double defl = prob.rates.r.discount(0.0, ens.grid.nodes[k]);
        for (std::size_t q = 0; q < n; ++q)
            if (ens.tau(q) > ens.grid.nodes[k]) y[k * n + q] = defl;
    }

    SUBCASE("fair spread: marginalized integrand identically zero, MC inside 3 SE") {
        const RateCurve fair = prob.credit.lambda_trader.scaled(prob.credit.loss_trader);
        const NetBenefit nb = net_benefit_J(ens, y, fair, prob.credit);
        CHECK(nb.j0_marginalized == 0.0);
        CHECK(nb.j0_integrand_max == 0.0);
        CHECK(nb.j0.se > 0.0);
        CHECK(std::fabs(nb.j0.value) <= 3.0 * nb.j0.se);
    }
    SUBCASE("zero spread leaves the pure default benefit") {
        const NetBenefit nb = net_benefit_J(ens, y, RateCurve::flat(0.0), prob.credit);
        CHECK(nb.j0.value > 0.0);
        CHECK(nb.j0_marginalized > 0.0);
    }
    SUBCASE("no writedown, positive spread costs") {
        DefaultModel lossless = prob.credit;
        lossless.loss_trader = 0.0;
        const NetBenefit nb = net_benefit_J(ens, y, RateCurve::flat(0.01), lossless);
        CHECK(nb.j0.value < 0.0);
        CHECK(nb.j0_marginalized < 0.0);
    }
    SUBCASE("short residual array rejected") {
        std::vector<double> stub(M * n - 1, 0.0);
        CHECK_THROWS_AS(net_benefit_J(ens, stub, RateCurve::flat(0.0), prob.credit),
                        std::invalid_argument);
    }
}

TEST_CASE("incomplete pricing at the fair spread is wealth-independent to the bit") {
    FlatSpec s;
    s.f_l = 0.03;
    s.f_b = 0.07;  // ignored by this mode: the unsecured spread is the fair one
    s.h_l = s.h_b = 0.025;
    s.alpha = 0.5;
    const PricingProblem prob = make_problem(s);
    const RunConfig run = fx_run();
    const ValuationReport rep = price_incomplete(prob, run);

    CHECK(rep.converged);
    CHECK(rep.mode == "incomplete");
    CHECK(rep.measure == "q_h_minimal");
    CHECK(rep.wealth_gap == 0.0);
    CHECK(rep.j0_marginalized == 0.0);
    CHECK(rep.j0_integrand_max == 0.0);
    CHECK(rep.j0.se > 0.0);
    CHECK(std::fabs(rep.j0.value) <= 3.0 * rep.j0.se);
    // the benefit leg and the spread-carry leg are the same products
    CHECK(rep.psi.value == rep.fca_f.value);
    CHECK(rep.fca_f.value > 0.0);
    CHECK(rep.fva_f.value == -rep.fca_f.value);
    CHECK(rep.decomposition_residual <= 1e-10 * s.s0);
    CHECK(rep.warnings.empty());
    const double reassembled = rep.clean.value - rep.cva.value + rep.dva.value + rep.lva.value +
                               rep.fva_f.value + rep.psi.value;
    CHECK(std::fabs(rep.price.value - reassembled) <= 1e-12 * s.s0);
}

TEST_CASE("incomplete pricing without credit risk collapses to the linear price") {
    FlatSpec s;
    s.lam_i = s.lam_c = 0.0;
    s.f_l = s.f_b = 0.03;
    s.h_l = s.h_b = 0.025;
    s.alpha = 0.0;
    const PricingProblem prob = make_problem(s);
    const RunConfig run = fx_run();
    const ValuationReport inc = price_incomplete(prob, run);
    const ValuationReport lin = price_custom_measure(prob, run, RateCurve::flat(0.03));
    CHECK(std::fabs(inc.price.value - lin.price.value) <= 1e-13 * s.s0);
    CHECK(std::fabs(inc.clean.value - lin.clean.value) <= 1e-13 * s.s0);
    CHECK(inc.cva.value == 0.0);
    CHECK(inc.psi.value == 0.0);
    CHECK(inc.wealth_gap == 0.0);
}

TEST_CASE("incomplete pricing at eta = h = r reproduces the risk-neutral decomposition") {
    FlatSpec s;
    s.f_l = s.f_b = s.r;
    s.h_l = s.h_b = s.r;
    s.c_l = 0.01;
    s.c_b = 0.02;
    s.alpha = 0.5;
    const PricingProblem prob = make_problem(s);
    const RunConfig run = fx_run();
    const ValuationReport inc = price_incomplete(prob, run);
    const ValuationReport lin = price_risk_neutral(prob, run);
    CHECK(std::fabs(inc.price.value - lin.price.value) <= 1e-13 * s.s0);
    CHECK(std::fabs(inc.clean.value - lin.clean.value) <= 1e-13 * s.s0);
    CHECK(std::fabs(inc.cva.value - lin.cva.value) <= 1e-13 * s.s0);
    CHECK(std::fabs(inc.dva.value - lin.dva.value) <= 1e-13 * s.s0);
    CHECK(std::fabs(inc.lva.value - lin.lva.value) <= 1e-13 * s.s0);
}

TEST_CASE("off-fair spread couples the price to the wealth path") {
    FlatSpec s;
    s.f_l = 0.03;
    s.h_l = s.h_b = 0.025;
    s.alpha = 0.5;
    PricingProblem prob = make_problem(s);
    prob.fair_spread_auto = false;
    prob.funding_spread = RateCurve::flat(0.10);
    const RunConfig run = fx_run();
    const ValuationReport rep = price_incomplete(prob, run);
    CHECK(rep.wealth_gap > 0.02);
    CHECK(has_warning(rep, "off the fair level"));
    CHECK(has_warning(rep, "wealth-independence"));
    CHECK(rep.j0.value < 0.0);  // overpriced spread: carry outweighs the benefit

    PricingProblem freebie = make_problem(s);
    freebie.fair_spread_auto = false;
    freebie.funding_spread = RateCurve::flat(0.0);
    const ValuationReport rep0 = price_incomplete(freebie, run);
    CHECK(rep0.j0.value > 0.0);  // free borrowing keeps the pure default benefit
}

TEST_CASE("incomplete pricing guards") {
    FlatSpec s;
    SUBCASE("split repo rejected") {
        s.h_l = 0.02;
        s.h_b = 0.03;
        CHECK_THROWS_AS(price_incomplete(make_problem(s), fx_run(2000, 8)), std::invalid_argument);
    }
    SUBCASE("external block rejected") {
        PricingProblem prob = make_problem(s);
        prob.external.enabled = true;
        CHECK_THROWS_AS(price_incomplete(prob, fx_run(2000, 8)), std::invalid_argument);
    }
}

TEST_CASE("external pricing: short payoff at f^l = r collapses to the clean price") {
    FlatSpec s;
    s.amount = -1.0;
    s.alpha = 0.0;
    s.f_l = s.r;
    s.f_b = s.r + 0.02;
    s.h_l = s.h_b = s.r;
    PricingProblem prob = make_problem(s);
    prob.external.enabled = true;
    prob.external.convention = ExternalConvention::NetBorrower;
    prob.external.bank_borrowing = RateCurve::flat(-1000.0);
    const RunConfig run = fx_run(60000, 32, 13);
    const ValuationReport rep = price_with_external(prob, run);

    CHECK(rep.converged);
    CHECK(rep.mode == "external");
    CHECK(!has_warning(rep, "fail"));
    CHECK(std::fabs(rep.dva.value - rep.dva_f_plus.value) <=
          3.0 * (rep.dva.se + rep.dva_f_plus.se) + 1e-4 * s.s0);
    CHECK(std::fabs(rep.price.value - rep.clean_analytic) <= 3.0 * rep.price.se + 1e-4 * s.s0);
    CHECK(rep.dva.value > 0.0);
    CHECK(std::fabs(rep.psi.value - (rep.dva_f_minus.value - rep.dva_f_plus.value)) <= 1e-12 * s.s0);
}

TEST_CASE("external pricing: long payoff keeps only the borrowing-side legs") {
    FlatSpec s;
    s.amount = 1.0;
    s.alpha = 0.0;
    s.f_l = 0.025;
    s.f_b = 0.05;
    s.h_l = s.h_b = s.r;
    PricingProblem prob = make_problem(s);
    prob.external.enabled = true;
    prob.external.convention = ExternalConvention::NetBorrower;
    prob.external.bank_borrowing = RateCurve::flat(-1000.0);
    const RunConfig run = fx_run(40000, 32, 19);
    const ValuationReport rep = price_with_external(prob, run);

    CHECK(rep.converged);
    CHECK(!has_warning(rep, "yet the"));
    CHECK(rep.fca_f.value > 0.0);
    CHECK(rep.dva_f_minus.value > 0.0);
    CHECK(rep.dva_f_plus.value <= 1e-3 * rep.dva_f_minus.value + 1e-9);
    CHECK(rep.cva.value > 0.0);
    CHECK(rep.dva.value == 0.0);  // the trader receives only: no counterparty windfall
}

TEST_CASE("external pricing: independent funder adds its own loss leg") {
    FlatSpec s;
    s.amount = 1.0;
    s.alpha = 0.0;
    s.f_l = 0.025;
    s.f_b = 0.05;
    s.h_l = s.h_b = s.r;
    PricingProblem prob = make_problem(s);
    prob.external.enabled = true;
    prob.external.convention = ExternalConvention::Independent;
    prob.credit.lambda_external = RateCurve::flat(0.03);
    prob.credit.loss_external = 0.5;
    const RunConfig run = fx_run(40000, 32, 23);
    const ValuationReport rep = price_with_external(prob, run);

    CHECK(rep.converged);
    CHECK(rep.dva_f.value > 0.0);
    CHECK(rep.cva_f.value >= 0.0);
    CHECK(rep.cva_f.value <= 1e-3 * s.s0);  // lending needs never arise on a long option
    CHECK(std::fabs(rep.psi.value - (rep.dva_f.value - rep.cva_f.value)) <= 1e-12 * s.s0);
}

TEST_CASE("external pricing surfaces sign and bound violations as warnings") {
    FlatSpec s;
    s.alpha = 0.0;
    s.h_l = s.h_b = s.r;
    SUBCASE("positive bank borrowing path") {
        PricingProblem prob = make_problem(s);
        prob.external.enabled = true;
        prob.external.convention = ExternalConvention::NetBorrower;
        prob.external.bank_borrowing = RateCurve::flat(5.0);
        const ValuationReport rep = price_with_external(prob, fx_run(5000, 8, 29));
        CHECK(has_warning(rep, "turns positive"));
        CHECK(has_warning(rep, "Y + F <= 0"));
    }
    SUBCASE("sign-indefinite payoff") {
        FlatSpec fwd = s;
        fwd.kind = PayoffKind::Forward;
        PricingProblem prob = make_problem(fwd);
        prob.external.enabled = true;
        prob.external.convention = ExternalConvention::NetBorrower;
        prob.external.bank_borrowing = RateCurve::flat(-1000.0);
        const ValuationReport rep = price_with_external(prob, fx_run(5000, 8, 29));
        CHECK(has_warning(rep, "not sign-definite"));
    }
}

TEST_CASE("external pricing guards") {
    FlatSpec s;
    SUBCASE("disabled block") {
        CHECK_THROWS_AS(price_with_external(make_problem(s), fx_run(2000, 8)), std::invalid_argument);
    }
    SUBCASE("repo away from the risk-free rate") {
        PricingProblem prob = make_problem(s);  // h = 0.025 != r
        prob.external.enabled = true;
        CHECK_THROWS_AS(price_with_external(prob, fx_run(2000, 8)), std::invalid_argument);
    }
    SUBCASE("net borrower with a defaultable funder") {
        FlatSpec eq = s;
        eq.h_l = eq.h_b = eq.r;
        PricingProblem prob = make_problem(eq);
        prob.external.enabled = true;
        prob.external.convention = ExternalConvention::NetBorrower;
        prob.credit.lambda_external = RateCurve::flat(0.01);
        CHECK_THROWS_AS(price_with_external(prob, fx_run(2000, 8)), std::invalid_argument);
    }
    SUBCASE("dated payments") {
        FlatSpec eq = s;
        eq.h_l = eq.h_b = eq.r;
        PricingProblem prob = make_problem(eq);
        prob.external.enabled = true;
        prob.contract.payments.push_back(Payment{0.5, PayoffKind::Cash, 1.0, 0.0, 0});
        CHECK_THROWS_AS(price_with_external(prob, fx_run(2000, 8)), std::invalid_argument);
    }
}
