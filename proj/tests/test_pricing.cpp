#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "xvakit/pricer_linear.hpp"

using namespace xvakit;
using namespace xvakit::testing;

namespace {
RunConfig quick_run(std::size_t paths = 30000, std::size_t steps = 32, std::uint64_t seed = 7) {
    RunConfig run;
    run.paths = paths;
    run.steps = steps;
    run.seed = seed;
    run.workers = 1;
    return run;
}
}  // namespace

TEST_CASE("all rates equal, no defaults: price is the analytic clean value") {
    FlatSpec s = all_rates_equal();
    s.lam_i = s.lam_c = 0.0;
    const PricingProblem prob = make_problem(s);
    const RunConfig run = quick_run();

    const ValuationReport rep = price_risk_neutral(prob, run);
    CHECK(rep.converged);
    CHECK(rep.picard_iterations <= 3);

    CHECK(rep.cva.value == 0.0);
    CHECK(rep.dva.value == 0.0);
    CHECK(rep.lva.value == 0.0);
    CHECK(rep.fva_f.value == 0.0);
    REQUIRE(rep.fva_h.size() == 1);
    CHECK(rep.fva_h[0].value == 0.0);

    CHECK(rep.price.se > 0.0);
    CHECK(std::fabs(rep.price.value - rep.clean_analytic) <= 3.0 * rep.price.se);
    CHECK(rep.decomposition_residual <= 1e-12 * s.s0);
    CHECK(rep.clean_analytic == doctest::Approx(clean_price(prob)).epsilon(1e-14));
}

TEST_CASE("funding and risk-neutral presets agree within common-draw noise") {
    FlatSpec s;  // split stack: r .02, f .03, h .025, c .015, both names defaultable
    s.alpha = 0.8;
    const PricingProblem prob = make_problem(s);
    const RunConfig run = quick_run();

    const ValuationReport rn = price_risk_neutral(prob, run);
    const ValuationReport fm = price_funding_measure(prob, run);
    CHECK(rn.converged);
    CHECK(fm.converged);
    CHECK(rn.measure == "risk_free");
    CHECK(fm.measure == "funding");

    const double comb = std::sqrt(rn.price.se * rn.price.se + fm.price.se * fm.price.se);
    CHECK(std::fabs(rn.price.value - fm.price.value) <= 3.0 * comb);

    const ValuationReport cu = price_custom_measure(prob, run, RateCurve::flat(0.05));
    CHECK(cu.converged);
    const double comb2 = std::sqrt(rn.price.se * rn.price.se + cu.price.se * cu.price.se);
    CHECK(std::fabs(rn.price.value - cu.price.value) <= 3.0 * comb2);
}

TEST_CASE("decomposition identity is exact pathwise") {
    FlatSpec s;
    s.alpha = 0.8;
    s.kind = PayoffKind::Forward;  // two-signed mark feeds both credit legs
    const PricingProblem prob = make_problem(s);
    const ValuationReport rep = price_risk_neutral(prob, quick_run());
    CHECK(rep.decomposition_residual <= 1e-10 * s.s0);
    CHECK(std::fabs(rep.price.value - reassemble_price(rep)) <= 1e-10 * s.s0);
    CHECK(rep.cva.value > 0.0);
    CHECK(rep.dva.value > 0.0);

    // a nonnegative mark under fractional tracking leaves no debit leg at all
    FlatSpec sc = s;
    sc.kind = PayoffKind::Call;
    const ValuationReport call = price_risk_neutral(make_problem(sc), quick_run());
    CHECK(call.cva.value > 0.0);
    CHECK(call.dva.value == 0.0);
}

TEST_CASE("all rates equal with walk-away closeout: price is the pre-default flow leg") {
    FlatSpec s = all_rates_equal();
    s.alpha = 0.8;
    const PricingProblem prob0 = make_problem(s);
    PricingProblem prob = prob0;
    prob.closeout.settlement = CloseoutSettlement::None;
    const RunConfig run = quick_run(20000, 16, 11);

    const ValuationReport rep = price_risk_neutral(prob, run);
    CHECK(rep.converged);

    // survivors collect the terminal payoff, defaulted paths collect nothing
    const PathEnsemble ens =
        simulate_problem(prob, DeflatorChoice::risk_free(prob.rates, 1), run);
    const std::size_t last = ens.grid.nodes.size() - 1;
    const double disc = std::exp(-s.r * s.T);
    double acc = 0.0;
    for (std::size_t q = 0; q < ens.n_paths; ++q) {
        if (ens.tau(q) > s.T)
            acc += disc * std::max(ens.spot(last, 0)[q] - s.strike, 0.0);
    }
    const double direct = acc / static_cast<double>(ens.n_paths);
    CHECK(std::fabs(rep.price.value - direct) <= 1e-12 * s.s0);
}

TEST_CASE("buy and sell mirror bit-exactly without defaults") {
    FlatSpec s;
    s.lam_i = s.lam_c = 0.0;
    s.alpha = 0.8;
    const PricingProblem buy = make_problem(s);
    PricingProblem sell = buy;
    sell.contract = buy.contract.negated();
    const RunConfig run = quick_run(20000, 16, 13);

    const ValuationReport rb = price_risk_neutral(buy, run);
    const ValuationReport rs = price_risk_neutral(sell, run);
    CHECK(rb.price.value == -rs.price.value);
    CHECK(rb.lva.value == -rs.lva.value);
    CHECK(rb.fva_f.value == -rs.fva_f.value);
    CHECK(rb.fva_h[0].value == -rs.fva_h[0].value);
}

TEST_CASE("linear bsde explicit solution hits its closed forms") {
    SUBCASE("forward payoff, no collateral") {
        FlatSpec s;
        s.lam_i = s.lam_c = 0.0;
        s.kind = PayoffKind::Forward;
        const PricingProblem prob = make_problem(s);
        RunConfig run = quick_run(200000, 8, 3);

        const std::vector<double> y = linear_bsde_explicit(prob, run);
        const double fwd = s.s0 * std::exp(s.h_l * s.T);
        const double target = -std::exp(-s.f_l * s.T) * (fwd - s.strike);
        CHECK(std::fabs(y[0] - target) <= 0.2);
    }
    SUBCASE("zero payoff, constant collateral") {
        FlatSpec s;
        s.lam_i = s.lam_c = 0.0;
        s.kind = PayoffKind::Cash;
        s.amount = 0.0;
        PricingProblem prob = make_problem(s);
        const double c0 = 5.0;
        prob.collateral = CollateralSpec::constant(c0);
        const std::vector<double> y = linear_bsde_explicit(prob, quick_run(64, 16, 3));

        const double target = c0 * (s.c_l - s.f_l) * (1.0 - std::exp(-s.f_l * s.T)) / s.f_l;
        CHECK(y[0] == doctest::Approx(target).epsilon(1e-12));
        CHECK(y.back() == 0.0);
    }
    SUBCASE("rejects defaultable or nonlinear setups") {
        FlatSpec s;
        CHECK_THROWS_AS((void)linear_bsde_explicit(make_problem(s), quick_run(64, 4)),
                        std::invalid_argument);
        s.lam_i = s.lam_c = 0.0;
        s.f_b = s.f_l + 0.02;
        CHECK_THROWS_AS((void)linear_bsde_explicit(make_problem(s), quick_run(64, 4)),
                        std::invalid_argument);
    }
}

TEST_CASE("linear entry points reject split treasury or repo pairs") {
    FlatSpec s;
    s.f_b = 0.05;
    CHECK_THROWS_AS((void)price_funding_measure(make_problem(s), quick_run(64, 4)),
                    std::invalid_argument);
    CHECK_THROWS_AS((void)price_risk_neutral(make_problem(s), quick_run(64, 4)),
                    std::invalid_argument);
    FlatSpec s2;
    s2.h_b = 0.06;
    CHECK_THROWS_AS((void)price_risk_neutral(make_problem(s2), quick_run(64, 4)),
                    std::invalid_argument);
}
