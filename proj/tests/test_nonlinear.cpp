#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "xvakit/legs.hpp"
#include "xvakit/pricer_linear.hpp"
#include "xvakit/pricer_nonlinear.hpp"

using namespace xvakit;
using namespace xvakit::testing;

namespace {
RunConfig nl_run(std::size_t paths = 30000, std::size_t steps = 32, std::uint64_t seed = 17) {
    RunConfig run;
    run.paths = paths;
    run.steps = steps;
    run.seed = seed;
    run.workers = 1;
    return run;
}
}  // namespace

TEST_CASE("effective rate branches follow the sign rules") {
    CHECK(effective_funding_rate(1.0, 0.03, 0.05) == 0.03);
    CHECK(effective_funding_rate(-1.0, 0.03, 0.05) == 0.05);
    CHECK(effective_funding_rate(0.0, 0.03, 0.05) == 0.03);
    CHECK(effective_repo_rate(1.0, 0.02, 0.04) == 0.04);
    CHECK(effective_repo_rate(-1.0, 0.02, 0.04) == 0.02);
    CHECK(effective_repo_rate(0.0, 0.02, 0.04) == 0.02);
    CHECK(effective_funding_rate(123.0, 0.03, 0.03) == 0.03);
}

TEST_CASE("degenerate pairs: nonlinear picard reproduces the linear route bitwise") {
    FlatSpec s;
    s.alpha = 0.8;
    const PricingProblem prob = make_problem(s);
    const RunConfig run = nl_run();
    const ValuationReport lin = price_risk_neutral(prob, run);
    const ValuationReport non = picard_price(prob, run);
    CHECK(non.price.value == lin.price.value);
    CHECK(non.cva.value == lin.cva.value);
    CHECK(non.fva_f.value == lin.fva_f.value);
    CHECK(non.mode == "nonlinear");
}

TEST_CASE("split treasury pair: picard and backward Euler agree, routes stay one-sided") {
    FlatSpec s;
    s.lam_i = s.lam_c = 0.0;
    s.f_l = 0.03;
    s.f_b = 0.05;
    const PricingProblem prob = make_problem(s);  // long an ATM call, F <= 0 throughout
    const RunConfig run = nl_run(40000, 32, 19);

    const ValuationReport pic = picard_price(prob, run);
    CHECK(pic.converged);
    const BSDESolution bs = solve_bsde(prob, run);

    // same contract priced by the two routes; tolerance covers MC noise and
    // the first-order time bias of both schemes at this step count
    CHECK(std::fabs(pic.price.value - bs.report.price.value) <=
          3.0 * std::sqrt(pic.price.se * pic.price.se + bs.report.price.se * bs.report.price.se) +
              0.02 * s.s0 / static_cast<double>(run.steps));

    // buyer funds at f^b only: the borrow split carries the treasury leg, the
    // lend split holds only regression wiggle where the fitted value dips
    // through zero
    CHECK(pic.fca_f.value > 0.0);
    CHECK(pic.fba_f.value <= 1e-3 * pic.fca_f.value);
}

TEST_CASE("nonlinearity breaks buy/sell symmetry under a split treasury pair") {
    FlatSpec s;
    s.lam_i = s.lam_c = 0.0;
    s.f_l = 0.03;
    s.f_b = 0.05;
    const PricingProblem buy = make_problem(s);
    PricingProblem sell = buy;
    sell.contract = buy.contract.negated();
    RunConfig run = nl_run(40000, 32, 23);
    run.keep_path_terms = true;  // difference estimator on the shared ensemble

    const ValuationReport rb = picard_price(buy, run);
    const ValuationReport rs = picard_price(sell, run);
    const std::size_t n = rb.path_terms.total.size();
    REQUIRE(n == run.paths);
    REQUIRE(rs.path_terms.total.size() == n);
    double s1 = 0.0, s2 = 0.0;
    for (std::size_t q = 0; q < n; ++q) {
        const double d = rb.path_terms.total[q] + rs.path_terms.total[q];  // zero under symmetry
        s1 += d;
        s2 += d * d;
    }
    const double gap = s1 / static_cast<double>(n);
    const double var = (s2 - s1 * s1 / static_cast<double>(n)) / static_cast<double>(n - 1);
    const double se = std::sqrt(var / static_cast<double>(n));
    CHECK(std::fabs(gap) > 3.0 * se);
    CHECK(gap < 0.0);  // both sides pay the wider borrow rate

    const BSDESolution bb = solve_bsde(buy, run);
    const BSDESolution bsell = solve_bsde(sell, run);
    CHECK(bb.report.price.value + bsell.report.price.value < 0.0);
}

TEST_CASE("raising the borrow rate never helps a pure liability") {
    FlatSpec s;
    s.lam_i = s.lam_c = 0.0;
    s.amount = -1.0;  // short the call: X <= 0, trader borrows to fund the hedge debt
    s.f_l = 0.03;
    s.f_b = 0.04;
    const RunConfig run = nl_run(30000, 32, 29);
    const PricingProblem p1 = make_problem(s);
    s.f_b = 0.06;
    const PricingProblem p2 = make_problem(s);

    const ValuationReport r1 = picard_price(p1, run);
    const ValuationReport r2 = picard_price(p2, run);
    CHECK(r2.price.value <= r1.price.value);

    const BSDESolution b1 = solve_bsde(p1, run);
    const BSDESolution b2 = solve_bsde(p2, run);
    CHECK(b2.report.price.value <= b1.report.price.value);
}

TEST_CASE("converged picard policy is a certified fixed point") {
    FlatSpec s;
    s.f_l = 0.03;
    s.f_b = 0.05;
    s.alpha = 0.8;
    const PricingProblem prob = make_problem(s);
    const RunConfig run = nl_run(20000, 16, 31);
    const std::size_t workers = 1;

    const DeflatorChoice choice = DeflatorChoice::risk_free(prob.rates, 1);
    const PathEnsemble ens = simulate_problem(prob, choice, run);
    LegFrame frame(prob, ens, choice, workers);
    auto regs = build_regressions(frame, run.basis_degree, workers);
    PolicyArrays policy = seed_policy(frame, regs, true, workers);
    const double tol = run.picard_tol * prob.scale(run);
    const PicardOutcome pic = run_picard(frame, regs, policy, tol, run.picard_max_iter, workers);
    REQUIRE(pic.converged);

    const double extra = picard_sweep(frame, regs, policy, workers);
    CHECK(extra <= tol);
}

TEST_CASE("solve_bsde marginalized defaults track the pathwise route") {
    FlatSpec s;  // defaults on, degenerate pairs: linear picard is the reference
    s.alpha = 0.5;
    const PricingProblem prob = make_problem(s);
    const RunConfig run = nl_run(40000, 32, 37);

    const ValuationReport lin = price_risk_neutral(prob, run);
    const BSDESolution bs = solve_bsde(prob, run);
    CHECK(std::fabs(lin.price.value - bs.report.price.value) <=
          3.0 * std::sqrt(lin.price.se * lin.price.se +
                          bs.report.price.se * bs.report.price.se) +
              0.05 * s.s0 / static_cast<double>(run.steps));
}

TEST_CASE("solve_bsde guards") {
    FlatSpec s;
    s.lam_i = 3.0;  // intensity times step breaches the stability guard
    CHECK_THROWS_AS((void)solve_bsde(make_problem(s), nl_run(256, 8)), std::invalid_argument);

    FlatSpec ok;
    PricingProblem pe = make_problem(ok);
    pe.external.enabled = true;
    CHECK_THROWS_AS((void)solve_bsde(pe, nl_run(256, 8)), std::invalid_argument);
    CHECK_THROWS_AS((void)picard_price(pe, nl_run(256, 8)), std::invalid_argument);
}
