#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "doctest.h"
#include "xvakit/contracts.hpp"
#include "xvakit/curves.hpp"
#include "xvakit/regression.hpp"
#include "xvakit/rng.hpp"
#include "xvakit/simulation.hpp"

using namespace xvakit;

TEST_CASE("philox known-answer vectors") {
    // published 10-round test vectors for the 4x32 variant
    const std::array<std::uint32_t, 4> zeros = philox4x32({0u, 0u, 0u, 0u}, {0u, 0u});
    CHECK(zeros == std::array<std::uint32_t, 4>{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});

    const std::array<std::uint32_t, 4> ones = philox4x32({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
                                                         {0xffffffffu, 0xffffffffu});
    CHECK(ones == std::array<std::uint32_t, 4>{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});

    const std::array<std::uint32_t, 4> pi = philox4x32({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
                                                       {0xa4093822u, 0x299f31d0u});
    CHECK(pi == std::array<std::uint32_t, 4>{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u});
}

TEST_CASE("philox uniforms live in the open unit interval") {
    const Philox gen(12345);
    double lo = 1.0, hi = 0.0;
    for (std::uint64_t p = 0; p < 2000; ++p) {
        const double u = gen.uniform(p, 7, 3);
        lo = std::min(lo, u);
        hi = std::max(hi, u);
    }
    CHECK(lo > 0.0);
    CHECK(hi < 1.0);
    // same coordinates, same draw
    CHECK(gen.uniform(11, 2, 5) == gen.uniform(11, 2, 5));
    CHECK(gen.uniform(11, 2, 5) != gen.uniform(12, 2, 5));
}

TEST_CASE("rate curve integrates its steps exactly") {
    const RateCurve c({1.0, 2.5}, {0.02, 0.04, 0.01});
    CHECK(c(0.5) == 0.02);
    CHECK(c(1.0) == 0.04);  // right-continuous at the breakpoint
    CHECK(c(3.0) == 0.01);
    CHECK(c.integral(0.0, 3.0) == doctest::Approx(0.02 + 1.5 * 0.04 + 0.5 * 0.01).epsilon(1e-15));
    CHECK(c.integral(0.5, 1.0) == doctest::Approx(0.01).epsilon(1e-15));
    CHECK(c.integral(2.0, 1.0) == -c.integral(1.0, 2.0));
    CHECK(c.discount(0.0, 2.0) == doctest::Approx(std::exp(-(0.02 + 0.04))).epsilon(1e-15));

    // annuity of a flat curve closes in expm1
    const RateCurve f = RateCurve::flat(0.03);
    CHECK(annuity_integral(f, 0.0, 2.0) == doctest::Approx(-std::expm1(-0.06) / 0.03).epsilon(1e-14));
    // curve arithmetic merges breakpoints
    const RateCurve sum = c + f;
    CHECK(sum(0.5) == doctest::Approx(0.05).epsilon(1e-15));
    CHECK(sum(2.6) == doctest::Approx(0.04).epsilon(1e-15));
}

TEST_CASE("time grid refines around mandatory dates") {
    const TimeGrid g = TimeGrid::build(1.0, 4, {0.30});
    CHECK(g.horizon() == 1.0);
    CHECK(g.nodes.front() == 0.0);
    // the mandatory date is a node
    bool found = false;
    for (double t : g.nodes) found = found || t == 0.30;
    CHECK(found);
    // cell_of brackets from the left: nodes[k] < t <= nodes[k+1]
    for (std::size_t k = 0; k < g.cells(); ++k) {
        CHECK(g.cell_of(g.nodes[k + 1]) == k);
        CHECK(g.cell_of(0.5 * (g.nodes[k] + g.nodes[k + 1])) == k);
    }
    CHECK_THROWS_AS(static_cast<void>(g.cell_of(0.0)), std::out_of_range);
    CHECK_THROWS_AS(static_cast<void>(g.cell_of(1.5)), std::out_of_range);
}

TEST_CASE("node regression recovers polynomials it can represent") {
    // y is an exact degree-2 polynomial of log-spot, so the degree-3 fit
    // reproduces it up to factorization roundoff
    const std::size_t n = 4000;
    std::vector<double> s(n);
    const Philox gen(777);
    for (std::size_t q = 0; q < n; ++q) s[q] = 100.0 * std::exp(0.3 * gen.normal(q, 0, 0));
    std::vector<double> y(n);
    for (std::size_t q = 0; q < n; ++q) {
        const double x = std::log(s[q]);
        y[q] = 2.0 + 0.5 * x - 0.25 * x * x;
    }
    const double* row = s.data();
    const NodeRegression reg(&row, 1, n, nullptr, 3, 1);
    CHECK(reg.basis_size() == 4);
    std::vector<double> fit(n);
    reg.fit(y.data(), fit.data(), nullptr);
    double worst = 0.0;
    for (std::size_t q = 0; q < n; ++q) worst = std::max(worst, std::fabs(fit[q] - y[q]));
    CHECK(worst < 1e-8);
}

TEST_CASE("closeout settlements are exact rational arithmetic") {
    const CloseoutOutcome a = closeout_payoff(8.0, 2.0, Defaulter::Counterparty, 0.4, 0.6);
    CHECK(a.upsilon == 6.0);
    CHECK(a.theta == 8.0 - 0.6 * 6.0);
    CHECK(a.recovery == a.theta - 2.0);

    const CloseoutOutcome b = closeout_payoff(-5.0, -1.0, Defaulter::Trader, 0.4, 0.6);
    CHECK(b.upsilon == -4.0);
    CHECK(b.theta == -5.0 + 0.4 * 4.0);

    CHECK_THROWS_AS(closeout_payoff(1.0, 0.0, Defaulter::Trader, 1.5, 0.0), std::invalid_argument);
}
