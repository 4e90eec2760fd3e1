#include <string>

#include "doctest.h"
#include "xvakit/pricer_linear.hpp"
#include "xvakit/scenario.hpp"

using namespace xvakit;

namespace {

const char* kScenario = R"({
  "schema_version": 1,
  "market": {
    "risk_free": [[0.0, 0.02]],
    "funding": {"lend": [[0.0, 0.03]], "borrow": [[0.0, 0.03]]},
    "repo": [[[0.0, 0.025]]],
    "collateral_rate": [[0.0, 0.015]],
    "assets": [{"spot": 100.0, "vol": 0.2}],
    "defaults": {
      "trader": {"intensity": [[0.0, 0.01]], "loss": 0.6},
      "counterparty": {"intensity": [[0.0, 0.02]], "loss": 0.6}
    }
  },
  "contract": {
    "terminal": {"time": 1.0, "kind": "call", "amount": 1.0, "strike": 100.0, "asset": 0}
  },
  "collateral": {"type": "fraction", "alpha": 0.8},
  "run": {"mode": "linear", "paths": 4000, "steps": 16, "seed": 7}
})";

std::string scenario_path(const std::string& text) {
    try {
        parse_scenario(text);
    } catch (const ScenarioError& e) {
        return e.path;
    }
    return "<no error>";
}

}  // namespace

TEST_CASE("scenario parsing") {
    SUBCASE("well-formed document round-trips") {
        const Scenario sc = parse_scenario(kScenario);
        CHECK(sc.mode == "linear");
        CHECK(sc.run.paths == 4000);
        CHECK(sc.run.seed == 7);
        CHECK(sc.problem.assets.size() == 1);
        CHECK(sc.problem.rates.f.borrow(0.5) == 0.03);
        CHECK(sc.problem.rates.h[0].lend(0.5) == 0.025);
        CHECK(sc.problem.collateral.alpha == 0.8);
        CHECK(sc.problem.credit.lambda_cpty(0.0) == 0.02);
        CHECK(sc.problem.contract.terminal.has_value());
        CHECK(sc.warnings.empty());

        // canonical form is a fixed point of parse + serialize
        const std::string s1 = scenario_to_json(sc);
        const Scenario sc2 = parse_scenario(s1);
        CHECK(scenario_to_json(sc2) == s1);
    }

    SUBCASE("missing collateral defaults to uncollateralized with a warning") {
        std::string text = kScenario;
        const std::string needle = "\"collateral\": {\"type\": \"fraction\", \"alpha\": 0.8},";
        text.replace(text.find(needle), needle.size(), "");
        const Scenario sc = parse_scenario(text);
        CHECK(sc.problem.collateral.alpha == 0.0);
        REQUIRE(sc.warnings.size() == 1);
        CHECK(sc.warnings[0].find("uncollateralized") != std::string::npos);
    }

    SUBCASE("schema violations carry the JSON path") {
        auto drop = [&](const std::string& needle, const std::string& repl) {
            std::string t = kScenario;
            t.replace(t.find(needle), needle.size(), repl);
            return t;
        };
        CHECK(scenario_path(drop("\"funding\": {\"lend\": [[0.0, 0.03]], \"borrow\": [[0.0, 0.03]]},", "")) ==
              "$.market.funding");
        CHECK(scenario_path(drop("\"loss\": 0.6}\n    }", "\"loss\": 1.5}\n    }")) ==
              "$.market.defaults.counterparty.loss");
        CHECK(scenario_path(drop("\"asset\": 0", "\"asset\": 2")) == "$.contract.terminal.asset");
        CHECK(scenario_path(drop("\"schema_version\": 1", "\"schema_version\": 1, \"extra\": 1")) == "$.extra");
        CHECK(scenario_path(drop("\"mode\": \"linear\"", "\"mode\": \"marvelous\"")) == "$.run.mode");
        CHECK(scenario_path(drop("\"paths\": 4000", "\"paths\": 0")) == "$.run.paths");
    }

    SUBCASE("malformed JSON reports line and column") {
        try {
            parse_scenario("{\n  \"schema_version\": 1,\n  \"market\": }\n}");
            CHECK(false);
        } catch (const ScenarioError& e) {
            CHECK(e.path.empty());
            CHECK(std::string(e.what()).find("malformed JSON at line 3") != std::string::npos);
        }
    }
}

TEST_CASE("report serialization") {
    const Scenario sc = parse_scenario(kScenario);
    const ValuationReport rep = price_linear(sc.problem, sc.run);

    SUBCASE("JSON re-parses to the same bytes") {
        const std::string j1 = report_to_json(rep);
        const ValuationReport back = report_from_json(j1);
        CHECK(report_to_json(back) == j1);
        CHECK(back.price.value == rep.price.value);
        CHECK(back.seed == rep.seed);
        CHECK(back.converged == rep.converged);
    }

    SUBCASE("same scenario and seed give byte-identical reports") {
        const ValuationReport again = price_linear(sc.problem, sc.run);
        CHECK(report_to_json(again) == report_to_json(rep));
    }

    SUBCASE("CSV carries one row per term") {
        const std::string csv = report_to_csv(rep);
        CHECK(csv.rfind("term,value,se\nprice,", 0) == 0);
        CHECK(csv.find("decomposition_residual,") != std::string::npos);
        // every line has exactly two separators
        std::size_t start = 0;
        while (start < csv.size()) {
            const std::size_t end = csv.find('\n', start);
            const std::string line = csv.substr(start, end - start);
            std::size_t commas = 0;
            for (char ch : line) commas += ch == ',';
            CHECK(commas == 2);
            start = end + 1;
        }
    }

    SUBCASE("strict reader rejects unknown fields") {
        std::string j = report_to_json(rep);
        j.replace(j.find("\"mode\""), 6, "\"rodent\"");
        CHECK_THROWS_AS(report_from_json(j), ScenarioError);
    }
}
