#include "xvakit/scenario.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "xvakit/funding_ext.hpp"
#include "xvakit/pricer_linear.hpp"
#include "xvakit/pricer_nonlinear.hpp"

namespace xvakit {
namespace {

using json = nlohmann::ordered_json;

[[noreturn]] void fail(const std::string& path, const std::string& msg) { throw ScenarioError(path, msg); }

std::string idx(const std::string& path, std::size_t i) { return path + "[" + std::to_string(i) + "]"; }

const json& member(const json& obj, const std::string& path, const char* key) {
    if (!obj.is_object()) fail(path, "expected an object");
    auto it = obj.find(key);
    if (it == obj.end()) fail(path + "." + key, "missing required field");
    return *it;
}

const json* opt_member(const json& obj, const std::string& path, const char* key) {
    if (!obj.is_object()) fail(path, "expected an object");
    auto it = obj.find(key);
    return it == obj.end() ? nullptr : &*it;
}

void reject_unknown(const json& obj, const std::string& path, std::initializer_list<const char*> keys) {
    for (const auto& [key, value] : obj.items()) {
        (void)value;
        bool known = false;
        for (const char* k : keys) known = known || key == k;
        if (!known) fail(path + "." + key, "unknown field");
    }
}

double num_at(const json& v, const std::string& path) {
    if (!v.is_number()) fail(path, "expected a number");
    return v.get<double>();
}

std::uint64_t uint_at(const json& v, const std::string& path) {
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
        fail(path, "expected a nonnegative integer");
    return v.get<std::uint64_t>();
}

std::string str_at(const json& v, const std::string& path) {
    if (!v.is_string()) fail(path, "expected a string");
    return v.get<std::string>();
}

/// (time, value) step array: value i applies from time i; first time must be 0.
RateCurve curve_at(const json& v, const std::string& path) {
    if (!v.is_array() || v.empty()) fail(path, "expected a nonempty array of [time, value] pairs");
    std::vector<double> bp, vals;
    double prev = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const json& pair = v[i];
        if (!pair.is_array() || pair.size() != 2 || !pair[0].is_number() || !pair[1].is_number())
            fail(idx(path, i), "expected a [time, value] pair");
        const double t = pair[0].get<double>();
        const double val = pair[1].get<double>();
        if (i == 0) {
            if (t != 0.0) fail(idx(path, i), "first segment must start at time 0");
        } else {
            if (!(t > prev)) fail(idx(path, i), "segment times must be strictly increasing");
            bp.push_back(t);
        }
        vals.push_back(val);
        prev = t;
    }
    return RateCurve(std::move(bp), std::move(vals));
}

/// {"lend": curve, "borrow": curve}, or a bare curve for a symmetric pair.
RatePair pair_at(const json& v, const std::string& path) {
    if (v.is_array()) return RatePair::symmetric(curve_at(v, path));
    if (!v.is_object()) fail(path, "expected {lend, borrow} or a symmetric [time, value] array");
    reject_unknown(v, path, {"lend", "borrow"});
    return {curve_at(member(v, path, "lend"), path + ".lend"),
            curve_at(member(v, path, "borrow"), path + ".borrow")};
}

PayoffKind kind_at(const json& v, const std::string& path) {
    const std::string s = str_at(v, path);
    if (s == "cash") return PayoffKind::Cash;
    if (s == "forward") return PayoffKind::Forward;
    if (s == "call") return PayoffKind::Call;
    if (s == "put") return PayoffKind::Put;
    if (s == "cash_or_nothing") return PayoffKind::CashOrNothing;
    fail(path, "unknown payoff kind '" + s + "'");
}

Payment payment_at(const json& v, const std::string& path, std::size_t n_assets) {
    if (!v.is_object()) fail(path, "expected a payment object");
    reject_unknown(v, path, {"time", "kind", "amount", "strike", "asset"});
    Payment p;
    p.time = num_at(member(v, path, "time"), path + ".time");
    p.kind = kind_at(member(v, path, "kind"), path + ".kind");
    p.amount = num_at(member(v, path, "amount"), path + ".amount");
    if (const json* s = opt_member(v, path, "strike")) p.strike = num_at(*s, path + ".strike");
    if (const json* a = opt_member(v, path, "asset")) {
        p.asset = static_cast<std::size_t>(uint_at(*a, path + ".asset"));
        if (p.asset >= n_assets) fail(path + ".asset", "references an undefined asset");
    }
    return p;
}

void parse_market(const json& m, const std::string& path, PricingProblem& prob) {
    reject_unknown(m, path,
                   {"risk_free", "funding", "repo", "collateral_rate", "assets", "correlation", "defaults"});
    prob.rates.r = curve_at(member(m, path, "risk_free"), path + ".risk_free");
    prob.rates.f = pair_at(member(m, path, "funding"), path + ".funding");
    prob.rates.c = pair_at(member(m, path, "collateral_rate"), path + ".collateral_rate");

    const json& assets = member(m, path, "assets");
    if (!assets.is_array() || assets.empty()) fail(path + ".assets", "expected a nonempty array");
    std::vector<double> spots, vols;
    for (std::size_t i = 0; i < assets.size(); ++i) {
        const std::string apath = idx(path + ".assets", i);
        if (!assets[i].is_object()) fail(apath, "expected an asset object");
        reject_unknown(assets[i], apath, {"spot", "vol"});
        spots.push_back(num_at(member(assets[i], apath, "spot"), apath + ".spot"));
        vols.push_back(num_at(member(assets[i], apath, "vol"), apath + ".vol"));
    }
    std::vector<double> corr;
    if (const json* c = opt_member(m, path, "correlation")) {
        if (!c->is_array() || c->size() != spots.size()) fail(path + ".correlation", "expected one row per asset");
        for (std::size_t i = 0; i < c->size(); ++i) {
            const json& row = (*c)[i];
            if (!row.is_array() || row.size() != spots.size())
                fail(idx(path + ".correlation", i), "expected one entry per asset");
            for (std::size_t j = 0; j < row.size(); ++j)
                corr.push_back(num_at(row[j], idx(idx(path + ".correlation", i), j)));
        }
    }
    try {
        prob.assets = AssetModel(std::move(spots), std::move(vols), std::move(corr));
    } catch (const std::invalid_argument& e) {
        fail(path + ".assets", e.what());
    }

    const json& repo = member(m, path, "repo");
    if (!repo.is_array() || repo.size() != prob.assets.size())
        fail(path + ".repo", "expected one lend/borrow pair per asset");
    prob.rates.h.clear();
    for (std::size_t i = 0; i < repo.size(); ++i) prob.rates.h.push_back(pair_at(repo[i], idx(path + ".repo", i)));

    const json& d = member(m, path, "defaults");
    reject_unknown(d, path + ".defaults", {"trader", "counterparty", "external"});
    auto party = [&](const json& v, const std::string& ppath, RateCurve& lam, double& loss) {
        if (!v.is_object()) fail(ppath, "expected {intensity, loss}");
        reject_unknown(v, ppath, {"intensity", "loss"});
        lam = curve_at(member(v, ppath, "intensity"), ppath + ".intensity");
        loss = num_at(member(v, ppath, "loss"), ppath + ".loss");
        if (loss < 0.0 || loss > 1.0) fail(ppath + ".loss", "loss fraction outside [0,1]");
    };
    party(member(d, path + ".defaults", "trader"), path + ".defaults.trader", prob.credit.lambda_trader,
          prob.credit.loss_trader);
    party(member(d, path + ".defaults", "counterparty"), path + ".defaults.counterparty",
          prob.credit.lambda_cpty, prob.credit.loss_cpty);
    if (const json* e = opt_member(d, path + ".defaults", "external"))
        party(*e, path + ".defaults.external", prob.credit.lambda_external, prob.credit.loss_external);
}

void parse_contract(const json& c, const std::string& path, PricingProblem& prob) {
    reject_unknown(c, path, {"payments", "terminal", "closeout"});
    prob.contract.payments.clear();
    if (const json* ps = opt_member(c, path, "payments")) {
        if (!ps->is_array()) fail(path + ".payments", "expected an array");
        for (std::size_t i = 0; i < ps->size(); ++i)
            prob.contract.payments.push_back(payment_at((*ps)[i], idx(path + ".payments", i), prob.assets.size()));
    }
    if (const json* t = opt_member(c, path, "terminal"))
        prob.contract.terminal = payment_at(*t, path + ".terminal", prob.assets.size());
    else
        prob.contract.terminal.reset();
    if (const json* s = opt_member(c, path, "closeout")) {
        const std::string v = str_at(*s, path + ".closeout");
        if (v == "csa")
            prob.closeout.settlement = CloseoutSettlement::Csa;
        else if (v == "none")
            prob.closeout.settlement = CloseoutSettlement::None;
        else
            fail(path + ".closeout", "expected 'csa' or 'none'");
    }
    try {
        prob.contract.validate(prob.assets.size());
    } catch (const std::invalid_argument& e) {
        fail(path, e.what());
    }
}

void parse_collateral(const json* c, const std::string& path, Scenario& sc) {
    if (!c) {
        sc.problem.collateral = CollateralSpec::none();
        sc.warnings.push_back("collateral block missing: assuming uncollateralized (alpha = 0)");
        return;
    }
    const std::string type = str_at(member(*c, path, "type"), path + ".type");
    if (type == "fraction") {
        reject_unknown(*c, path, {"type", "alpha"});
        const double a = num_at(member(*c, path, "alpha"), path + ".alpha");
        sc.problem.collateral = CollateralSpec::fraction(a);
    } else if (type == "schedule") {
        reject_unknown(*c, path, {"type", "amounts"});
        sc.problem.collateral.kind = CollateralSpec::Kind::Schedule;
        sc.problem.collateral.schedule = curve_at(member(*c, path, "amounts"), path + ".amounts");
    } else {
        fail(path + ".type", "expected 'fraction' or 'schedule'");
    }
}

void parse_external(const json* e, const std::string& path, PricingProblem& prob) {
    if (!e) return;
    reject_unknown(*e, path, {"convention", "bank_borrowing"});
    prob.external.enabled = true;
    const std::string conv = str_at(member(*e, path, "convention"), path + ".convention");
    if (conv == "independent")
        prob.external.convention = ExternalConvention::Independent;
    else if (conv == "net_borrower")
        prob.external.convention = ExternalConvention::NetBorrower;
    else
        fail(path + ".convention", "expected 'independent' or 'net_borrower'");
    if (const json* b = opt_member(*e, path, "bank_borrowing"))
        prob.external.bank_borrowing = curve_at(*b, path + ".bank_borrowing");
}

void parse_spread(const json* s, const std::string& path, PricingProblem& prob) {
    if (!s) return;
    reject_unknown(*s, path, {"fair_spread", "spread"});
    const std::string mode = str_at(member(*s, path, "fair_spread"), path + ".fair_spread");
    if (mode == "auto") {
        prob.fair_spread_auto = true;
    } else if (mode == "explicit") {
        prob.fair_spread_auto = false;
        prob.funding_spread = curve_at(member(*s, path, "spread"), path + ".spread");
    } else {
        fail(path + ".fair_spread", "expected 'auto' or 'explicit'");
    }
}

void parse_run(const json& r, const std::string& path, Scenario& sc) {
    reject_unknown(r, path,
                   {"mode", "solver", "paths", "steps", "seed", "workers", "basis_degree", "measure",
                    "custom_eta", "picard_tol", "picard_max_iter"});
    sc.mode = str_at(member(r, path, "mode"), path + ".mode");
    if (sc.mode != "linear" && sc.mode != "nonlinear" && sc.mode != "incomplete" && sc.mode != "verify")
        fail(path + ".mode", "expected one of linear, nonlinear, incomplete, verify");
    if (const json* v = opt_member(r, path, "solver")) {
        sc.nonlinear_solver = str_at(*v, path + ".solver");
        if (sc.nonlinear_solver != "picard" && sc.nonlinear_solver != "bsde")
            fail(path + ".solver", "expected 'picard' or 'bsde'");
    }
    if (const json* v = opt_member(r, path, "paths")) sc.run.paths = uint_at(*v, path + ".paths");
    if (const json* v = opt_member(r, path, "steps")) sc.run.steps = uint_at(*v, path + ".steps");
    if (const json* v = opt_member(r, path, "seed")) sc.run.seed = uint_at(*v, path + ".seed");
    if (const json* v = opt_member(r, path, "workers")) sc.run.workers = uint_at(*v, path + ".workers");
    if (const json* v = opt_member(r, path, "basis_degree")) sc.run.basis_degree = uint_at(*v, path + ".basis_degree");
    if (sc.run.paths == 0) fail(path + ".paths", "must be positive");
    if (sc.run.steps == 0) fail(path + ".steps", "must be positive");
    if (const json* v = opt_member(r, path, "measure")) {
        const std::string m = str_at(*v, path + ".measure");
        if (m == "risk_free")
            sc.run.measure = MeasurePreset::RiskFree;
        else if (m == "funding")
            sc.run.measure = MeasurePreset::Funding;
        else if (m == "custom")
            sc.run.measure = MeasurePreset::Custom;
        else
            fail(path + ".measure", "expected one of risk_free, funding, custom");
    }
    if (sc.run.measure == MeasurePreset::Custom) {
        const json* eta = opt_member(r, path, "custom_eta");
        if (!eta) fail(path + ".custom_eta", "required when measure is 'custom'");
        sc.run.custom_eta = curve_at(*eta, path + ".custom_eta");
    }
    if (const json* v = opt_member(r, path, "picard_tol")) {
        sc.run.picard_tol = num_at(*v, path + ".picard_tol");
        if (!(sc.run.picard_tol > 0.0)) fail(path + ".picard_tol", "must be positive");
    }
    if (const json* v = opt_member(r, path, "picard_max_iter"))
        sc.run.picard_max_iter = uint_at(*v, path + ".picard_max_iter");
}

json curve_json(const RateCurve& c) {
    json out = json::array();
    const auto& bp = c.breakpoints();
    const auto& vals = c.values();
    out.push_back({0.0, vals[0]});
    for (std::size_t i = 0; i < bp.size(); ++i) out.push_back({bp[i], vals[i + 1]});
    return out;
}

json pair_json(const RatePair& p) { return {{"lend", curve_json(p.lend)}, {"borrow", curve_json(p.borrow)}}; }

json payment_json(const Payment& p) {
    json out{{"time", p.time}, {"kind", payoff_name(p.kind)}, {"amount", p.amount}};
    if (p.kind != PayoffKind::Cash) {
        out["strike"] = p.strike;
        out["asset"] = p.asset;
    }
    return out;
}

json term_json(const TermEstimate& t) { return {{"value", t.value}, {"se", t.se}}; }

TermEstimate term_at(const json& v, const std::string& path) {
    if (!v.is_object()) fail(path, "expected {value, se}");
    reject_unknown(v, path, {"value", "se"});
    return {num_at(member(v, path, "value"), path + ".value"), num_at(member(v, path, "se"), path + ".se")};
}

void csv_row(std::string& out, const std::string& term, double value, double se) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%s,%.17g,%.17g\n", term.c_str(), value, se);
    out += buf;
}

std::pair<std::size_t, std::size_t> line_of(const std::string& text, std::size_t byte) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < text.size() && i + 1 < byte; ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return {line, col};
}

}  // namespace

Scenario parse_scenario(const std::string& json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        const auto [line, col] = line_of(json_text, e.byte);
        fail("", "malformed JSON at line " + std::to_string(line) + ", column " + std::to_string(col));
    }
    if (!doc.is_object()) fail("", "expected a scenario object");
    reject_unknown(doc, "$",
                   {"schema_version", "market", "contract", "collateral", "external_funding",
                    "funding_spread", "run"});
    const json& ver = member(doc, "$", "schema_version");
    if (!ver.is_number_integer() || ver.get<std::int64_t>() != 1)
        fail("$.schema_version", "this build reads schema version 1");

    Scenario sc;
    parse_market(member(doc, "$", "market"), "$.market", sc.problem);
    parse_contract(member(doc, "$", "contract"), "$.contract", sc.problem);
    parse_collateral(opt_member(doc, "$", "collateral"), "$.collateral", sc);
    parse_external(opt_member(doc, "$", "external_funding"), "$.external_funding", sc.problem);
    parse_spread(opt_member(doc, "$", "funding_spread"), "$.funding_spread", sc.problem);
    parse_run(member(doc, "$", "run"), "$.run", sc);

    try {
        sc.problem.validate();
        sc.problem.credit.validate(sc.problem.horizon());
    } catch (const std::invalid_argument& e) {
        fail("$", e.what());
    }
    return sc;
}

Scenario load_scenario(const std::string& file_path) {
    std::ifstream in(file_path, std::ios::binary);
    if (!in) fail("", "cannot read scenario file '" + file_path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_scenario(buf.str());
}

ValuationReport run_scenario(const Scenario& sc) {
    ValuationReport rep;
    if (sc.mode == "linear") {
        rep = price_linear(sc.problem, sc.run);
    } else if (sc.mode == "nonlinear") {
        rep = sc.nonlinear_solver == "bsde" ? solve_bsde(sc.problem, sc.run).report
                                            : picard_price(sc.problem, sc.run);
    } else if (sc.mode == "incomplete") {
        rep = sc.problem.external.enabled ? price_with_external(sc.problem, sc.run)
                                          : price_incomplete(sc.problem, sc.run);
    } else {
        throw std::invalid_argument("run_scenario: mode '" + sc.mode + "' is not a pricing mode");
    }
    rep.warnings.insert(rep.warnings.begin(), sc.warnings.begin(), sc.warnings.end());
    return rep;
}

std::string scenario_to_json(const Scenario& sc) {
    const PricingProblem& p = sc.problem;
    json market{{"risk_free", curve_json(p.rates.r)},
                {"funding", pair_json(p.rates.f)},
                {"repo", json::array()},
                {"collateral_rate", pair_json(p.rates.c)},
                {"assets", json::array()},
                {"defaults",
                 {{"trader", {{"intensity", curve_json(p.credit.lambda_trader)}, {"loss", p.credit.loss_trader}}},
                  {"counterparty",
                   {{"intensity", curve_json(p.credit.lambda_cpty)}, {"loss", p.credit.loss_cpty}}},
                  {"external",
                   {{"intensity", curve_json(p.credit.lambda_external)}, {"loss", p.credit.loss_external}}}}}};
    for (const auto& h : p.rates.h) market["repo"].push_back(pair_json(h));
    for (std::size_t i = 0; i < p.assets.size(); ++i)
        market["assets"].push_back({{"spot", p.assets.spot(i)}, {"vol", p.assets.vol(i)}});

    json contract{{"payments", json::array()},
                  {"closeout", p.closeout.settlement == CloseoutSettlement::Csa ? "csa" : "none"}};
    for (const auto& pay : p.contract.payments) contract["payments"].push_back(payment_json(pay));
    if (p.contract.terminal) contract["terminal"] = payment_json(*p.contract.terminal);

    json collateral = p.collateral.kind == CollateralSpec::Kind::Fraction
                          ? json{{"type", "fraction"}, {"alpha", p.collateral.alpha}}
                          : json{{"type", "schedule"}, {"amounts", curve_json(p.collateral.schedule)}};

    json run{{"mode", sc.mode},
             {"solver", sc.nonlinear_solver},
             {"paths", sc.run.paths},
             {"steps", sc.run.steps},
             {"seed", sc.run.seed},
             {"workers", sc.run.workers},
             {"basis_degree", sc.run.basis_degree},
             {"measure", measure_name(sc.run.measure)},
             {"picard_tol", sc.run.picard_tol},
             {"picard_max_iter", sc.run.picard_max_iter}};
    if (sc.run.measure == MeasurePreset::Custom) run["custom_eta"] = curve_json(sc.run.custom_eta);

    json doc{{"schema_version", 1},
             {"market", market},
             {"contract", contract},
             {"collateral", collateral},
             {"run", run}};
    if (p.external.enabled)
        doc["external_funding"] = {
            {"convention", p.external.convention == ExternalConvention::Independent ? "independent" : "net_borrower"},
            {"bank_borrowing", curve_json(p.external.bank_borrowing)}};
    if (!p.fair_spread_auto)
        doc["funding_spread"] = {{"fair_spread", "explicit"}, {"spread", curve_json(p.funding_spread)}};
    return doc.dump(2) + "\n";
}

std::string report_to_json(const ValuationReport& rep) {
    json adjustments{{"cva", term_json(rep.cva)},
                     {"dva", term_json(rep.dva)},
                     {"lva", term_json(rep.lva)},
                     {"fva_f", term_json(rep.fva_f)},
                     {"fba_f", term_json(rep.fba_f)},
                     {"fca_f", term_json(rep.fca_f)},
                     {"fva_h", json::array()},
                     {"fba_h", json::array()},
                     {"fca_h", json::array()},
                     {"dva_f", term_json(rep.dva_f)},
                     {"cva_f", term_json(rep.cva_f)},
                     {"dva_f_minus", term_json(rep.dva_f_minus)},
                     {"dva_f_plus", term_json(rep.dva_f_plus)},
                     {"psi", term_json(rep.psi)}};
    for (const auto& t : rep.fva_h) adjustments["fva_h"].push_back(term_json(t));
    for (const auto& t : rep.fba_h) adjustments["fba_h"].push_back(term_json(t));
    for (const auto& t : rep.fca_h) adjustments["fca_h"].push_back(term_json(t));

    json log = json::array();
    for (const auto& [it, res] : rep.convergence_log) log.push_back({it, res});

    json doc{{"schema_version", 1},
             {"mode", rep.mode},
             {"measure", rep.measure},
             {"price", term_json(rep.price)},
             {"clean", term_json(rep.clean)},
             {"clean_analytic", rep.clean_analytic},
             {"adjustments", adjustments},
             {"net_benefit",
              {{"j0", term_json(rep.j0)},
               {"j0_marginalized", rep.j0_marginalized},
               {"j0_integrand_max", rep.j0_integrand_max},
               {"wealth_gap", rep.wealth_gap}}},
             {"diagnostics",
              {{"decomposition_residual", rep.decomposition_residual},
               {"converged", rep.converged},
               {"picard_iterations", rep.picard_iterations},
               {"picard_residual", rep.picard_residual},
               {"convergence_log", log},
               {"stated_bias", rep.stated_bias}}},
             {"run",
              {{"paths", rep.paths},
               {"steps", rep.steps},
               {"grid_cells", rep.grid_cells},
               {"seed", rep.seed},
               {"workers", rep.workers},
               {"basis_degree", rep.basis_degree}}},
             {"warnings", rep.warnings}};
    return doc.dump(2) + "\n";
}

ValuationReport report_from_json(const std::string& json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        const auto [line, col] = line_of(json_text, e.byte);
        fail("", "malformed JSON at line " + std::to_string(line) + ", column " + std::to_string(col));
    }
    if (!doc.is_object()) fail("", "expected a report object");
    reject_unknown(doc, "$",
                   {"schema_version", "mode", "measure", "price", "clean", "clean_analytic", "adjustments",
                    "net_benefit", "diagnostics", "run", "warnings"});
    if (!member(doc, "$", "schema_version").is_number_integer() ||
        member(doc, "$", "schema_version").get<std::int64_t>() != 1)
        fail("$.schema_version", "this build reads schema version 1");

    ValuationReport rep;
    rep.mode = str_at(member(doc, "$", "mode"), "$.mode");
    rep.measure = str_at(member(doc, "$", "measure"), "$.measure");
    rep.price = term_at(member(doc, "$", "price"), "$.price");
    rep.clean = term_at(member(doc, "$", "clean"), "$.clean");
    rep.clean_analytic = num_at(member(doc, "$", "clean_analytic"), "$.clean_analytic");

    const json& adj = member(doc, "$", "adjustments");
    const std::string ap = "$.adjustments";
    reject_unknown(adj, ap,
                   {"cva", "dva", "lva", "fva_f", "fba_f", "fca_f", "fva_h", "fba_h", "fca_h", "dva_f",
                    "cva_f", "dva_f_minus", "dva_f_plus", "psi"});
    rep.cva = term_at(member(adj, ap, "cva"), ap + ".cva");
    rep.dva = term_at(member(adj, ap, "dva"), ap + ".dva");
    rep.lva = term_at(member(adj, ap, "lva"), ap + ".lva");
    rep.fva_f = term_at(member(adj, ap, "fva_f"), ap + ".fva_f");
    rep.fba_f = term_at(member(adj, ap, "fba_f"), ap + ".fba_f");
    rep.fca_f = term_at(member(adj, ap, "fca_f"), ap + ".fca_f");
    auto term_list = [&](const char* key, std::vector<TermEstimate>& out) {
        const json& arr = member(adj, ap, key);
        if (!arr.is_array()) fail(ap + "." + key, "expected an array");
        for (std::size_t i = 0; i < arr.size(); ++i) out.push_back(term_at(arr[i], idx(ap + "." + key, i)));
    };
    term_list("fva_h", rep.fva_h);
    term_list("fba_h", rep.fba_h);
    term_list("fca_h", rep.fca_h);
    rep.dva_f = term_at(member(adj, ap, "dva_f"), ap + ".dva_f");
    rep.cva_f = term_at(member(adj, ap, "cva_f"), ap + ".cva_f");
    rep.dva_f_minus = term_at(member(adj, ap, "dva_f_minus"), ap + ".dva_f_minus");
    rep.dva_f_plus = term_at(member(adj, ap, "dva_f_plus"), ap + ".dva_f_plus");
    rep.psi = term_at(member(adj, ap, "psi"), ap + ".psi");

    const json& nb = member(doc, "$", "net_benefit");
    reject_unknown(nb, "$.net_benefit", {"j0", "j0_marginalized", "j0_integrand_max", "wealth_gap"});
    rep.j0 = term_at(member(nb, "$.net_benefit", "j0"), "$.net_benefit.j0");
    rep.j0_marginalized = num_at(member(nb, "$.net_benefit", "j0_marginalized"), "$.net_benefit.j0_marginalized");
    rep.j0_integrand_max =
        num_at(member(nb, "$.net_benefit", "j0_integrand_max"), "$.net_benefit.j0_integrand_max");
    rep.wealth_gap = num_at(member(nb, "$.net_benefit", "wealth_gap"), "$.net_benefit.wealth_gap");

    const json& dg = member(doc, "$", "diagnostics");
    const std::string dp = "$.diagnostics";
    reject_unknown(dg, dp,
                   {"decomposition_residual", "converged", "picard_iterations", "picard_residual",
                    "convergence_log", "stated_bias"});
    rep.decomposition_residual = num_at(member(dg, dp, "decomposition_residual"), dp + ".decomposition_residual");
    const json& conv = member(dg, dp, "converged");
    if (!conv.is_boolean()) fail(dp + ".converged", "expected a boolean");
    rep.converged = conv.get<bool>();
    rep.picard_iterations =
        static_cast<std::size_t>(uint_at(member(dg, dp, "picard_iterations"), dp + ".picard_iterations"));
    rep.picard_residual = num_at(member(dg, dp, "picard_residual"), dp + ".picard_residual");
    const json& log = member(dg, dp, "convergence_log");
    if (!log.is_array()) fail(dp + ".convergence_log", "expected an array");
    for (std::size_t i = 0; i < log.size(); ++i) {
        const std::string lp = idx(dp + ".convergence_log", i);
        if (!log[i].is_array() || log[i].size() != 2) fail(lp, "expected an [iteration, residual] pair");
        rep.convergence_log.emplace_back(static_cast<std::size_t>(uint_at(log[i][0], lp + "[0]")),
                                         num_at(log[i][1], lp + "[1]"));
    }
    rep.stated_bias = num_at(member(dg, dp, "stated_bias"), dp + ".stated_bias");

    const json& run = member(doc, "$", "run");
    const std::string rp = "$.run";
    reject_unknown(run, rp, {"paths", "steps", "grid_cells", "seed", "workers", "basis_degree"});
    rep.paths = static_cast<std::size_t>(uint_at(member(run, rp, "paths"), rp + ".paths"));
    rep.steps = static_cast<std::size_t>(uint_at(member(run, rp, "steps"), rp + ".steps"));
    rep.grid_cells = static_cast<std::size_t>(uint_at(member(run, rp, "grid_cells"), rp + ".grid_cells"));
    rep.seed = uint_at(member(run, rp, "seed"), rp + ".seed");
    rep.workers = static_cast<std::size_t>(uint_at(member(run, rp, "workers"), rp + ".workers"));
    rep.basis_degree = static_cast<std::size_t>(uint_at(member(run, rp, "basis_degree"), rp + ".basis_degree"));

    const json& warn = member(doc, "$", "warnings");
    if (!warn.is_array()) fail("$.warnings", "expected an array");
    for (std::size_t i = 0; i < warn.size(); ++i)
        rep.warnings.push_back(str_at(warn[i], idx("$.warnings", i)));
    return rep;
}

std::string report_to_csv(const ValuationReport& rep) {
    std::string out = "term,value,se\n";
    csv_row(out, "price", rep.price.value, rep.price.se);
    csv_row(out, "clean", rep.clean.value, rep.clean.se);
    csv_row(out, "clean_analytic", rep.clean_analytic, 0.0);
    csv_row(out, "cva", rep.cva.value, rep.cva.se);
    csv_row(out, "dva", rep.dva.value, rep.dva.se);
    csv_row(out, "lva", rep.lva.value, rep.lva.se);
    csv_row(out, "fva_f", rep.fva_f.value, rep.fva_f.se);
    csv_row(out, "fba_f", rep.fba_f.value, rep.fba_f.se);
    csv_row(out, "fca_f", rep.fca_f.value, rep.fca_f.se);
    for (std::size_t i = 0; i < rep.fva_h.size(); ++i) {
        csv_row(out, "fva_h_" + std::to_string(i), rep.fva_h[i].value, rep.fva_h[i].se);
        csv_row(out, "fba_h_" + std::to_string(i), rep.fba_h[i].value, rep.fba_h[i].se);
        csv_row(out, "fca_h_" + std::to_string(i), rep.fca_h[i].value, rep.fca_h[i].se);
    }
    csv_row(out, "dva_f", rep.dva_f.value, rep.dva_f.se);
    csv_row(out, "cva_f", rep.cva_f.value, rep.cva_f.se);
    csv_row(out, "dva_f_minus", rep.dva_f_minus.value, rep.dva_f_minus.se);
    csv_row(out, "dva_f_plus", rep.dva_f_plus.value, rep.dva_f_plus.se);
    csv_row(out, "psi", rep.psi.value, rep.psi.se);
    csv_row(out, "j0", rep.j0.value, rep.j0.se);
    csv_row(out, "j0_marginalized", rep.j0_marginalized, 0.0);
    csv_row(out, "wealth_gap", rep.wealth_gap, 0.0);
    csv_row(out, "decomposition_residual", rep.decomposition_residual, 0.0);
    return out;
}

}  // namespace xvakit
