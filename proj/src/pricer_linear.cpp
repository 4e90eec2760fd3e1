#include "xvakit/pricer_linear.hpp"

#include <stdexcept>
#include <string>
#include <utility>

#include "xvakit/parallel.hpp"

namespace xvakit {
namespace {

/// The linear route needs iterate-independent effective rates: treasury and
/// repo selections depend on the solution, so their pairs must collapse. The
/// collateral pair may stay split (its branch follows the exogenous C sign).
void require_linear_funding(const PricingProblem& prob, const char* where) {
    if (!prob.rates.f.degenerate())
        throw std::invalid_argument(std::string(where) + ": treasury pair must be degenerate");
    for (const auto& p : prob.rates.h)
        if (!p.degenerate())
            throw std::invalid_argument(std::string(where) + ": repo pairs must be degenerate");
}

/// Hedge terms carry the weight (h_bar - gamma); skip them when every repo
/// curve coincides with its carry so the weight vanishes identically.
bool needs_hedge(const PricingProblem& prob, const DeflatorChoice& choice) {
    for (std::size_t i = 0; i < prob.rates.h.size(); ++i)
        if (!(prob.rates.h[i].lend == choice.gamma[i] && prob.rates.h[i].borrow == choice.gamma[i]))
            return true;
    return false;
}

ValuationReport price_at(const PricingProblem& prob, const RunConfig& run, DeflatorChoice choice,
                         const char* mode) {
    prob.validate();
    const std::size_t workers = worker_count(run.workers);
    const PathEnsemble ens = simulate_problem(prob, choice, run);
    const bool hedge = needs_hedge(prob, choice);
    LegFrame frame(prob, ens, choice, workers);
    auto regs = build_regressions(frame, run.basis_degree, workers);
    PolicyArrays policy = seed_policy(frame, regs, hedge, workers);
    PicardOutcome pic = run_picard(frame, regs, policy, run.picard_tol * prob.scale(run),
                                   run.picard_max_iter, workers);
    ValuationReport rep = accumulate_report(frame, run, policy);
    rep.mode = mode;
    rep.converged = pic.converged;
    rep.picard_iterations = pic.iterations;
    rep.picard_residual = pic.residual;
    rep.convergence_log = std::move(pic.log);
    if (!pic.converged)
        rep.warnings.push_back("picard: residual " + std::to_string(pic.residual) +
                               " above tolerance after " + std::to_string(pic.iterations) +
                               " sweeps");
    return rep;
}

}  // namespace

TimeGrid problem_grid(const PricingProblem& prob, const RunConfig& run) {
    return TimeGrid::build(prob.horizon(), run.steps, prob.contract.payment_times());
}

PathEnsemble simulate_problem(const PricingProblem& prob, const DeflatorChoice& choice,
                              const RunConfig& run) {
    const std::size_t workers = worker_count(run.workers);
    PathEnsemble ens =
        simulate_assets(prob.assets, choice.gamma, problem_grid(prob, run), run.seed, run.paths, workers);
    sample_default_times(ens, prob.credit, run.seed, workers);
    ens.measure_label = choice.label;
    return ens;
}

double clean_price(const PricingProblem& prob) {
    prob.validate();
    const std::size_t m = prob.assets.size();
    std::vector<RateCurve> carry(m, prob.rates.r);
    CleanValuer valuer(prob.contract, prob.assets, std::move(carry), prob.rates.r);
    std::vector<double> spots(m);
    for (std::size_t i = 0; i < m; ++i) spots[i] = prob.assets.spot(i);
    return valuer.value(0.0, spots.data());
}

DeflatorChoice deflator_for(const PricingProblem& prob, const RunConfig& run) {
    switch (run.measure) {
        case MeasurePreset::RiskFree:
            return DeflatorChoice::risk_free(prob.rates, prob.assets.size());
        case MeasurePreset::Funding:
            return DeflatorChoice::funding(prob.rates, prob.assets.size());
        case MeasurePreset::Custom:
            return DeflatorChoice::repo(prob.rates, prob.assets.size(), run.custom_eta);
    }
    throw std::logic_error("deflator_for: unknown measure preset");
}

ValuationReport price_funding_measure(const PricingProblem& prob, const RunConfig& run) {
    require_linear_funding(prob, "price_funding_measure");
    return price_at(prob, run, DeflatorChoice::funding(prob.rates, prob.assets.size()), "linear");
}

ValuationReport price_risk_neutral(const PricingProblem& prob, const RunConfig& run) {
    require_linear_funding(prob, "price_risk_neutral");
    return price_at(prob, run, DeflatorChoice::risk_free(prob.rates, prob.assets.size()), "linear");
}

ValuationReport price_custom_measure(const PricingProblem& prob, const RunConfig& run,
                                     const RateCurve& eta) {
    require_linear_funding(prob, "price_custom_measure");
    return price_at(prob, run, DeflatorChoice::repo(prob.rates, prob.assets.size(), eta), "linear");
}

ValuationReport price_linear(const PricingProblem& prob, const RunConfig& run) {
    switch (run.measure) {
        case MeasurePreset::RiskFree: return price_risk_neutral(prob, run);
        case MeasurePreset::Funding: return price_funding_measure(prob, run);
        case MeasurePreset::Custom: return price_custom_measure(prob, run, run.custom_eta);
    }
    throw std::logic_error("price_linear: unknown measure preset");
}

std::vector<double> linear_bsde_explicit(const PricingProblem& prob, const RunConfig& run) {
    prob.validate();
    if (prob.credit.has_defaults())
        throw std::invalid_argument("linear_bsde_explicit: default intensities must be zero");
    require_linear_funding(prob, "linear_bsde_explicit");
    if (!prob.contract.payments.empty() || !prob.contract.terminal)
        throw std::invalid_argument("linear_bsde_explicit: expects a single terminal payoff");

    const std::size_t workers = worker_count(run.workers);
    const DeflatorChoice choice = DeflatorChoice::funding(prob.rates, prob.assets.size());
    const PathEnsemble ens = simulate_problem(prob, choice, run);
    const LegFrame frame(prob, ens, choice, workers);

    const std::size_t M = frame.cells();
    const std::size_t n = frame.n_paths();
    const std::size_t n_blocks = (n + kPathBlock - 1) / kPathBlock;

    // terminal leg: mean of D_f(0,T) X, block-ordered reduction
    std::vector<double> xflow(n);
    frame.fill_flows(M, xflow.data());
    std::vector<double> part(n_blocks, 0.0);
    parallel_blocks(n, workers, [&](std::size_t b, std::size_t lo, std::size_t hi) {
        double s = 0.0;
        for (std::size_t q = lo; q < hi; ++q) s += xflow[q];
        part[b] = s;
    });
    const double xbar = frame.defl_eta()[M] * reduce_blocks(part) / static_cast<double>(n);

    // carry legs: g_j = mean of (c_bar - f) C at node j, integrated with the
    // exact cell annuity
    std::vector<double> g(M, 0.0);
    for (std::size_t j = 0; j < M; ++j) {
        const double* qm = frame.mark(j);
        const double tj = frame.node_time(j);
        const double cl = frame.c_lend_left(j), cb = frame.c_borrow_left(j);
        const double fj = frame.f_lend_left(j);
        parallel_blocks(n, workers, [&](std::size_t b, std::size_t lo, std::size_t hi) {
            double s = 0.0;
            for (std::size_t q = lo; q < hi; ++q) {
                const double c = prob.collateral.value(tj, qm[q]);
                s += (effective_collateral_rate(c, cl, cb) - fj) * c;
            }
            part[b] = s;
        });
        g[j] = reduce_blocks(part) / static_cast<double>(n);
    }

    std::vector<double> y(M + 1, 0.0);
    double suffix = 0.0;
    y[M] = -xbar / frame.defl_eta()[M];
    for (std::size_t k = M; k-- > 0;) {
        suffix += g[k] * frame.cell_annuity()[k];
        y[k] = (suffix - xbar) / frame.defl_eta()[k];
    }
    return y;
}

double reassemble_price(const ValuationReport& rep) {
    double v = rep.clean.value - rep.cva.value + rep.dva.value + rep.lva.value + rep.fva_f.value +
               rep.psi.value;
    for (const auto& t : rep.fva_h) v += t.value;
    return v;
}

}  // namespace xvakit
