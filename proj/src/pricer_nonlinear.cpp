#include "xvakit/pricer_nonlinear.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

#include "xvakit/legs.hpp"
#include "xvakit/parallel.hpp"
#include "xvakit/pricer_linear.hpp"

namespace xvakit {
namespace {

void reject_external(const PricingProblem& prob, const char* where) {
    if (prob.external.enabled)
        throw std::invalid_argument(std::string(where) +
                                    ": external funding legs belong to the external-funding pricer");
}

// an injected ensemble must cover the problem: same asset count, same horizon,
// and every payment date sitting exactly on a grid node
void check_ensemble(const PricingProblem& prob, const PathEnsemble& ens, const char* where) {
    const std::string w(where);
    if (ens.n_paths == 0) throw std::invalid_argument(w + ": injected ensemble is empty");
    if (ens.n_assets != prob.assets.size())
        throw std::invalid_argument(w + ": injected ensemble asset count mismatch");
    if (!(ens.grid.horizon() == prob.horizon()))
        throw std::invalid_argument(w + ": injected ensemble horizon mismatch");
    for (double t : prob.contract.payment_times()) {
        bool on_node = false;
        for (double s : ens.grid.nodes)
            if (s == t) { on_node = true; break; }
        if (!on_node)
            throw std::invalid_argument(w + ": payment date off the injected grid");
    }
}

DeflatorChoice bsde_choice(const PricingProblem& prob) {
    DeflatorChoice choice;
    choice.eta = prob.rates.r;  // frame deflator, unused by the scheme itself
    for (const auto& p : prob.rates.h) choice.gamma.push_back(p.lend);
    choice.label = "bsde";
    return choice;
}

BSDESolution solve_bsde_on(const PricingProblem& prob, const RunConfig& run,
                           const PathEnsemble& ens) {
    const std::size_t workers = worker_count(run.workers);

    // defaults enter the driver through their intensities, not the paths
    PricingProblem marginal = prob;
    marginal.credit = DefaultModel{};
    const DeflatorChoice choice = bsde_choice(prob);

    const LegFrame frame(marginal, ens, choice, workers);
    const std::size_t M = frame.cells();
    const std::size_t n = frame.n_paths();
    const std::size_t m = frame.n_assets();
    const std::size_t n_blocks = (n + kPathBlock - 1) / kPathBlock;

    const RateCurve& lam_i_curve = prob.credit.lambda_trader;
    const RateCurve& lam_c_curve = prob.credit.lambda_cpty;
    for (std::size_t k = 0; k < M; ++k) {
        const double a = frame.node_time(k), b = frame.node_time(k + 1);
        if (lam_i_curve.integral(a, b) + lam_c_curve.integral(a, b) > 0.2)
            throw std::invalid_argument("solve_bsde: intensity times step exceeds 0.2, refine the grid");
    }

    const double loss_i = prob.credit.loss_trader, loss_c = prob.credit.loss_cpty;
    const bool walk_away = prob.closeout.settlement == CloseoutSettlement::None;

    auto regs = build_regressions(frame, run.basis_degree, workers);

    BSDESolution out;
    BSDEState& st = out.state;
    st.nodes = M + 1;
    st.n_assets = m;
    st.n_paths = n;
    st.y.assign(st.nodes * n, 0.0);
    st.z.assign(st.nodes * m * n, 0.0);

    // terminal portfolio value: wealth zero after settling, so y_M = C_T
    {
        const double* qm = frame.mark(M);
        double* ym = st.y_row(M);
        parallel_blocks(n, workers, [&](std::size_t, std::size_t lo, std::size_t hi) {
            for (std::size_t q = lo; q < hi; ++q) ym[q] = frame.collateral_of(M, qm[q]);
        });
    }

    std::vector<double> target(n), flow(n), c_next(n), c_here(n);
    std::vector<double> growth(m);
    std::vector<double> se_part(n_blocks, 0.0), se_part2(n_blocks, 0.0);
    // unsmoothed value chain: same recursion with branch decisions frozen on
    // the fitted surfaces but the raw path value carried in place of the fit,
    // so its node-0 dispersion states the sampling noise the fitted y0 hides
    std::vector<double> vraw(n);
    {
        const double* qm = frame.mark(M);
        parallel_blocks(n, workers, [&](std::size_t, std::size_t lo, std::size_t hi) {
            for (std::size_t q = lo; q < hi; ++q) {
                c_next[q] = frame.collateral_of(M, qm[q]);
                vraw[q] = c_next[q];
            }
        });
    }

    double price_se = 0.0;
    for (std::size_t k = M; k-- > 0;) {
        const double tk = frame.node_time(k), tk1 = frame.node_time(k + 1);
        const double dt = tk1 - tk;
        const double lam_i = lam_i_curve.integral(tk, tk1) / dt;
        const double lam_c = lam_c_curve.integral(tk, tk1) / dt;
        const double lam = lam_i + lam_c;
        const double f_l = frame.f_lend_left(k), f_b = frame.f_borrow_left(k);
        const double c_l = frame.c_lend_left(k), c_b = frame.c_borrow_left(k);
        for (std::size_t i = 0; i < m; ++i)
            growth[i] = std::exp(choice.gamma[i].integral(tk, tk1)) - 1.0;

        const bool has_flow = frame.has_flow(k + 1);
        if (has_flow) frame.fill_flows(k + 1, flow.data());

        const double* y_next = st.y_row(k + 1);
        const double* qm = frame.mark(k);
        parallel_blocks(n, workers, [&](std::size_t, std::size_t lo, std::size_t hi) {
            for (std::size_t q = lo; q < hi; ++q) {
                target[q] = y_next[q] - (has_flow ? flow[q] : 0.0) - c_next[q];
                c_here[q] = frame.collateral_of(k, qm[q]);
            }
        });

        std::vector<double*> deltas(m);
        for (std::size_t i = 0; i < m; ++i) deltas[i] = st.z_row(k, i);
        regs[k]->fit(target.data(), st.y_row(k), deltas.data());  // y_row(k) holds the fit for now

        double* yk = st.y_row(k);
        parallel_blocks(n, workers, [&](std::size_t b, std::size_t lo, std::size_t hi) {
            double s1 = 0.0, s2 = 0.0;
            for (std::size_t q = lo; q < hi; ++q) {
                double carry = 0.0;
                for (std::size_t i = 0; i < m; ++i) {
                    const double zs = st.z_row(k, i)[q] * frame.ensemble().spot(k, i)[q];
                    carry += effective_repo_rate(zs, frame.h_lend_left(i, k),
                                                 frame.h_borrow_left(i, k)) *
                                 zs * dt -
                             zs * growth[i];
                }
                const double cq = c_here[q];
                double numer = yk[q] + cq + dt * effective_collateral_rate(cq, c_l, c_b) * cq + carry;
                if (lam > 0.0) {
                    const double qv = qm[q];
                    const double th_i =
                        walk_away ? 0.0
                                  : closeout_payoff(qv, cq, Defaulter::Trader, loss_i, loss_c).theta;
                    const double th_c =
                        walk_away ? 0.0
                                  : closeout_payoff(qv, cq, Defaulter::Counterparty, loss_i, loss_c).theta;
                    numer -= dt * (lam_i * (th_i - cq) + lam_c * (th_c - cq));
                }
                const double f_bar = effective_funding_rate(numer, f_l, f_b);
                const double den = 1.0 + dt * (f_bar + lam);
                const double fitted = yk[q];
                yk[q] = numer / den;
                vraw[q] = (numer - fitted + vraw[q] - (has_flow ? flow[q] : 0.0) - c_next[q]) / den;
                s1 += vraw[q];
                s2 += vraw[q] * vraw[q];
            }
            se_part[b] = s1;
            se_part2[b] = s2;
        });
        if (k == 0) {
            const double s1 = reduce_blocks(se_part), s2 = reduce_blocks(se_part2);
            const double nn = static_cast<double>(n);
            const double var = (s2 - s1 * s1 / nn) / (nn > 1 ? nn - 1 : 1.0);
            price_se = var > 0.0 ? std::sqrt(var / nn) : 0.0;
        }
        std::swap(c_next, c_here);
    }

    const double c0 = c_next[0];  // after the swap this is the node-0 collateral
    const double y0 = st.y_row(0)[0];

    ValuationReport& rep = out.report;
    rep.price = {c0 - y0, price_se};
    {
        std::vector<double> s0(m);
        for (std::size_t i = 0; i < m; ++i) s0[i] = frame.ensemble().spot(0, i)[0];
        rep.clean_analytic = frame.mark_valuer().value(0.0, s0.data());
    }
    rep.mode = "nonlinear";
    rep.measure = "bsde";
    rep.paths = n;
    rep.steps = run.steps;
    rep.grid_cells = M;
    rep.seed = run.seed;
    rep.workers = workers;
    rep.basis_degree = run.basis_degree;
    rep.converged = true;
    return out;
}

ValuationReport picard_on(const PricingProblem& prob, const RunConfig& run,
                          const PathEnsemble& ens) {
    const std::size_t workers = worker_count(run.workers);
    const DeflatorChoice choice = DeflatorChoice::risk_free(prob.rates, prob.assets.size());

    bool hedge = false;
    for (std::size_t i = 0; i < prob.rates.h.size(); ++i)
        if (!(prob.rates.h[i].lend == choice.gamma[i] && prob.rates.h[i].borrow == choice.gamma[i]))
            hedge = true;

    LegFrame frame(prob, ens, choice, workers);
    auto regs = build_regressions(frame, run.basis_degree, workers);
    PolicyArrays policy = seed_policy(frame, regs, hedge, workers);
    PicardOutcome pic = run_picard(frame, regs, policy, run.picard_tol * prob.scale(run),
                                   run.picard_max_iter, workers);
    ValuationReport rep = accumulate_report(frame, run, policy);
    rep.mode = "nonlinear";
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

BSDESolution solve_bsde(const PricingProblem& prob, const RunConfig& run) {
    prob.validate();
    reject_external(prob, "solve_bsde");
    PricingProblem marginal = prob;
    marginal.credit = DefaultModel{};
    const PathEnsemble ens = simulate_problem(marginal, bsde_choice(prob), run);
    return solve_bsde_on(prob, run, ens);
}

BSDESolution solve_bsde(const PricingProblem& prob, const RunConfig& run,
                        const PathEnsemble& ens) {
    prob.validate();
    reject_external(prob, "solve_bsde");
    check_ensemble(prob, ens, "solve_bsde");
    return solve_bsde_on(prob, run, ens);
}

ValuationReport picard_price(const PricingProblem& prob, const RunConfig& run) {
    prob.validate();
    reject_external(prob, "picard_price");
    const DeflatorChoice choice = DeflatorChoice::risk_free(prob.rates, prob.assets.size());
    const PathEnsemble ens = simulate_problem(prob, choice, run);
    return picard_on(prob, run, ens);
}

ValuationReport picard_price(const PricingProblem& prob, const RunConfig& run,
                             const PathEnsemble& ens) {
    prob.validate();
    reject_external(prob, "picard_price");
    check_ensemble(prob, ens, "picard_price");
    return picard_on(prob, run, ens);
}

}  // namespace xvakit
