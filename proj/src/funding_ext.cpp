#include "xvakit/funding_ext.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>

#include "xvakit/parallel.hpp"
#include "xvakit/pricer_linear.hpp"

namespace xvakit {

namespace {

double payoff_scalar(const Payment& p, double s) {
    switch (p.kind) {
        case PayoffKind::Cash: return p.amount;
        case PayoffKind::Forward: return p.amount * (s - p.strike);
        case PayoffKind::Call: return p.amount * std::max(s - p.strike, 0.0);
        case PayoffKind::Put: return p.amount * std::max(p.strike - s, 0.0);
        case PayoffKind::CashOrNothing: return p.amount * (s > p.strike ? 1.0 : 0.0);
    }
    return 0.0;
}

TermEstimate estimate(double sum, double sumsq, std::size_t n) {
    TermEstimate e;
    if (n == 0) return e;
    e.value = sum / static_cast<double>(n);
    if (n > 1) {
        const double var = (sumsq - static_cast<double>(n) * e.value * e.value) / static_cast<double>(n - 1);
        e.se = var > 0.0 ? std::sqrt(var / static_cast<double>(n)) : 0.0;
    }
    return e;
}

/// Equality of two curves as functions on the grid: either the same
/// representation, or matching left-node values and cell integrals.
bool curves_match(const RateCurve& a, const RateCurve& b, const TimeGrid& grid) {
    if (a == b) return true;
    for (std::size_t k = 0; k + 1 < grid.nodes.size(); ++k) {
        if (a(grid.nodes[k]) != b(grid.nodes[k])) return false;
        if (a.integral(grid.nodes[k], grid.nodes[k + 1]) != b.integral(grid.nodes[k], grid.nodes[k + 1]))
            return false;
    }
    return true;
}

std::string fmt(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

/// Left-node profiles driving the wealth-coupled iteration: the unsecured
/// spread, the default-benefit intensity L_I * lambda_I, and the wealth path.
/// At the fair spread the two rate profiles hold identical products, so their
/// difference vanishes bitwise in the sweep.
struct IncompleteTerms {
    std::vector<double> sf, benefit, wealth;
};

IncompleteTerms make_terms(const LegFrame& frame, const RateCurve& spread, const RateCurve& wealth) {
    IncompleteTerms t;
    const std::size_t M = frame.cells();
    const DefaultModel& credit = frame.problem().credit;
    t.sf.resize(M);
    t.benefit.resize(M);
    t.wealth.resize(M);
    for (std::size_t k = 0; k < M; ++k) {
        const double tk = frame.node_time(k);
        t.sf[k] = spread(tk);
        t.benefit[k] = credit.loss_trader * credit.lambda_trader(tk);
        t.wealth[k] = wealth(tk);
    }
    return t;
}

/// Backward sweep of the wealth-coupled adjustment suffix: collateral carry
/// plus the net borrowing-need term (L_I lambda_I - s^f)(pi - W - C)^+, with
/// the closeout haircut at default. Same fixed-point layout as the complete
/// -market sweep: pi = clean + fitted suffix re-inflated at the node.
double sweep_incomplete(const LegFrame& frame, const std::vector<std::unique_ptr<NodeRegression>>& regs,
                        PolicyArrays& policy, const IncompleteTerms& terms, std::size_t workers) {
    const std::size_t M = frame.cells(), n = frame.n_paths();
    const CollateralSpec& coll = frame.problem().collateral;
    const std::size_t n_blocks = (n + kPathBlock - 1) / kPathBlock;

    std::vector<double> as(n, 0.0), fitted(n, 0.0), part(n_blocks, 0.0);
    double residual = 0.0;

    for (std::size_t k = M; k-- > 0;) {
        parallel_blocks(n, workers, [&](std::size_t, std::size_t lo, std::size_t hi) {
            const double* qm = frame.mark(k);
            const double* pik = policy.pi_row(k);
            const double tk = frame.node_time(k);
            const double eta = frame.eta_left(k);
            const double cl = frame.c_lend_left(k), cb = frame.c_borrow_left(k);
            const double coeff = terms.benefit[k] - terms.sf[k];
            const double wk = terms.wealth[k];
            for (std::size_t q = lo; q < hi; ++q) {
                const std::uint32_t tc = frame.tau_cell()[q];
                if (tc < k) {
                    as[q] = 0.0;
                    continue;
                }
                const double C = coll.value(tk, qm[q]);
                const double adj =
                    (eta - (C >= 0.0 ? cb : cl)) * C + coeff * std::max(pik[q] - wk - C, 0.0);
                as[q] = tc == k ? frame.tail_annuity()[q] * adj +
                                      frame.defl_eta_tau()[q] * (frame.theta()[q] - frame.qhat_sim()[q])
                                : frame.cell_annuity()[k] * adj + as[q];
            }
        });

        if (regs[k])
            regs[k]->fit(as.data(), fitted.data(), nullptr);
        else
            std::fill(fitted.begin(), fitted.end(), 0.0);

        const double defl = frame.defl_eta()[k];
        std::fill(part.begin(), part.end(), 0.0);
        parallel_blocks(n, workers, [&](std::size_t blk, std::size_t lo, std::size_t hi) {
            const double* qs = frame.clean_sim(k);
            double* row = policy.pi_row(k);
            double s = 0.0;
            for (std::size_t q = lo; q < hi; ++q) {
                const double nv = qs[q] + fitted[q] / defl;
                if (frame.tau_cell()[q] >= k) s += std::fabs(nv - row[q]);
                row[q] = nv;
            }
            part[blk] = s;
        });
        if (frame.alive_count(k) > 0)
            residual = std::max(residual, reduce_blocks(part) / static_cast<double>(frame.alive_count(k)));
    }
    return residual;
}

PicardOutcome run_incomplete(const LegFrame& frame, const std::vector<std::unique_ptr<NodeRegression>>& regs,
                             PolicyArrays& policy, const IncompleteTerms& terms, double tol_abs,
                             std::size_t max_iter, std::size_t workers) {
    PicardOutcome out;
    for (std::size_t it = 1; it <= max_iter; ++it) {
        const double res = sweep_incomplete(frame, regs, policy, terms, workers);
        out.iterations = it;
        out.residual = res;
        out.log.emplace_back(it, res);
        if (res <= tol_abs) {
            out.converged = true;
            break;
        }
    }
    return out;
}

/// Pathwise legs at a fixed wealth-coupled policy. The spread-carry cost and
/// the default-benefit leg both integrate the same borrowing need against
/// their left-node rates, so at the fair spread they are bitwise equal and
/// the total collapses to the complete-market legs.
ValuationReport accumulate_incomplete(const LegFrame& frame, const RunConfig& run,
                                      const PolicyArrays& policy, const IncompleteTerms& terms) {
    const std::size_t M = frame.cells(), n = frame.n_paths(), m = frame.n_assets();
    const std::size_t workers = worker_count(run.workers);
    const bool settle_none = frame.problem().closeout.settlement == CloseoutSettlement::None;
    const double L_I = frame.problem().credit.loss_trader;
    const double L_C = frame.problem().credit.loss_cpty;
    const CollateralSpec& coll = frame.problem().collateral;

    enum Slot : std::size_t { kClean, kCva, kDva, kLva, kFca, kBen, kTotal, kSlots };
    const std::size_t n_blocks = (n + kPathBlock - 1) / kPathBlock;
    std::vector<double> partial(2 * kSlots * n_blocks, 0.0);

    ValuationReport rep;
    if (run.keep_path_terms) {
        auto& pt = rep.path_terms;
        pt.total.resize(n);
        pt.clean.resize(n);
        pt.cva.resize(n);
        pt.dva.resize(n);
        pt.lva.resize(n);
        pt.fva_f.resize(n);
        pt.fva_h.assign(m, std::vector<double>(n, 0.0));
        pt.psi.resize(n);
        pt.dva_f_minus_leg.resize(n);
        pt.dva_f_plus_leg.assign(n, 0.0);
    }

    parallel_blocks(n, workers, [&](std::size_t blk, std::size_t lo, std::size_t hi) {
        const std::size_t bs = hi - lo;
        std::vector<double> acc(kSlots * bs, 0.0);
        auto slot = [&](std::size_t s) { return acc.data() + s * bs; };
        for (std::size_t j = 0; j <= M; ++j) {
            for (const auto& p : frame.flows(j)) {
                const double* srow = p.kind == PayoffKind::Cash ? nullptr : frame.ensemble().spot(j, p.asset);
                const double de = frame.defl_eta()[j];
                double* cleanp = slot(kClean);
                for (std::size_t q = lo; q < hi; ++q) {
                    const std::uint32_t tc = frame.tau_cell()[q];
                    if (tc == LegFrame::kNoDefault || j <= tc)
                        cleanp[q - lo] += de * payoff_scalar(p, srow ? srow[q] : 0.0);
                }
            }
            if (j == M) break;
            const double* qm = frame.mark(j);
            const double* pij = policy.pi_row(j);
            const double tj = frame.node_time(j);
            const double eta = frame.eta_left(j);
            const double cl = frame.c_lend_left(j), cb = frame.c_borrow_left(j);
            const double ann = frame.cell_annuity()[j];
            const double wj = terms.wealth[j];
            for (std::size_t q = lo; q < hi; ++q) {
                const std::uint32_t tc = frame.tau_cell()[q];
                if (tc < j) continue;
                const std::size_t l = q - lo;
                const double w = tc == j ? frame.tail_annuity()[q] : ann;
                const double C = coll.value(tj, qm[q]);
                slot(kLva)[l] += w * (eta - (C >= 0.0 ? cb : cl)) * C;
                const double need = std::max(pij[q] - wj - C, 0.0);
                slot(kFca)[l] += w * terms.sf[j] * need;
                slot(kBen)[l] += w * terms.benefit[j] * need;
            }
        }
        for (std::size_t q = lo; q < hi; ++q) {
            const std::size_t l = q - lo;
            const std::uint32_t tc = frame.tau_cell()[q];
            if (tc != LegFrame::kNoDefault) {
                const double de = frame.defl_eta_tau()[q];
                const double qhat = frame.qhat_mark()[q];
                slot(kClean)[l] += de * qhat;
                if (settle_none) {
                    slot(kCva)[l] += de * std::max(qhat, 0.0);
                    slot(kDva)[l] += de * std::max(-qhat, 0.0);
                } else {
                    const double ups = qhat - frame.c_pre()[q];
                    if (frame.who()[q] != 1) slot(kDva)[l] += de * (L_I * std::max(-ups, 0.0));
                    if (frame.who()[q] != 0) slot(kCva)[l] += de * (L_C * std::max(ups, 0.0));
                }
            }
            slot(kTotal)[l] = slot(kClean)[l] + slot(kDva)[l] - slot(kCva)[l] + slot(kLva)[l] +
                              (slot(kBen)[l] - slot(kFca)[l]);
            if (run.keep_path_terms) {
                auto& pt = rep.path_terms;
                pt.total[q] = slot(kTotal)[l];
                pt.clean[q] = slot(kClean)[l];
                pt.cva[q] = slot(kCva)[l];
                pt.dva[q] = slot(kDva)[l];
                pt.lva[q] = slot(kLva)[l];
                pt.fva_f[q] = -slot(kFca)[l];
                pt.psi[q] = slot(kBen)[l];
                pt.dva_f_minus_leg[q] = slot(kBen)[l];
            }
        }
        double* psum = partial.data() + 2 * kSlots * blk;
        double* psq = psum + kSlots;
        for (std::size_t s = 0; s < kSlots; ++s) {
            double su = 0.0, sq = 0.0;
            const double* a = slot(s);
            for (std::size_t l = 0; l < bs; ++l) {
                su += a[l];
                sq += a[l] * a[l];
            }
            psum[s] = su;
            psq[s] = sq;
        }
    });

    std::vector<double> sums(kSlots, 0.0), sumsqs(kSlots, 0.0);
    for (std::size_t b = 0; b < n_blocks; ++b) {
        const double* psum = partial.data() + 2 * kSlots * b;
        for (std::size_t s = 0; s < kSlots; ++s) {
            sums[s] += psum[s];
            sumsqs[s] += psum[kSlots + s];
        }
    }
    auto est = [&](std::size_t s) { return estimate(sums[s], sumsqs[s], n); };

    rep.price = est(kTotal);
    rep.clean = est(kClean);
    rep.cva = est(kCva);
    rep.dva = est(kDva);
    rep.lva = est(kLva);
    rep.fca_f = est(kFca);
    rep.fva_f = TermEstimate{-rep.fca_f.value, rep.fca_f.se};
    rep.psi = est(kBen);
    rep.dva_f_minus = rep.psi;
    rep.fba_h.assign(m, TermEstimate{});
    rep.fca_h.assign(m, TermEstimate{});
    rep.fva_h.assign(m, TermEstimate{});

    const double legs_sum = rep.clean.value - rep.cva.value + rep.dva.value + rep.lva.value +
                            rep.fva_f.value + rep.psi.value;
    rep.decomposition_residual = std::fabs(rep.price.value - legs_sum);

    std::vector<double> s0(m);
    for (std::size_t i = 0; i < m; ++i) s0[i] = frame.ensemble().spot(0, i)[0];
    rep.clean_analytic = frame.mark_valuer().value(0.0, s0.data());

    rep.measure = frame.choice().label;
    rep.paths = n;
    rep.steps = run.steps;
    rep.grid_cells = M;
    rep.seed = run.seed;
    rep.workers = workers;
    rep.basis_degree = run.basis_degree;
    return rep;
}

}  // namespace

ExternalAdjustments external_adjustments(const PathEnsemble& ens, const RateCurve& funding,
                                         const PricingProblem& prob) {
    const std::size_t n = ens.n_paths;
    if (n == 0 || ens.tau_trader.size() != n || ens.tau_cpty.size() != n)
        throw std::invalid_argument("external_adjustments: ensemble lacks default draws");
    const bool independent = prob.external.convention == ExternalConvention::Independent;
    if (independent && ens.tau_external.size() != n)
        throw std::invalid_argument("external_adjustments: ensemble lacks external default draws");
    const double T = ens.grid.horizon();
    const double L_I = prob.credit.loss_trader;
    const double L_E = prob.credit.loss_external;
    const RateCurve& r = prob.rates.r;

    double s_a = 0.0, q_a = 0.0, s_b = 0.0, q_b = 0.0;
    for (std::size_t q = 0; q < n; ++q) {
        const double tau = ens.tau(q);
        double a = 0.0, b = 0.0;
        if (independent) {
            const double te = ens.tau_external[q];
            if (tau <= T && tau < te && ens.defaulter(q) != Defaulter::Counterparty)
                a = L_I * r.discount(0.0, tau) * std::max(-funding(tau), 0.0);
            if (te <= T && te < tau) b = L_E * r.discount(0.0, te) * std::max(funding(te), 0.0);
        } else if (tau <= T && ens.defaulter(q) != Defaulter::Counterparty) {
            const double de = L_I * r.discount(0.0, tau);
            const double f = funding(tau);
            a = de * std::max(-f, 0.0);
            b = de * std::max(f, 0.0);
        }
        s_a += a;
        q_a += a * a;
        s_b += b;
        q_b += b * b;
    }
    ExternalAdjustments out;
    if (independent) {
        out.dva_f = estimate(s_a, q_a, n);
        out.cva_f = estimate(s_b, q_b, n);
    } else {
        out.dva_f_minus = estimate(s_a, q_a, n);
        out.dva_f_plus = estimate(s_b, q_b, n);
    }
    return out;
}

NetBenefit net_benefit_J(const PathEnsemble& ens, const std::vector<double>& y_deflated,
                         const RateCurve& spread, const DefaultModel& credit) {
    const TimeGrid& grid = ens.grid;
    const std::size_t M = grid.cells(), n = ens.n_paths;
    if (y_deflated.size() < M * n)
        throw std::invalid_argument("net_benefit_J: residual array shorter than cells * paths");
    if (ens.tau_trader.size() != n || ens.tau_cpty.size() != n)
        throw std::invalid_argument("net_benefit_J: ensemble lacks default draws");
    const double T = grid.horizon();
    const double L_I = credit.loss_trader;

    std::vector<double> sf(M), coeff(M);
    for (std::size_t k = 0; k < M; ++k) {
        const double t = grid.nodes[k];
        sf[k] = spread(t);
        coeff[k] = L_I * credit.lambda_trader(t) - sf[k];
    }

    double s = 0.0, ssq = 0.0;
    std::vector<double> gated(M, 0.0);
    for (std::size_t q = 0; q < n; ++q) {
        const double tau = ens.tau(q);
        const bool dead = tau <= T;
        const std::size_t tc = dead ? grid.cell_of(tau) : M;
        double carry = 0.0;
        for (std::size_t k = 0; k < M && k <= tc; ++k) {
            const double yk = y_deflated[k * n + q];
            const double portion = k == tc ? tau - grid.nodes[k] : grid.dt(k);
            carry += sf[k] * yk * portion;
            gated[k] += yk;
        }
        const double death =
            dead && ens.defaulter(q) != Defaulter::Counterparty ? L_I * y_deflated[tc * n + q] : 0.0;
        const double j = death - carry;
        s += j;
        ssq += j * j;
    }

    NetBenefit out;
    out.j0 = estimate(s, ssq, n);
    for (std::size_t k = 0; k < M; ++k) {
        const double integrand = coeff[k] * (gated[k] / static_cast<double>(n));
        out.j0_marginalized += integrand * grid.dt(k);
        out.j0_integrand_max = std::max(out.j0_integrand_max, std::fabs(integrand));
    }
    return out;
}

ValuationReport price_with_external(const PricingProblem& prob, const RunConfig& run) {
    prob.validate();
    if (!prob.external.enabled)
        throw std::invalid_argument("price_with_external: external funding block is disabled");
    if (!prob.contract.payments.empty() || !prob.contract.terminal)
        throw std::invalid_argument("price_with_external: expects a single terminal payoff");
    const TimeGrid grid = problem_grid(prob, run);
    for (const auto& pair : prob.rates.h)
        if (!curves_match(pair.lend, prob.rates.r, grid) || !curves_match(pair.borrow, prob.rates.r, grid))
            throw std::invalid_argument("price_with_external: repo rates must equal the risk-free rate");
    const bool independent = prob.external.convention == ExternalConvention::Independent;
    if (!independent && prob.credit.lambda_external.integral(0.0, prob.horizon()) != 0.0)
        throw std::invalid_argument(
            "price_with_external: net-borrower convention needs a default-free external funder");

    const std::size_t workers = worker_count(run.workers);
    const DeflatorChoice choice = DeflatorChoice::risk_free(prob.rates, prob.assets.size());
    const PathEnsemble ens = simulate_problem(prob, choice, run);
    LegFrame frame(prob, ens, choice, workers);
    auto regs = build_regressions(frame, run.basis_degree, workers);
    PolicyArrays policy = seed_policy(frame, regs, false, workers);
    PicardOutcome pic =
        run_picard(frame, regs, policy, run.picard_tol * prob.scale(run), run.picard_max_iter, workers);
    ValuationReport rep = accumulate_report(frame, run, policy);
    rep.mode = "external";
    rep.converged = pic.converged;
    rep.picard_iterations = pic.iterations;
    rep.picard_residual = pic.residual;
    rep.convergence_log = std::move(pic.log);
    if (!pic.converged)
        rep.warnings.push_back("picard: residual " + std::to_string(pic.residual) +
                               " above tolerance after " + std::to_string(pic.iterations) + " sweeps");

    const double scale = prob.scale(run);
    const double slack = 1e-4 * scale;
    const Payment& terminal = *prob.contract.terminal;
    int sgn = terminal.amount > 0.0 ? 1 : terminal.amount < 0.0 ? -1 : 0;
    if (terminal.kind == PayoffKind::Forward) sgn = 0;

    if (sgn == 0) {
        rep.warnings.push_back("terminal payoff is not sign-definite; sign-case verifications skipped");
    } else if (sgn > 0) {
        if (std::fabs(rep.fba_f.value) > 3.0 * rep.fba_f.se + slack)
            rep.warnings.push_back("nonnegative payoff, yet the treasury lending benefit is material: " +
                                   fmt(rep.fba_f.value));
        if (!independent && std::fabs(rep.dva_f_plus.value) > 3.0 * rep.dva_f_plus.se + slack)
            rep.warnings.push_back("nonnegative payoff, yet the lent-funds default benefit is material: " +
                                   fmt(rep.dva_f_plus.value));
    } else if (!independent && curves_match(prob.rates.f.lend, prob.rates.r, grid)) {
        const double gap_dva = std::fabs(rep.dva.value - rep.dva_f_plus.value);
        if (gap_dva > 3.0 * (rep.dva.se + rep.dva_f_plus.se) + slack)
            rep.warnings.push_back("debit adjustments fail to coincide at f^l = r: gap " + fmt(gap_dva));
        const double gap_total = std::fabs(rep.price.value - rep.clean_analytic);
        if (gap_total > 3.0 * rep.price.se + slack)
            rep.warnings.push_back("total fails to collapse to the clean price at f^l = r: gap " +
                                   fmt(gap_total));
    }

    if (!independent) {
        const RateCurve& bank = prob.external.bank_borrowing;
        double y_max = 0.0, excess_max = 0.0;
        std::size_t violations = 0;
        const std::size_t M = frame.cells(), n = frame.n_paths();
        for (std::size_t k = 0; k < M; ++k) {
            const double yk = bank(frame.node_time(k));
            y_max = std::max(y_max, yk);
            const double* qm = frame.mark(k);
            const double* pik = policy.pi_row(k);
            for (std::size_t q = 0; q < n; ++q) {
                if (frame.tau_cell()[q] < k) continue;
                const double excess = yk + frame.collateral_of(k, qm[q]) - pik[q];
                if (excess > 0.0) {
                    ++violations;
                    excess_max = std::max(excess_max, excess);
                }
            }
        }
        if (y_max > 0.0)
            rep.warnings.push_back("bank-wide borrowing path turns positive (max " + fmt(y_max) + ")");
        if (violations > 0)
            rep.warnings.push_back("net-borrower bound Y + F <= 0 violated on " +
                                   std::to_string(violations) + " node-path pairs (max excess " +
                                   fmt(excess_max) + ")");
    }
    return rep;
}

ValuationReport price_incomplete(const PricingProblem& prob, const RunConfig& run) {
    prob.validate();
    if (prob.external.enabled)
        throw std::invalid_argument("price_incomplete: external funding block is not part of this mode");
    const TimeGrid grid = problem_grid(prob, run);
    for (const auto& pair : prob.rates.h) {
        if (!pair.degenerate())
            throw std::invalid_argument("price_incomplete: repo rates must be direction-free");
        if (!curves_match(pair.lend, prob.rates.h[0].lend, grid))
            throw std::invalid_argument("price_incomplete: repo rate must be shared across assets");
    }

    const std::size_t m = prob.assets.size();
    const std::size_t workers = worker_count(run.workers);
    const RateCurve eta = prob.rates.f.lend;
    const RateCurve fair = prob.credit.lambda_trader.scaled(prob.credit.loss_trader);
    const RateCurve& spread = prob.fair_spread_auto ? fair : prob.funding_spread;

    DeflatorChoice choice;
    choice.eta = eta;
    choice.gamma.assign(m, prob.rates.h[0].lend);
    choice.label = "q_h_minimal";

    const PathEnsemble ens = simulate_problem(prob, choice, run);
    LegFrame frame(prob, ens, choice, eta, std::vector<RateCurve>(m, prob.rates.h[0].lend), workers);
    auto regs = build_regressions(frame, run.basis_degree, workers);
    const double scale = prob.scale(run);
    const double tol = run.picard_tol * scale;

    const double T = prob.horizon();
    const RateCurve wealth_a(0.0);
    const RateCurve wealth_b({0.5 * T}, {0.25 * scale, -0.15 * scale});
    const IncompleteTerms terms_a = make_terms(frame, spread, wealth_a);
    const IncompleteTerms terms_b = make_terms(frame, spread, wealth_b);

    PolicyArrays policy_a = seed_policy(frame, regs, false, workers);
    PicardOutcome out_a = run_incomplete(frame, regs, policy_a, terms_a, tol, run.picard_max_iter, workers);
    PolicyArrays policy_b = seed_policy(frame, regs, false, workers);
    PicardOutcome out_b = run_incomplete(frame, regs, policy_b, terms_b, tol, run.picard_max_iter, workers);

    ValuationReport rep = accumulate_incomplete(frame, run, policy_a, terms_a);
    RunConfig bare = run;
    bare.keep_path_terms = false;
    const ValuationReport alt = accumulate_incomplete(frame, bare, policy_b, terms_b);
    rep.wealth_gap = std::fabs(rep.price.value - alt.price.value);

    rep.mode = "incomplete";
    rep.converged = out_a.converged && out_b.converged;
    rep.picard_iterations = out_a.iterations;
    rep.picard_residual = out_a.residual;
    rep.convergence_log = std::move(out_a.log);
    if (!rep.converged)
        rep.warnings.push_back("picard: residual " + std::to_string(std::max(out_a.residual, out_b.residual)) +
                               " above tolerance after " + std::to_string(out_a.iterations) + " sweeps");

    const std::size_t M = frame.cells(), n = frame.n_paths();
    std::vector<double> y(M * n, 0.0);
    for (std::size_t k = 0; k < M; ++k) {
        const double defl = frame.defl_eta()[k];
        const double wk = terms_a.wealth[k];
        const double* qm = frame.mark(k);
        const double* pik = policy_a.pi_row(k);
        double* yk = y.data() + k * n;
        for (std::size_t q = 0; q < n; ++q)
            if (frame.tau_cell()[q] >= k)
                yk[q] = defl * std::max(pik[q] - wk - frame.collateral_of(k, qm[q]), 0.0);
    }
    const NetBenefit nb = net_benefit_J(ens, y, spread, prob.credit);
    rep.j0 = nb.j0;
    rep.j0_marginalized = nb.j0_marginalized;
    rep.j0_integrand_max = nb.j0_integrand_max;

    if (!curves_match(spread, fair, grid))
        rep.warnings.push_back("funding spread is off the fair level; the price depends on the wealth path");
    if (rep.wealth_gap > 1e-10 * scale)
        rep.warnings.push_back("wealth-independence gap " + fmt(rep.wealth_gap) + " beyond tolerance");
    return rep;
}

}  // namespace xvakit
