#include "xvakit/legs.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>

#include "xvakit/parallel.hpp"

namespace xvakit {

namespace {

std::vector<RateCurve> repeat_curve(const RateCurve& c, std::size_t n) {
    return std::vector<RateCurve>(n, c);
}

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

}  // namespace

LegFrame::LegFrame(const PricingProblem& prob, const PathEnsemble& ens, DeflatorChoice choice,
                   std::size_t workers)
    : LegFrame(prob, ens, std::move(choice), prob.rates.r, repeat_curve(prob.rates.r, ens.n_assets),
               workers) {}

LegFrame::LegFrame(const PricingProblem& prob, const PathEnsemble& ens, DeflatorChoice choice,
                   RateCurve mark_discount, std::vector<RateCurve> mark_carry, std::size_t workers)
    : prob_(prob),
      ens_(ens),
      choice_(std::move(choice)),
      mark_discount_(std::move(mark_discount)),
      mark_carry_(std::move(mark_carry)) {
    if (choice_.gamma.size() != ens_.n_assets)
        throw std::invalid_argument("LegFrame: deflator gamma count does not match asset count");
    if (mark_carry_.size() != ens_.n_assets)
        throw std::invalid_argument("LegFrame: mark carry count does not match asset count");
    build(worker_count(workers));
}

void LegFrame::build(std::size_t workers) {
    const std::size_t Mn = nodes(), M = cells(), n = n_paths(), m = n_assets();
    const auto& grid = ens_.grid.nodes;

    defl_eta_.assign(Mn, 1.0);
    defl_mark_.assign(Mn, 1.0);
    cell_ann_.assign(M, 0.0);
    for (std::size_t k = 0; k < M; ++k) {
        defl_eta_[k + 1] = defl_eta_[k] * std::exp(-choice_.eta.integral(grid[k], grid[k + 1]));
        defl_mark_[k + 1] = defl_mark_[k] * std::exp(-mark_discount_.integral(grid[k], grid[k + 1]));
        cell_ann_[k] = annuity_integral(choice_.eta, grid[k], grid[k + 1]);
    }

    eta_left_.resize(Mn);
    c_lend_.resize(Mn);
    c_borrow_.resize(Mn);
    f_lend_.resize(Mn);
    f_borrow_.resize(Mn);
    h_lend_.assign(m, std::vector<double>(Mn));
    h_borrow_.assign(m, std::vector<double>(Mn));
    gamma_left_.assign(m, std::vector<double>(Mn));
    for (std::size_t k = 0; k < Mn; ++k) {
        const double t = grid[k];
        eta_left_[k] = choice_.eta(t);
        c_lend_[k] = prob_.rates.c.lend(t);
        c_borrow_[k] = prob_.rates.c.borrow(t);
        f_lend_[k] = prob_.rates.f.lend(t);
        f_borrow_[k] = prob_.rates.f.borrow(t);
        for (std::size_t i = 0; i < m; ++i) {
            h_lend_[i][k] = prob_.rates.h[i].lend(t);
            h_borrow_[i][k] = prob_.rates.h[i].borrow(t);
            gamma_left_[i][k] = choice_.gamma[i](t);
        }
    }

    flows_at_.assign(Mn, {});
    auto place = [&](const Payment& p) {
        auto it = std::lower_bound(grid.begin(), grid.end(), p.time);
        if (it == grid.end() || *it != p.time)
            throw std::logic_error("LegFrame: payment date is not a grid node");
        flows_at_[static_cast<std::size_t>(it - grid.begin())].push_back(p);
    };
    for (const auto& p : prob_.contract.payments) place(p);
    if (prob_.contract.terminal) place(*prob_.contract.terminal);

    mark_valuer_ = CleanValuer(prob_.contract, prob_.assets, mark_carry_, mark_discount_);
    sim_is_mark_ = mark_discount_ == choice_.eta;
    for (std::size_t i = 0; sim_is_mark_ && i < m; ++i) sim_is_mark_ = mark_carry_[i] == choice_.gamma[i];

    build_surface(mark_valuer_, q_mark_, workers);
    if (!sim_is_mark_) {
        sim_valuer_ = CleanValuer(prob_.contract, prob_.assets, choice_.gamma, choice_.eta);
        build_surface(sim_valuer_, q_sim_, workers);
    }

    build_default_records(workers);

    std::vector<std::size_t> died(Mn, 0);
    for (std::size_t p = 0; p < n; ++p)
        if (tau_cell_[p] != kNoDefault) ++died[tau_cell_[p]];
    alive_count_.assign(Mn, 0);
    std::size_t dead = 0;
    for (std::size_t k = 0; k < Mn; ++k) {
        alive_count_[k] = n - dead;
        dead += died[k];
    }
}

void LegFrame::build_surface(const CleanValuer& valuer, std::vector<double>& out, std::size_t workers) const {
    const std::size_t Mn = nodes(), n = n_paths(), m = n_assets();
    out.assign(Mn * n, 0.0);
    std::vector<const double*> rows(m);
    for (std::size_t k = 0; k < Mn; ++k) {
        const CleanValuer::Cache cache = valuer.prepare(node_time(k));
        if (cache.items.empty()) continue;  // ex-dividend zero row at the horizon
        for (std::size_t i = 0; i < m; ++i) rows[i] = ens_.spot(k, i);
        double* row_out = out.data() + k * n;
        parallel_blocks(n, workers, [&](std::size_t, std::size_t lo, std::size_t hi) {
            std::vector<double> s(m);
            for (std::size_t q = lo; q < hi; ++q) {
                for (std::size_t i = 0; i < m; ++i) s[i] = rows[i][q];
                row_out[q] = valuer.value(cache, s.data());
            }
        });
    }
}

void LegFrame::fill_flows(std::size_t node, double* out) const {
    const std::size_t n = n_paths();
    std::fill(out, out + n, 0.0);
    for (const auto& p : flows_at_[node]) {
        const double* srow = p.kind == PayoffKind::Cash ? nullptr : ens_.spot(node, p.asset);
        for (std::size_t q = 0; q < n; ++q) out[q] += payoff_scalar(p, srow ? srow[q] : 0.0);
    }
}

void LegFrame::fill_alive(std::size_t node, unsigned char* out) const {
    const std::size_t n = n_paths();
    for (std::size_t p = 0; p < n; ++p) out[p] = tau_cell_[p] >= node ? 1 : 0;
}

void LegFrame::build_default_records(std::size_t workers) {
    const std::size_t M = cells(), n = n_paths();
    const auto& grid = ens_.grid.nodes;
    const double T = ens_.grid.horizon();
    const bool want_ext = prob_.external.enabled && prob_.external.convention == ExternalConvention::Independent;

    tau_cell_.assign(n, kNoDefault);
    who_.assign(n, 0);
    tau_time_.assign(n, 0.0);
    defl_eta_tau_.assign(n, 0.0);
    tail_ann_.assign(n, 0.0);
    qhat_mark_.assign(n, 0.0);
    qhat_sim_.assign(n, 0.0);
    c_pre_.assign(n, 0.0);
    theta_.assign(n, 0.0);
    tau_w_.assign(n, 0.0);
    cum_eta_l_.assign(n, 0.0);
    cum_eta_r_.assign(n, 0.0);
    ext_cell_.assign(n, kNoDefault);
    ext_time_.assign(n, 0.0);
    defl_eta_ext_.assign(n, 0.0);
    qhat_mark_ext_.assign(n, 0.0);
    ext_w_.assign(n, 0.0);
    cum_eta_l_ext_.assign(n, 0.0);
    cum_eta_r_ext_.assign(n, 0.0);

    const bool settle_none = prob_.closeout.settlement == CloseoutSettlement::None;
    const double L_I = prob_.credit.loss_trader, L_C = prob_.credit.loss_cpty;

    parallel_blocks(n, workers, [&](std::size_t, std::size_t lo, std::size_t hi) {
        const std::size_t bs = hi - lo;
        std::vector<double> defl_mark_tau(bs, 0.0), defl_mark_ext(bs, 0.0);
        for (std::size_t q = lo; q < hi; ++q) {
            const std::size_t l = q - lo;
            const double ti = ens_.tau_trader[q], tcp = ens_.tau_cpty[q];
            const double tau = std::min(ti, tcp);
            if (tau <= T) {
                const double teff = std::max(tau, std::numeric_limits<double>::min());
                const std::size_t k = ens_.grid.cell_of(teff);
                tau_cell_[q] = static_cast<std::uint32_t>(k);
                who_[q] = ti < tcp ? 0 : (tcp < ti ? 1 : 2);
                tau_time_[q] = teff;
                tau_w_[q] = (grid[k + 1] - teff) / ens_.grid.dt(k);
                defl_eta_tau_[q] = defl_eta_[k] * std::exp(-choice_.eta.integral(grid[k], teff));
                defl_mark_tau[l] = defl_mark_[k] * std::exp(-mark_discount_.integral(grid[k], teff));
                tail_ann_[q] = annuity_integral(choice_.eta, grid[k], teff);
            }
            if (want_ext) {
                const double te = ens_.tau_external[q];
                if (te <= T && te < tau) {
                    const double teff = std::max(te, std::numeric_limits<double>::min());
                    const std::size_t k = ens_.grid.cell_of(teff);
                    ext_cell_[q] = static_cast<std::uint32_t>(k);
                    ext_time_[q] = teff;
                    ext_w_[q] = (grid[k + 1] - teff) / ens_.grid.dt(k);
                    defl_eta_ext_[q] = defl_eta_[k] * std::exp(-choice_.eta.integral(grid[k], teff));
                    defl_mark_ext[l] = defl_mark_[k] * std::exp(-mark_discount_.integral(grid[k], teff));
                }
            }
        }
        // node-forward deflated cumulative flows, captured at the bracket nodes
        std::vector<double> ce(bs, 0.0), cm(bs, 0.0);
        std::vector<double> cm_l(bs, 0.0), cm_r(bs, 0.0), cm_l_ext(bs, 0.0), cm_r_ext(bs, 0.0);
        for (std::size_t j = 0; j <= M; ++j) {
            for (const auto& p : flows_at_[j]) {
                const double* srow = p.kind == PayoffKind::Cash ? nullptr : ens_.spot(j, p.asset);
                const double de = defl_eta_[j], dm = defl_mark_[j];
                for (std::size_t l = 0; l < bs; ++l) {
                    const double f = payoff_scalar(p, srow ? srow[lo + l] : 0.0);
                    ce[l] += de * f;
                    cm[l] += dm * f;
                }
            }
            for (std::size_t q = lo; q < hi; ++q) {
                const std::size_t l = q - lo;
                const std::uint32_t tc = tau_cell_[q];
                if (tc != kNoDefault) {
                    if (tc == j) {
                        cum_eta_l_[q] = ce[l];
                        cm_l[l] = cm[l];
                    } else if (tc + 1 == j) {
                        cum_eta_r_[q] = ce[l];
                        cm_r[l] = cm[l];
                    }
                }
                const std::uint32_t ec = ext_cell_[q];
                if (ec != kNoDefault) {
                    if (ec == j) {
                        cum_eta_l_ext_[q] = ce[l];
                        cm_l_ext[l] = cm[l];
                    } else if (ec + 1 == j) {
                        cum_eta_r_ext_[q] = ce[l];
                        cm_r_ext[l] = cm[l];
                    }
                }
            }
        }
        // interpolated closeout marks and the settlement value
        for (std::size_t q = lo; q < hi; ++q) {
            const std::size_t l = q - lo;
            const std::uint32_t tc = tau_cell_[q];
            if (tc != kNoDefault) {
                const std::size_t k = tc;
                const double w = tau_w_[q];
                const double gl = defl_mark_[k] * mark(k)[q] + cm_l[l];
                const double gr = defl_mark_[k + 1] * mark(k + 1)[q] + cm_r[l];
                qhat_mark_[q] = (w * gl + (1.0 - w) * gr - cm_l[l]) / defl_mark_tau[l];
                if (sim_is_mark_) {
                    qhat_sim_[q] = qhat_mark_[q];
                } else {
                    const double sl = defl_eta_[k] * clean_sim(k)[q] + cum_eta_l_[q];
                    const double sr = defl_eta_[k + 1] * clean_sim(k + 1)[q] + cum_eta_r_[q];
                    qhat_sim_[q] = (w * sl + (1.0 - w) * sr - cum_eta_l_[q]) / defl_eta_tau_[q];
                }
                c_pre_[q] = prob_.collateral.value(tau_time_[q], qhat_mark_[q]);
                if (settle_none) {
                    theta_[q] = 0.0;
                } else {
                    const Defaulter d = who_[q] == 0 ? Defaulter::Trader
                                                     : (who_[q] == 1 ? Defaulter::Counterparty : Defaulter::Joint);
                    theta_[q] = closeout_payoff(qhat_mark_[q], c_pre_[q], d, L_I, L_C).theta;
                }
            }
            const std::uint32_t ec = ext_cell_[q];
            if (ec != kNoDefault) {
                const std::size_t k = ec;
                const double w = ext_w_[q];
                const double gl = defl_mark_[k] * mark(k)[q] + cm_l_ext[l];
                const double gr = defl_mark_[k + 1] * mark(k + 1)[q] + cm_r_ext[l];
                qhat_mark_ext_[q] = (w * gl + (1.0 - w) * gr - cm_l_ext[l]) / defl_mark_ext[l];
            }
        }
    });
}

std::vector<std::unique_ptr<NodeRegression>> build_regressions(const LegFrame& frame, std::size_t degree,
                                                               std::size_t workers) {
    const std::size_t M = frame.cells(), n = frame.n_paths(), m = frame.n_assets();
    std::vector<std::unique_ptr<NodeRegression>> regs(M);
    std::vector<unsigned char> alive(n);
    std::vector<const double*> rows(m);
    for (std::size_t k = 0; k < M; ++k) {
        if (frame.alive_count(k) == 0) continue;
        frame.fill_alive(k, alive.data());
        for (std::size_t i = 0; i < m; ++i) rows[i] = frame.ensemble().spot(k, i);
        regs[k] = std::make_unique<NodeRegression>(rows.data(), m, n, alive.data(), degree, workers);
    }
    return regs;
}

PolicyArrays seed_policy(const LegFrame& frame, const std::vector<std::unique_ptr<NodeRegression>>& regs,
                         bool with_hedge, std::size_t workers) {
    const std::size_t Mn = frame.nodes(), M = frame.cells(), n = frame.n_paths(), m = frame.n_assets();
    PolicyArrays policy;
    policy.nodes = Mn;
    policy.n_assets = m;
    policy.n_paths = n;
    policy.with_hedge = with_hedge;
    policy.pi.resize(Mn * n);
    for (std::size_t k = 0; k < Mn; ++k)
        std::memcpy(policy.pi_row(k), frame.clean_sim(k), n * sizeof(double));
    if (!with_hedge) return policy;

    policy.hedge.assign(Mn * m * n, 0.0);
    std::vector<double> fitted(n);
    std::vector<double*> dptr(m);
    for (std::size_t k = 0; k < M; ++k) {
        if (!regs[k]) continue;
        for (std::size_t i = 0; i < m; ++i) dptr[i] = policy.hedge_row(k, i);
        regs[k]->fit(frame.mark(k), fitted.data(), dptr.data());
        for (std::size_t i = 0; i < m; ++i) {
            double* row = policy.hedge_row(k, i);
            const double* srow = frame.ensemble().spot(k, i);
            parallel_blocks(n, workers, [&](std::size_t, std::size_t lo, std::size_t hi) {
                for (std::size_t q = lo; q < hi; ++q) row[q] *= srow[q];
            });
        }
    }
    return policy;
}

double picard_sweep(const LegFrame& frame, const std::vector<std::unique_ptr<NodeRegression>>& regs,
                    PolicyArrays& policy, std::size_t workers) {
    const std::size_t M = frame.cells(), n = frame.n_paths(), m = frame.n_assets();
    const bool psi = frame.psi_active();
    const bool independent = frame.problem().external.convention == ExternalConvention::Independent;
    const double L_I = frame.problem().credit.loss_trader;
    const double L_E = frame.problem().credit.loss_external;
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
            const double fl = frame.f_lend_left(k), fb = frame.f_borrow_left(k);
            for (std::size_t q = lo; q < hi; ++q) {
                const std::uint32_t tc = frame.tau_cell()[q];
                if (tc < k) {
                    as[q] = 0.0;
                    continue;
                }
                const double C = coll.value(tk, qm[q]);
                const double F = C - pik[q];
                const double ac = eta - (C >= 0.0 ? cb : cl);
                const double af = (F >= 0.0 ? fl : fb) - eta;
                double adj = ac * C + af * F;
                if (policy.with_hedge) {
                    for (std::size_t i = 0; i < m; ++i) {
                        const double fs = policy.hedge_row(k, i)[q];
                        const double ah = (fs >= 0.0 ? frame.h_lend_left(i, k) : frame.h_borrow_left(i, k)) -
                                          frame.gamma_left(i, k);
                        adj += ah * fs;
                    }
                }
                double v;
                if (tc == k) {
                    v = frame.tail_annuity()[q] * adj +
                        frame.defl_eta_tau()[q] * (frame.theta()[q] - frame.qhat_sim()[q]);
                    if (psi && frame.who()[q] != 1) {  // trader or joint default
                        if (!independent) {
                            const double pihat = frame.interp_at_tau(q, policy.pi_row(k), policy.pi_row(k + 1));
                            const double fhat = coll.value(frame.tau_time()[q], frame.qhat_mark()[q]) - pihat;
                            v += frame.defl_eta_tau()[q] * (L_I * (std::max(-fhat, 0.0) - std::max(fhat, 0.0)));
                        } else if (frame.ext_cell()[q] == LegFrame::kNoDefault) {
                            const double pihat = frame.interp_at_tau(q, policy.pi_row(k), policy.pi_row(k + 1));
                            const double fhat = coll.value(frame.tau_time()[q], frame.qhat_mark()[q]) - pihat;
                            v += frame.defl_eta_tau()[q] * (L_I * std::max(-fhat, 0.0));
                        }
                    }
                } else {
                    v = frame.cell_annuity()[k] * adj + as[q];
                }
                if (psi && independent && frame.ext_cell()[q] == k) {
                    const double pihat = frame.interp_at_ext(q, policy.pi_row(k), policy.pi_row(k + 1));
                    const double fhat = coll.value(frame.ext_time()[q], frame.qhat_mark_ext()[q]) - pihat;
                    v -= frame.defl_eta_ext()[q] * (L_E * std::max(fhat, 0.0));
                }
                as[q] = v;
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

PicardOutcome run_picard(const LegFrame& frame, const std::vector<std::unique_ptr<NodeRegression>>& regs,
                         PolicyArrays& policy, double tol_abs, std::size_t max_iter, std::size_t workers) {
    PicardOutcome out;
    for (std::size_t it = 1; it <= max_iter; ++it) {
        const double res = picard_sweep(frame, regs, policy, workers);
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

ValuationReport accumulate_report(const LegFrame& frame, const RunConfig& run, const PolicyArrays& policy) {
    const std::size_t M = frame.cells(), n = frame.n_paths(), m = frame.n_assets();
    const std::size_t workers = worker_count(run.workers);
    const bool psi = frame.psi_active();
    const bool independent = frame.problem().external.convention == ExternalConvention::Independent;
    const bool settle_none = frame.problem().closeout.settlement == CloseoutSettlement::None;
    const double L_I = frame.problem().credit.loss_trader;
    const double L_C = frame.problem().credit.loss_cpty;
    const double L_E = frame.problem().credit.loss_external;
    const CollateralSpec& coll = frame.problem().collateral;

    enum Slot : std::size_t { kClean, kCva, kDva, kLva, kFba, kFca, kFva, kPsiM, kPsiP, kPsi, kTotal, kBase };
    const std::size_t n_slots = kBase + 3 * m;  // per asset: fba_h, fca_h, fva_h
    const std::size_t n_blocks = (n + kPathBlock - 1) / kPathBlock;
    std::vector<double> partial(2 * n_slots * n_blocks, 0.0);

    ValuationReport rep;
    if (run.keep_path_terms) {
        auto& pt = rep.path_terms;
        pt.total.resize(n);
        pt.clean.resize(n);
        pt.cva.resize(n);
        pt.dva.resize(n);
        pt.lva.resize(n);
        pt.fva_f.resize(n);
        pt.fva_h.assign(m, std::vector<double>(n));
        pt.psi.resize(n);
        pt.dva_f_minus_leg.resize(n);
        pt.dva_f_plus_leg.resize(n);
    }

    parallel_blocks(n, workers, [&](std::size_t blk, std::size_t lo, std::size_t hi) {
        const std::size_t bs = hi - lo;
        std::vector<double> acc(n_slots * bs, 0.0);  // [slot * bs + local]
        auto slot = [&](std::size_t s) { return acc.data() + s * bs; };
        // node-forward pass: flows and rate-carry cells
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
            const double fl = frame.f_lend_left(j), fb = frame.f_borrow_left(j);
            const double ann = frame.cell_annuity()[j];
            for (std::size_t q = lo; q < hi; ++q) {
                const std::uint32_t tc = frame.tau_cell()[q];
                if (tc < j) continue;
                const std::size_t l = q - lo;
                const double w = tc == j ? frame.tail_annuity()[q] : ann;
                const double C = coll.value(tj, qm[q]);
                slot(kLva)[l] += w * (eta - (C >= 0.0 ? cb : cl)) * C;
                const double F = C - pij[q];
                if (F >= 0.0)
                    slot(kFba)[l] += w * (fl - eta) * F;
                else
                    slot(kFca)[l] += w * (fb - eta) * (-F);
                if (policy.with_hedge) {
                    for (std::size_t i = 0; i < m; ++i) {
                        const double fs = policy.hedge_row(j, i)[q];
                        const double g = frame.gamma_left(i, j);
                        if (fs >= 0.0)
                            slot(kBase + 3 * i)[l] += w * (frame.h_lend_left(i, j) - g) * fs;
                        else
                            slot(kBase + 3 * i + 1)[l] += w * (frame.h_borrow_left(i, j) - g) * (-fs);
                    }
                }
            }
        }
        // closeout and external-default legs
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
                if (psi && frame.who()[q] != 1) {
                    const bool lone = frame.ext_cell()[q] == LegFrame::kNoDefault;
                    if (!independent || lone) {
                        const double pihat =
                            frame.interp_at_tau(q, policy.pi_row(tc), policy.pi_row(tc + 1));
                        const double fhat = coll.value(frame.tau_time()[q], qhat) - pihat;
                        slot(kPsiM)[l] += de * (L_I * std::max(-fhat, 0.0));
                        if (!independent) slot(kPsiP)[l] += de * (L_I * std::max(fhat, 0.0));
                    }
                }
            }
            const std::uint32_t ec = frame.ext_cell()[q];
            if (psi && independent && ec != LegFrame::kNoDefault) {
                const double pihat = frame.interp_at_ext(q, policy.pi_row(ec), policy.pi_row(ec + 1));
                const double fhat = coll.value(frame.ext_time()[q], frame.qhat_mark_ext()[q]) - pihat;
                slot(kPsiP)[l] += frame.defl_eta_ext()[q] * (L_E * std::max(fhat, 0.0));
            }
            // assembled pathwise identities
            slot(kFva)[l] = slot(kFba)[l] - slot(kFca)[l];
            slot(kPsi)[l] = slot(kPsiM)[l] - slot(kPsiP)[l];
            double total = slot(kClean)[l] + slot(kDva)[l] - slot(kCva)[l] + slot(kLva)[l] + slot(kFva)[l] +
                           slot(kPsi)[l];
            for (std::size_t i = 0; i < m; ++i) {
                slot(kBase + 3 * i + 2)[l] = slot(kBase + 3 * i)[l] - slot(kBase + 3 * i + 1)[l];
                total += slot(kBase + 3 * i + 2)[l];
            }
            slot(kTotal)[l] = total;
            if (run.keep_path_terms) {
                auto& pt = rep.path_terms;
                pt.total[q] = slot(kTotal)[l];
                pt.clean[q] = slot(kClean)[l];
                pt.cva[q] = slot(kCva)[l];
                pt.dva[q] = slot(kDva)[l];
                pt.lva[q] = slot(kLva)[l];
                pt.fva_f[q] = slot(kFva)[l];
                for (std::size_t i = 0; i < m; ++i) pt.fva_h[i][q] = slot(kBase + 3 * i + 2)[l];
                pt.psi[q] = slot(kPsi)[l];
                pt.dva_f_minus_leg[q] = slot(kPsiM)[l];
                pt.dva_f_plus_leg[q] = slot(kPsiP)[l];
            }
        }
        double* psum = partial.data() + 2 * n_slots * blk;
        double* psq = psum + n_slots;
        for (std::size_t s = 0; s < n_slots; ++s) {
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

    std::vector<double> sums(n_slots, 0.0), sumsqs(n_slots, 0.0);
    for (std::size_t b = 0; b < n_blocks; ++b) {
        const double* psum = partial.data() + 2 * n_slots * b;
        for (std::size_t s = 0; s < n_slots; ++s) {
            sums[s] += psum[s];
            sumsqs[s] += psum[n_slots + s];
        }
    }
    auto est = [&](std::size_t s) { return estimate(sums[s], sumsqs[s], n); };

    rep.price = est(kTotal);
    rep.clean = est(kClean);
    rep.cva = est(kCva);
    rep.dva = est(kDva);
    rep.lva = est(kLva);
    rep.fba_f = est(kFba);
    rep.fca_f = est(kFca);
    rep.fva_f = est(kFva);
    rep.fba_h.resize(m);
    rep.fca_h.resize(m);
    rep.fva_h.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
        rep.fba_h[i] = est(kBase + 3 * i);
        rep.fca_h[i] = est(kBase + 3 * i + 1);
        rep.fva_h[i] = est(kBase + 3 * i + 2);
    }
    rep.psi = est(kPsi);
    if (psi) {
        if (independent) {
            rep.dva_f = est(kPsiM);
            rep.cva_f = est(kPsiP);
        } else {
            rep.dva_f_minus = est(kPsiM);
            rep.dva_f_plus = est(kPsiP);
        }
    }

    double legs_sum = rep.clean.value - rep.cva.value + rep.dva.value + rep.lva.value + rep.fva_f.value +
                      rep.psi.value;
    for (std::size_t i = 0; i < m; ++i) legs_sum += rep.fva_h[i].value;
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

}  // namespace xvakit
