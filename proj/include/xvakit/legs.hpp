#pragma once
#include <cstddef>
#include <cstdint>
#include <memory>
#include <utility>
#include <vector>

#include "xvakit/contracts.hpp"
#include "xvakit/problem.hpp"
#include "xvakit/regression.hpp"
#include "xvakit/report.hpp"
#include "xvakit/simulation.hpp"

namespace xvakit {

/// Node-indexed deterministic data plus per-path default records shared by
/// every pathwise estimator on one ensemble. Two clean-value surfaces live
/// here: the contractual closeout mark Q (discount/carry fixed by the
/// closeout convention, risk-free by default) and the measure-consistent
/// clean value under (eta, gamma), which anchors the Picard regressions.
/// When the two parameterizations coincide the arrays are shared.
///
/// Default-time values are obtained by linear interpolation of the deflated
/// gain process G_t = D(0,t)q_t + sum_{u<=t} D(0,u) dA_u between the nodes
/// bracketing tau, re-inflated by the exact deflator at tau. G is continuous
/// across payment dates and a martingale under its own measure, so the
/// stopped-clean estimator stays unbiased for any tau independent of the
/// asset drivers; at tau on a payment node the bullet re-enters the mark
/// (Q_tau = dA_tau + ex-dividend value).
class LegFrame {
  public:
    static constexpr std::uint32_t kNoDefault = 0xffffffffu;

    LegFrame(const PricingProblem& prob, const PathEnsemble& ens, DeflatorChoice choice,
             std::size_t workers = 0);
    /// Closeout/collateral marked at explicit curves instead of the risk-free default.
    LegFrame(const PricingProblem& prob, const PathEnsemble& ens, DeflatorChoice choice,
             RateCurve mark_discount, std::vector<RateCurve> mark_carry, std::size_t workers = 0);

    const PathEnsemble& ensemble() const { return ens_; }
    const PricingProblem& problem() const { return prob_; }
    const DeflatorChoice& choice() const { return choice_; }
    std::size_t n_paths() const { return ens_.n_paths; }
    std::size_t n_assets() const { return ens_.n_assets; }
    std::size_t nodes() const { return ens_.grid.nodes.size(); }
    std::size_t cells() const { return nodes() - 1; }
    double node_time(std::size_t k) const { return ens_.grid.nodes[k]; }

    // deterministic per-node data
    const std::vector<double>& defl_eta() const { return defl_eta_; }       // D_eta(0, t_k)
    const std::vector<double>& cell_annuity() const { return cell_ann_; }   // exact int of D_eta over cell k
    double eta_left(std::size_t k) const { return eta_left_[k]; }
    double c_lend_left(std::size_t k) const { return c_lend_[k]; }
    double c_borrow_left(std::size_t k) const { return c_borrow_[k]; }
    double f_lend_left(std::size_t k) const { return f_lend_[k]; }
    double f_borrow_left(std::size_t k) const { return f_borrow_[k]; }
    double h_lend_left(std::size_t i, std::size_t k) const { return h_lend_[i][k]; }
    double h_borrow_left(std::size_t i, std::size_t k) const { return h_borrow_[i][k]; }
    double gamma_left(std::size_t i, std::size_t k) const { return gamma_left_[i][k]; }

    // clean-value surfaces, node-major rows of n_paths
    const double* mark(std::size_t node) const { return q_mark_.data() + node * n_paths(); }
    const double* clean_sim(std::size_t node) const {
        return (sim_is_mark_ ? q_mark_.data() : q_sim_.data()) + node * n_paths();
    }
    double collateral_of(std::size_t node, double mark_value) const {
        return prob_.collateral.value(node_time(node), mark_value);
    }

    bool has_flow(std::size_t node) const { return !flows_at_[node].empty(); }
    const std::vector<Payment>& flows(std::size_t node) const { return flows_at_[node]; }
    /// Sum of payment values due exactly at the node, per path.
    void fill_flows(std::size_t node, double* out) const;

    // default records, one entry per path
    const std::vector<std::uint32_t>& tau_cell() const { return tau_cell_; }  // kNoDefault when tau > T
    const std::vector<double>& tau_time() const { return tau_time_; }
    const std::vector<unsigned char>& who() const { return who_; }            // 0 trader, 1 cpty, 2 joint
    const std::vector<double>& defl_eta_tau() const { return defl_eta_tau_; }
    const std::vector<double>& tail_annuity() const { return tail_ann_; }     // int_{t_k}^{tau} D_eta, k = tau_cell
    const std::vector<double>& qhat_mark() const { return qhat_mark_; }       // closeout mark at tau
    const std::vector<double>& qhat_sim() const { return qhat_sim_; }         // (eta,gamma)-clean at tau
    const std::vector<double>& c_pre() const { return c_pre_; }               // collateral marked at tau; full tracking settles flat
    const std::vector<double>& theta() const { return theta_; }               // settlement value at tau

    // interpolation registers at tau for re-interpolating other node series
    const std::vector<double>& tau_weight() const { return tau_w_; }          // weight of the left bracket
    const std::vector<double>& cum_eta_left() const { return cum_eta_l_; }
    const std::vector<double>& cum_eta_right() const { return cum_eta_r_; }

    // external-funder default records (INDEPENDENT convention, tau_E <= T and tau_E < tau)
    bool psi_active() const { return prob_.external.enabled; }
    const std::vector<std::uint32_t>& ext_cell() const { return ext_cell_; }
    const std::vector<double>& ext_time() const { return ext_time_; }
    const std::vector<double>& defl_eta_ext() const { return defl_eta_ext_; }
    const std::vector<double>& qhat_mark_ext() const { return qhat_mark_ext_; }
    const std::vector<double>& ext_weight() const { return ext_w_; }
    const std::vector<double>& cum_eta_left_ext() const { return cum_eta_l_ext_; }
    const std::vector<double>& cum_eta_right_ext() const { return cum_eta_r_ext_; }

    void fill_alive(std::size_t node, unsigned char* out) const;
    std::size_t alive_count(std::size_t node) const { return alive_count_[node]; }

    /// Interpolate a node-major series at tau on one path by the deflated-gain
    /// scheme (rows are the bracketing nodes tau_cell and tau_cell + 1).
    double interp_at_tau(std::size_t path, const double* row_left, const double* row_right) const {
        const std::uint32_t k = tau_cell_[path];
        const double w = tau_w_[path];
        const double gl = defl_eta_[k] * row_left[path] + cum_eta_l_[path];
        const double gr = defl_eta_[k + 1] * row_right[path] + cum_eta_r_[path];
        return (w * gl + (1.0 - w) * gr - cum_eta_l_[path]) / defl_eta_tau_[path];
    }
    double interp_at_ext(std::size_t path, const double* row_left, const double* row_right) const {
        const std::uint32_t k = ext_cell_[path];
        const double w = ext_w_[path];
        const double gl = defl_eta_[k] * row_left[path] + cum_eta_l_ext_[path];
        const double gr = defl_eta_[k + 1] * row_right[path] + cum_eta_r_ext_[path];
        return (w * gl + (1.0 - w) * gr - cum_eta_l_ext_[path]) / defl_eta_ext_[path];
    }

    const CleanValuer& mark_valuer() const { return mark_valuer_; }
    const CleanValuer& sim_valuer() const { return sim_is_mark_ ? mark_valuer_ : sim_valuer_; }

  private:
    void build(std::size_t workers);
    void build_surface(const CleanValuer& valuer, std::vector<double>& out, std::size_t workers) const;
    void build_default_records(std::size_t workers);

    const PricingProblem& prob_;
    const PathEnsemble& ens_;
    DeflatorChoice choice_;
    RateCurve mark_discount_;
    std::vector<RateCurve> mark_carry_;
    CleanValuer mark_valuer_, sim_valuer_;
    bool sim_is_mark_ = false;

    std::vector<double> defl_eta_, defl_mark_, cell_ann_;
    std::vector<double> eta_left_, c_lend_, c_borrow_, f_lend_, f_borrow_;
    std::vector<std::vector<double>> h_lend_, h_borrow_, gamma_left_;
    std::vector<std::vector<Payment>> flows_at_;

    std::vector<double> q_mark_, q_sim_;

    std::vector<std::uint32_t> tau_cell_;
    std::vector<unsigned char> who_;
    std::vector<double> tau_time_, defl_eta_tau_, tail_ann_, qhat_mark_, qhat_sim_, c_pre_, theta_;
    std::vector<double> tau_w_, cum_eta_l_, cum_eta_r_;

    std::vector<std::uint32_t> ext_cell_;
    std::vector<double> ext_time_, defl_eta_ext_, qhat_mark_ext_, ext_w_, cum_eta_l_ext_, cum_eta_r_ext_;

    std::vector<std::size_t> alive_count_;
};

/// Per-node iterate arrays driving the adjustment integrand: the price path
/// pi and the hedge positions F^{S,i} = S^i * d(value)/dS^i. Row `nodes()-1`
/// of pi is the ex-dividend terminal value (all zeros for the payoff menu).
struct PolicyArrays {
    std::size_t nodes = 0, n_assets = 0, n_paths = 0;
    std::vector<double> pi;     // [node * n_paths + path]
    std::vector<double> hedge;  // [(node * n_assets + asset) * n_paths + path]
    bool with_hedge = false;

    double* pi_row(std::size_t k) { return pi.data() + k * n_paths; }
    const double* pi_row(std::size_t k) const { return pi.data() + k * n_paths; }
    double* hedge_row(std::size_t k, std::size_t i) {
        return hedge.data() + (k * n_assets + i) * n_paths;
    }
    const double* hedge_row(std::size_t k, std::size_t i) const {
        return hedge.data() + (k * n_assets + i) * n_paths;
    }
};

/// Regressions for nodes 0..cells-1, alive-filtered when the frame carries
/// default times. Nodes whose retained set is empty get a null entry (the
/// fitted adjustment is zero there).
std::vector<std::unique_ptr<NodeRegression>> build_regressions(const LegFrame& frame,
                                                               std::size_t degree,
                                                               std::size_t workers);

/// Policy seeded at the measure-consistent clean value with the hedge taken
/// as the regression delta of the closeout mark (the clean-value hedge).
PolicyArrays seed_policy(const LegFrame& frame,
                         const std::vector<std::unique_ptr<NodeRegression>>& regs,
                         bool with_hedge, std::size_t workers);

struct PicardOutcome {
    bool converged = false;
    std::size_t iterations = 0;
    double residual = 0.0;
    std::vector<std::pair<std::size_t, double>> log;  // (iteration, sup-norm residual)
};

/// One backward sweep: accumulate the adjustment-flow suffix (rate-carry
/// cells, closeout haircut, external-funding legs when active) per alive
/// path, regress it at each node, and refresh pi = clean_sim + fitted
/// adjustment. Returns the sup over nodes of the mean absolute pi update.
double picard_sweep(const LegFrame& frame, const std::vector<std::unique_ptr<NodeRegression>>& regs,
                    PolicyArrays& policy, std::size_t workers);

/// Iterate picard_sweep to the fixed point of the adjusted-cash-flow
/// representation. Tolerance is absolute (caller scales by notional).
PicardOutcome run_picard(const LegFrame& frame, const std::vector<std::unique_ptr<NodeRegression>>& regs,
                         PolicyArrays& policy, double tol_abs, std::size_t max_iter, std::size_t workers);

/// Pathwise leg accumulation at a fixed policy: flows, closeout, CVA/DVA,
/// collateral carry, treasury and repo funding splits, external-funding
/// splits. The price is the mean of the pathwise-assembled total, so the
/// decomposition identity holds to summation roundoff by construction.
ValuationReport accumulate_report(const LegFrame& frame, const RunConfig& run,
                                  const PolicyArrays& policy);

}  // namespace xvakit
