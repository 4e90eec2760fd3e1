#pragma once
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "xvakit/curves.hpp"
#include "xvakit/market.hpp"
#include "xvakit/mathfn.hpp"

namespace xvakit {

/// Everything in this library is quoted in the canonical orientation: the
/// price is the value to the trader of RECEIVING the dividend stream.
/// Replication-style formulas that value the paying side are mapped by
/// negating the stream on entry; negation round-trips bit-exactly.

enum class PayoffKind { Cash, Forward, Call, Put, CashOrNothing };

inline const char* payoff_name(PayoffKind k) {
    switch (k) {
        case PayoffKind::Cash: return "cash";
        case PayoffKind::Forward: return "forward";
        case PayoffKind::Call: return "call";
        case PayoffKind::Put: return "put";
        case PayoffKind::CashOrNothing: return "cash_or_nothing";
    }
    return "?";
}

struct Payment {
    double time = 0.0;
    PayoffKind kind = PayoffKind::Cash;
    double amount = 0.0;  // notional multiplier; negative amounts flip the receiver
    double strike = 0.0;
    std::size_t asset = 0;
};

/// Payment value at its own date given the asset state.
inline double intrinsic(const Payment& p, const double* spots) {
    switch (p.kind) {
        case PayoffKind::Cash: return p.amount;
        case PayoffKind::Forward: return p.amount * (spots[p.asset] - p.strike);
        case PayoffKind::Call: return p.amount * std::max(spots[p.asset] - p.strike, 0.0);
        case PayoffKind::Put: return p.amount * std::max(p.strike - spots[p.asset], 0.0);
        case PayoffKind::CashOrNothing: return p.amount * (spots[p.asset] > p.strike ? 1.0 : 0.0);
    }
    return 0.0;
}

/// Dividend stream: dated payments (unique times) plus an optional terminal
/// payoff at the horizon; the two may share the horizon date.
struct Contract {
    std::vector<Payment> payments;      // strictly increasing unique times in (0, horizon]
    std::optional<Payment> terminal;    // payoff functional at the horizon

    double horizon() const {
        double h = 0.0;
        for (const auto& p : payments) h = std::max(h, p.time);
        if (terminal) h = std::max(h, terminal->time);
        return h;
    }

    void validate(std::size_t n_assets) const {
        if (payments.empty() && !terminal) throw std::invalid_argument("Contract: empty stream");
        double prev = 0.0;
        for (const auto& p : payments) {
            if (!(p.time > prev)) throw std::invalid_argument("Contract: payment times must be strictly increasing and > 0");
            prev = p.time;
            check_payment(p, n_assets);
        }
        if (terminal) {
            check_payment(*terminal, n_assets);
            if (!(terminal->time > 0.0)) throw std::invalid_argument("Contract: terminal time must be positive");
            if (terminal->time < prev) throw std::invalid_argument("Contract: terminal payoff precedes a payment");
        }
    }

    Contract negated() const {
        Contract out = *this;
        for (auto& p : out.payments) p.amount = -p.amount;
        if (out.terminal) out.terminal->amount = -out.terminal->amount;
        return out;
    }

    /// All payments due exactly at t (at most two: a dated payment and the terminal).
    template <typename Fn>
    void for_each_at(double t, Fn&& fn) const {
        for (const auto& p : payments)
            if (p.time == t) fn(p);
        if (terminal && terminal->time == t) fn(*terminal);
    }

    std::vector<double> payment_times() const {
        std::vector<double> ts;
        for (const auto& p : payments) ts.push_back(p.time);
        if (terminal) ts.push_back(terminal->time);
        std::sort(ts.begin(), ts.end());
        ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
        return ts;
    }

  private:
    static void check_payment(const Payment& p, std::size_t n_assets) {
        if (!std::isfinite(p.amount)) throw std::invalid_argument("Contract: non-finite amount");
        if (p.kind != PayoffKind::Cash) {
            if (p.asset >= n_assets) throw std::invalid_argument("Contract: payment references undefined asset");
            if (p.kind != PayoffKind::Forward && p.strike < 0.0)
                throw std::invalid_argument("Contract: option strike must be nonnegative");
        }
    }
};

/// Discounted expected payoff of one payment under lognormal dynamics:
/// observation at the payment date, spot known at t, growth = exp(int of the
/// carry rate), disc = exp(-int of the discount rate), sd = sigma*sqrt(dt).
inline double payment_expected_value(const Payment& p, double spot, double growth, double disc, double sd) {
    switch (p.kind) {
        case PayoffKind::Cash: return p.amount * disc;
        case PayoffKind::Forward: return p.amount * disc * (spot * growth - p.strike);
        case PayoffKind::Call: return p.amount * disc * black_call_forward(spot * growth, p.strike, sd);
        case PayoffKind::Put: return p.amount * disc * black_put_forward(spot * growth, p.strike, sd);
        case PayoffKind::CashOrNothing: return p.amount * disc * black_digital_forward(spot * growth, p.strike, sd);
    }
    return 0.0;
}

/// Analytic ex-dividend valuer for the payment menu under per-asset carry
/// curves and a single discount curve. Valuation at t covers payments with
/// time strictly greater than t.
class CleanValuer {
  public:
    CleanValuer() = default;

    CleanValuer(const Contract& contract, const AssetModel& assets, std::vector<RateCurve> carry, RateCurve discount)
        : contract_(contract), discount_(std::move(discount)), carry_(std::move(carry)) {
        if (carry_.size() != assets.size()) throw std::invalid_argument("CleanValuer: carry curve count mismatch");
        vols_ = std::vector<double>(assets.size());
        for (std::size_t i = 0; i < assets.size(); ++i) vols_[i] = assets.vol(i);
    }

    struct Prepared {
        PayoffKind kind;
        double amount, strike, growth, disc, sd;
        std::size_t asset;
    };
    struct Cache {
        double t = 0.0;
        std::vector<Prepared> items;
    };

    Cache prepare(double t) const {
        Cache c;
        c.t = t;
        auto add = [&](const Payment& p) {
            if (!(p.time > t)) return;
            Prepared q;
            q.kind = p.kind;
            q.amount = p.amount;
            q.strike = p.strike;
            q.asset = p.kind == PayoffKind::Cash ? 0 : p.asset;
            q.disc = discount_.discount(t, p.time);
            q.growth = p.kind == PayoffKind::Cash ? 1.0 : std::exp(carry_[q.asset].integral(t, p.time));
            q.sd = p.kind == PayoffKind::Cash ? 0.0 : vols_[q.asset] * std::sqrt(p.time - t);
            c.items.push_back(q);
        };
        for (const auto& p : contract_.payments) add(p);
        if (contract_.terminal) add(*contract_.terminal);
        return c;
    }

    double value(const Cache& c, const double* spots) const {
        double v = 0.0;
        for (const auto& q : c.items) {
            switch (q.kind) {
                case PayoffKind::Cash: v += q.amount * q.disc; break;
                case PayoffKind::Forward: v += q.amount * q.disc * (spots[q.asset] * q.growth - q.strike); break;
                case PayoffKind::Call:
                    v += q.amount * q.disc * black_call_forward(spots[q.asset] * q.growth, q.strike, q.sd);
                    break;
                case PayoffKind::Put:
                    v += q.amount * q.disc * black_put_forward(spots[q.asset] * q.growth, q.strike, q.sd);
                    break;
                case PayoffKind::CashOrNothing:
                    v += q.amount * q.disc * black_digital_forward(spots[q.asset] * q.growth, q.strike, q.sd);
                    break;
            }
        }
        return v;
    }

    double value(double t, const double* spots) const {
        Cache c = prepare(t);
        return value(c, spots);
    }

    const Contract& contract() const { return contract_; }

  private:
    Contract contract_;
    RateCurve discount_;
    std::vector<RateCurve> carry_;
    std::vector<double> vols_;
};

/// Collateral rule. FRACTION tracks the clean closeout value; SCHEDULE is a
/// deterministic piecewise-constant amount (in currency).
struct CollateralSpec {
    enum class Kind { Fraction, Schedule };
    Kind kind = Kind::Fraction;
    double alpha = 0.0;
    RateCurve schedule{0.0};  // currency amounts when kind == Schedule

    static CollateralSpec none() { return {}; }
    static CollateralSpec fraction(double a) {
        CollateralSpec c;
        c.kind = Kind::Fraction;
        c.alpha = a;
        return c;
    }
    static CollateralSpec constant(double amount) {
        CollateralSpec c;
        c.kind = Kind::Schedule;
        c.schedule = RateCurve::flat(amount);
        return c;
    }

    double value(double t, double clean_q) const {
        return kind == Kind::Fraction ? alpha * clean_q : schedule(t);
    }
};

/// Effective collateral remuneration rate: the borrow branch applies while the
/// trader holds collateral (C >= 0); the C = 0 tie is value-irrelevant.
inline double effective_collateral_rate(double c_value, double c_lend, double c_borrow) {
    return c_value >= 0.0 ? c_borrow : c_lend;
}

enum class Defaulter { Trader, Counterparty, Joint };

/// Settlement rule at the first default. Csa exchanges the haircut closeout
/// value; None settles nothing (recovery -C_pre: collateral simply flows back).
enum class CloseoutSettlement { Csa, None };

struct CloseoutSpec {
    CloseoutSettlement settlement = CloseoutSettlement::Csa;
};

struct CloseoutOutcome {
    double upsilon = 0.0;   // Q_tau - C_pre
    double theta = 0.0;     // total settlement to the trader, collateral inclusive
    double recovery = 0.0;  // theta - C_pre
};

inline CloseoutOutcome closeout_payoff(double q_tau, double c_pre, Defaulter who, double loss_trader,
                                       double loss_cpty) {
    if (loss_trader < 0.0 || loss_trader > 1.0 || loss_cpty < 0.0 || loss_cpty > 1.0)
        throw std::invalid_argument("closeout_payoff: loss outside [0,1]");
    CloseoutOutcome out;
    out.upsilon = q_tau - c_pre;
    const double up = std::max(out.upsilon, 0.0);
    const double un = std::max(-out.upsilon, 0.0);
    double theta = q_tau;
    if (who == Defaulter::Trader || who == Defaulter::Joint) theta += loss_trader * un;
    if (who == Defaulter::Counterparty || who == Defaulter::Joint) theta -= loss_cpty * up;
    out.theta = theta;
    out.recovery = theta - c_pre;
    return out;
}

}  // namespace xvakit
