#pragma once
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "xvakit/curves.hpp"

namespace xvakit {

/// Asymmetric rate: earned when the relevant position lends, paid when it borrows.
struct RatePair {
    RateCurve lend;
    RateCurve borrow;

    RatePair() = default;
    RatePair(RateCurve l, RateCurve b) : lend(std::move(l)), borrow(std::move(b)) {}
    static RatePair flat(double l, double b) { return {RateCurve::flat(l), RateCurve::flat(b)}; }
    static RatePair symmetric(RateCurve v) { return {v, v}; }

    bool degenerate() const { return lend == borrow; }
};

/// All deterministic rates in the economy. h has one pair per hedge asset.
struct RateSystem {
    RateCurve r;               // risk-free
    RatePair f;                // unsecured treasury funding (lend/borrow)
    std::vector<RatePair> h;   // repo on each hedge asset (lend/borrow)
    RatePair c;                // collateral remuneration (posted/received)

    void require_assets(std::size_t n) const {
        if (h.size() != n) throw std::invalid_argument("RateSystem: repo pair count does not match asset count");
    }
};

/// Correlated lognormal assets. Correlation must be symmetric positive definite.
class AssetModel {
  public:
    AssetModel() = default;

    AssetModel(std::vector<double> spots, std::vector<double> vols, std::vector<double> correlation = {})
        : spot_(std::move(spots)), vol_(std::move(vols)) {
        const std::size_t n = spot_.size();
        if (n == 0) throw std::invalid_argument("AssetModel: no assets");
        if (vol_.size() != n) throw std::invalid_argument("AssetModel: vol count mismatch");
        for (double s : spot_)
            if (!(s > 0.0)) throw std::invalid_argument("AssetModel: spot must be positive");
        for (double v : vol_)
            if (v < 0.0) throw std::invalid_argument("AssetModel: negative vol");
        if (correlation.empty()) {
            corr_.assign(n * n, 0.0);
            for (std::size_t i = 0; i < n; ++i) corr_[i * n + i] = 1.0;
        } else {
            if (correlation.size() != n * n) throw std::invalid_argument("AssetModel: correlation size mismatch");
            corr_ = std::move(correlation);
            for (std::size_t i = 0; i < n; ++i) {
                if (std::fabs(corr_[i * n + i] - 1.0) > 1e-12)
                    throw std::invalid_argument("AssetModel: correlation diagonal must be 1");
                for (std::size_t j = 0; j < i; ++j)
                    if (std::fabs(corr_[i * n + j] - corr_[j * n + i]) > 1e-12)
                        throw std::invalid_argument("AssetModel: correlation not symmetric");
            }
        }
        chol_ = cholesky(corr_, n);
    }

    std::size_t size() const { return spot_.size(); }
    double spot(std::size_t i) const { return spot_[i]; }
    double vol(std::size_t i) const { return vol_[i]; }
    const std::vector<double>& spots() const { return spot_; }
    const std::vector<double>& correlation() const { return corr_; }
    /// Lower-triangular factor L with L L^T = correlation, row-major n x n.
    const std::vector<double>& chol() const { return chol_; }

  private:
    static std::vector<double> cholesky(const std::vector<double>& a, std::size_t n) {
        std::vector<double> l(n * n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j <= i; ++j) {
                double s = a[i * n + j];
                for (std::size_t k = 0; k < j; ++k) s -= l[i * n + k] * l[j * n + k];
                if (i == j) {
                    if (s <= 0.0) throw std::invalid_argument("AssetModel: correlation not positive definite");
                    l[i * n + i] = std::sqrt(s);
                } else {
                    l[i * n + j] = s / l[j * n + j];
                }
            }
        }
        return l;
    }

    std::vector<double> spot_;
    std::vector<double> vol_;
    std::vector<double> corr_;
    std::vector<double> chol_;
};

/// Deterministic default intensities for the two parties (and the optional
/// external funder), with fractional losses given default.
struct DefaultModel {
    RateCurve lambda_trader{0.0};
    RateCurve lambda_cpty{0.0};
    double loss_trader = 0.0;  // L_I in [0,1]
    double loss_cpty = 0.0;    // L_C in [0,1]
    RateCurve lambda_external{0.0};
    double loss_external = 0.0;

    void validate(double horizon) const {
        auto check = [&](const RateCurve& lam, const char* what) {
            // piecewise constant: checking segment values suffices
            for (double v : lam.values())
                if (v < 0.0) throw std::invalid_argument(std::string("DefaultModel: negative intensity for ") + what);
            (void)horizon;
        };
        check(lambda_trader, "trader");
        check(lambda_cpty, "counterparty");
        check(lambda_external, "external funder");
        for (double L : {loss_trader, loss_cpty, loss_external})
            if (L < 0.0 || L > 1.0) throw std::invalid_argument("DefaultModel: loss fraction outside [0,1]");
    }

    bool has_defaults() const {
        auto nonzero = [](const RateCurve& c) {
            for (double v : c.values())
                if (v != 0.0) return true;
            return false;
        };
        return nonzero(lambda_trader) || nonzero(lambda_cpty);
    }

    /// Cumulative hazard of one name on [0, t].
    static double cumulative(const RateCurve& lam, double t) { return lam.integral(0.0, t); }

    /// Smallest t with cumulative(lam, t) >= e, or +inf if never reached before horizon.
    static double inverse_cumulative(const RateCurve& lam, double e, double horizon) {
        if (e <= 0.0) return 0.0;
        const double total = cumulative(lam, horizon);
        if (e > total) return std::numeric_limits<double>::infinity();
        // walk segments of the piecewise-linear cumulative hazard
        double lo = 0.0, acc = 0.0;
        const auto& bp = lam.breakpoints();
        const auto& vals = lam.values();
        for (std::size_t i = 0; i <= bp.size(); ++i) {
            const double hi = (i < bp.size()) ? std::min(bp[i], horizon) : horizon;
            if (hi <= lo) {
                if (i < bp.size() && bp[i] >= horizon) break;
                continue;
            }
            const double seg = vals[i] * (hi - lo);
            if (acc + seg >= e) {
                if (vals[i] <= 0.0) return hi;  // flat segment: jump lands at its right edge
                return lo + (e - acc) / vals[i];
            }
            acc += seg;
            lo = hi;
            if (hi >= horizon) break;
        }
        return horizon;  // e == total up to roundoff
    }

    static double survival(const RateCurve& lam, double t) { return std::exp(-cumulative(lam, t)); }
};

/// Instrumental deflator/measure pair: cash flows are deflated at eta while
/// assets drift at gamma_i. The valuation identity holds for any choice; the
/// named presets are the two used operationally.
struct DeflatorChoice {
    RateCurve eta;                  // deflation rate
    std::vector<RateCurve> gamma;   // asset drift under the pricing measure, one per asset
    std::string label = "custom";

    static DeflatorChoice risk_free(const RateSystem& rates, std::size_t n_assets) {
        DeflatorChoice d;
        d.eta = rates.r;
        d.gamma.assign(n_assets, rates.r);
        d.label = "risk_free";
        return d;
    }

    /// Requires symmetric treasury and repo rates: deflate at f, drift each asset at h_i.
    static DeflatorChoice funding(const RateSystem& rates, std::size_t n_assets) {
        if (!rates.f.degenerate())
            throw std::invalid_argument("DeflatorChoice::funding: treasury spread must be zero");
        rates.require_assets(n_assets);
        DeflatorChoice d;
        d.eta = rates.f.lend;
        d.gamma.reserve(n_assets);
        for (std::size_t i = 0; i < n_assets; ++i) {
            if (!rates.h[i].degenerate())
                throw std::invalid_argument("DeflatorChoice::funding: repo spread must be zero");
            d.gamma.push_back(rates.h[i].lend);
        }
        d.label = "funding";
        return d;
    }

    /// Deflate at an explicit eta, drift assets at their (symmetric) repo rates.
    static DeflatorChoice repo(const RateSystem& rates, std::size_t n_assets, RateCurve eta_curve) {
        rates.require_assets(n_assets);
        DeflatorChoice d;
        d.eta = std::move(eta_curve);
        d.gamma.reserve(n_assets);
        for (std::size_t i = 0; i < n_assets; ++i) {
            if (!rates.h[i].degenerate())
                throw std::invalid_argument("DeflatorChoice::repo: repo spread must be zero");
            d.gamma.push_back(rates.h[i].lend);
        }
        d.label = "repo";
        return d;
    }
};

}  // namespace xvakit
