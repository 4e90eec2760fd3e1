#pragma once
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

#include "xvakit/contracts.hpp"
#include "xvakit/curves.hpp"
#include "xvakit/market.hpp"

namespace xvakit {

enum class MeasurePreset { RiskFree, Funding, Custom };

inline const char* measure_name(MeasurePreset m) {
    switch (m) {
        case MeasurePreset::RiskFree: return "risk_free";
        case MeasurePreset::Funding: return "funding";
        case MeasurePreset::Custom: return "custom";
    }
    return "?";
}

/// External funding conventions: who absorbs funding-account losses at default.
enum class ExternalConvention { Independent, NetBorrower };

struct ExternalFundingSpec {
    bool enabled = false;
    ExternalConvention convention = ExternalConvention::NetBorrower;
    RateCurve bank_borrowing{0.0};  // bank-wide external borrowing path Y_t (currency), <= 0 under NetBorrower
};

struct RunConfig {
    std::size_t paths = 100000;
    std::size_t steps = 128;           // uniform base cells; payment dates refine the grid
    std::uint64_t seed = 42;
    std::size_t workers = 0;           // 0: XVAKIT_WORKERS env var, else hardware concurrency
    std::size_t basis_degree = 3;
    double picard_tol = 1e-8;          // relative to notional scale, sup over node means
    std::size_t picard_max_iter = 50;
    double notional_scale = 0.0;       // 0: defaults to first asset spot
    bool keep_path_terms = false;      // retain per-path leg values (tests only)
    MeasurePreset measure = MeasurePreset::RiskFree;
    RateCurve custom_eta{0.0};         // deflation rate for MeasurePreset::Custom
};

struct PricingProblem {
    RateSystem rates;
    AssetModel assets;
    DefaultModel credit;
    Contract contract;
    CollateralSpec collateral;
    CloseoutSpec closeout;
    ExternalFundingSpec external;
    RateCurve funding_spread{0.0};     // s^f for the incomplete-market mode
    bool fair_spread_auto = true;      // s^f := L_I * lambda_I when true

    double horizon() const { return contract.horizon(); }

    double scale(const RunConfig& run) const {
        return run.notional_scale > 0.0 ? run.notional_scale : assets.spot(0);
    }

    void validate() const {
        if (assets.size() == 0) throw std::invalid_argument("PricingProblem: no assets");
        rates.require_assets(assets.size());
        contract.validate(assets.size());
        const double T = horizon();
        if (!(T > 0.0)) throw std::invalid_argument("PricingProblem: empty horizon");
        credit.validate(T);
        if (collateral.kind == CollateralSpec::Kind::Fraction && !std::isfinite(collateral.alpha))
            throw std::invalid_argument("PricingProblem: collateral fraction not finite");
    }

    bool linear_rates() const {
        if (!rates.f.degenerate() || !rates.c.degenerate()) return false;
        for (const auto& p : rates.h)
            if (!p.degenerate()) return false;
        return true;
    }
};

}  // namespace xvakit
