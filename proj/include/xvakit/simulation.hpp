#pragma once
#include <cstddef>
#include <cstdint>
#include <limits>
#include <vector>

#include "xvakit/contracts.hpp"
#include "xvakit/market.hpp"
#include "xvakit/problem.hpp"

namespace xvakit {

/// Uniform base grid refined so every payment date is a node.
struct TimeGrid {
    std::vector<double> nodes;  // t_0 = 0 < ... < t_M = horizon

    static TimeGrid build(double horizon, std::size_t steps, const std::vector<double>& mandatory);

    std::size_t cells() const { return nodes.size() - 1; }
    double dt(std::size_t k) const { return nodes[k + 1] - nodes[k]; }
    double horizon() const { return nodes.back(); }

    /// Index k with nodes[k] < t <= nodes[k+1]; requires 0 < t <= horizon.
    std::size_t cell_of(double t) const;
};

/// Simulated paths under a chosen drift assignment, with default times.
/// Spot storage is node-major: spot(k, i)[path].
class PathEnsemble {
  public:
    TimeGrid grid;
    std::size_t n_paths = 0, n_assets = 0;
    std::vector<double> spots;                      // [(node * n_assets + asset) * n_paths + path]
    std::vector<double> tau_trader, tau_cpty, tau_external;  // +inf when no default
    std::vector<double> drift_integral;             // per (node, asset): int_0^{t_k} gamma_i
    std::string measure_label;

    const double* spot(std::size_t node, std::size_t asset) const {
        return spots.data() + (node * n_assets + asset) * n_paths;
    }
    double* spot(std::size_t node, std::size_t asset) {
        return spots.data() + (node * n_assets + asset) * n_paths;
    }

    double tau(std::size_t path) const { return std::min(tau_trader[path], tau_cpty[path]); }
    Defaulter defaulter(std::size_t path) const {
        const double ti = tau_trader[path], tc = tau_cpty[path];
        if (ti < tc) return Defaulter::Trader;
        if (tc < ti) return Defaulter::Counterparty;
        return Defaulter::Joint;
    }
};

/// Exact lognormal stepping with per-cell integrated drift; correlated
/// normals from the model's Cholesky factor. Draw (path, step, asset) is a
/// pure function of the seed, so any worker count gives identical paths.
PathEnsemble simulate_assets(const AssetModel& model, const std::vector<RateCurve>& drifts, const TimeGrid& grid,
                             std::uint64_t seed, std::size_t n_paths, std::size_t workers);

/// Inverse-transform default times appended to an existing ensemble.
void sample_default_times(PathEnsemble& ensemble, const DefaultModel& credit, std::uint64_t seed,
                          std::size_t workers);

}  // namespace xvakit
