#include "xvakit/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "xvakit/parallel.hpp"
#include "xvakit/rng.hpp"

namespace xvakit {

TimeGrid TimeGrid::build(double horizon, std::size_t steps, const std::vector<double>& mandatory) {
    if (!(horizon > 0.0)) throw std::invalid_argument("TimeGrid: horizon must be positive");
    if (steps < 1) throw std::invalid_argument("TimeGrid: need at least one step");
    std::vector<double> nodes;
    nodes.reserve(steps + 1 + mandatory.size());
    for (std::size_t k = 0; k <= steps; ++k)
        nodes.push_back(horizon * static_cast<double>(k) / static_cast<double>(steps));
    nodes.back() = horizon;
    for (double t : mandatory) {
        if (t < 0.0 || t > horizon * (1.0 + 1e-12))
            throw std::invalid_argument("TimeGrid: mandatory time outside horizon");
        nodes.push_back(std::min(t, horizon));
    }
    std::sort(nodes.begin(), nodes.end());
    // merge nodes closer than a relative epsilon, keeping the mandatory value
    std::vector<double> merged;
    merged.push_back(0.0);
    const double eps = horizon * 1e-12;
    for (double t : nodes) {
        if (t - merged.back() > eps)
            merged.push_back(t);
        else if (t > merged.back())
            merged.back() = t;  // snap to the later (mandatory) value
    }
    merged.back() = horizon;
    TimeGrid g;
    g.nodes = std::move(merged);
    return g;
}

std::size_t TimeGrid::cell_of(double t) const {
    if (!(t > 0.0) || t > nodes.back())
        throw std::out_of_range("TimeGrid::cell_of: time outside (0, horizon]");
    const auto it = std::lower_bound(nodes.begin(), nodes.end(), t);
    std::size_t idx = static_cast<std::size_t>(it - nodes.begin());
    return idx - 1;  // nodes[idx-1] < t <= nodes[idx] since nodes[0] = 0 < t
}

PathEnsemble simulate_assets(const AssetModel& model, const std::vector<RateCurve>& drifts, const TimeGrid& grid,
                             std::uint64_t seed, std::size_t n_paths, std::size_t workers) {
    const std::size_t m = model.size();
    if (drifts.size() != m) throw std::invalid_argument("simulate_assets: drift curve count mismatch");
    if (n_paths < 1) throw std::invalid_argument("simulate_assets: need at least one path");
    const std::size_t cells = grid.cells();
    if (cells * m > 0xFFFFFFFFull / 2) throw std::invalid_argument("simulate_assets: grid too large for draw indexing");

    PathEnsemble e;
    e.grid = grid;
    e.n_paths = n_paths;
    e.n_assets = m;
    e.spots.resize((cells + 1) * m * n_paths);
    e.drift_integral.assign((cells + 1) * m, 0.0);

    // per-cell log-step mean and diffusion scale, exact for piecewise-constant drift
    std::vector<double> mu(cells * m), sig(cells * m);
    for (std::size_t k = 0; k < cells; ++k) {
        const double dt = grid.dt(k);
        for (std::size_t i = 0; i < m; ++i) {
            const double gi = drifts[i].integral(grid.nodes[k], grid.nodes[k + 1]);
            e.drift_integral[(k + 1) * m + i] = e.drift_integral[k * m + i] + gi;
            mu[k * m + i] = gi - 0.5 * model.vol(i) * model.vol(i) * dt;
            sig[k * m + i] = model.vol(i) * std::sqrt(dt);
        }
    }

    const Philox rng(seed);
    const std::vector<double>& chol = model.chol();

    parallel_blocks(n_paths, workers, [&](std::size_t, std::size_t begin, std::size_t end) {
        std::vector<double> z(m), logs(m), base(m);
        for (std::size_t i = 0; i < m; ++i) base[i] = std::log(model.spot(i));
        for (std::size_t p = begin; p < end; ++p) {
            for (std::size_t i = 0; i < m; ++i) {
                logs[i] = base[i];
                e.spot(0, i)[p] = model.spot(i);
            }
            for (std::size_t k = 0; k < cells; ++k) {
                for (std::size_t i = 0; i < m; ++i)
                    z[i] = rng.normal(p, DrawStreams::kNormals, static_cast<std::uint32_t>(k * m + i));
                for (std::size_t i = 0; i < m; ++i) {
                    double w = 0.0;
                    for (std::size_t j = 0; j <= i; ++j) w += chol[i * m + j] * z[j];
                    logs[i] += mu[k * m + i] + sig[k * m + i] * w;
                    e.spot(k + 1, i)[p] = std::exp(logs[i]);
                }
            }
        }
    });
    return e;
}

void sample_default_times(PathEnsemble& e, const DefaultModel& credit, std::uint64_t seed, std::size_t workers) {
    const double T = e.grid.horizon();
    const Philox rng(seed);
    const double inf = std::numeric_limits<double>::infinity();
    e.tau_trader.assign(e.n_paths, inf);
    e.tau_cpty.assign(e.n_paths, inf);
    e.tau_external.assign(e.n_paths, inf);
    auto nonzero = [](const RateCurve& c) {
        for (double v : c.values())
            if (v != 0.0) return true;
        return false;
    };
    const bool has_i = nonzero(credit.lambda_trader);
    const bool has_c = nonzero(credit.lambda_cpty);
    const bool has_e = nonzero(credit.lambda_external);
    parallel_blocks(e.n_paths, workers, [&](std::size_t, std::size_t begin, std::size_t end) {
        for (std::size_t p = begin; p < end; ++p) {
            if (has_i)
                e.tau_trader[p] =
                    DefaultModel::inverse_cumulative(credit.lambda_trader, rng.exponential(p, DrawStreams::kDefaults, 0), T);
            if (has_c)
                e.tau_cpty[p] =
                    DefaultModel::inverse_cumulative(credit.lambda_cpty, rng.exponential(p, DrawStreams::kDefaults, 1), T);
            if (has_e)
                e.tau_external[p] =
                    DefaultModel::inverse_cumulative(credit.lambda_external, rng.exponential(p, DrawStreams::kDefaults, 2), T);
        }
    });
}

}  // namespace xvakit
