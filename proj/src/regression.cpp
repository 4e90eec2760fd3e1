#include "xvakit/regression.hpp"

#include <cmath>
#include <stdexcept>

#include "xvakit/parallel.hpp"

namespace xvakit {

namespace {

// exponent tuples with total degree 1..p over the active assets, low degree first
void enumerate_exponents(std::vector<std::vector<unsigned>>& out, std::vector<unsigned>& cur, std::size_t asset,
                         std::size_t n_assets, unsigned remaining, const std::vector<unsigned char>& active) {
    if (asset == n_assets) {
        out.push_back(cur);
        return;
    }
    const unsigned cap = active[asset] ? remaining : 0;
    for (unsigned e = 0; e <= cap; ++e) {
        cur[asset] = e;
        enumerate_exponents(out, cur, asset + 1, n_assets, remaining - e, active);
    }
    cur[asset] = 0;
}

}  // namespace

NodeRegression::NodeRegression(const double* const* spot_rows, std::size_t n_assets, std::size_t n_paths,
                               const unsigned char* alive, std::size_t degree, std::size_t workers)
    : n_assets_(n_assets), n_paths_(n_paths), degree_(degree), rows_(spot_rows, spot_rows + n_assets) {
    if (n_paths_ == 0) throw std::invalid_argument("NodeRegression: no paths");
    if (alive) alive_.assign(alive, alive + n_paths_);
    n_retained_ = 0;
    if (!alive_.empty()) {
        for (std::size_t p = 0; p < n_paths_; ++p) n_retained_ += alive_[p] ? 1 : 0;
    } else {
        n_retained_ = n_paths_;
    }
    if (n_retained_ == 0) throw std::invalid_argument("NodeRegression: empty retained set");

    build_features(spot_rows, workers);

    // basis: ordered by total degree so a degree fallback is a leading block
    std::vector<std::vector<unsigned>> all;
    all.push_back(std::vector<unsigned>(n_assets_, 0));  // intercept
    for (unsigned d = 1; d <= degree_; ++d) {
        std::vector<std::vector<unsigned>> level;
        std::vector<unsigned> cur(n_assets_, 0);
        enumerate_exponents(level, cur, 0, n_assets_, d, active_);
        for (auto& t : level) {
            unsigned tot = 0;
            for (unsigned e : t) tot += e;
            if (tot == d) all.push_back(t);
        }
    }
    exponents_ = std::move(all);

    assemble_gram(workers);

    // walk degrees downward until the Gram factorizes and paths cover the basis
    for (std::size_t d = degree_ + 1; d-- > 0;) {
        if (factorize(d)) {
            effective_degree_ = d;
            return;
        }
    }
    throw std::logic_error("NodeRegression: intercept-only factorization failed");
}

void NodeRegression::build_features(const double* const* spot_rows, std::size_t workers) {
    x_.resize(n_assets_ * n_paths_);
    mean_.assign(n_assets_, 0.0);
    sd_.assign(n_assets_, 0.0);
    active_.assign(n_assets_, 0);

    const std::size_t n_blocks = (n_paths_ + kPathBlock - 1) / kPathBlock;
    for (std::size_t i = 0; i < n_assets_; ++i) {
        double* xi = x_.data() + i * n_paths_;
        const double* s = spot_rows[i];
        std::vector<double> bsum(n_blocks, 0.0), bsq(n_blocks, 0.0);
        parallel_blocks(n_paths_, workers, [&](std::size_t b, std::size_t begin, std::size_t end) {
            double acc = 0.0, acc2 = 0.0;
            for (std::size_t p = begin; p < end; ++p) {
                const double v = std::log(s[p]);
                xi[p] = v;
                if (alive_.empty() || alive_[p]) {
                    acc += v;
                    acc2 += v * v;
                }
            }
            bsum[b] = acc;
            bsq[b] = acc2;
        });
        const double sum = reduce_blocks(bsum), sq = reduce_blocks(bsq);
        const double n = static_cast<double>(n_retained_);
        mean_[i] = sum / n;
        const double var = std::max(sq / n - mean_[i] * mean_[i], 0.0);
        sd_[i] = std::sqrt(var);
        if (sd_[i] > 1e-12 * std::max(1.0, std::fabs(mean_[i]))) {
            active_[i] = 1;
            const double inv = 1.0 / sd_[i];
            parallel_blocks(n_paths_, workers, [&](std::size_t, std::size_t begin, std::size_t end) {
                for (std::size_t p = begin; p < end; ++p) xi[p] = (xi[p] - mean_[i]) * inv;
            });
        } else {
            sd_[i] = 0.0;
            for (std::size_t p = 0; p < n_paths_; ++p) xi[p] = 0.0;
        }
    }
}

void NodeRegression::assemble_gram(std::size_t workers) {
    const std::size_t nb = exponents_.size();
    gram_.assign(nb * nb, 0.0);
    const std::size_t n_blocks = (n_paths_ + kPathBlock - 1) / kPathBlock;
    std::vector<std::vector<double>> partial(n_blocks);
    parallel_blocks(n_paths_, workers, [&](std::size_t b, std::size_t begin, std::size_t end) {
        std::vector<double> g(nb * nb, 0.0), phi(nb);
        for (std::size_t p = begin; p < end; ++p) {
            if (!alive_.empty() && !alive_[p]) continue;
            for (std::size_t j = 0; j < nb; ++j) {
                double v = 1.0;
                for (std::size_t i = 0; i < n_assets_; ++i)
                    for (unsigned e = 0; e < exponents_[j][i]; ++e) v *= x_[i * n_paths_ + p];
                phi[j] = v;
            }
            for (std::size_t j = 0; j < nb; ++j)
                for (std::size_t l = j; l < nb; ++l) g[j * nb + l] += phi[j] * phi[l];
        }
        partial[b] = std::move(g);
    });
    for (const auto& g : partial)
        for (std::size_t j = 0; j < nb * nb; ++j) gram_[j] += g.empty() ? 0.0 : g[j];
    for (std::size_t j = 0; j < nb; ++j)
        for (std::size_t l = 0; l < j; ++l) gram_[j * nb + l] = gram_[l * nb + j];
    const double inv_n = 1.0 / static_cast<double>(n_retained_);
    for (auto& v : gram_) v *= inv_n;
}

bool NodeRegression::factorize(std::size_t degree_limit) {
    // count basis functions with total degree <= degree_limit
    std::size_t n_use = 0;
    for (const auto& t : exponents_) {
        unsigned tot = 0;
        for (unsigned e : t) tot += e;
        if (tot <= degree_limit) ++n_use;
    }
    if (degree_limit > 0 && n_retained_ < 10 * n_use) return false;
    const std::size_t nb = exponents_.size();
    std::vector<double> l(n_use * n_use, 0.0);
    for (std::size_t i = 0; i < n_use; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double s = gram_[i * nb + j];
            for (std::size_t k = 0; k < j; ++k) s -= l[i * n_use + k] * l[j * n_use + k];
            if (i == j) {
                if (s <= 1e-12 * gram_[i * nb + i] || !(s > 0.0)) return false;
                l[i * n_use + i] = std::sqrt(s);
            } else {
                l[i * n_use + j] = s / l[j * n_use + j];
            }
        }
    }
    chol_ = std::move(l);
    n_use_ = n_use;
    return true;
}

void NodeRegression::fit(const double* y, double* fitted, double* const* delta) const {
    const std::size_t nb = n_use_;
    // rhs = X^T y / n over retained paths, deterministic block reduction
    const std::size_t n_blocks = (n_paths_ + kPathBlock - 1) / kPathBlock;
    std::vector<std::vector<double>> partial(n_blocks);
    parallel_blocks(n_paths_, 0, [&](std::size_t b, std::size_t begin, std::size_t end) {
        std::vector<double> r(nb, 0.0), phi(nb);
        for (std::size_t p = begin; p < end; ++p) {
            if (!alive_.empty() && !alive_[p]) continue;
            for (std::size_t j = 0; j < nb; ++j) {
                double v = 1.0;
                for (std::size_t i = 0; i < n_assets_; ++i)
                    for (unsigned e = 0; e < exponents_[j][i]; ++e) v *= x_[i * n_paths_ + p];
                phi[j] = v;
            }
            for (std::size_t j = 0; j < nb; ++j) r[j] += phi[j] * y[p];
        }
        partial[b] = std::move(r);
    });
    std::vector<double> rhs(nb, 0.0);
    for (const auto& r : partial)
        if (!r.empty())
            for (std::size_t j = 0; j < nb; ++j) rhs[j] += r[j];
    const double inv_n = 1.0 / static_cast<double>(n_retained_);
    for (auto& v : rhs) v *= inv_n;

    // solve L L^T beta = rhs
    std::vector<double> beta(nb);
    for (std::size_t i = 0; i < nb; ++i) {
        double s = rhs[i];
        for (std::size_t k = 0; k < i; ++k) s -= chol_[i * nb + k] * beta[k];
        beta[i] = s / chol_[i * nb + i];
    }
    for (std::size_t i = nb; i-- > 0;) {
        double s = beta[i];
        for (std::size_t k = i + 1; k < nb; ++k) s -= chol_[k * nb + i] * beta[k];
        beta[i] = s / chol_[i * nb + i];
    }

    parallel_blocks(n_paths_, 0, [&](std::size_t, std::size_t begin, std::size_t end) {
        std::vector<double> phi(nb);
        for (std::size_t p = begin; p < end; ++p) {
            for (std::size_t j = 0; j < nb; ++j) {
                double v = 1.0;
                for (std::size_t i = 0; i < n_assets_; ++i)
                    for (unsigned e = 0; e < exponents_[j][i]; ++e) v *= x_[i * n_paths_ + p];
                phi[j] = v;
            }
            double f = 0.0;
            for (std::size_t j = 0; j < nb; ++j) f += beta[j] * phi[j];
            fitted[p] = f;
            if (delta) {
                for (std::size_t i = 0; i < n_assets_; ++i) {
                    if (!delta[i]) continue;
                    if (!active_[i]) {
                        delta[i][p] = 0.0;
                        continue;
                    }
                    double d = 0.0;
                    for (std::size_t j = 0; j < nb; ++j) {
                        const unsigned e = exponents_[j][i];
                        if (e == 0) continue;
                        double v = static_cast<double>(e);
                        for (std::size_t a = 0; a < n_assets_; ++a) {
                            const unsigned cnt = exponents_[j][a] - (a == i ? 1u : 0u);
                            for (unsigned q = 0; q < cnt; ++q) v *= x_[a * n_paths_ + p];
                        }
                        d += beta[j] * v;
                    }
                    delta[i][p] = d / (sd_[i] * rows_[i][p]);
                }
            }
        }
    });
}

}  // namespace xvakit
