#pragma once
#include <cstddef>
#include <vector>

namespace xvakit {

/// Per-node least-squares projection onto polynomials in standardized
/// log-spots, total degree bounded. The Gram matrix is assembled once per
/// node and shared by every regressand fitted at that node. Paths excluded
/// by the alive filter do not influence the fit but still receive fitted
/// values (the fit is a function of the state).
///
/// Rank safety: degrees are dropped from the top until the Gram factorizes
/// and the retained-path count is at least 10x the basis size; degree 0 is
/// the cross-path mean.
class NodeRegression {
  public:
    NodeRegression(const double* const* spot_rows, std::size_t n_assets, std::size_t n_paths,
                   const unsigned char* alive, std::size_t degree, std::size_t workers);

    std::size_t retained() const { return n_retained_; }
    std::size_t basis_size() const { return exponents_.size(); }
    std::size_t effective_degree() const { return effective_degree_; }

    /// Fit y over retained paths; write the fitted value for every path into
    /// `fitted` and, when `delta` is non-null, d(fit)/dS_i into delta[i].
    void fit(const double* y, double* fitted, double* const* delta) const;

  private:
    void build_features(const double* const* spot_rows, std::size_t workers);
    void assemble_gram(std::size_t workers);
    bool factorize(std::size_t degree_limit);

    std::size_t n_assets_ = 0, n_paths_ = 0, n_retained_ = 0;
    std::size_t degree_ = 0, effective_degree_ = 0;
    std::vector<unsigned char> alive_;            // empty means all paths retained
    std::vector<double> x_;                       // standardized log-spots, [asset * n_paths + path]
    std::vector<double> mean_, sd_;               // per asset over retained set
    std::vector<unsigned char> active_;           // assets with nonzero spread in the cloud
    std::vector<std::vector<unsigned>> exponents_;  // basis exponent tuples, by total degree
    std::vector<double> gram_;                    // full-basis Gram, row-major
    std::vector<double> chol_;                    // factor of the leading block in use
    std::size_t n_use_ = 0;                       // basis functions in use after fallback
    std::vector<const double*> rows_;             // per-asset spot rows, for delta evaluation
};

}  // namespace xvakit
