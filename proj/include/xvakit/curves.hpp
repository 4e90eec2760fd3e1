#pragma once
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace xvakit {

/// Piecewise-constant deterministic rate curve r(t).
/// Segment i applies on [times[i], times[i+1]); the last value extends to +inf,
/// and values[0] extends to -inf. times must be strictly increasing.
/// With n values there are n-1 interior breakpoints: value i applies up to times[i].
class RateCurve {
  public:
    RateCurve() : values_{0.0} {}

    explicit RateCurve(double flat_value) : values_{flat_value} {}

    RateCurve(std::vector<double> breakpoints, std::vector<double> values)
        : times_(std::move(breakpoints)), values_(std::move(values)) {
        if (values_.empty()) throw std::invalid_argument("RateCurve: no values");
        if (times_.size() + 1 != values_.size())
            throw std::invalid_argument("RateCurve: need one more value than breakpoint");
        for (std::size_t i = 1; i < times_.size(); ++i)
            if (!(times_[i - 1] < times_[i])) throw std::invalid_argument("RateCurve: breakpoints not increasing");
    }

    static RateCurve flat(double v) { return RateCurve(v); }

    bool is_flat() const { return values_.size() == 1; }

    double operator()(double t) const {
        std::size_t i = 0;
        while (i < times_.size() && t >= times_[i]) ++i;
        return values_[i];
    }

    /// Exact integral of the step function over [a, b]. Sign-aware: integral(a,b) = -integral(b,a).
    double integral(double a, double b) const {
        if (a == b) return 0.0;
        if (a > b) return -integral(b, a);
        if (values_.size() == 1) return values_[0] * (b - a);
        double acc = 0.0;
        double lo = a;
        std::size_t i = 0;
        while (i < times_.size() && times_[i] <= lo) ++i;
        for (; i < times_.size() && times_[i] < b; ++i) {
            acc += values_[i] * (times_[i] - lo);
            lo = times_[i];
        }
        acc += values_[i] * (b - lo);
        return acc;
    }

    /// exp(-integral(a,b))
    double discount(double a, double b) const { return std::exp(-integral(a, b)); }

    RateCurve scaled(double k) const {
        RateCurve out = *this;
        for (auto& v : out.values_) v *= k;
        return out;
    }

    RateCurve shifted(double dv) const {
        RateCurve out = *this;
        for (auto& v : out.values_) v += dv;
        return out;
    }

    friend RateCurve operator+(const RateCurve& a, const RateCurve& b) { return combine(a, b, +1.0); }
    friend RateCurve operator-(const RateCurve& a, const RateCurve& b) { return combine(a, b, -1.0); }

    bool operator==(const RateCurve& o) const { return times_ == o.times_ && values_ == o.values_; }
    bool operator!=(const RateCurve& o) const { return !(*this == o); }

    const std::vector<double>& breakpoints() const { return times_; }
    const std::vector<double>& values() const { return values_; }

  private:
    static RateCurve combine(const RateCurve& a, const RateCurve& b, double sgn) {
        std::vector<double> bp;
        bp.reserve(a.times_.size() + b.times_.size());
        std::size_t i = 0, j = 0;
        while (i < a.times_.size() || j < b.times_.size()) {
            double t;
            if (j == b.times_.size() || (i < a.times_.size() && a.times_[i] < b.times_[j]))
                t = a.times_[i++];
            else if (i == a.times_.size() || b.times_[j] < a.times_[i])
                t = b.times_[j++];
            else {
                t = a.times_[i];
                ++i;
                ++j;
            }
            bp.push_back(t);
        }
        std::vector<double> vals;
        vals.reserve(bp.size() + 1);
        auto mid = [&](std::size_t k) {
            // representative point inside segment k of the merged grid
            if (bp.empty()) return 0.0;
            if (k == 0) return bp[0] - 1.0;
            if (k == bp.size()) return bp.back() + 1.0;
            return 0.5 * (bp[k - 1] + bp[k]);
        };
        for (std::size_t k = 0; k <= bp.size(); ++k) {
            double t = mid(k);
            vals.push_back(a(t) + sgn * b(t));
        }
        if (bp.empty()) return RateCurve(vals[0]);
        return RateCurve(std::move(bp), std::move(vals));
    }

    std::vector<double> times_;   // interior breakpoints, strictly increasing
    std::vector<double> values_;  // one more than breakpoints
};

/// Exact int_a^b exp(-int_0^u rate) du for a piecewise-constant curve.
inline double annuity_integral(const RateCurve& rate, double a, double b) {
    if (!(b > a)) return 0.0;
    const auto& bp = rate.breakpoints();
    const auto& vals = rate.values();
    double defl = std::exp(-rate.integral(0.0, a));
    double acc = 0.0;
    double lo = a;
    std::size_t i = 0;
    while (i < bp.size() && bp[i] <= lo) ++i;
    for (;; ++i) {
        const double hi = (i < bp.size() && bp[i] < b) ? bp[i] : b;
        const double v = vals[i];
        const double d = hi - lo;
        acc += defl * (v == 0.0 ? d : -std::expm1(-v * d) / v);
        if (hi == b) break;
        defl *= std::exp(-v * d);
        lo = hi;
    }
    return acc;
}

}  // namespace xvakit
