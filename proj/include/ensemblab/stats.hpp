#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <vector>

#include "ensemblab/errors.hpp"

namespace ensemblab::stats {

inline double mean(std::span<const double> xs) {
    if (xs.empty()) throw rejected_input("mean of empty sample");
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

/// Unbiased sample variance (n-1 denominator); 0 for a single sample.
inline double variance(std::span<const double> xs) {
    const std::size_t n = xs.size();
    if (n == 0) throw rejected_input("variance of empty sample");
    if (n == 1) return 0.0;
    const double m = mean(xs);
    double acc = 0.0;
    for (double x : xs) acc += (x - m) * (x - m);
    return acc / static_cast<double>(n - 1);
}

inline double std_dev(std::span<const double> xs) { return std::sqrt(variance(xs)); }

/// Naive i.i.d. standard error of the mean: s / sqrt(n).
inline double standard_error(std::span<const double> xs) {
    return std_dev(xs) / std::sqrt(static_cast<double>(xs.size()));
}

/// Lag-1 sample autocorrelation of a sequence; 0 when degenerate.
inline double autocorr_lag1(std::span<const double> xs) {
    const std::size_t n = xs.size();
    if (n < 2) return 0.0;
    const double m = mean(xs);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = xs[i] - m;
        den += d * d;
        if (i + 1 < n) num += d * (xs[i + 1] - m);
    }
    if (den <= 0.0) return 0.0;
    return std::clamp(num / den, -1.0, 1.0);
}

/// Sample covariance (n-1 denominator).
inline double covariance(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size()) throw rejected_input("covariance: size mismatch");
    const std::size_t n = xs.size();
    if (n < 2) throw insufficient_data("covariance needs >= 2 samples");
    const double mx = mean(xs), my = mean(ys);
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += (xs[i] - mx) * (ys[i] - my);
    return acc / static_cast<double>(n - 1);
}

inline double pearson(std::span<const double> xs, std::span<const double> ys) {
    const double sx = std_dev(xs), sy = std_dev(ys);
    if (sx <= 0.0 || sy <= 0.0) return 0.0;
    return std::clamp(covariance(xs, ys) / (sx * sy), -1.0, 1.0);
}

/// Ordinary least-squares slope of y on x.
inline double ols_slope(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size() || xs.size() < 2) throw rejected_input("ols_slope: bad inputs");
    const double mx = mean(xs), my = mean(ys);
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
    }
    if (sxx <= 0.0) throw numerical_error("ols_slope: degenerate abscissae");
    return sxy / sxx;
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// ---------------------------------------------------------------------------
// Kolmogorov-Smirnov
// ---------------------------------------------------------------------------

/// Asymptotic KS critical coefficient c(alpha) = sqrt(-ln(alpha/2)/2).
inline double ks_critical_coefficient(double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw rejected_input("KS level must be in (0,1)");
    return std::sqrt(-std::log(alpha / 2.0) / 2.0);
}

struct KsResult {
    double statistic = 0.0;
    double critical_value = 0.0;
    double alpha = 0.0;
    std::size_t n_a = 0;
    std::size_t n_b = 0;
    bool binned = false;

    bool passes() const { return statistic < critical_value; }
};

/// Two-sample KS on raw samples.
inline KsResult ks_two_sample(std::vector<double> a, std::vector<double> b, double alpha = 0.01) {
    if (a.empty() || b.empty()) throw rejected_input("ks_two_sample: empty sample");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    double d = 0.0;
    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        // step both CDFs past the smallest value, handling ties together
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] == x) ++i;
        while (j < b.size() && b[j] == x) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    KsResult r;
    r.statistic = d;
    r.alpha = alpha;
    r.n_a = a.size();
    r.n_b = b.size();
    r.critical_value = ks_critical_coefficient(alpha) * std::sqrt((na + nb) / (na * nb));
    return r;
}

/// One-sample KS against a reference CDF.
inline KsResult ks_one_sample(std::vector<double> xs, const std::function<double(double)>& cdf,
                              double alpha = 0.01) {
    if (xs.empty()) throw rejected_input("ks_one_sample: empty sample");
    std::sort(xs.begin(), xs.end());
    const double n = static_cast<double>(xs.size());
    double d = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double f = cdf(xs[i]);
        d = std::max(d, std::abs(static_cast<double>(i + 1) / n - f));
        d = std::max(d, std::abs(f - static_cast<double>(i) / n));
    }
    KsResult r;
    r.statistic = d;
    r.alpha = alpha;
    r.n_a = xs.size();
    r.n_b = 0;
    r.critical_value = ks_critical_coefficient(alpha) / std::sqrt(n);
    return r;
}

/// Percentile (nearest-rank) of a sample, p in [0,1].
inline double percentile(std::vector<double> xs, double p) {
    if (xs.empty()) throw rejected_input("percentile of empty sample");
    std::sort(xs.begin(), xs.end());
    const double rank = p * static_cast<double>(xs.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(rank));
    const std::size_t hi = std::min(lo + 1, xs.size() - 1);
    const double w = rank - static_cast<double>(lo);
    return (1.0 - w) * xs[lo] + w * xs[hi];
}

} // namespace ensemblab::stats
