#pragma once

// Test-side oracles, kept independent of the library implementation paths
// they check. Closed forms are frozen as literals where they were computed
// by hand; everything else is brute-force evaluated here.

#include <cmath>
#include <cstddef>
#include <vector>

namespace oracle {

// --- frozen closed-form constants -------------------------------------------

// 0.5 * (1 + 2^1.4 - 1) = 2^0.4
inline constexpr double kFbmCovH07_s1_t2 = 1.3195079107728942;

// adjacent-increment correlation of fractional noise: 2^{2H-1} - 1
inline constexpr double kAdjacentCorrH07 = 0.3195079107728942;  // 2^0.4 - 1
inline constexpr double kAdjacentCorrH03 = -0.242141716744801; // 2^-0.4 - 1
inline constexpr double kAdjacentCorrH075 = 0.41421356237309515; // 2^0.5 - 1

// squared-increment covariance for jointly Gaussian pairs: 2 * Cov(a,b)^2
// at H = 0.75, T = 1: 2 * (2^0.5 - 1)^2
inline constexpr double kWickVolatilityH075T1 = 0.34314575050762;

// (1 - e^{-10}) / 10
inline constexpr double kErgodicIntegralExp10 = 0.09999546000702375;

// ln(1.1)
inline constexpr double kLogReturn10pct = 0.09531017980432493;

// --- brute-force oracles -----------------------------------------------------

// fBm covariance, written out directly from the self-affine scaling law.
inline double fbm_cov(double s, double t, double hurst, double sigma = 1.0) {
    const double h2 = 2.0 * hurst;
    return 0.5 * sigma * sigma *
           (std::pow(s, h2) + std::pow(t, h2) - std::pow(std::abs(t - s), h2));
}

// Cov(x(e1)-x(s1), x(e2)-x(s2)) by bilinearity from fbm_cov.
inline double fbm_increment_cov(double s1, double e1, double s2, double e2, double hurst,
                                double sigma = 1.0) {
    return fbm_cov(e1, e2, hurst, sigma) - fbm_cov(e1, s2, hurst, sigma) -
           fbm_cov(s1, e2, hurst, sigma) + fbm_cov(s1, s2, hurst, sigma);
}

// Correlation of fractional-noise increments k windows apart (window = lag T).
inline double fgn_corr(std::size_t k, double hurst) {
    if (k == 0) return 1.0;
    const double h2 = 2.0 * hurst;
    const double kk = static_cast<double>(k);
    return 0.5 * (std::pow(kk + 1.0, h2) - 2.0 * std::pow(kk, h2) + std::pow(kk - 1.0, h2));
}

// Variance of the sliding MSF (mean of N squared fractional-noise increments,
// stride = T) via the Gaussian fourth-moment identity Cov(a^2,b^2) = 2Cov(a,b)^2.
inline double sliding_msf_variance(std::size_t n_windows, double hurst, double lag = 1.0,
                                   double sigma = 1.0) {
    const double var_z = sigma * sigma * std::pow(lag, 2.0 * hurst);
    double s = 1.0;
    for (std::size_t k = 1; k < n_windows; ++k) {
        const double rho = fgn_corr(k, hurst);
        s += 2.0 * (1.0 - static_cast<double>(k) / static_cast<double>(n_windows)) * rho * rho;
    }
    return 2.0 * var_z * var_z * s / static_cast<double>(n_windows);
}

// Small-t second moment of dx = sqrt(1+|x|) dW from x0 = 0:
// d<x^2>/dt = 1 + E|x|, with E|x(s)| ~ sqrt(2s/pi) to leading order.
inline double one_plus_abs_x_small_t_variance(double t) {
    return t + (2.0 / 3.0) * std::sqrt(2.0 / M_PI) * std::pow(t, 1.5);
}

// Stationary OU autocovariance.
inline double ou_autocov(double lag, double theta, double sigma) {
    return sigma * sigma / (2.0 * theta) * std::exp(-theta * std::abs(lag));
}

// Variance of the time-only diffusion dx = sqrt(e^{gamma s}) dW by plain
// trapezoid quadrature of the diffusion coefficient.
inline double exp_t_variance(double t, double gamma, std::size_t n_panels = 100000) {
    double acc = 0.0;
    const double h = t / static_cast<double>(n_panels);
    for (std::size_t i = 0; i < n_panels; ++i) {
        const double a = static_cast<double>(i) * h;
        acc += 0.5 * (std::exp(gamma * a) + std::exp(gamma * (a + h))) * h;
    }
    return acc;
}

// Standard error of a Gaussian sample variance: sigma^2 sqrt(2/(n-1)).
inline double variance_se(double variance, std::size_t n) {
    return variance * std::sqrt(2.0 / static_cast<double>(n - 1));
}

// Large-sample standard error of a Gaussian sample covariance.
inline double covariance_se(double cov_ss, double cov_tt, double cov_st, std::size_t n) {
    return std::sqrt((cov_ss * cov_tt + cov_st * cov_st) / static_cast<double>(n - 1));
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

} // namespace oracle
