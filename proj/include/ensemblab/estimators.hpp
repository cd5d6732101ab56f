#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ensemblab/errors.hpp"
#include "ensemblab/path.hpp"
#include "ensemblab/rng.hpp"
#include "ensemblab/simulate.hpp"
#include "ensemblab/stats.hpp"

namespace ensemblab {

/// One increment observation z = x(t+T) - x(t) with its window tags.
struct IncrementSample {
    double z = 0.0;
    double t = 0.0;
    double lag = 0.0;
};

/// Point estimate with the naive i.i.d. standard error. autocorr_lag1 is the
/// lag-1 sample autocorrelation of the averaged summands: when it is far from
/// zero the i.i.d. error bar is not trustworthy, and consumers are expected
/// to judge that themselves.
struct EstimatorReport {
    double estimate = 0.0;
    double std_error = 0.0;
    std::size_t n_samples = 0;
    double autocorr_lag1 = 0.0;
    std::string notes;

    nlohmann::json to_json() const {
        return {{"estimate", estimate},
                {"std_error", std_error},
                {"n_samples", n_samples},
                {"autocorr_lag1", autocorr_lag1},
                {"notes", notes}};
    }

    static EstimatorReport from_json(const nlohmann::json& j) {
        EstimatorReport r;
        r.estimate = j.at("estimate").get<double>();
        r.std_error = j.at("std_error").get<double>();
        r.n_samples = j.at("n_samples").get<std::size_t>();
        r.autocorr_lag1 = j.at("autocorr_lag1").get<double>();
        r.notes = j.value("notes", "");
        return r;
    }

    friend bool operator==(const EstimatorReport&, const EstimatorReport&) = default;
};

enum class CurveKind { PairCorrelation, IncrementAutocorr, VolatilityCorr };

inline std::string to_string(CurveKind k) {
    switch (k) {
    case CurveKind::PairCorrelation: return "pair_correlation";
    case CurveKind::IncrementAutocorr: return "increment_autocorr";
    case CurveKind::VolatilityCorr: return "volatility_corr";
    }
    throw rejected_input("unknown curve kind");
}

inline CurveKind curve_kind_from_string(const std::string& s) {
    if (s == "pair_correlation") return CurveKind::PairCorrelation;
    if (s == "increment_autocorr") return CurveKind::IncrementAutocorr;
    if (s == "volatility_corr") return CurveKind::VolatilityCorr;
    throw rejected_input("unknown curve kind '" + s + "'");
}

struct CorrelationCurve {
    std::vector<double> lags;
    std::vector<double> values;
    CurveKind kind = CurveKind::PairCorrelation;

    void validate() const {
        if (lags.size() != values.size()) throw rejected_input("CorrelationCurve: size mismatch");
        for (std::size_t i = 0; i + 1 < lags.size(); ++i)
            if (!(lags[i] < lags[i + 1]))
                throw rejected_input("CorrelationCurve: lags must be strictly increasing");
        for (double v : values)
            if (!std::isfinite(v)) throw numerical_error("CorrelationCurve: non-finite value");
    }

    nlohmann::json to_json() const {
        return {{"lags", lags}, {"values", values}, {"kind", to_string(kind)}};
    }

    static CorrelationCurve from_json(const nlohmann::json& j) {
        CorrelationCurve c;
        c.lags = j.at("lags").get<std::vector<double>>();
        c.values = j.at("values").get<std::vector<double>>();
        c.kind = curve_kind_from_string(j.at("kind").get<std::string>());
        return c;
    }

    friend bool operator==(const CorrelationCurve&, const CorrelationCurve&) = default;
};

namespace detail {

inline EstimatorReport report_from_samples(std::span<const double> samples, std::string notes) {
    EstimatorReport r;
    r.n_samples = samples.size();
    r.estimate = stats::mean(samples);
    r.std_error = stats::standard_error(samples);
    r.autocorr_lag1 = stats::autocorr_lag1(samples);
    r.notes = std::move(notes);
    return r;
}

/// Window starts for a sliding pass: k*stride_steps while the window fits.
inline std::vector<std::size_t> window_starts(const TimeGrid& grid, std::size_t lag_steps,
                                              std::size_t stride_steps) {
    if (stride_steps < 1) throw rejected_input("stride must be >= dt");
    std::vector<std::size_t> starts;
    for (std::size_t i = 0; i + lag_steps <= grid.n_steps; i += stride_steps) starts.push_back(i);
    return starts;
}

inline std::string overlap_note(double lag, double stride) {
    return stride < lag ? "overlapping windows: stride < T; summands share noise" : "";
}

} // namespace detail

/// Increments pulled by translating a window of lag T along one path.
inline std::vector<IncrementSample> sliding_increments(const Path& path, double lag,
                                                       double stride) {
    const std::size_t m = path.grid.steps_of_lag(lag);
    const std::size_t s = path.grid.steps_of_lag(stride);
    std::vector<IncrementSample> out;
    for (std::size_t i : detail::window_starts(path.grid, m, s))
        out.push_back({path.values[i + m] - path.values[i], path.grid.time(i), lag});
    return out;
}

/// Time average of the increment over sliding windows. stride = T restricts
/// to the non-overlapping windows t = kT; stride < T is allowed but flagged.
inline EstimatorReport sliding_increment_mean(const Path& path, double lag, double stride) {
    const auto incs = sliding_increments(path, lag, stride);
    if (incs.size() < 2) throw insufficient_data("sliding_increment_mean: fewer than 2 windows");
    std::vector<double> zs(incs.size());
    for (std::size_t i = 0; i < incs.size(); ++i) zs[i] = incs[i].z;
    return detail::report_from_samples(zs, detail::overlap_note(lag, stride));
}

inline EstimatorReport sliding_increment_mean(const Path& path, double lag) {
    return sliding_increment_mean(path, lag, lag);
}

/// Time average of the squared increment (the sliding-window mean square
/// fluctuation). The report's autocorr_lag1 is that of the squared summands.
inline EstimatorReport sliding_msf(const Path& path, double lag, double stride) {
    const auto incs = sliding_increments(path, lag, stride);
    if (incs.size() < 2) throw insufficient_data("sliding_msf: fewer than 2 windows");
    std::vector<double> zs(incs.size());
    for (std::size_t i = 0; i < incs.size(); ++i) zs[i] = incs[i].z * incs[i].z;
    return detail::report_from_samples(zs, detail::overlap_note(lag, stride));
}

inline EstimatorReport sliding_msf(const Path& path, double lag) {
    return sliding_msf(path, lag, lag);
}

namespace detail {

inline EstimatorReport pooled_sliding(const PathEnsemble& ensemble, double lag, double stride,
                                      bool squared) {
    std::vector<double> zs;
    double acf_acc = 0.0;
    std::size_t acf_n = 0;
    for (const Path& p : ensemble.paths) {
        const auto incs = sliding_increments(p, lag, stride);
        std::vector<double> per_path(incs.size());
        for (std::size_t i = 0; i < incs.size(); ++i)
            per_path[i] = squared ? incs[i].z * incs[i].z : incs[i].z;
        if (per_path.size() >= 2) {
            acf_acc += stats::autocorr_lag1(per_path);
            ++acf_n;
        }
        zs.insert(zs.end(), per_path.begin(), per_path.end());
    }
    if (zs.size() < 2) throw insufficient_data("pooled sliding estimator: fewer than 2 windows");
    EstimatorReport r;
    r.n_samples = zs.size();
    r.estimate = stats::mean(zs);
    r.std_error = stats::standard_error(zs);
    // within-path autocorrelation; pooling across paths adds no correlation
    r.autocorr_lag1 = acf_n ? acf_acc / static_cast<double>(acf_n) : 0.0;
    std::string note = overlap_note(lag, stride);
    if (ensemble.n_paths() > 1) {
        if (!note.empty()) note += "; ";
        note += "pooled over " + std::to_string(ensemble.n_paths()) + " paths";
    }
    r.notes = note;
    return r;
}

} // namespace detail

/// Sliding increment mean with windows pooled across every path of an ensemble.
inline EstimatorReport sliding_increment_mean(const PathEnsemble& ensemble, double lag,
                                              double stride) {
    return detail::pooled_sliding(ensemble, lag, stride, false);
}

/// Sliding MSF with windows pooled across every path of an ensemble.
inline EstimatorReport sliding_msf(const PathEnsemble& ensemble, double lag, double stride) {
    return detail::pooled_sliding(ensemble, lag, stride, true);
}

/// Cross-path moment of the increment x(t,T) at a fixed strobe time. Summands
/// are independent across paths, so the i.i.d. standard error is honest.
inline EstimatorReport ensemble_moment(const PathEnsemble& ensemble, double t, double lag,
                                       int power) {
    if (power != 1 && power != 2) throw rejected_input("ensemble_moment: power must be 1 or 2");
    std::vector<double> zs = ensemble.increments_at(t, lag);
    if (power == 2)
        for (double& z : zs) z *= z;
    if (zs.size() < 2) throw insufficient_data("ensemble_moment: need >= 2 paths");
    return detail::report_from_samples(zs, "t=" + std::to_string(t));
}

namespace detail {

/// Backward/forward increment pair at t: b = x(t) - x(t-T), f = x(t+T) - x(t).
inline std::pair<std::vector<double>, std::vector<double>>
backward_forward(const PathEnsemble& ensemble, double t, double lag) {
    const std::size_t i = ensemble.grid.index_of(t);
    const std::size_t m = ensemble.grid.steps_of_lag(lag);
    if (i < m || i + m > ensemble.grid.n_steps)
        throw rejected_input("increment correlation: window [t-T, t+T] leaves the grid");
    std::vector<double> b(ensemble.n_paths()), f(ensemble.n_paths());
    for (std::size_t k = 0; k < ensemble.n_paths(); ++k) {
        const auto& v = ensemble.paths[k].values;
        b[k] = v[i] - v[i - m];
        f[k] = v[i + m] - v[i];
    }
    return {std::move(b), std::move(f)};
}

inline constexpr const char* kBackwardConvention = "x(t,-T) := x(t) - x(t-T)";

} // namespace detail

/// Correlation between the backward and forward increments at t. The estimate
/// is the normalized (Pearson) correlation with a large-sample standard error
/// (1 - r^2)/sqrt(n); the raw cross-path covariance is recorded in notes.
inline EstimatorReport increment_autocorrelation(const PathEnsemble& ensemble, double t,
                                                 double lag) {
    auto [b, f] = detail::backward_forward(ensemble, t, lag);
    if (b.size() < 3) throw insufficient_data("increment_autocorrelation: need >= 3 paths");
    const double raw = stats::covariance(b, f);
    const double r = stats::pearson(b, f);
    std::vector<double> prods(b.size());
    for (std::size_t k = 0; k < b.size(); ++k) prods[k] = b[k] * f[k];
    EstimatorReport rep;
    rep.n_samples = b.size();
    rep.estimate = r;
    rep.std_error = (1.0 - r * r) / std::sqrt(static_cast<double>(b.size()));
    rep.autocorr_lag1 = stats::autocorr_lag1(prods); // across path index, ~0
    char buf[64];
    std::snprintf(buf, sizeof buf, "raw_covariance=%.17g", raw);
    rep.notes = std::string(buf) + "; " + detail::kBackwardConvention;
    return rep;
}

/// Covariance between squared backward and forward increments (a volatility
/// measure). The estimate is the raw covariance; the normalized correlation
/// of the squares is recorded in notes.
inline EstimatorReport volatility_correlation(const PathEnsemble& ensemble, double t, double lag) {
    auto [b, f] = detail::backward_forward(ensemble, t, lag);
    if (b.size() < 3) throw insufficient_data("volatility_correlation: need >= 3 paths");
    for (double& x : b) x *= x;
    for (double& x : f) x *= x;
    const double mb = stats::mean(b), mf = stats::mean(f);
    std::vector<double> w(b.size());
    for (std::size_t k = 0; k < b.size(); ++k) w[k] = (b[k] - mb) * (f[k] - mf);
    EstimatorReport rep;
    rep.n_samples = b.size();
    rep.estimate = stats::mean(w) * static_cast<double>(b.size()) /
                   static_cast<double>(b.size() - 1); // n-1 covariance
    rep.std_error = stats::standard_error(w);
    rep.autocorr_lag1 = stats::autocorr_lag1(w); // across path index, ~0
    char buf[64];
    std::snprintf(buf, sizeof buf, "normalized=%.17g", stats::pearson(b, f));
    rep.notes = std::string(buf) + "; " + detail::kBackwardConvention;
    return rep;
}

/// Pair correlation R(T) = Cov(x(t_base), x(t_base + T)) estimated across
/// paths, with the cross-path means subtracted.
inline CorrelationCurve pair_correlation(const PathEnsemble& ensemble,
                                         const std::vector<double>& lags,
                                         std::optional<double> base_time = std::nullopt) {
    if (lags.empty()) throw rejected_input("pair_correlation: empty lag list");
    if (ensemble.n_paths() < 2) throw insufficient_data("pair_correlation: need >= 2 paths");
    const double t_base = base_time.value_or(ensemble.grid.t0);
    const std::vector<double> base = ensemble.values_at(t_base);
    CorrelationCurve curve;
    curve.kind = CurveKind::PairCorrelation;
    for (double lag : lags) {
        const std::vector<double> other =
            lag == 0.0 ? base : ensemble.values_at(t_base + lag);
        curve.lags.push_back(lag);
        curve.values.push_back(stats::covariance(base, other));
    }
    curve.validate();
    return curve;
}

/// Running mean (1/T) * integral of R over [0, T_max], by trapezoid over the
/// curve's lags. Small values support ergodicity of the mean.
inline double ergodicity_diagnostic(const CorrelationCurve& curve) {
    if (curve.kind != CurveKind::PairCorrelation)
        throw rejected_input("ergodicity_diagnostic: curve.kind must be pair_correlation");
    if (curve.lags.empty()) throw rejected_input("ergodicity_diagnostic: empty curve");
    curve.validate();
    if (curve.lags.size() == 1) return curve.values.front();
    const double span = curve.lags.back() - curve.lags.front();
    double integral = 0.0;
    for (std::size_t i = 0; i + 1 < curve.lags.size(); ++i)
        integral += 0.5 * (curve.values[i] + curve.values[i + 1]) *
                    (curve.lags[i + 1] - curve.lags[i]);
    return integral / span;
}

// ---------------------------------------------------------------------------
// Convergence-rate measurement
// ---------------------------------------------------------------------------

enum class NamedEstimator { SlidingIncrementMean, SlidingMsf, EnsembleMoment };

inline std::string to_string(NamedEstimator e) {
    switch (e) {
    case NamedEstimator::SlidingIncrementMean: return "sliding_increment_mean";
    case NamedEstimator::SlidingMsf: return "sliding_msf";
    case NamedEstimator::EnsembleMoment: return "ensemble_moment";
    }
    throw rejected_input("unknown estimator name");
}

inline NamedEstimator named_estimator_from_string(const std::string& s) {
    if (s == "sliding_increment_mean") return NamedEstimator::SlidingIncrementMean;
    if (s == "sliding_msf") return NamedEstimator::SlidingMsf;
    if (s == "ensemble_moment") return NamedEstimator::EnsembleMoment;
    throw rejected_input("unknown estimator name '" + s + "'");
}

/// Slope of log10(variance of the estimate over independent replications)
/// against log10(N). N counts sliding windows (sliding estimators) or paths
/// (ensemble_moment). A slope near -1 is law-of-large-numbers behavior;
/// correlated summands show up as a shallower slope.
inline double convergence_rate(const ProcessSpec& spec, NamedEstimator estimator, double lag,
                               std::vector<std::size_t> n_grid, std::uint64_t master_seed,
                               std::size_t replications = 32, std::size_t substeps = 1) {
    validate(spec);
    std::sort(n_grid.begin(), n_grid.end());
    if (n_grid.size() < 4) throw rejected_input("convergence_rate: need >= 4 grid points");
    if (n_grid.front() < 2) throw rejected_input("convergence_rate: N must be >= 2");
    if (static_cast<double>(n_grid.back()) < 100.0 * static_cast<double>(n_grid.front()))
        throw rejected_input("convergence_rate: n_grid must span >= 2 decades");
    if (replications < 2) throw rejected_input("convergence_rate: need >= 2 replications");

    std::vector<double> log_n, log_var;
    for (std::size_t ni = 0; ni < n_grid.size(); ++ni) {
        const std::size_t n = n_grid[ni];
        std::vector<double> estimates(replications);

        if (estimator == NamedEstimator::EnsembleMoment) {
            const TimeGrid grid(0.0, lag, 1);
            for (std::size_t r = 0; r < replications; ++r) {
                const std::uint64_t seed = derive_seed(master_seed, ni, r);
                const PathEnsemble ens = simulate_ensemble(spec, grid, n, seed, substeps);
                estimates[r] = ensemble_moment(ens, 0.0, lag, 2).estimate;
            }
        } else {
            // one path of N non-overlapping windows of lag T (stride = T)
            const TimeGrid grid(0.0, lag, n);
            const FbmSpec* fbm = std::get_if<FbmSpec>(&spec);
            std::unique_ptr<FbmSampler> sampler;
            if (fbm) sampler = std::make_unique<FbmSampler>(grid, fbm->hurst, fbm->sigma);
            for (std::size_t r = 0; r < replications; ++r) {
                const std::uint64_t seed = derive_seed(master_seed, ni, r);
                Path path = [&] {
                    if (sampler) {
                        std::mt19937_64 rng = make_stream(seed, 0);
                        return sampler->sample(rng, {seed, 0});
                    }
                    return simulate_path(spec, grid, seed, substeps);
                }();
                estimates[r] = estimator == NamedEstimator::SlidingIncrementMean
                                   ? sliding_increment_mean(path, lag, lag).estimate
                                   : sliding_msf(path, lag, lag).estimate;
            }
        }

        const double v = stats::variance(estimates);
        if (!(v > 0.0) || !std::isfinite(v))
            throw numerical_error("convergence_rate: degenerate replication variance at N=" +
                                  std::to_string(n));
        log_n.push_back(std::log10(static_cast<double>(n)));
        log_var.push_back(std::log10(v));
    }
    return stats::ols_slope(log_n, log_var);
}

} // namespace ensemblab
