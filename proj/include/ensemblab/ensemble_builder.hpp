#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "ensemblab/errors.hpp"
#include "ensemblab/estimators.hpp"
#include "ensemblab/path.hpp"
#include "ensemblab/rng.hpp"
#include "ensemblab/stats.hpp"

namespace ensemblab {

enum class ValueKind { Level, Price };

inline std::string to_string(ValueKind k) { return k == ValueKind::Level ? "level" : "price"; }

inline ValueKind value_kind_from_string(const std::string& s) {
    if (s == "level") return ValueKind::Level;
    if (s == "price") return ValueKind::Price;
    throw rejected_input("unknown value kind '" + s + "' (level|price)");
}

/// A single historic time series: levels or prices on increasing timestamps.
struct LongSeries {
    std::vector<double> timestamps;
    std::vector<double> values;
    ValueKind value_kind = ValueKind::Level;

    std::size_t size() const { return values.size(); }

    void validate() const {
        if (timestamps.size() != values.size())
            throw rejected_input("LongSeries: timestamps/values length mismatch");
        for (std::size_t i = 0; i + 1 < timestamps.size(); ++i)
            if (!(timestamps[i] < timestamps[i + 1]))
                throw rejected_input("LongSeries: timestamps must be strictly increasing (index " +
                                     std::to_string(i + 1) + ")");
        if (value_kind == ValueKind::Price)
            for (std::size_t i = 0; i < values.size(); ++i)
                if (!(values[i] > 0.0))
                    throw rejected_input("LongSeries: nonpositive price at index " +
                                         std::to_string(i));
    }

    /// Uniform sample spacing, or nullopt when irregular.
    std::optional<double> uniform_spacing(double rel_tol = 1e-9) const {
        if (size() < 2) return std::nullopt;
        const double dt = timestamps[1] - timestamps[0];
        for (std::size_t i = 1; i + 1 < timestamps.size(); ++i)
            if (std::abs((timestamps[i + 1] - timestamps[i]) - dt) > rel_tol * std::max(1.0, dt))
                return std::nullopt;
        return dt;
    }

    friend bool operator==(const LongSeries&, const LongSeries&) = default;
};

/// Log-return series z(t) = ln(p(t+T)/p(t)) at a lag of T samples.
inline LongSeries to_returns(const LongSeries& series, std::size_t lag_samples = 1) {
    series.validate();
    if (series.value_kind != ValueKind::Price)
        throw rejected_input("to_returns: input must be a price series");
    if (lag_samples < 1 || series.size() <= lag_samples)
        throw rejected_input("to_returns: lag must be in [1, n)");
    LongSeries out;
    out.value_kind = ValueKind::Level;
    const std::size_t n = series.size() - lag_samples;
    out.timestamps.assign(series.timestamps.begin(),
                          series.timestamps.begin() + static_cast<std::ptrdiff_t>(n));
    out.values.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        out.values[i] = std::log(series.values[i + lag_samples] / series.values[i]);
    return out;
}

/// Reshape a uniform series into runs of `period` samples starting at
/// `phase0`. Each run is rebased to start at 0 so runs are comparable as
/// ensemble members despite drifting start levels; a trailing partial
/// segment is dropped.
inline PathEnsemble segment_series(const LongSeries& series, std::size_t period,
                                   std::size_t phase0 = 0) {
    series.validate();
    if (period < 2) throw rejected_input("segment_series: period must be >= 2 samples");
    if (phase0 >= period) throw rejected_input("segment_series: phase0 must be in [0, period)");
    const auto dt = series.uniform_spacing();
    if (!dt)
        throw rejected_input("segment_series: series must be on a uniform grid (regularize first)");
    if (series.size() < 2 * period)
        throw insufficient_data("segment_series: period " + std::to_string(period) +
                                " needs at least " + std::to_string(2 * period) + " samples, have " +
                                std::to_string(series.size()));
    const std::size_t n_segments = (series.size() - phase0) / period;
    const TimeGrid grid(0.0, *dt, period - 1);
    std::vector<Path> paths;
    paths.reserve(n_segments);
    for (std::size_t s = 0; s < n_segments; ++s) {
        const std::size_t start = phase0 + s * period;
        std::vector<double> v(series.values.begin() + static_cast<std::ptrdiff_t>(start),
                              series.values.begin() + static_cast<std::ptrdiff_t>(start + period));
        const double base = v.front();
        for (double& x : v) x -= base;
        paths.emplace_back(grid, std::move(v), SeedTag{0, s});
    }
    return PathEnsemble(grid, std::move(paths));
}

// ---------------------------------------------------------------------------
// Periodicity detection
// ---------------------------------------------------------------------------

struct PeriodicityReport {
    std::vector<std::size_t> candidate_periods;
    std::vector<double> scores;          ///< per-candidate profile similarity, in [0,1]
    std::vector<double> null_thresholds; ///< 95th percentile of the shuffled null
    std::optional<std::size_t> best_period;
    std::vector<double> profile; ///< per-phase MSF for best_period (empty if none)

    nlohmann::json to_json() const {
        nlohmann::json j{{"candidate_periods", candidate_periods},
                         {"scores", scores},
                         {"null_thresholds", null_thresholds},
                         {"profile", profile}};
        if (best_period)
            j["best_period"] = *best_period;
        else
            j["best_period"] = nullptr;
        return j;
    }
};

namespace detail {

/// Segment profiles for one candidate: per segment, the squared increments
/// at a lag of T samples, phase by phase.
inline std::vector<std::vector<double>> segment_profiles(const LongSeries& series,
                                                         std::size_t period,
                                                         std::size_t lag_samples) {
    const std::size_t n_segments = series.size() / period;
    std::vector<std::vector<double>> profiles;
    profiles.reserve(n_segments);
    for (std::size_t s = 0; s < n_segments; ++s) {
        std::vector<double> prof(period - lag_samples);
        for (std::size_t p = 0; p + lag_samples < period; ++p) {
            const double z =
                series.values[s * period + p + lag_samples] - series.values[s * period + p];
            prof[p] = z * z;
        }
        profiles.push_back(std::move(prof));
    }
    return profiles;
}

/// Alignment of segment profiles: mean leave-one-out correlation of each
/// segment against the average of the others, clamped to [0,1]. Less noisy
/// than averaging raw pairwise correlations, and it rewards the period that
/// yields more (hence cleaner-averaging) segments, which breaks the tie
/// between a true period and its multiples.
inline double profile_alignment_score(const std::vector<std::vector<double>>& profiles) {
    const std::size_t s = profiles.size();
    if (s < 2) return 0.0;
    const std::size_t len = profiles.front().size();
    std::vector<double> total(len, 0.0);
    for (const auto& prof : profiles)
        for (std::size_t p = 0; p < len; ++p) total[p] += prof[p];
    double acc = 0.0;
    std::vector<double> rest(len);
    for (const auto& prof : profiles) {
        for (std::size_t p = 0; p < len; ++p)
            rest[p] = (total[p] - prof[p]) / static_cast<double>(s - 1);
        acc += stats::pearson(prof, rest);
    }
    return std::clamp(acc / static_cast<double>(s), 0.0, 1.0);
}

} // namespace detail

/// Score candidate periods by how well per-segment MSF profiles align, and
/// accept the best only when it beats a shuffled null (each segment profile
/// independently circularly shifted, which keeps per-segment statistics but
/// destroys phase alignment; 95th percentile of 99 shuffles). Harmonics of a
/// true period also align, so among candidates within 2% of the top score the
/// smallest period wins.
inline PeriodicityReport detect_periodicity(const LongSeries& series,
                                            const std::vector<std::size_t>& candidates,
                                            std::size_t lag_samples = 1,
                                            std::uint64_t seed = 17) {
    series.validate();
    if (candidates.empty()) throw rejected_input("detect_periodicity: empty candidate list");
    if (lag_samples < 1) throw rejected_input("detect_periodicity: lag must be >= 1 sample");
    PeriodicityReport rep;
    constexpr std::size_t kNullShuffles = 99;

    for (std::size_t c = 0; c < candidates.size(); ++c) {
        const std::size_t period = candidates[c];
        if (period <= lag_samples + 1 || period > series.size() / 4)
            throw rejected_input("detect_periodicity: candidate period " + std::to_string(period) +
                                 " must lie in (" + std::to_string(lag_samples + 1) + ", n/4]");
        auto profiles = detail::segment_profiles(series, period, lag_samples);
        rep.candidate_periods.push_back(period);
        rep.scores.push_back(detail::profile_alignment_score(profiles));

        std::mt19937_64 rng = make_stream(seed, c);
        std::vector<double> null_scores(kNullShuffles);
        const std::size_t prof_len = profiles.front().size();
        std::uniform_int_distribution<std::size_t> offset(1, prof_len - 1);
        for (std::size_t r = 0; r < kNullShuffles; ++r) {
            auto shuffled = profiles;
            for (auto& prof : shuffled)
                std::rotate(prof.begin(),
                            prof.begin() + static_cast<std::ptrdiff_t>(offset(rng)), prof.end());
            null_scores[r] = detail::profile_alignment_score(shuffled);
        }
        rep.null_thresholds.push_back(stats::percentile(null_scores, 0.95));
    }

    double best_score = -1.0;
    for (std::size_t c = 0; c < candidates.size(); ++c)
        if (rep.scores[c] > rep.null_thresholds[c]) best_score = std::max(best_score, rep.scores[c]);
    if (best_score > 0.0) {
        std::size_t chosen = 0;
        bool found = false;
        for (std::size_t c = 0; c < candidates.size(); ++c) {
            if (rep.scores[c] <= rep.null_thresholds[c]) continue;
            if (rep.scores[c] >= 0.98 * best_score &&
                (!found || rep.candidate_periods[c] < rep.candidate_periods[chosen])) {
                chosen = c;
                found = true;
            }
        }
        if (found) {
            rep.best_period = rep.candidate_periods[chosen];
            const auto profiles =
                detail::segment_profiles(series, *rep.best_period, lag_samples);
            rep.profile.assign(profiles.front().size(), 0.0);
            for (const auto& prof : profiles)
                for (std::size_t p = 0; p < prof.size(); ++p) rep.profile[p] += prof[p];
            for (double& m : rep.profile) m /= static_cast<double>(profiles.size());
        }
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Boundary diagnostics
// ---------------------------------------------------------------------------

struct BoundaryReport {
    EstimatorReport boundary_return; ///< corr(first return of run n, last return of run n-1)
    double level_correlation = 0.0;  ///< corr of raw levels across the boundary
    std::vector<std::size_t> phase_lags;
    std::vector<double> correlations; ///< corr(run-n return at phase L, run n-1 final return)
    std::vector<double> std_errors;
    std::size_t n_segments = 0;
    std::string notes;

    nlohmann::json to_json() const {
        return {{"boundary_return", boundary_return.to_json()},
                {"level_correlation", level_correlation},
                {"phase_lags", phase_lags},
                {"correlations", correlations},
                {"std_errors", std_errors},
                {"n_segments", n_segments},
                {"notes", notes}};
    }
};

/// How much of run n is predictable from the end of run n-1. Rebasing removes
/// level continuity, so the check looks at returns: a true ensemble shows no
/// boundary correlation, a contiguous long-memory series does. Raw levels
/// from the original series are reported alongside since adjacent samples of
/// one historic series always correlate at the boundary.
inline BoundaryReport boundary_correlation_check(const PathEnsemble& ensemble,
                                                 const LongSeries& original,
                                                 std::size_t phase0 = 0) {
    const std::size_t period = ensemble.grid.n_points();
    const std::size_t s = ensemble.n_paths();
    if (s < 3) throw insufficient_data("boundary_correlation_check: need >= 3 segments");
    if (period < 3) throw rejected_input("boundary_correlation_check: period too short");
    original.validate();
    if (original.size() < phase0 + s * period)
        throw rejected_input("boundary_correlation_check: ensemble does not fit in the series");

    BoundaryReport rep;
    rep.n_segments = s;

    std::vector<double> prev_last(s - 1), first(s - 1);
    for (std::size_t n = 1; n < s; ++n) {
        const auto& prev = ensemble.paths[n - 1].values;
        const auto& cur = ensemble.paths[n].values;
        prev_last[n - 1] = prev[period - 1] - prev[period - 2];
        first[n - 1] = cur[1] - cur[0];
    }
    const double r = stats::pearson(prev_last, first);
    rep.boundary_return.estimate = r;
    rep.boundary_return.std_error = (1.0 - r * r) / std::sqrt(static_cast<double>(s - 1));
    rep.boundary_return.n_samples = s - 1;
    rep.boundary_return.autocorr_lag1 = 0.0;
    rep.boundary_return.notes = "corr(first return of run n, last return of run n-1)";

    // raw levels across the boundary, from the unrebased series
    std::vector<double> end_level(s - 1), start_level(s - 1);
    for (std::size_t n = 1; n < s; ++n) {
        end_level[n - 1] = original.values[phase0 + n * period - 1];
        start_level[n - 1] = original.values[phase0 + n * period];
    }
    rep.level_correlation = stats::pearson(end_level, start_level);

    const std::size_t max_lag = std::max<std::size_t>(1, period / 4);
    for (std::size_t lag = 1; lag <= max_lag; ++lag) {
        std::vector<double> ret(s - 1);
        for (std::size_t n = 1; n < s; ++n) {
            const auto& cur = ensemble.paths[n].values;
            ret[n - 1] = cur[lag] - cur[lag - 1];
        }
        const double rl = stats::pearson(prev_last, ret);
        rep.phase_lags.push_back(lag);
        rep.correlations.push_back(rl);
        rep.std_errors.push_back((1.0 - rl * rl) / std::sqrt(static_cast<double>(s - 1)));
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Intraday profile
// ---------------------------------------------------------------------------

struct IntradayProfile {
    std::vector<double> phases; ///< window start time within the run
    std::vector<double> msf;
    std::vector<double> std_error;
    std::size_t n_segments = 0;

    nlohmann::json to_json() const {
        return {{"phases", phases},
                {"msf", msf},
                {"std_error", std_error},
                {"n_segments", n_segments}};
    }
};

/// Per-phase MSF across runs: the statistic whose day-after-day repetition
/// justifies treating segments as ensemble members.
inline IntradayProfile intraday_profile(const PathEnsemble& ensemble, double lag) {
    if (ensemble.n_paths() < 2) throw insufficient_data("intraday_profile: need >= 2 segments");
    const std::size_t m = ensemble.grid.steps_of_lag(lag);
    if (m >= ensemble.grid.n_points())
        throw rejected_input("intraday_profile: lag exceeds the run length");
    IntradayProfile prof;
    prof.n_segments = ensemble.n_paths();
    for (std::size_t p = 0; p + m <= ensemble.grid.n_steps; ++p) {
        std::vector<double> z2(ensemble.n_paths());
        for (std::size_t k = 0; k < ensemble.n_paths(); ++k) {
            const auto& v = ensemble.paths[k].values;
            const double z = v[p + m] - v[p];
            z2[k] = z * z;
        }
        prof.phases.push_back(ensemble.grid.time(p));
        prof.msf.push_back(stats::mean(z2));
        prof.std_error.push_back(stats::standard_error(z2));
    }
    return prof;
}

} // namespace ensemblab
