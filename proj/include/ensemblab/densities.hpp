#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ensemblab/errors.hpp"
#include "ensemblab/estimators.hpp"
#include "ensemblab/path.hpp"
#include "ensemblab/stats.hpp"

namespace ensemblab {

enum class DensityLabel { IncrementSliding, IncrementEnsemble, OnePoint, Joint2pt };

inline std::string to_string(DensityLabel l) {
    switch (l) {
    case DensityLabel::IncrementSliding: return "increment_sliding";
    case DensityLabel::IncrementEnsemble: return "increment_ensemble";
    case DensityLabel::OnePoint: return "one_point";
    case DensityLabel::Joint2pt: return "joint_2pt";
    }
    throw rejected_input("unknown density label");
}

inline DensityLabel density_label_from_string(const std::string& s) {
    if (s == "increment_sliding") return DensityLabel::IncrementSliding;
    if (s == "increment_ensemble") return DensityLabel::IncrementEnsemble;
    if (s == "one_point") return DensityLabel::OnePoint;
    if (s == "joint_2pt") return DensityLabel::Joint2pt;
    throw rejected_input("unknown density label '" + s + "'");
}

/// Out-of-range samples are clipped into two overflow counters rather than
/// silently dropped; more than 0.1% overflow fails construction because
/// clipped tails would bias exactly the statistics this histogram feeds.
inline constexpr double kMaxOverflowFraction = 1e-3;

/// How many raw samples a density retains for exact (sample-level) KS tests.
inline constexpr std::size_t kMaxRetainedSamples = 1'000'000;

/// Normalized histogram: mass[i] is the density height on bin i, so that
/// sum(mass * width) = 1 over the in-range samples.
struct EmpiricalDensity {
    std::vector<double> bin_edges; ///< strictly increasing, length B+1
    std::vector<double> mass;      ///< nonnegative density heights, length B
    std::size_t n_samples = 0;     ///< in-range sample count
    DensityLabel label = DensityLabel::OnePoint;
    std::size_t underflow = 0;
    std::size_t overflow = 0;
    std::vector<double> samples; ///< retained raw samples (may be empty)

    std::size_t n_bins() const { return mass.size(); }

    double integral() const {
        double acc = 0.0;
        for (std::size_t i = 0; i < mass.size(); ++i)
            acc += mass[i] * (bin_edges[i + 1] - bin_edges[i]);
        return acc;
    }

    void validate() const {
        if (bin_edges.size() != mass.size() + 1 || mass.empty())
            throw rejected_input("EmpiricalDensity: edges/mass size mismatch");
        for (std::size_t i = 0; i + 1 < bin_edges.size(); ++i)
            if (!(bin_edges[i] < bin_edges[i + 1]))
                throw rejected_input("EmpiricalDensity: bin edges must be strictly increasing");
        for (double m : mass)
            if (!(m >= 0.0)) throw numerical_error("EmpiricalDensity: negative mass");
        if (n_samples > 0 && std::abs(integral() - 1.0) > 1e-9)
            throw numerical_error("EmpiricalDensity: not normalized");
    }

    /// CDF of the binned density (mass uniform within each bin).
    double cdf(double x) const {
        if (x <= bin_edges.front()) return 0.0;
        if (x >= bin_edges.back()) return 1.0;
        double acc = 0.0;
        for (std::size_t i = 0; i < mass.size(); ++i) {
            const double lo = bin_edges[i], hi = bin_edges[i + 1];
            if (x >= hi) {
                acc += mass[i] * (hi - lo);
            } else {
                acc += mass[i] * (x - lo);
                break;
            }
        }
        return acc;
    }

    nlohmann::json to_json() const {
        return {{"bin_edges", bin_edges}, {"mass", mass},         {"n_samples", n_samples},
                {"label", to_string(label)}, {"underflow", underflow}, {"overflow", overflow}};
    }

    static EmpiricalDensity from_json(const nlohmann::json& j) {
        EmpiricalDensity d;
        d.bin_edges = j.at("bin_edges").get<std::vector<double>>();
        d.mass = j.at("mass").get<std::vector<double>>();
        d.n_samples = j.at("n_samples").get<std::size_t>();
        d.label = density_label_from_string(j.at("label").get<std::string>());
        d.underflow = j.value("underflow", std::size_t{0});
        d.overflow = j.value("overflow", std::size_t{0});
        return d;
    }
};

// ---------------------------------------------------------------------------
// Binning
// ---------------------------------------------------------------------------

/// n equal-width bins over [lo, hi].
inline std::vector<double> uniform_bin_edges(double lo, double hi, std::size_t n_bins) {
    if (!(hi > lo) || n_bins < 1) throw rejected_input("uniform_bin_edges: bad range");
    std::vector<double> edges(n_bins + 1);
    for (std::size_t i = 0; i <= n_bins; ++i)
        edges[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n_bins);
    edges.back() = hi; // exact endpoints, no rounding drift
    return edges;
}

/// Freedman-Diaconis bin edges. When comparing two samples, pass the pooled
/// sample so both histograms share edges and binning drops out of the
/// comparison.
inline std::vector<double> fd_bin_edges(std::vector<double> samples) {
    if (samples.empty()) throw rejected_input("fd_bin_edges: empty sample");
    std::sort(samples.begin(), samples.end());
    const double lo = samples.front(), hi = samples.back();
    if (!(hi > lo)) return {lo - 0.5, lo + 0.5};
    const double q1 = stats::percentile(samples, 0.25);
    const double q3 = stats::percentile(samples, 0.75);
    const double n13 = std::cbrt(static_cast<double>(samples.size()));
    double width = 2.0 * (q3 - q1) / n13;
    if (!(width > 0.0)) width = (hi - lo) / std::max(1.0, std::sqrt(static_cast<double>(samples.size())));
    const std::size_t n_bins =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil((hi - lo) / width)));
    return uniform_bin_edges(lo, hi, n_bins);
}

namespace detail {

inline std::size_t bin_index(const std::vector<double>& edges, double x) {
    // edges bracket x: returns i with edges[i] <= x < edges[i+1]; last bin is closed
    const auto it = std::upper_bound(edges.begin(), edges.end(), x);
    const std::size_t i = static_cast<std::size_t>(it - edges.begin());
    return std::min(i - 1, edges.size() - 2);
}

} // namespace detail

/// Histogram builder shared by every density constructor.
inline EmpiricalDensity make_density(const std::vector<double>& samples,
                                     const std::vector<double>& edges, DensityLabel label) {
    if (samples.empty()) throw rejected_input("make_density: empty sample");
    if (edges.size() < 2) throw rejected_input("make_density: need at least one bin");
    EmpiricalDensity d;
    d.bin_edges = edges;
    d.label = label;
    std::vector<std::size_t> counts(edges.size() - 1, 0);
    for (double x : samples) {
        if (x < edges.front()) {
            ++d.underflow;
        } else if (x > edges.back()) {
            ++d.overflow;
        } else {
            ++counts[detail::bin_index(edges, x)];
        }
    }
    const std::size_t clipped = d.underflow + d.overflow;
    if (static_cast<double>(clipped) >
        kMaxOverflowFraction * static_cast<double>(samples.size()))
        throw numerical_error("make_density: " + std::to_string(clipped) + " of " +
                              std::to_string(samples.size()) +
                              " samples fall outside the bin range (overflow policy: <= 0.1%)");
    d.n_samples = samples.size() - clipped;
    d.mass.resize(counts.size());
    for (std::size_t i = 0; i < counts.size(); ++i) {
        const double width = edges[i + 1] - edges[i];
        d.mass[i] = static_cast<double>(counts[i]) / (static_cast<double>(d.n_samples) * width);
    }
    if (samples.size() <= kMaxRetainedSamples) d.samples = samples;
    d.validate();
    return d;
}

// ---------------------------------------------------------------------------
// Density constructors
// ---------------------------------------------------------------------------

/// Histogram of {x(t,T)} over sliding window starts along one path (the
/// time-average increment density).
inline EmpiricalDensity sliding_increment_histogram(const Path& path, double lag, double stride,
                                                    const std::vector<double>& edges) {
    const auto incs = sliding_increments(path, lag, stride);
    if (incs.empty()) throw insufficient_data("sliding_increment_histogram: no complete window");
    std::vector<double> zs(incs.size());
    for (std::size_t i = 0; i < incs.size(); ++i) zs[i] = incs[i].z;
    return make_density(zs, edges, DensityLabel::IncrementSliding);
}

/// Sliding increment histogram with windows pooled across ensemble paths.
inline EmpiricalDensity sliding_increment_histogram(const PathEnsemble& ensemble, double lag,
                                                    double stride,
                                                    const std::vector<double>& edges) {
    std::vector<double> zs;
    for (const Path& p : ensemble.paths)
        for (const IncrementSample& s : sliding_increments(p, lag, stride)) zs.push_back(s.z);
    if (zs.empty()) throw insufficient_data("sliding_increment_histogram: no complete window");
    return make_density(zs, edges, DensityLabel::IncrementSliding);
}

/// Cross-path histogram of x(t,T) at a fixed strobe time, one sample per path.
inline EmpiricalDensity ensemble_increment_histogram(const PathEnsemble& ensemble, double t,
                                                     double lag,
                                                     const std::vector<double>& edges) {
    return make_density(ensemble.increments_at(t, lag), edges, DensityLabel::IncrementEnsemble);
}

/// Cross-path histogram of the level x(t).
inline EmpiricalDensity one_point_histogram(const PathEnsemble& ensemble, double t,
                                            const std::vector<double>& edges) {
    return make_density(ensemble.values_at(t), edges, DensityLabel::OnePoint);
}

// ---------------------------------------------------------------------------
// Two-point joint density
// ---------------------------------------------------------------------------

struct JointDensity2D {
    std::vector<double> edges_z1;
    std::vector<double> edges_z2;
    std::vector<double> mass; ///< row-major (B1 x B2) density heights
    double t1 = 0.0;
    double t2 = 0.0;
    double lag = 0.0;
    std::size_t n_samples = 0;
    bool overlapping_windows = false;
    std::vector<std::pair<double, double>> sample_pairs; ///< retained raw pairs

    std::size_t n1() const { return edges_z1.size() - 1; }
    std::size_t n2() const { return edges_z2.size() - 1; }
    double& at(std::size_t i, std::size_t j) { return mass[i * n2() + j]; }
    double at(std::size_t i, std::size_t j) const { return mass[i * n2() + j]; }

    double integral() const {
        double acc = 0.0;
        for (std::size_t i = 0; i < n1(); ++i)
            for (std::size_t j = 0; j < n2(); ++j)
                acc += at(i, j) * (edges_z1[i + 1] - edges_z1[i]) * (edges_z2[j + 1] - edges_z2[j]);
        return acc;
    }

    void validate() const {
        if (edges_z1.size() < 2 || edges_z2.size() < 2 || mass.size() != n1() * n2())
            throw rejected_input("JointDensity2D: shape mismatch");
        if (n_samples > 0 && std::abs(integral() - 1.0) > 1e-9)
            throw numerical_error("JointDensity2D: not normalized");
    }

    /// Cell probabilities (mass * area).
    std::vector<double> probabilities() const {
        std::vector<double> p(mass.size());
        for (std::size_t i = 0; i < n1(); ++i)
            for (std::size_t j = 0; j < n2(); ++j)
                p[i * n2() + j] =
                    at(i, j) * (edges_z1[i + 1] - edges_z1[i]) * (edges_z2[j + 1] - edges_z2[j]);
        return p;
    }

    /// Total-variation distance between the joint and the product of its
    /// marginals: 0 iff the binned joint factors exactly.
    double factorization_score() const {
        const std::vector<double> p = probabilities();
        std::vector<double> row(n1(), 0.0), col(n2(), 0.0);
        for (std::size_t i = 0; i < n1(); ++i)
            for (std::size_t j = 0; j < n2(); ++j) {
                row[i] += p[i * n2() + j];
                col[j] += p[i * n2() + j];
            }
        double tv = 0.0;
        for (std::size_t i = 0; i < n1(); ++i)
            for (std::size_t j = 0; j < n2(); ++j)
                tv += std::abs(p[i * n2() + j] - row[i] * col[j]);
        return 0.5 * tv;
    }

    nlohmann::json to_json() const {
        return {{"edges_z1", edges_z1},
                {"edges_z2", edges_z2},
                {"mass", mass},
                {"t1", t1},
                {"t2", t2},
                {"lag", lag},
                {"n_samples", n_samples},
                {"overlapping_windows", overlapping_windows}};
    }
};

/// Joint histogram of the per-path pair (x(t1,T), x(t2,T)). Windows with
/// t2 < t1 + T overlap; that is permitted but flagged in the result.
inline JointDensity2D two_point_increment_histogram(const PathEnsemble& ensemble, double t1,
                                                    double t2, double lag,
                                                    const std::vector<double>& edges_z1,
                                                    const std::vector<double>& edges_z2) {
    const std::vector<double> a = ensemble.increments_at(t1, lag);
    const std::vector<double> b = ensemble.increments_at(t2, lag);
    JointDensity2D joint;
    joint.edges_z1 = edges_z1;
    joint.edges_z2 = edges_z2;
    joint.t1 = t1;
    joint.t2 = t2;
    joint.lag = lag;
    joint.overlapping_windows = t2 < t1 + lag && t1 < t2 + lag && t1 != t2;
    joint.mass.assign((edges_z1.size() - 1) * (edges_z2.size() - 1), 0.0);

    std::size_t clipped = 0, kept = 0;
    std::vector<std::size_t> counts(joint.mass.size(), 0);
    for (std::size_t k = 0; k < a.size(); ++k) {
        if (a[k] < edges_z1.front() || a[k] > edges_z1.back() || b[k] < edges_z2.front() ||
            b[k] > edges_z2.back()) {
            ++clipped;
            continue;
        }
        ++counts[detail::bin_index(edges_z1, a[k]) * joint.n2() +
                 detail::bin_index(edges_z2, b[k])];
        ++kept;
    }
    if (static_cast<double>(clipped) > kMaxOverflowFraction * static_cast<double>(a.size()))
        throw numerical_error("two_point_increment_histogram: " + std::to_string(clipped) +
                              " sample pairs fall outside the bin range");
    if (kept == 0) throw insufficient_data("two_point_increment_histogram: no in-range pairs");
    joint.n_samples = kept;
    for (std::size_t i = 0; i < joint.n1(); ++i)
        for (std::size_t j = 0; j < joint.n2(); ++j)
            joint.at(i, j) = static_cast<double>(counts[i * joint.n2() + j]) /
                             (static_cast<double>(kept) * (edges_z1[i + 1] - edges_z1[i]) *
                              (edges_z2[j + 1] - edges_z2[j]));
    if (a.size() <= kMaxRetainedSamples) {
        joint.sample_pairs.reserve(a.size());
        for (std::size_t k = 0; k < a.size(); ++k) joint.sample_pairs.emplace_back(a[k], b[k]);
    }
    joint.validate();
    return joint;
}

/// Null distribution threshold for the factorization score: the joint's
/// second coordinate is permuted against the first (which enforces the
/// product-of-marginals law) and the score recomputed per resample.
inline double factorization_threshold(const JointDensity2D& joint, double alpha = 0.01,
                                      std::size_t n_resamples = 199, std::uint64_t seed = 7) {
    if (joint.sample_pairs.empty())
        throw rejected_input("factorization_threshold: joint retains no raw sample pairs");
    std::mt19937_64 rng = make_stream(seed, 0);
    std::vector<double> a(joint.sample_pairs.size()), b(joint.sample_pairs.size());
    for (std::size_t k = 0; k < a.size(); ++k) {
        a[k] = joint.sample_pairs[k].first;
        b[k] = joint.sample_pairs[k].second;
    }
    std::vector<double> scores(n_resamples);
    for (std::size_t r = 0; r < n_resamples; ++r) {
        std::shuffle(b.begin(), b.end(), rng);
        JointDensity2D null = joint;
        null.sample_pairs.clear();
        std::vector<std::size_t> counts(null.mass.size(), 0);
        std::size_t kept = 0;
        for (std::size_t k = 0; k < a.size(); ++k) {
            if (a[k] < null.edges_z1.front() || a[k] > null.edges_z1.back() ||
                b[k] < null.edges_z2.front() || b[k] > null.edges_z2.back())
                continue;
            ++counts[detail::bin_index(null.edges_z1, a[k]) * null.n2() +
                     detail::bin_index(null.edges_z2, b[k])];
            ++kept;
        }
        for (std::size_t i = 0; i < null.n1(); ++i)
            for (std::size_t j = 0; j < null.n2(); ++j)
                null.at(i, j) = static_cast<double>(counts[i * null.n2() + j]) /
                                (static_cast<double>(kept) *
                                 (null.edges_z1[i + 1] - null.edges_z1[i]) *
                                 (null.edges_z2[j + 1] - null.edges_z2[j]));
        null.n_samples = kept;
        scores[r] = null.factorization_score();
    }
    return stats::percentile(scores, 1.0 - alpha);
}

// ---------------------------------------------------------------------------
// Equal-time factorization check
// ---------------------------------------------------------------------------

struct EqualTimeReport {
    double off_diagonal_mass = 0.0;        ///< single-run equal-time joint, exact
    double max_abs_z = 0.0;                ///< worst disjoint-bin-pair covariance z-score
    std::size_t n_pairs_checked = 0;
    std::size_t n_pairs_skipped = 0;       ///< degenerate (empty or full) bins
    double duplicate_value_fraction = 0.0; ///< exact value collisions across runs
    bool flagged = false;                  ///< broken-ensemble indicator
    std::string notes;

    nlohmann::json to_json() const {
        return {{"off_diagonal_mass", off_diagonal_mass},
                {"max_abs_z", max_abs_z},
                {"n_pairs_checked", n_pairs_checked},
                {"n_pairs_skipped", n_pairs_skipped},
                {"duplicate_value_fraction", duplicate_value_fraction},
                {"flagged", flagged},
                {"notes", notes}};
    }
};

/// Verifies the two facts that justify strobed-ensemble averaging at a fixed
/// time: (a) within a single run the equal-time joint histogram of (x, x) has
/// no off-diagonal mass, exactly and by construction; (b) across independent
/// runs, indicator covariances over disjoint bin pairs vanish. Exact value
/// collisions between runs flag a broken (duplicated-path) ensemble: for a
/// continuous law two independent runs never agree to the last bit.
inline EqualTimeReport equal_time_factorization_check(const PathEnsemble& ensemble, double t,
                                                      const std::vector<double>& edges) {
    const std::vector<double> xs = ensemble.values_at(t);
    const std::size_t n_bins = edges.size() - 1;
    if (n_bins < 2) throw rejected_input("equal_time_factorization_check: need >= 2 bins");
    EqualTimeReport rep;

    // (a) single-run equal-time joint: each run contributes the pair (x, x)
    for (double x : xs) {
        if (x < edges.front() || x > edges.back()) continue;
        const std::size_t i = detail::bin_index(edges, x);
        const std::size_t j = detail::bin_index(edges, x);
        if (i != j) rep.off_diagonal_mass += 1.0; // unreachable: same value, same bin
    }
    rep.off_diagonal_mass /= static_cast<double>(xs.size());

    // (b) disjoint run pairs (2i, 2i+1), indicator covariance per bin pair
    const std::size_t n_pairs = xs.size() / 2;
    if (n_pairs >= 8) {
        std::vector<std::vector<double>> u(n_bins, std::vector<double>(n_pairs, 0.0));
        std::vector<std::vector<double>> v(n_bins, std::vector<double>(n_pairs, 0.0));
        for (std::size_t p = 0; p < n_pairs; ++p) {
            const double x = xs[2 * p], y = xs[2 * p + 1];
            if (x >= edges.front() && x <= edges.back()) u[detail::bin_index(edges, x)][p] = 1.0;
            if (y >= edges.front() && y <= edges.back()) v[detail::bin_index(edges, y)][p] = 1.0;
        }
        for (std::size_t a = 0; a < n_bins; ++a) {
            for (std::size_t b = 0; b < n_bins; ++b) {
                if (a == b) continue;
                const double mu = stats::mean(u[a]), mv = stats::mean(v[b]);
                // z-scores need a few expected co-occurrences to be meaningful
                if (mu <= 0.0 || mu >= 1.0 || mv <= 0.0 || mv >= 1.0 ||
                    mu * mv * static_cast<double>(n_pairs) < 10.0) {
                    ++rep.n_pairs_skipped;
                    continue;
                }
                std::vector<double> w(n_pairs);
                for (std::size_t p = 0; p < n_pairs; ++p) w[p] = (u[a][p] - mu) * (v[b][p] - mv);
                const double cov = stats::mean(w);
                const double se = stats::standard_error(w);
                ++rep.n_pairs_checked;
                if (se > 0.0) rep.max_abs_z = std::max(rep.max_abs_z, std::abs(cov / se));
            }
        }
    }

    // (c) exact collisions across runs
    std::vector<double> sorted = xs;
    std::sort(sorted.begin(), sorted.end());
    std::size_t dup = 0;
    for (std::size_t k = 1; k < sorted.size(); ++k)
        if (sorted[k] == sorted[k - 1]) ++dup;
    rep.duplicate_value_fraction = static_cast<double>(dup) / static_cast<double>(xs.size());

    rep.flagged = rep.duplicate_value_fraction > 1e-3 || rep.max_abs_z > 4.0;
    if (rep.flagged)
        rep.notes = rep.duplicate_value_fraction > 1e-3
                        ? "exact cross-run value collisions: runs are not independent draws"
                        : "disjoint-bin indicator covariance exceeds 4 SE";
    return rep;
}

// ---------------------------------------------------------------------------
// Density comparison
// ---------------------------------------------------------------------------

/// Two-sample KS between empirical densities. Uses the exact sample-level
/// statistic when both densities retain raw samples; otherwise falls back to
/// the max gap between binned CDFs with the same asymptotic critical value.
inline stats::KsResult ks_distance(const EmpiricalDensity& a, const EmpiricalDensity& b,
                                   double alpha = 0.01) {
    if (a.n_samples == 0 || b.n_samples == 0) throw rejected_input("ks_distance: empty density");
    a.validate();
    b.validate();
    if (!a.samples.empty() && !b.samples.empty())
        return stats::ks_two_sample(a.samples, b.samples, alpha);

    std::vector<double> eval = a.bin_edges;
    eval.insert(eval.end(), b.bin_edges.begin(), b.bin_edges.end());
    std::sort(eval.begin(), eval.end());
    eval.erase(std::unique(eval.begin(), eval.end()), eval.end());
    double d = 0.0;
    for (double x : eval) d = std::max(d, std::abs(a.cdf(x) - b.cdf(x)));
    stats::KsResult r;
    r.statistic = d;
    r.alpha = alpha;
    r.n_a = a.n_samples;
    r.n_b = b.n_samples;
    r.binned = true;
    const double na = static_cast<double>(a.n_samples), nb = static_cast<double>(b.n_samples);
    r.critical_value = stats::ks_critical_coefficient(alpha) * std::sqrt((na + nb) / (na * nb));
    return r;
}

} // namespace ensemblab
