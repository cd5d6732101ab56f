#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <random>
#include <string>
#include <thread>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "ensemblab/errors.hpp"
#include "ensemblab/path.hpp"
#include "ensemblab/process.hpp"
#include "ensemblab/rng.hpp"
#include "ensemblab/time_grid.hpp"

namespace ensemblab {

/// Covariance of fractional Brownian motion: 0.5 sigma^2 (s^2H + t^2H - |t-s|^2H).
/// Reduces to sigma^2 min(s,t) at H = 1/2.
inline double fbm_covariance(double s, double t, double hurst, double sigma = 1.0) {
    if (!(hurst > 0.0 && hurst < 1.0)) throw rejected_input("fbm_covariance: H must lie in (0,1)");
    if (s < 0.0 || t < 0.0) throw rejected_input("fbm_covariance: times must be >= 0");
    const double h2 = 2.0 * hurst;
    return 0.5 * sigma * sigma *
           (std::pow(s, h2) + std::pow(t, h2) - std::pow(std::abs(t - s), h2));
}

/// Exact sampling limit: factorizing the increment covariance is O(n^3), so
/// grids are capped at desk scale.
inline constexpr std::size_t kMaxFbmSteps = 4096;

/// Exact fBm sampler for one grid. Factorizes the (Toeplitz) covariance of
/// the grid increments once; each draw is then a matrix-vector product, so
/// ensembles on a shared grid amortize the factorization. Values are pinned
/// to x(t0) = 0 and times are measured from the grid start.
class FbmSampler {
public:
    FbmSampler(const TimeGrid& grid, double hurst, double sigma) : grid_(grid), spec_{hurst, sigma} {
        spec_.validate();
        grid_.validate();
        const std::size_t n = grid.n_steps;
        if (n > kMaxFbmSteps)
            throw rejected_input("fBm: exact sampling capped at " + std::to_string(kMaxFbmSteps) +
                                 " steps, got " + std::to_string(n));
        Eigen::MatrixXd cov(n, n);
        for (std::size_t i = 0; i < n; ++i) {
            const double a0 = grid.time(i) - grid.t0;
            const double a1 = grid.time(i + 1) - grid.t0;
            for (std::size_t j = 0; j <= i; ++j) {
                const double b0 = grid.time(j) - grid.t0;
                const double b1 = grid.time(j + 1) - grid.t0;
                const double c = fbm_covariance(a1, b1, hurst, sigma) -
                                 fbm_covariance(a1, b0, hurst, sigma) -
                                 fbm_covariance(a0, b1, hurst, sigma) +
                                 fbm_covariance(a0, b0, hurst, sigma);
                cov(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = c;
                cov(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = c;
            }
        }
        Eigen::LLT<Eigen::MatrixXd> llt(cov);
        if (llt.info() != Eigen::Success)
            throw numerical_error("fBm: increment covariance factorization failed (H=" +
                                  std::to_string(hurst) + ", n=" + std::to_string(n) + ")");
        factor_ = llt.matrixL();
    }

    Path sample(std::mt19937_64& rng, SeedTag tag = {}) const {
        const std::size_t n = grid_.n_steps;
        std::normal_distribution<double> normal(0.0, 1.0);
        Eigen::VectorXd z(n);
        for (std::size_t i = 0; i < n; ++i) z(static_cast<Eigen::Index>(i)) = normal(rng);
        const Eigen::VectorXd incr = factor_ * z;
        std::vector<double> values(n + 1);
        values[0] = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            values[i + 1] = values[i] + incr(static_cast<Eigen::Index>(i));
        return Path(grid_, std::move(values), tag);
    }

    const TimeGrid& grid() const { return grid_; }

private:
    TimeGrid grid_;
    FbmSpec spec_;
    Eigen::MatrixXd factor_;
};

// ---------------------------------------------------------------------------
// Single-path generators. Each is a pure function of (spec, grid, seed).
// ---------------------------------------------------------------------------

namespace detail {

inline Path wiener_path(const WienerSpec& spec, const TimeGrid& grid, std::mt19937_64& rng,
                        SeedTag tag) {
    std::normal_distribution<double> normal(0.0, 1.0);
    const double step_sd = spec.sigma * std::sqrt(grid.dt);
    std::vector<double> values(grid.n_points());
    values[0] = 0.0;
    for (std::size_t k = 1; k < values.size(); ++k)
        values[k] = values[k - 1] + step_sd * normal(rng);
    return Path(grid, std::move(values), tag);
}

inline Path euler_ito_path(const ItoSpec& spec, const TimeGrid& grid, std::mt19937_64& rng,
                           SeedTag tag, std::size_t substeps) {
    if (substeps < 1) throw rejected_input("Ito: substeps must be >= 1");
    std::normal_distribution<double> normal(0.0, 1.0);
    const double h = grid.dt / static_cast<double>(substeps);
    const double sqrt_h = std::sqrt(h);
    // The scaling form is indeterminate at t = 0: evaluate it no earlier
    // than the first refined time step.
    const double t_floor = (spec.form == DiffusionForm::ScalingH && grid.t0 <= 0.0)
                               ? grid.t0 + h
                               : -std::numeric_limits<double>::infinity();

    std::vector<double> values(grid.n_points());
    double x = spec.x0;
    values[0] = x;
    for (std::size_t k = 0; k < grid.n_steps; ++k) {
        for (std::size_t s = 0; s < substeps; ++s) {
            const double t = grid.time(k) + static_cast<double>(s) * h;
            const double d = spec.diffusion(x, std::max(t, t_floor));
            if (d < 0.0 || !std::isfinite(d))
                throw numerical_error("Ito " + to_string(spec.form) +
                                      ": diffusion coefficient invalid at t=" + std::to_string(t));
            x += std::sqrt(d) * sqrt_h * normal(rng);
            if (spec.form == DiffusionForm::LinearX && x < 0.0) x = -x; // reflect, keeps D >= 0
        }
        if (!std::isfinite(x))
            throw numerical_error("Ito " + to_string(spec.form) + ": overflow at t=" +
                                  std::to_string(grid.time(k + 1)));
        values[k + 1] = x;
    }
    return Path(grid, std::move(values), tag);
}

inline Path exact_ou_path(const OuSpec& spec, const TimeGrid& grid, std::mt19937_64& rng,
                          SeedTag tag) {
    std::normal_distribution<double> normal(0.0, 1.0);
    // Exact transition: x(t+dt) | x(t) is Gaussian with mean x e^{-theta dt}
    // and variance (sigma^2 / 2 theta)(1 - e^{-2 theta dt}).
    const double decay = std::exp(-spec.theta * grid.dt);
    const double step_sd = std::sqrt(spec.stationary_variance() * (1.0 - decay * decay));
    std::vector<double> values(grid.n_points());
    double x = spec.stationary_start ? std::sqrt(spec.stationary_variance()) * normal(rng)
                                     : spec.x0;
    values[0] = x;
    for (std::size_t k = 1; k < values.size(); ++k) {
        x = x * decay + step_sd * normal(rng);
        values[k] = x;
    }
    return Path(grid, std::move(values), tag);
}

} // namespace detail

inline Path simulate_wiener(const WienerSpec& spec, const TimeGrid& grid, std::uint64_t seed) {
    spec.validate();
    grid.validate();
    std::mt19937_64 rng = make_stream(seed, 0);
    return detail::wiener_path(spec, grid, rng, {seed, 0});
}

inline Path simulate_fbm(const FbmSpec& spec, const TimeGrid& grid, std::uint64_t seed) {
    FbmSampler sampler(grid, spec.hurst, spec.sigma);
    std::mt19937_64 rng = make_stream(seed, 0);
    return sampler.sample(rng, {seed, 0});
}

/// Drift-free Euler-Maruyama on a substep-refined grid, reported on the
/// coarse grid. The martingale property holds to discretization order.
inline Path simulate_ito(const ItoSpec& spec, const TimeGrid& grid, std::uint64_t seed,
                         std::size_t substeps = 1) {
    spec.validate();
    grid.validate();
    std::mt19937_64 rng = make_stream(seed, 0);
    return detail::euler_ito_path(spec, grid, rng, {seed, 0}, substeps);
}

/// Exact conditional-Gaussian transitions; with stationary_start the draw
/// begins in the stationary law (mean 0, variance sigma^2 / 2 theta).
inline Path simulate_ou(const OuSpec& spec, const TimeGrid& grid, std::uint64_t seed) {
    spec.validate();
    grid.validate();
    std::mt19937_64 rng = make_stream(seed, 0);
    return detail::exact_ou_path(spec, grid, rng, {seed, 0});
}

inline Path simulate_path(const ProcessSpec& spec, const TimeGrid& grid, std::uint64_t seed,
                          std::size_t substeps = 1) {
    struct V {
        const TimeGrid& grid;
        std::uint64_t seed;
        std::size_t substeps;
        Path operator()(const WienerSpec& s) const { return simulate_wiener(s, grid, seed); }
        Path operator()(const FbmSpec& s) const { return simulate_fbm(s, grid, seed); }
        Path operator()(const ItoSpec& s) const { return simulate_ito(s, grid, seed, substeps); }
        Path operator()(const OuSpec& s) const { return simulate_ou(s, grid, seed); }
    };
    return std::visit(V{grid, seed, substeps}, spec);
}

/// N independent paths; path k draws from the stream (master_seed, k), so the
/// result is reproducible and independent of thread count.
inline PathEnsemble simulate_ensemble(const ProcessSpec& spec, const TimeGrid& grid,
                                      std::size_t n_paths, std::uint64_t master_seed,
                                      std::size_t substeps = 1, std::size_t n_threads = 1) {
    validate(spec);
    grid.validate();
    if (n_paths < 1) throw rejected_input("simulate_ensemble: n_paths must be >= 1");

    // fBm shares one covariance factorization across all paths.
    const FbmSpec* fbm = std::get_if<FbmSpec>(&spec);
    std::unique_ptr<FbmSampler> sampler;
    if (fbm) sampler = std::make_unique<FbmSampler>(grid, fbm->hurst, fbm->sigma);

    auto make_path = [&](std::size_t k) -> Path {
        std::mt19937_64 rng = make_stream(master_seed, k);
        const SeedTag tag{master_seed, k};
        try {
            if (fbm) return sampler->sample(rng, tag);
            if (const auto* ito = std::get_if<ItoSpec>(&spec))
                return detail::euler_ito_path(*ito, grid, rng, tag, substeps);
            if (const auto* ou = std::get_if<OuSpec>(&spec))
                return detail::exact_ou_path(*ou, grid, rng, tag);
            return detail::wiener_path(std::get<WienerSpec>(spec), grid, rng, tag);
        } catch (const numerical_error& e) {
            throw numerical_error("path " + std::to_string(k) + ": " + e.what());
        }
    };

    std::vector<Path> paths(n_paths);
    const std::size_t workers = std::max<std::size_t>(1, std::min(n_threads, n_paths));
    if (workers == 1) {
        for (std::size_t k = 0; k < n_paths; ++k) paths[k] = make_path(k);
    } else {
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errors(workers);
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                try {
                    for (std::size_t k = w; k < n_paths; k += workers) paths[k] = make_path(k);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        }
        for (auto& t : pool) t.join();
        for (const auto& e : errors)
            if (e) std::rethrow_exception(e);
    }
    return PathEnsemble(grid, std::move(paths));
}

} // namespace ensemblab
