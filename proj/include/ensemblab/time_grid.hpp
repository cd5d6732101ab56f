#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "ensemblab/errors.hpp"

namespace ensemblab {

/// Uniform strobe grid: times t0 + k*dt for k = 0..n_steps.
struct TimeGrid {
    double t0 = 0.0;
    double dt = 1.0;
    std::size_t n_steps = 1;

    TimeGrid() = default;
    TimeGrid(double start, double step, std::size_t steps) : t0(start), dt(step), n_steps(steps) {
        validate();
    }

    void validate() const {
        if (!std::isfinite(t0) || !std::isfinite(dt)) throw rejected_input("TimeGrid: non-finite t0/dt");
        if (dt <= 0.0) throw rejected_input("TimeGrid: dt must be > 0");
        if (n_steps < 1) throw rejected_input("TimeGrid: n_steps must be >= 1");
    }

    std::size_t n_points() const { return n_steps + 1; }
    double time(std::size_t k) const { return t0 + static_cast<double>(k) * dt; }
    double t_end() const { return time(n_steps); }

    std::vector<double> times() const {
        std::vector<double> out(n_points());
        for (std::size_t k = 0; k < out.size(); ++k) out[k] = time(k);
        return out;
    }

    /// Snap a time to its grid index; rejects times that are off-grid.
    std::size_t index_of(double t) const {
        const double raw = (t - t0) / dt;
        const double rounded = std::round(raw);
        const double tol = 1e-9 * std::max(1.0, std::abs(raw));
        if (std::abs(raw - rounded) > tol || rounded < -0.5 ||
            rounded > static_cast<double>(n_steps) + 0.5) {
            throw rejected_input("time " + std::to_string(t) + " is not on the grid");
        }
        return static_cast<std::size_t>(rounded);
    }

    /// Number of grid steps spanned by a lag; the lag must be a positive
    /// integer multiple of dt.
    std::size_t steps_of_lag(double lag) const {
        if (!(lag > 0.0)) throw rejected_input("lag must be > 0");
        const double raw = lag / dt;
        const double rounded = std::round(raw);
        if (std::abs(raw - rounded) > 1e-9 * std::max(1.0, raw) || rounded < 0.5)
            throw rejected_input("lag " + std::to_string(lag) + " is not a multiple of grid dt");
        return static_cast<std::size_t>(rounded);
    }

    friend bool operator==(const TimeGrid&, const TimeGrid&) = default;
};

} // namespace ensemblab
