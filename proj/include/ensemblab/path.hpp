#pragma once

#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "ensemblab/errors.hpp"
#include "ensemblab/rng.hpp"
#include "ensemblab/time_grid.hpp"

namespace ensemblab {

/// One sampled trajectory on a grid: values[k] = x(t0 + k*dt).
struct Path {
    TimeGrid grid;
    std::vector<double> values;
    SeedTag seed_tag;

    Path() = default;
    Path(TimeGrid g, std::vector<double> v, SeedTag tag = {})
        : grid(g), values(std::move(v)), seed_tag(tag) {
        validate();
    }

    void validate() const {
        if (values.size() != grid.n_points())
            throw rejected_input("Path: values.size() must equal n_steps + 1");
        for (double v : values)
            if (!std::isfinite(v)) throw numerical_error("Path: non-finite value");
    }

    double at_time(double t) const { return values[grid.index_of(t)]; }

    /// Forward increment x(t, T) = x(t+T) - x(t).
    double increment(double t, double lag) const {
        const std::size_t i = grid.index_of(t);
        const std::size_t m = grid.steps_of_lag(lag);
        if (i + m > grid.n_steps) throw rejected_input("increment window extends past grid end");
        return values[i + m] - values[i];
    }

    friend bool operator==(const Path&, const Path&) = default;
};

/// N statistically identical trajectories strobed at shared grid times.
struct PathEnsemble {
    TimeGrid grid;
    std::vector<Path> paths;

    PathEnsemble() = default;
    PathEnsemble(TimeGrid g, std::vector<Path> p) : grid(g), paths(std::move(p)) {
        if (paths.empty()) throw rejected_input("PathEnsemble: need at least one path");
        for (const Path& path : paths)
            if (!(path.grid == grid)) throw rejected_input("PathEnsemble: paths must share the grid");
    }

    std::size_t n_paths() const { return paths.size(); }

    /// Cross-path sample of x_k(t) at a fixed strobe time.
    std::vector<double> values_at(double t) const {
        const std::size_t i = grid.index_of(t);
        std::vector<double> out(paths.size());
        for (std::size_t k = 0; k < paths.size(); ++k) out[k] = paths[k].values[i];
        return out;
    }

    /// Cross-path sample of the increment x_k(t, T).
    std::vector<double> increments_at(double t, double lag) const {
        const std::size_t i = grid.index_of(t);
        const std::size_t m = grid.steps_of_lag(lag);
        if (i + m > grid.n_steps) throw rejected_input("increment window extends past grid end");
        std::vector<double> out(paths.size());
        for (std::size_t k = 0; k < paths.size(); ++k)
            out[k] = paths[k].values[i + m] - paths[k].values[i];
        return out;
    }

    friend bool operator==(const PathEnsemble&, const PathEnsemble&) = default;
};

} // namespace ensemblab
