#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "ensemblab/ensemblab.hpp"
#include "oracles.hpp"

using namespace ensemblab;

namespace {

Path linear_path(double slope, double dt, std::size_t n) {
    const TimeGrid grid(0, dt, n);
    std::vector<double> v(grid.n_points());
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = slope * grid.time(k);
    return Path(grid, std::move(v));
}

std::size_t single_massive_bin(const EmpiricalDensity& d) {
    std::size_t idx = 0, hits = 0;
    for (std::size_t i = 0; i < d.n_bins(); ++i)
        if (d.mass[i] > 0.0) {
            idx = i;
            ++hits;
        }
    REQUIRE(hits == 1);
    return idx;
}

} // namespace

TEST_CASE("make_density normalizes and tracks overflow", "[density]") {
    const std::vector<double> edges = uniform_bin_edges(-1.0, 1.0, 4);

    SECTION("integral is 1 to 1e-9") {
        const auto d = make_density({-0.9, -0.1, 0.1, 0.2, 0.7}, edges, DensityLabel::OnePoint);
        CHECK(std::abs(d.integral() - 1.0) <= 1e-9);
        CHECK(d.n_samples == 5);
    }

    SECTION("permutation invariance") {
        std::vector<double> xs;
        std::mt19937_64 rng(3);
        std::normal_distribution<double> normal(0.0, 0.3);
        for (int i = 0; i < 1000; ++i) xs.push_back(normal(rng));
        const auto a = make_density(xs, edges, DensityLabel::OnePoint);
        std::shuffle(xs.begin(), xs.end(), rng);
        const auto b = make_density(xs, edges, DensityLabel::OnePoint);
        CHECK(a.mass == b.mass);
    }

    SECTION("small overflow is clipped and counted") {
        std::vector<double> xs(2000, 0.0);
        xs[0] = 5.0;  // one clipped sample: 0.05%
        xs[1] = -5.0; // and one below
        const auto d = make_density(xs, edges, DensityLabel::OnePoint);
        CHECK(d.overflow == 1);
        CHECK(d.underflow == 1);
        CHECK(d.n_samples == 1998);
        CHECK(std::abs(d.integral() - 1.0) <= 1e-9);
    }

    SECTION("overflow beyond 0.1% fails the build") {
        std::vector<double> xs(100, 0.0);
        xs[0] = 5.0;
        CHECK_THROWS_AS(make_density(xs, edges, DensityLabel::OnePoint), numerical_error);
    }

    SECTION("empty sample rejected") {
        CHECK_THROWS_AS(make_density({}, edges, DensityLabel::OnePoint), rejected_input);
    }

    SECTION("JSON round-trip") {
        const auto d = make_density({-0.5, 0.0, 0.5}, edges, DensityLabel::IncrementEnsemble);
        const auto back = EmpiricalDensity::from_json(d.to_json());
        CHECK(back.mass == d.mass);
        CHECK(back.bin_edges == d.bin_edges);
        CHECK(back.label == d.label);
    }
}

TEST_CASE("fd_bin_edges", "[density]") {
    std::vector<double> xs;
    std::mt19937_64 rng(5);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int i = 0; i < 4000; ++i) xs.push_back(normal(rng));
    const auto edges = fd_bin_edges(xs);
    CHECK(edges.size() >= 3);
    CHECK(edges.front() == *std::min_element(xs.begin(), xs.end()));
    CHECK(edges.back() == *std::max_element(xs.begin(), xs.end()));
    // degenerate sample still yields one usable bin
    const auto flat = fd_bin_edges(std::vector<double>(10, 2.0));
    CHECK(flat.size() == 2);
    CHECK((flat[0] < 2.0 && 2.0 < flat[1]));
}

TEST_CASE("sliding_increment_histogram", "[density]") {
    SECTION("deterministic drift: all mass at vT") {
        const auto d = sliding_increment_histogram(linear_path(1.5, 1.0, 30), 2.0, 2.0,
                                                   uniform_bin_edges(0.0, 6.0, 12));
        const std::size_t i = single_massive_bin(d);
        CHECK(d.bin_edges[i] <= 3.0);
        CHECK(3.0 <= d.bin_edges[i + 1]);
    }

    SECTION("constant path: all mass at 0") {
        const Path path(TimeGrid(0, 1, 10), std::vector<double>(11, 4.0));
        const auto d =
            sliding_increment_histogram(path, 1.0, 1.0, uniform_bin_edges(-1.0, 1.0, 5));
        const std::size_t i = single_massive_bin(d);
        CHECK(d.bin_edges[i] <= 0.0);
        CHECK(0.0 <= d.bin_edges[i + 1]);
    }

    SECTION("Wiener increments pass a one-sample normal KS") {
        const Path path = simulate_wiener(WienerSpec{1.0}, TimeGrid(0, 1, 20000), 301);
        const auto d = sliding_increment_histogram(path, 1.0, 1.0,
                                                   uniform_bin_edges(-6.0, 6.0, 60));
        REQUIRE(!d.samples.empty());
        CHECK(stats::ks_one_sample(d.samples, oracle::normal_cdf, 0.01).passes());
    }

    SECTION("no complete window") {
        CHECK_THROWS_AS(sliding_increment_histogram(linear_path(1.0, 1.0, 3), 4.0, 4.0,
                                                    uniform_bin_edges(-1, 1, 2)),
                        insufficient_data);
    }
}

TEST_CASE("ensemble_increment_histogram", "[density]") {
    SECTION("fBm keeps the same increment law at shifted base times") {
        const PathEnsemble ens = simulate_ensemble(FbmSpec{0.7, 1.0}, TimeGrid(0, 1, 4), 10000, 302);
        const auto edges = uniform_bin_edges(-6.0, 6.0, 50);
        const auto a = ensemble_increment_histogram(ens, 1.0, 1.0, edges);
        const auto b = ensemble_increment_histogram(ens, 3.0, 1.0, edges);
        CHECK(ks_distance(a, b, 0.01).passes());
    }

    SECTION("scaling diffusion: same MSF, different increment law") {
        const ItoSpec scaling{DiffusionForm::ScalingH, 0.0, 0.5};
        const PathEnsemble ens = simulate_ensemble(scaling, TimeGrid(0, 0.5, 9), 100000, 303, 40);
        const auto edges = uniform_bin_edges(-12.0, 12.0, 80);
        const auto a = ensemble_increment_histogram(ens, 0.5, 0.5, edges);
        const auto b = ensemble_increment_histogram(ens, 4.0, 0.5, edges);
        CHECK_FALSE(ks_distance(a, b, 0.01).passes());
    }

    SECTION("single path gives a degenerate one-bin histogram") {
        const PathEnsemble ens = simulate_ensemble(WienerSpec{1.0}, TimeGrid(0, 1, 2), 1, 304);
        const auto d =
            ensemble_increment_histogram(ens, 0.0, 1.0, uniform_bin_edges(-6.0, 6.0, 10));
        single_massive_bin(d);
        CHECK(d.n_samples == 1);
    }

    SECTION("off-grid times rejected") {
        const PathEnsemble ens = simulate_ensemble(WienerSpec{1.0}, TimeGrid(0, 1, 2), 4, 305);
        CHECK_THROWS_AS(
            ensemble_increment_histogram(ens, 0.25, 1.0, uniform_bin_edges(-1, 1, 2)),
            rejected_input);
    }
}

TEST_CASE("one_point_histogram", "[density]") {
    SECTION("Wiener marginal at t=1 is standard normal") {
        const PathEnsemble ens = simulate_ensemble(WienerSpec{1.0}, TimeGrid(0, 1, 1), 20000, 306);
        const auto d = one_point_histogram(ens, 1.0, uniform_bin_edges(-6.0, 6.0, 50));
        CHECK(stats::ks_one_sample(d.samples, oracle::normal_cdf, 0.01).passes());
    }

    SECTION("identical constant paths: delta mass") {
        std::vector<Path> paths(6, Path(TimeGrid(0, 1, 4), std::vector<double>(5, 2.5)));
        const PathEnsemble ens(paths.front().grid, paths);
        const auto d = one_point_histogram(ens, 2.0, uniform_bin_edges(0.0, 5.0, 10));
        const std::size_t i = single_massive_bin(d);
        CHECK(d.bin_edges[i] <= 2.5);
        CHECK(2.5 <= d.bin_edges[i + 1]);
    }

    SECTION("stationary OU: one-point laws agree across times") {
        const OuSpec spec{1.0, std::sqrt(2.0), 0.0, true};
        const PathEnsemble ens = simulate_ensemble(spec, TimeGrid(0, 1, 4), 10000, 307);
        const auto edges = uniform_bin_edges(-6.0, 6.0, 40);
        const auto a = one_point_histogram(ens, 1.0, edges);
        const auto b = one_point_histogram(ens, 4.0, edges);
        CHECK(ks_distance(a, b, 0.01).passes());
    }
}

TEST_CASE("two_point_increment_histogram and factorization", "[density][joint]") {
    const auto edges = uniform_bin_edges(-5.0, 5.0, 8);

    SECTION("Wiener with disjoint windows factors") {
        const PathEnsemble ens = simulate_ensemble(WienerSpec{1.0}, TimeGrid(0, 1, 3), 20000, 308);
        const auto joint = two_point_increment_histogram(ens, 0.0, 2.0, 1.0, edges, edges);
        CHECK_FALSE(joint.overlapping_windows);
        const double threshold = factorization_threshold(joint, 0.01, 199, 5);
        CHECK(joint.factorization_score() < threshold);
    }

    SECTION("fBm H=0.75 with adjacent windows does not factor") {
        const PathEnsemble ens =
            simulate_ensemble(FbmSpec{0.75, 1.0}, TimeGrid(0, 1, 2), 100000, 309);
        const auto joint = two_point_increment_histogram(ens, 0.0, 1.0, 1.0, edges, edges);
        const double threshold = factorization_threshold(joint, 0.01, 199, 6);
        CHECK(joint.factorization_score() > threshold);
    }

    SECTION("t1 = t2 concentrates on the diagonal") {
        const PathEnsemble ens = simulate_ensemble(WienerSpec{1.0}, TimeGrid(0, 1, 2), 5000, 310);
        const auto joint = two_point_increment_histogram(ens, 0.0, 0.0, 1.0, edges, edges);
        double off_diag = 0.0;
        const auto p = joint.probabilities();
        for (std::size_t i = 0; i < joint.n1(); ++i)
            for (std::size_t j = 0; j < joint.n2(); ++j)
                if (i != j) off_diag += p[i * joint.n2() + j];
        CHECK(off_diag == 0.0);
    }

    SECTION("overlap is flagged") {
        const PathEnsemble ens = simulate_ensemble(WienerSpec{1.0}, TimeGrid(0, 0.5, 4), 100, 311);
        const auto joint = two_point_increment_histogram(ens, 0.0, 0.5, 1.0, edges, edges);
        CHECK(joint.overlapping_windows);
    }

    SECTION("factorization score halves when paths quadruple") {
        const TimeGrid grid(0, 1, 3);
        const auto small = two_point_increment_histogram(
            simulate_ensemble(WienerSpec{1.0}, grid, 4000, 312), 0.0, 2.0, 1.0, edges, edges);
        const auto big = two_point_increment_histogram(
            simulate_ensemble(WienerSpec{1.0}, grid, 16000, 313), 0.0, 2.0, 1.0, edges, edges);
        const double ratio = small.factorization_score() / big.factorization_score();
        CHECK(ratio == Catch::Approx(2.0).epsilon(0.30));
    }
}

TEST_CASE("equal_time_factorization_check", "[density][equal-time]") {
    const auto edges = uniform_bin_edges(-4.0, 4.0, 8);
    const PathEnsemble ens = simulate_ensemble(WienerSpec{1.0}, TimeGrid(0, 1, 1), 20000, 314);

    SECTION("honest ensemble: exact zeros and small z-scores") {
        const auto rep = equal_time_factorization_check(ens, 1.0, edges);
        CHECK(rep.off_diagonal_mass == 0.0);
        CHECK(rep.n_pairs_checked > 0);
        CHECK(rep.max_abs_z <= 4.0);
        CHECK(rep.duplicate_value_fraction == 0.0);
        CHECK_FALSE(rep.flagged);
    }

    SECTION("duplicated-path ensemble is flagged") {
        std::vector<Path> dup(ens.n_paths(), ens.paths.front());
        const PathEnsemble broken(ens.grid, dup);
        const auto rep = equal_time_factorization_check(broken, 1.0, edges);
        CHECK(rep.off_diagonal_mass == 0.0);
        CHECK(rep.duplicate_value_fraction > 0.99);
        CHECK(rep.flagged);
    }

    SECTION("partial duplication is flagged too") {
        std::vector<Path> mixed = ens.paths;
        for (std::size_t k = 0; k < mixed.size(); k += 2) mixed[k + 1] = mixed[k];
        const auto rep = equal_time_factorization_check(PathEnsemble(ens.grid, mixed), 1.0, edges);
        CHECK(rep.flagged);
    }
}

TEST_CASE("ks_distance", "[density][ks]") {
    const auto edges = uniform_bin_edges(-5.0, 5.0, 40);

    SECTION("identical densities: statistic 0") {
        const PathEnsemble ens = simulate_ensemble(WienerSpec{1.0}, TimeGrid(0, 1, 1), 500, 315);
        const auto d = one_point_histogram(ens, 1.0, edges);
        CHECK(ks_distance(d, d).statistic == 0.0);
    }

    SECTION("disjoint supports: statistic 1") {
        const auto a = make_density({-3.0, -2.5, -2.0}, edges, DensityLabel::OnePoint);
        const auto b = make_density({2.0, 2.5, 3.0}, edges, DensityLabel::OnePoint);
        CHECK(ks_distance(a, b).statistic == 1.0);
    }

    SECTION("sliding vs ensemble increment histograms agree for Wiener, T in {1,2,4}") {
        const Path long_path = simulate_wiener(WienerSpec{1.0}, TimeGrid(0, 1, 20000), 316);
        const PathEnsemble ens = simulate_ensemble(WienerSpec{1.0}, TimeGrid(0, 1, 4), 20000, 317);
        for (double lag : {1.0, 2.0, 4.0}) {
            const auto wide = uniform_bin_edges(-16.0, 16.0, 128);
            const auto sliding = sliding_increment_histogram(long_path, lag, lag, wide);
            const auto fixed = ensemble_increment_histogram(ens, 0.0, lag, wide);
            INFO("T=" << lag);
            CHECK(ks_distance(sliding, fixed, 0.01).passes());
        }
    }

    SECTION("binned fallback stays close to the sample statistic") {
        const auto wide = uniform_bin_edges(-12.0, 12.0, 96);
        const PathEnsemble a = simulate_ensemble(WienerSpec{1.0}, TimeGrid(0, 1, 1), 4000, 318);
        const PathEnsemble b = simulate_ensemble(WienerSpec{2.0}, TimeGrid(0, 1, 1), 4000, 319);
        const auto da = one_point_histogram(a, 1.0, wide);
        const auto db = one_point_histogram(b, 1.0, wide);
        const auto exact = ks_distance(da, db, 0.01);
        auto stripped_a = da;
        auto stripped_b = db;
        stripped_a.samples.clear();
        stripped_b.samples.clear();
        const auto binned = ks_distance(stripped_a, stripped_b, 0.01);
        CHECK(binned.binned);
        CHECK_FALSE(exact.binned);
        CHECK(binned.statistic == Catch::Approx(exact.statistic).margin(0.02));
        CHECK_FALSE(binned.passes()); // sigma 1 vs 2 is far beyond the 1% critical value
    }

    SECTION("empty density rejected") {
        EmpiricalDensity empty;
        empty.bin_edges = {0.0, 1.0};
        empty.mass = {0.0};
        CHECK_THROWS_AS(ks_distance(empty, empty), rejected_input);
    }
}
