#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ensemblab/data_io.hpp"
#include "ensemblab/densities.hpp"
#include "ensemblab/ensemble_builder.hpp"
#include "ensemblab/errors.hpp"
#include "ensemblab/estimators.hpp"
#include "ensemblab/simulate.hpp"

namespace ensemblab::cli {

/// Exit contract: 0 success, 1 input error, 2 numerical/analysis error.
struct CommandOutcome {
    int exit_code = 0;
    std::string summary;
    std::vector<std::string> artifacts;
};

namespace detail {

inline void write_failed_marker(const std::string& out_dir, const std::string& reason) {
    namespace fs = std::filesystem;
    if (out_dir.empty() || !fs::exists(out_dir)) return;
    std::ofstream marker(fs::path(out_dir) / ".failed");
    marker << reason << '\n';
}

/// Map exceptions to the exit contract; mark a partially written bundle.
template <typename Fn>
CommandOutcome guarded(const std::string& out_dir, Fn&& fn) {
    try {
        return fn();
    } catch (const rejected_input& e) {
        write_failed_marker(out_dir, e.what());
        return {1, std::string("input error: ") + e.what(), {}};
    } catch (const insufficient_data& e) {
        write_failed_marker(out_dir, e.what());
        return {2, std::string("analysis error: ") + e.what(), {}};
    } catch (const numerical_error& e) {
        write_failed_marker(out_dir, e.what());
        return {2, std::string("numerical error: ") + e.what(), {}};
    }
}

inline std::string ensemble_file_name(const RunConfig& config) {
    return config.ensemble_format == "binary" ? "paths.ensb" : "paths.csv";
}

inline PathEnsemble load_saved_ensemble(const std::string& dir) {
    namespace fs = std::filesystem;
    if (fs::exists(fs::path(dir) / "paths.ensb"))
        return load_ensemble_binary((fs::path(dir) / "paths.ensb").string());
    if (fs::exists(fs::path(dir) / "paths.csv")) {
        // CSV round-trip: rebuild paths grouped by path_id
        std::ifstream in(fs::path(dir) / "paths.csv");
        std::string line;
        std::getline(in, line);
        std::vector<std::vector<double>> values;
        std::vector<double> times;
        std::size_t cur = static_cast<std::size_t>(-1);
        std::size_t line_no = 1;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            std::istringstream row(line);
            std::string id_s, t_s, x_s;
            if (!std::getline(row, id_s, ',') || !std::getline(row, t_s, ',') ||
                !std::getline(row, x_s))
                throw rejected_input("paths.csv: malformed line " + std::to_string(line_no));
            const std::size_t id = std::stoul(id_s);
            if (id != cur) {
                values.emplace_back();
                cur = id;
            }
            if (values.size() == 1) times.push_back(std::stod(t_s));
            values.back().push_back(std::stod(x_s));
        }
        if (values.empty() || times.size() < 2)
            throw rejected_input("paths.csv holds no usable paths");
        const TimeGrid grid(times.front(), times[1] - times.front(), times.size() - 1);
        std::vector<Path> paths;
        for (std::size_t k = 0; k < values.size(); ++k)
            paths.emplace_back(grid, std::move(values[k]), SeedTag{0, k});
        return PathEnsemble(grid, std::move(paths));
    }
    throw rejected_input("no ensemble file (paths.ensb or paths.csv) in '" + dir + "'");
}

} // namespace detail

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

inline CommandOutcome cmd_simulate(const RunConfig& config, bool overwrite = false) {
    return detail::guarded(config.out_dir, [&]() -> CommandOutcome {
        if (!config.process) throw rejected_input("simulate: config needs a 'process'");
        if (!config.grid) throw rejected_input("simulate: config needs a 'grid'");
        const PathEnsemble ensemble = simulate_ensemble(
            *config.process, *config.grid, config.n_paths, config.seed, config.substeps,
            config.threads);

        ResultBundle bundle;
        bundle.config_echo = config.to_json();
        bundle.seed = config.seed;
        bundle.seed_source = config.seed_source;
        bundle.add_report("simulate", nlohmann::json{{"n_paths", ensemble.n_paths()},
                                                     {"n_steps", ensemble.grid.n_steps},
                                                     {"t0", ensemble.grid.t0},
                                                     {"dt", ensemble.grid.dt},
                                                     {"format", config.ensemble_format}});
        const auto manifest = save_bundle(bundle, config.out_dir, overwrite);
        const std::string file =
            (std::filesystem::path(config.out_dir) / detail::ensemble_file_name(config)).string();
        if (config.ensemble_format == "binary")
            save_ensemble_binary(ensemble, file);
        else
            save_ensemble_csv(ensemble, file);

        std::ostringstream summary;
        summary << "simulated " << ensemble.n_paths() << " paths of " << kind_name(*config.process)
                << " on grid [t0=" << ensemble.grid.t0 << ", dt=" << ensemble.grid.dt
                << ", n_steps=" << ensemble.grid.n_steps << "], seed " << config.seed << " ("
                << config.seed_source << ")";
        return {0, summary.str(), {manifest.string(), file}};
    });
}

// ---------------------------------------------------------------------------
// analyze
// ---------------------------------------------------------------------------

namespace detail {

struct ComparisonRow {
    std::string estimator;
    double lag = 0.0;
    EstimatorReport sliding;
    EstimatorReport ensemble;
    bool has_sliding = false;
    bool has_ensemble = false;
    double separation_se = 0.0; ///< |sliding - ensemble| / joint SE
    std::optional<stats::KsResult> ks;

    nlohmann::json to_json() const {
        nlohmann::json j{{"estimator", estimator}, {"lag", lag}};
        if (has_sliding) j["sliding"] = sliding.to_json();
        if (has_ensemble) j["ensemble"] = ensemble.to_json();
        if (has_sliding && has_ensemble) j["separation_se"] = separation_se;
        if (ks)
            j["ks"] = {{"statistic", ks->statistic},
                       {"critical_value", ks->critical_value},
                       {"alpha", ks->alpha},
                       {"pass", ks->passes()}};
        return j;
    }
};

inline void write_comparison_csv(const std::vector<ComparisonRow>& rows, const std::string& file) {
    std::ofstream out(file);
    if (!out) throw rejected_input("cannot write '" + file + "'");
    out << "estimator,lag,sliding_estimate,sliding_std_error,sliding_autocorr_lag1,"
           "ensemble_estimate,ensemble_std_error,separation_se,ks_statistic,ks_critical,ks_pass\n";
    for (const auto& r : rows) {
        out << r.estimator << ',' << ensemblab::detail::fmt_double(r.lag) << ',';
        if (r.has_sliding)
            out << ensemblab::detail::fmt_double(r.sliding.estimate) << ','
                << ensemblab::detail::fmt_double(r.sliding.std_error) << ','
                << ensemblab::detail::fmt_double(r.sliding.autocorr_lag1) << ',';
        else
            out << ",,,";
        if (r.has_ensemble)
            out << ensemblab::detail::fmt_double(r.ensemble.estimate) << ','
                << ensemblab::detail::fmt_double(r.ensemble.std_error) << ',';
        else
            out << ",,";
        if (r.has_sliding && r.has_ensemble)
            out << ensemblab::detail::fmt_double(r.separation_se);
        out << ',';
        if (r.ks)
            out << ensemblab::detail::fmt_double(r.ks->statistic) << ','
                << ensemblab::detail::fmt_double(r.ks->critical_value) << ','
                << (r.ks->passes() ? "1" : "0");
        else
            out << ",,";
        out << '\n';
    }
}

} // namespace detail

/// For each requested (estimator, T): the sliding variant (windows pooled
/// across paths) and the strobed-ensemble variant at the base time, side by
/// side, with a KS comparison of the two increment histograms. Disagreement
/// is a finding, not an error.
inline CommandOutcome cmd_analyze(const RunConfig& config, bool overwrite = false) {
    return detail::guarded(config.out_dir, [&]() -> CommandOutcome {
        PathEnsemble ensemble = [&] {
            if (config.input_bundle) return detail::load_saved_ensemble(*config.input_bundle);
            if (config.process) {
                if (!config.grid) throw rejected_input("analyze: config needs a 'grid'");
                return simulate_ensemble(*config.process, *config.grid, config.n_paths,
                                         config.seed, config.substeps, config.threads);
            }
            if (config.input_file) {
                LongSeries s = load_series(*config.input_file, config.input_kind);
                if (s.value_kind == ValueKind::Price) {
                    for (double& v : s.values) v = std::log(v);
                    s.value_kind = ValueKind::Level;
                }
                if (config.regularize_dt) s = regularize(s, *config.regularize_dt);
                const auto dt = s.uniform_spacing();
                if (!dt)
                    throw rejected_input(
                        "analyze: input series is irregular; set 'regularize_dt'");
                const TimeGrid grid(s.timestamps.front(), *dt, s.size() - 1);
                std::vector<Path> one;
                one.emplace_back(grid, s.values, SeedTag{0, 0});
                return PathEnsemble(grid, std::move(one));
            }
            throw rejected_input("analyze: nothing to analyze");
        }();

        if (config.analysis.lags.empty())
            throw rejected_input("analyze: analysis.lags must not be empty");
        std::vector<std::string> estimators = config.analysis.estimators;
        if (estimators.empty()) estimators = {"sliding_increment_mean", "sliding_msf"};

        const double base_time = config.analysis.base_time.value_or(ensemble.grid.t0);
        std::vector<detail::ComparisonRow> rows;
        for (double lag : config.analysis.lags) {
            ensemble.grid.steps_of_lag(lag); // validate up front
            const double stride = config.analysis.stride.value_or(lag);
            std::optional<stats::KsResult> ks_row;
            const bool ensemble_side = ensemble.n_paths() >= 2;
            if (ensemble_side) {
                try {
                    std::vector<double> pooled;
                    for (const Path& p : ensemble.paths)
                        for (const auto& s : sliding_increments(p, lag, stride))
                            pooled.push_back(s.z);
                    std::vector<double> ens = ensemble.increments_at(base_time, lag);
                    std::vector<double> all = pooled;
                    all.insert(all.end(), ens.begin(), ens.end());
                    const auto edges = config.analysis.bins
                                           ? uniform_bin_edges(*std::min_element(all.begin(), all.end()),
                                                               *std::max_element(all.begin(), all.end()) + 1e-12,
                                                               *config.analysis.bins)
                                           : fd_bin_edges(all);
                    const auto sliding_hist = make_density(pooled, edges, DensityLabel::IncrementSliding);
                    const auto ens_hist = make_density(ens, edges, DensityLabel::IncrementEnsemble);
                    ks_row = ks_distance(sliding_hist, ens_hist, 0.01);
                } catch (const insufficient_data&) {
                    // KS comparison skipped when a side has no samples
                }
            }
            for (const std::string& name : estimators) {
                try {
                    detail::ComparisonRow row;
                    row.estimator = name;
                    row.lag = lag;
                    const NamedEstimator est = named_estimator_from_string(name);
                    if (est == NamedEstimator::SlidingIncrementMean) {
                        row.sliding = sliding_increment_mean(ensemble, lag, stride);
                        row.has_sliding = true;
                        if (ensemble_side) {
                            row.ensemble = ensemble_moment(ensemble, base_time, lag, 1);
                            row.has_ensemble = true;
                        }
                    } else if (est == NamedEstimator::SlidingMsf) {
                        row.sliding = sliding_msf(ensemble, lag, stride);
                        row.has_sliding = true;
                        if (ensemble_side) {
                            row.ensemble = ensemble_moment(ensemble, base_time, lag, 2);
                            row.has_ensemble = true;
                        }
                    } else {
                        if (!ensemble_side)
                            throw insufficient_data("ensemble_moment needs >= 2 paths");
                        row.ensemble = ensemble_moment(ensemble, base_time, lag, 2);
                        row.has_ensemble = true;
                    }
                    if (row.has_sliding && row.has_ensemble) {
                        const double joint = std::hypot(row.sliding.std_error, row.ensemble.std_error);
                        row.separation_se =
                            joint > 0.0
                                ? std::abs(row.sliding.estimate - row.ensemble.estimate) / joint
                                : 0.0;
                        row.ks = ks_row;
                    }
                    rows.push_back(std::move(row));
                } catch (const insufficient_data& e) {
                    throw insufficient_data("analyze " + name + " at T=" +
                                            std::to_string(lag) + ": " + e.what());
                } catch (const numerical_error& e) {
                    throw numerical_error("analyze " + name + " at T=" + std::to_string(lag) +
                                          ": " + e.what());
                }
            }
        }

        ResultBundle bundle;
        bundle.config_echo = config.to_json();
        bundle.seed = config.seed;
        bundle.seed_source = config.seed_source;
        nlohmann::json table = nlohmann::json::array();
        for (const auto& r : rows) table.push_back(r.to_json());
        bundle.add_report("analyze.comparison", table);
        const auto manifest = save_bundle(bundle, config.out_dir, overwrite);
        const std::string csv =
            (std::filesystem::path(config.out_dir) / "comparison.csv").string();
        detail::write_comparison_csv(rows, csv);

        std::ostringstream summary;
        summary << "analyzed " << rows.size() << " (estimator, T) pairs over "
                << ensemble.n_paths() << " paths";
        std::size_t disagreements = 0;
        for (const auto& r : rows)
            if (r.has_sliding && r.has_ensemble && r.separation_se > 5.0) ++disagreements;
        if (disagreements)
            summary << "; " << disagreements
                    << " pair(s) separate by > 5 SE (sliding vs ensemble)";
        return {0, summary.str(), {manifest.string(), csv}};
    });
}

// ---------------------------------------------------------------------------
// build-ensemble
// ---------------------------------------------------------------------------

inline CommandOutcome cmd_build_ensemble(const RunConfig& config, bool overwrite = false) {
    return detail::guarded(config.out_dir, [&]() -> CommandOutcome {
        if (!config.input_file) throw rejected_input("build-ensemble: config needs 'input'");
        LongSeries series = load_series(*config.input_file, config.input_kind);
        std::string transform_note;
        if (series.value_kind == ValueKind::Price) {
            for (double& v : series.values) v = std::log(v);
            series.value_kind = ValueKind::Level;
            transform_note = "prices converted to log levels; ";
        }
        if (config.regularize_dt) series = regularize(series, *config.regularize_dt);
        if (!series.uniform_spacing())
            throw rejected_input("build-ensemble: series is irregular; set 'regularize_dt'");

        ResultBundle bundle;
        bundle.config_echo = config.to_json();
        bundle.seed = config.seed;
        bundle.seed_source = config.seed_source;

        std::size_t period = 0;
        PeriodicityReport report;
        if (config.fixed_period) {
            period = *config.fixed_period; // detector skipped
        } else {
            if (config.candidate_periods.empty())
                throw rejected_input(
                    "build-ensemble: give 'candidate_periods' or a fixed 'period'");
            report = detect_periodicity(series, config.candidate_periods, config.returns_lag,
                                        config.seed);
            bundle.add_report("build_ensemble.periodicity", report.to_json());
            if (!report.best_period) {
                save_bundle(bundle, config.out_dir, overwrite);
                detail::write_failed_marker(config.out_dir, "no significant period");
                return {2,
                        "no candidate period beats the shuffled null and no fixed period was "
                        "given (report written)",
                        {}};
            }
            period = *report.best_period;
        }

        const PathEnsemble ensemble = segment_series(series, period);
        const auto boundary = boundary_correlation_check(ensemble, series);
        const auto profile = intraday_profile(ensemble, ensemble.grid.dt *
                                                            static_cast<double>(config.returns_lag));
        bundle.add_report("build_ensemble.segmentation",
                          nlohmann::json{{"period", period},
                                         {"n_segments", ensemble.n_paths()},
                                         {"detector_skipped", config.fixed_period.has_value()}});
        bundle.add_report("build_ensemble.boundary", boundary.to_json());
        bundle.add_report("build_ensemble.profile", profile.to_json());
        const auto manifest = save_bundle(bundle, config.out_dir, overwrite);

        namespace fs = std::filesystem;
        const std::string ens_file =
            (fs::path(config.out_dir) / detail::ensemble_file_name(config)).string();
        if (config.ensemble_format == "binary")
            save_ensemble_binary(ensemble, ens_file);
        else
            save_ensemble_csv(ensemble, ens_file);
        const std::string prof_csv = (fs::path(config.out_dir) / "profile.csv").string();
        write_profile_csv(profile, prof_csv);

        std::ostringstream summary;
        summary << transform_note << "segmented " << ensemble.n_paths() << " runs of period "
                << period;
        if (!config.fixed_period) summary << " (detected)";
        summary << "; boundary return correlation " << boundary.boundary_return.estimate;
        return {0, summary.str(), {manifest.string(), ens_file, prof_csv}};
    });
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

inline CommandOutcome cmd_report(const std::string& bundle_dir) {
    return detail::guarded("", [&]() -> CommandOutcome {
        const ResultBundle bundle = load_bundle(bundle_dir);
        namespace fs = std::filesystem;
        const fs::path out = fs::path(bundle_dir) / "reports";
        fs::create_directories(out);

        std::ofstream txt(out / "summary.txt");
        if (!txt) throw rejected_input("report: cannot write summary in '" + bundle_dir + "'");
        txt << "ensemblab bundle " << bundle_dir << "\n";
        txt << "version " << bundle.version << ", seed " << bundle.seed << " ("
            << bundle.seed_source << ")\n";
        for (const std::string& note : bundle.load_notes) txt << "note: " << note << "\n";
        std::vector<std::string> artifacts{(out / "summary.txt").string()};

        if (bundle.reports.empty()) {
            txt << "no analyses\n";
            return {0, "bundle holds no analyses", artifacts};
        }
        for (const auto& [key, value] : bundle.reports) {
            txt << "\n[" << key << "]\n" << value.dump(2) << "\n";
            const std::string stem = ensemblab::detail::report_file_stem(key);
            if (value.is_array() && !value.empty() && value.front().is_object()) {
                const std::string csv = (out / (stem + ".csv")).string();
                write_table_csv(value, csv);
                artifacts.push_back(csv);
            } else {
                const std::string jsf = (out / (stem + ".json")).string();
                std::ofstream js(jsf);
                js << value.dump(2) << '\n';
                artifacts.push_back(jsf);
            }
        }
        return {0, "report rendered for " + std::to_string(bundle.reports.size()) + " entries",
                artifacts};
    });
}

} // namespace ensemblab::cli
