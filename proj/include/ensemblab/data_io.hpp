#pragma once

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ensemblab/densities.hpp"
#include "ensemblab/ensemble_builder.hpp"
#include "ensemblab/errors.hpp"
#include "ensemblab/estimators.hpp"
#include "ensemblab/path.hpp"
#include "ensemblab/process.hpp"

namespace ensemblab {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kSeedEnvVar = "ENSEMBLAB_SEED";

namespace detail {

/// 17 significant digits: enough for a lossless double round-trip in text.
inline std::string fmt_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Series CSV
// ---------------------------------------------------------------------------

/// Load a (timestamp, value) CSV with a header row. Parse failures name the
/// 1-based line; duplicate or decreasing timestamps name the offending row.
inline LongSeries load_series(const std::string& file, ValueKind kind = ValueKind::Level) {
    std::ifstream in(file);
    if (!in) throw rejected_input("load_series: cannot open '" + file + "'");
    LongSeries series;
    series.value_kind = kind;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line_no == 1) continue; // header
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos)
            throw rejected_input("load_series: line " + std::to_string(line_no) +
                                 ": expected 'timestamp,value'");
        char* end = nullptr;
        const std::string ts_str = line.substr(0, comma);
        const std::string v_str = line.substr(comma + 1);
        const double t = std::strtod(ts_str.c_str(), &end);
        if (end == ts_str.c_str() || *end != '\0')
            throw rejected_input("load_series: line " + std::to_string(line_no) +
                                 ": bad timestamp '" + ts_str + "'");
        const double v = std::strtod(v_str.c_str(), &end);
        if (end == v_str.c_str() || (*end != '\0' && *end != '\r'))
            throw rejected_input("load_series: line " + std::to_string(line_no) + ": bad value '" +
                                 v_str + "'");
        if (!series.timestamps.empty()) {
            if (t == series.timestamps.back())
                throw rejected_input("load_series: duplicate timestamp at line " +
                                     std::to_string(line_no));
            if (t < series.timestamps.back())
                throw rejected_input("load_series: non-monotone timestamp at line " +
                                     std::to_string(line_no));
        }
        series.timestamps.push_back(t);
        series.values.push_back(v);
    }
    if (series.size() == 0) throw rejected_input("load_series: '" + file + "' holds no samples");
    series.validate();
    return series;
}

inline void save_series(const LongSeries& series, const std::string& file) {
    std::ofstream out(file);
    if (!out) throw rejected_input("save_series: cannot write '" + file + "'");
    out << "timestamp,value\n";
    for (std::size_t i = 0; i < series.size(); ++i)
        out << detail::fmt_double(series.timestamps[i]) << ','
            << detail::fmt_double(series.values[i]) << '\n';
}

struct RegularizeStats {
    std::size_t filled = 0;  ///< grid points carried forward from the previous tick
    std::size_t dropped = 0; ///< source samples skipped over by a coarser grid
};

/// Previous-tick interpolation onto a uniform grid. Linear interpolation is
/// deliberately not offered: it manufactures small fake increments that bias
/// increment histograms.
inline LongSeries regularize(const LongSeries& series, double dt,
                             RegularizeStats* stats_out = nullptr) {
    series.validate();
    if (!(dt > 0.0)) throw rejected_input("regularize: dt must be > 0");
    if (series.size() < 2) throw rejected_input("regularize: need >= 2 samples");
    double min_gap = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i + 1 < series.size(); ++i)
        min_gap = std::min(min_gap, series.timestamps[i + 1] - series.timestamps[i]);
    if (dt < min_gap / 10.0)
        throw rejected_input("regularize: dt " + std::to_string(dt) +
                             " oversamples the series (min spacing " + std::to_string(min_gap) +
                             ")");
    const double t0 = series.timestamps.front();
    const double t_end = series.timestamps.back();
    const std::size_t n = static_cast<std::size_t>(std::floor((t_end - t0) / dt + 1e-9)) + 1;
    LongSeries out;
    out.value_kind = series.value_kind;
    out.timestamps.resize(n);
    out.values.resize(n);
    RegularizeStats st;
    std::size_t src = 0;
    for (std::size_t k = 0; k < n; ++k) {
        const double t = t0 + static_cast<double>(k) * dt;
        const double tol = 1e-9 * std::max(1.0, std::abs(t));
        std::size_t advanced = 0;
        while (src + 1 < series.size() && series.timestamps[src + 1] <= t + tol) {
            ++src;
            ++advanced;
        }
        if (advanced > 1) st.dropped += advanced - 1;
        const bool exact = std::abs(series.timestamps[src] - t) <= tol;
        if (!exact) ++st.filled;
        out.timestamps[k] = t;
        out.values[k] = series.values[src];
    }
    if (stats_out) *stats_out = st;
    return out;
}

// ---------------------------------------------------------------------------
// Ensemble persistence: CSV (path_id, t, x) and the ENSB1 binary layout
// ---------------------------------------------------------------------------

/// ENSB1 binary layout (all integers/doubles little-endian):
///   bytes 0..4   magic "ENSB1"
///   bytes 5..7   zero padding
///   u64 n_paths, u64 n_points, f64 t0, f64 dt
///   per path: u64 master_seed, u64 stream_index, n_points f64 values
inline void save_ensemble_binary(const PathEnsemble& ensemble, const std::string& file) {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw rejected_input("save_ensemble_binary: cannot write '" + file + "'");
    const char magic[8] = {'E', 'N', 'S', 'B', '1', 0, 0, 0};
    out.write(magic, 8);
    auto put_u64 = [&](std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); };
    auto put_f64 = [&](double v) { out.write(reinterpret_cast<const char*>(&v), 8); };
    put_u64(ensemble.n_paths());
    put_u64(ensemble.grid.n_points());
    put_f64(ensemble.grid.t0);
    put_f64(ensemble.grid.dt);
    for (const Path& p : ensemble.paths) {
        put_u64(p.seed_tag.master_seed);
        put_u64(p.seed_tag.stream_index);
        out.write(reinterpret_cast<const char*>(p.values.data()),
                  static_cast<std::streamsize>(p.values.size() * sizeof(double)));
    }
}

inline PathEnsemble load_ensemble_binary(const std::string& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw rejected_input("load_ensemble_binary: cannot open '" + file + "'");
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, "ENSB1\0\0\0", 8) != 0)
        throw rejected_input("load_ensemble_binary: '" + file + "' lacks the ENSB1 magic header");
    auto get_u64 = [&] {
        std::uint64_t v = 0;
        in.read(reinterpret_cast<char*>(&v), 8);
        return v;
    };
    auto get_f64 = [&] {
        double v = 0;
        in.read(reinterpret_cast<char*>(&v), 8);
        return v;
    };
    const std::uint64_t n_paths = get_u64();
    const std::uint64_t n_points = get_u64();
    const double t0 = get_f64();
    const double dt = get_f64();
    if (!in || n_paths == 0 || n_points < 2)
        throw rejected_input("load_ensemble_binary: corrupt header in '" + file + "'");
    const TimeGrid grid(t0, dt, n_points - 1);
    std::vector<Path> paths;
    paths.reserve(n_paths);
    for (std::uint64_t k = 0; k < n_paths; ++k) {
        SeedTag tag{get_u64(), get_u64()};
        std::vector<double> values(n_points);
        in.read(reinterpret_cast<char*>(values.data()),
                static_cast<std::streamsize>(n_points * sizeof(double)));
        if (!in)
            throw rejected_input("load_ensemble_binary: truncated at path " + std::to_string(k));
        paths.emplace_back(grid, std::move(values), tag);
    }
    return PathEnsemble(grid, std::move(paths));
}

inline void save_ensemble_csv(const PathEnsemble& ensemble, const std::string& file) {
    std::ofstream out(file);
    if (!out) throw rejected_input("save_ensemble_csv: cannot write '" + file + "'");
    out << "path_id,t,x\n";
    for (std::size_t k = 0; k < ensemble.n_paths(); ++k)
        for (std::size_t i = 0; i < ensemble.grid.n_points(); ++i)
            out << k << ',' << detail::fmt_double(ensemble.grid.time(i)) << ','
                << detail::fmt_double(ensemble.paths[k].values[i]) << '\n';
}

// ---------------------------------------------------------------------------
// Plot-ready CSV writers
// ---------------------------------------------------------------------------

inline void write_curve_csv(const CorrelationCurve& curve, const std::string& file) {
    std::ofstream out(file);
    if (!out) throw rejected_input("write_curve_csv: cannot write '" + file + "'");
    out << "lag,value\n";
    for (std::size_t i = 0; i < curve.lags.size(); ++i)
        out << detail::fmt_double(curve.lags[i]) << ',' << detail::fmt_double(curve.values[i])
            << '\n';
}

inline void write_density_csv(const EmpiricalDensity& d, const std::string& file) {
    std::ofstream out(file);
    if (!out) throw rejected_input("write_density_csv: cannot write '" + file + "'");
    out << "bin_left,bin_right,mass\n";
    for (std::size_t i = 0; i < d.n_bins(); ++i)
        out << detail::fmt_double(d.bin_edges[i]) << ',' << detail::fmt_double(d.bin_edges[i + 1])
            << ',' << detail::fmt_double(d.mass[i]) << '\n';
}

inline void write_joint_csv(const JointDensity2D& j, const std::string& file) {
    std::ofstream out(file);
    if (!out) throw rejected_input("write_joint_csv: cannot write '" + file + "'");
    out << "z1_bin,z2_bin,mass\n";
    for (std::size_t a = 0; a < j.n1(); ++a)
        for (std::size_t b = 0; b < j.n2(); ++b)
            out << a << ',' << b << ',' << detail::fmt_double(j.at(a, b)) << '\n';
}

inline void write_profile_csv(const IntradayProfile& p, const std::string& file) {
    std::ofstream out(file);
    if (!out) throw rejected_input("write_profile_csv: cannot write '" + file + "'");
    out << "phase,msf,std_error\n";
    for (std::size_t i = 0; i < p.phases.size(); ++i)
        out << detail::fmt_double(p.phases[i]) << ',' << detail::fmt_double(p.msf[i]) << ','
            << detail::fmt_double(p.std_error[i]) << '\n';
}

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

struct AnalysisRequest {
    std::vector<std::string> estimators; ///< named estimators to run
    std::vector<double> lags;
    std::optional<double> stride;    ///< defaults to T per lag
    std::optional<std::size_t> bins; ///< default: Freedman-Diaconis
    std::optional<double> base_time; ///< ensemble strobe time, default grid t0
};

struct RunConfig {
    std::optional<ProcessSpec> process;
    std::optional<std::string> input_file;
    ValueKind input_kind = ValueKind::Level;
    std::optional<std::string> input_bundle; ///< analyze an ensemble saved by `simulate`
    std::optional<TimeGrid> grid;
    std::size_t n_paths = 1;
    std::uint64_t seed = 1;
    std::string seed_source = "config"; ///< "config", "env" or "flag"
    std::size_t substeps = 1;
    std::size_t threads = 1;
    AnalysisRequest analysis;
    std::vector<std::size_t> candidate_periods;
    std::optional<std::size_t> fixed_period;
    std::size_t returns_lag = 1;
    std::optional<double> regularize_dt;
    std::string out_dir = "out";
    std::string ensemble_format = "csv"; ///< "csv" or "binary"

    nlohmann::json to_json() const {
        nlohmann::json j;
        if (process) j["process"] = ensemblab::to_json(*process);
        if (input_file) j["input"] = {{"file", *input_file}, {"value_kind", to_string(input_kind)}};
        if (input_bundle) j["input_bundle"] = *input_bundle;
        if (grid) j["grid"] = {{"t0", grid->t0}, {"dt", grid->dt}, {"n_steps", grid->n_steps}};
        j["n_paths"] = n_paths;
        j["seed"] = seed;
        j["seed_source"] = seed_source;
        j["substeps"] = substeps;
        j["threads"] = threads;
        nlohmann::json a;
        a["estimators"] = analysis.estimators;
        a["lags"] = analysis.lags;
        if (analysis.stride) a["stride"] = *analysis.stride;
        if (analysis.bins) a["bins"] = *analysis.bins;
        if (analysis.base_time) a["base_time"] = *analysis.base_time;
        j["analysis"] = a;
        if (!candidate_periods.empty()) j["candidate_periods"] = candidate_periods;
        if (fixed_period) j["period"] = *fixed_period;
        j["returns_lag"] = returns_lag;
        if (regularize_dt) j["regularize_dt"] = *regularize_dt;
        j["output"] = {{"dir", out_dir}, {"format", ensemble_format}};
        return j;
    }
};

inline RunConfig run_config_from_json(const nlohmann::json& j) {
    RunConfig c;
    try {
        if (j.contains("process")) c.process = process_spec_from_json(j.at("process"));
        if (j.contains("input")) {
            c.input_file = j.at("input").at("file").get<std::string>();
            c.input_kind = value_kind_from_string(j.at("input").value("value_kind", "level"));
        }
        if (j.contains("input_bundle")) c.input_bundle = j.at("input_bundle").get<std::string>();
        if (c.process && c.input_file)
            throw rejected_input("config: give either 'process' or 'input', not both");
        if (!c.process && !c.input_file && !c.input_bundle)
            throw rejected_input("config: one of 'process', 'input', 'input_bundle' is required");
        if (j.contains("grid")) {
            const auto& g = j.at("grid");
            c.grid = TimeGrid(g.value("t0", 0.0), g.at("dt").get<double>(),
                              g.at("n_steps").get<std::size_t>());
        }
        c.n_paths = j.value("n_paths", std::size_t{1});
        c.seed = j.value("seed", std::uint64_t{1});
        c.substeps = j.value("substeps", std::size_t{1});
        c.threads = j.value("threads", std::size_t{1});
        if (j.contains("analysis")) {
            const auto& a = j.at("analysis");
            c.analysis.estimators = a.value("estimators", std::vector<std::string>{});
            c.analysis.lags = a.value("lags", std::vector<double>{});
            if (a.contains("stride")) c.analysis.stride = a.at("stride").get<double>();
            if (a.contains("bins")) c.analysis.bins = a.at("bins").get<std::size_t>();
            if (a.contains("base_time")) c.analysis.base_time = a.at("base_time").get<double>();
            for (const std::string& e : c.analysis.estimators)
                named_estimator_from_string(e); // validates
        }
        c.candidate_periods = j.value("candidate_periods", std::vector<std::size_t>{});
        if (j.contains("period")) c.fixed_period = j.at("period").get<std::size_t>();
        c.returns_lag = j.value("returns_lag", std::size_t{1});
        if (j.contains("regularize_dt")) c.regularize_dt = j.at("regularize_dt").get<double>();
        if (j.contains("output")) {
            c.out_dir = j.at("output").value("dir", "out");
            c.ensemble_format = j.at("output").value("format", "csv");
            if (c.ensemble_format != "csv" && c.ensemble_format != "binary")
                throw rejected_input("config: output.format must be 'csv' or 'binary'");
        }
        if (c.grid)
            for (double lag : c.analysis.lags) c.grid->steps_of_lag(lag); // representability
    } catch (const nlohmann::json::exception& e) {
        throw rejected_input(std::string("config: ") + e.what());
    }
    if (const char* env = std::getenv(kSeedEnvVar)) {
        char* end = nullptr;
        const unsigned long long v = std::strtoull(env, &end, 10);
        if (end == env || *end != '\0')
            throw rejected_input(std::string("config: ") + kSeedEnvVar + " is not an integer");
        c.seed = v;
        c.seed_source = "env";
    }
    return c;
}

inline RunConfig load_run_config(const std::string& file) {
    std::ifstream in(file);
    if (!in) throw rejected_input("config: cannot open '" + file + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw rejected_input("config '" + file + "': " + e.what());
    }
    return run_config_from_json(j);
}

// ---------------------------------------------------------------------------
// Result bundle
// ---------------------------------------------------------------------------

/// Everything one command run produced: the config echo, reports keyed by
/// (operation, parameters), and creation metadata. Equality ignores the
/// creation timestamp.
struct ResultBundle {
    nlohmann::json config_echo = nlohmann::json::object();
    std::map<std::string, nlohmann::json> reports;
    std::string version = kVersion;
    std::uint64_t seed = 0;
    std::string seed_source = "config";
    std::string created;
    std::vector<std::string> load_notes;

    void add_report(const std::string& key, nlohmann::json value) {
        reports[key] = std::move(value);
    }

    friend bool operator==(const ResultBundle& a, const ResultBundle& b) {
        return a.config_echo == b.config_echo && a.reports == b.reports &&
               a.version == b.version && a.seed == b.seed && a.seed_source == b.seed_source;
    }
};

namespace detail {

inline std::string timestamp_now() {
    std::time_t t = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

inline std::string csv_quote(std::string cell) {
    if (cell.find_first_of(",\"\n") == std::string::npos) return cell;
    std::string quoted = "\"";
    for (char c : cell) {
        if (c == '"') quoted += '"';
        quoted += c;
    }
    return quoted + "\"";
}

inline std::string report_file_stem(std::string key) {
    for (char& c : key)
        if (c == '.' || c == '/' || c == ' ' || c == '|' || c == '=') c = '_';
    return key;
}

} // namespace detail

/// Flatten a JSON array of uniform objects into CSV, one object per row.
inline void write_table_csv(const nlohmann::json& table, const std::string& file) {
    if (!table.is_array()) throw rejected_input("write_table_csv: expected a JSON array");
    std::ofstream out(file);
    if (!out) throw rejected_input("write_table_csv: cannot write '" + file + "'");
    if (table.empty() || !table.front().is_object()) return;
    std::vector<std::string> cols;
    for (const auto& [col, _] : table.front().items()) cols.push_back(col);
    for (std::size_t i = 0; i < cols.size(); ++i)
        out << detail::csv_quote(cols[i]) << (i + 1 < cols.size() ? ',' : '\n');
    for (const auto& row : table) {
        for (std::size_t i = 0; i < cols.size(); ++i) {
            if (row.contains(cols[i])) {
                const auto& cell = row.at(cols[i]);
                out << detail::csv_quote(cell.is_string() ? cell.get<std::string>() : cell.dump());
            }
            out << (i + 1 < cols.size() ? ',' : '\n');
        }
    }
}

/// Write manifest.json (authoritative) plus plot-ready CSV views for any
/// report that has a tabular shape. Refuses a non-empty directory unless
/// overwrite is set.
inline std::filesystem::path save_bundle(const ResultBundle& bundle, const std::string& dir,
                                         bool overwrite = false) {
    namespace fs = std::filesystem;
    const fs::path root(dir);
    if (fs::exists(root) && !fs::is_directory(root))
        throw rejected_input("save_bundle: '" + dir + "' exists and is not a directory");
    if (fs::exists(root) && !fs::is_empty(root) && !overwrite)
        throw rejected_input("save_bundle: directory '" + dir +
                             "' is not empty (pass overwrite to replace it)");
    fs::create_directories(root);

    nlohmann::json manifest;
    manifest["version"] = bundle.version;
    manifest["seed"] = bundle.seed;
    manifest["seed_source"] = bundle.seed_source;
    manifest["created"] = bundle.created.empty() ? detail::timestamp_now() : bundle.created;
    manifest["config"] = bundle.config_echo;
    manifest["reports"] = nlohmann::json::object();
    for (const auto& [key, value] : bundle.reports) manifest["reports"][key] = value;

    std::ofstream out(root / "manifest.json");
    if (!out) throw rejected_input("save_bundle: cannot write manifest in '" + dir + "'");
    out << manifest.dump(2) << '\n';

    // tabular reports also land as plot-ready CSV views beside the manifest
    for (const auto& [key, value] : bundle.reports)
        if (value.is_array() && !value.empty() && value.front().is_object())
            write_table_csv(value, (root / (detail::report_file_stem(key) + ".csv")).string());
    return root / "manifest.json";
}

inline ResultBundle load_bundle(const std::string& dir) {
    namespace fs = std::filesystem;
    const fs::path manifest_path = fs::path(dir) / "manifest.json";
    std::ifstream in(manifest_path);
    if (!in) throw rejected_input("load_bundle: no manifest.json in '" + dir + "'");
    nlohmann::json manifest;
    try {
        in >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw rejected_input("load_bundle: manifest.json is not valid JSON: " + std::string(e.what()));
    }
    ResultBundle bundle;
    for (const char* field : {"version", "seed", "config", "reports"})
        if (!manifest.contains(field))
            throw rejected_input("load_bundle: manifest integrity: missing field '" +
                                 std::string(field) + "'");
    if (!manifest.at("reports").is_object())
        throw rejected_input("load_bundle: manifest integrity: field 'reports' must be an object");
    bundle.version = manifest.at("version").get<std::string>();
    bundle.seed = manifest.at("seed").get<std::uint64_t>();
    bundle.seed_source = manifest.value("seed_source", "config");
    bundle.created = manifest.value("created", "");
    bundle.config_echo = manifest.at("config");
    for (const auto& [key, value] : manifest.at("reports").items()) bundle.reports[key] = value;
    if (bundle.version != kVersion)
        bundle.load_notes.push_back("bundle written by version " + bundle.version +
                                    ", loaded by " + kVersion);
    return bundle;
}

} // namespace ensemblab
