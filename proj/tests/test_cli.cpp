#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "ensemblab/ensemblab.hpp"

using namespace ensemblab;
namespace fs = std::filesystem;

namespace {

struct RunResult {
    int exit_code = -1;
    std::string output;
};

RunResult run_cli(const std::string& args) {
    const fs::path log = fs::temp_directory_path() / "ensemblab_cli_log.txt";
    const std::string cmd =
        std::string(ENSEMBLAB_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    RunResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream in(log);
    std::stringstream ss;
    ss << in.rdbuf();
    r.output = ss.str();
    return r;
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("ensemblab_cli_" + tag);
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string write_json(const fs::path& p, const nlohmann::json& j) {
    std::ofstream out(p);
    out << j.dump(2);
    return p.string();
}

bool same_bytes(const fs::path& a, const fs::path& b) {
    std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
    std::stringstream sa, sb;
    sa << fa.rdbuf();
    sb << fb.rdbuf();
    return sa.str() == sb.str();
}

nlohmann::json wiener_config(const fs::path& out_dir, std::size_t n_paths = 100) {
    return {{"process", {{"kind", "wiener"}, {"params", {{"sigma", 1.0}}}}},
            {"grid", {{"t0", 0.0}, {"dt", 1.0}, {"n_steps", 8}}},
            {"n_paths", n_paths},
            {"seed", 7},
            {"analysis", {{"estimators", {"sliding_msf", "sliding_increment_mean"}},
                          {"lags", {1.0, 2.0}}}},
            {"output", {{"dir", out_dir.string()}, {"format", "binary"}}}};
}

LongSeries synthetic_periodic(std::size_t days, std::size_t period, std::uint64_t seed) {
    std::mt19937_64 rng = make_stream(seed, 0);
    std::normal_distribution<double> normal(0.0, 1.0);
    LongSeries s;
    s.value_kind = ValueKind::Level;
    double x = 0.0;
    for (std::size_t i = 0; i < days * period; ++i) {
        s.timestamps.push_back(static_cast<double>(i));
        s.values.push_back(x);
        x += (i % period < period / 2 ? 2.0 : 1.0) * normal(rng);
    }
    return s;
}

} // namespace

TEST_CASE("simulate command", "[cli]") {
    TempDir dir("simulate");

    SECTION("writes a bundle and reports its shape") {
        const auto cfg = write_json(dir.path / "cfg.json", wiener_config(dir.path / "out"));
        const auto r = run_cli("simulate --config " + cfg);
        CHECK(r.exit_code == 0);
        CHECK(r.output.find("100 paths") != std::string::npos);
        CHECK(fs::exists(dir.path / "out" / "manifest.json"));
        CHECK(fs::exists(dir.path / "out" / "paths.ensb"));
        const auto ens = load_ensemble_binary((dir.path / "out" / "paths.ensb").string());
        CHECK(ens.n_paths() == 100);
    }

    SECTION("invalid Hurst exponent: exit 1 naming the field") {
        auto cfg_json = wiener_config(dir.path / "out");
        cfg_json["process"] = {{"kind", "fbm"}, {"params", {{"hurst", 1.5}}}};
        const auto cfg = write_json(dir.path / "cfg.json", cfg_json);
        const auto r = run_cli("simulate --config " + cfg);
        CHECK(r.exit_code == 1);
        CHECK(r.output.find("H") != std::string::npos);
        CHECK(r.output.find("(0,1)") != std::string::npos);
    }

    SECTION("same config twice: byte-identical path files") {
        const auto cfg1 = write_json(dir.path / "c1.json", wiener_config(dir.path / "o1"));
        const auto cfg2 = write_json(dir.path / "c2.json", wiener_config(dir.path / "o2"));
        CHECK(run_cli("simulate --config " + cfg1).exit_code == 0);
        CHECK(run_cli("simulate --config " + cfg2).exit_code == 0);
        CHECK(same_bytes(dir.path / "o1" / "paths.ensb", dir.path / "o2" / "paths.ensb"));
    }

    SECTION("refuses to clobber without --overwrite") {
        const auto cfg = write_json(dir.path / "cfg.json", wiener_config(dir.path / "out"));
        CHECK(run_cli("simulate --config " + cfg).exit_code == 0);
        CHECK(run_cli("simulate --config " + cfg).exit_code == 1);
        CHECK(run_cli("simulate --config " + cfg + " --overwrite").exit_code == 0);
    }

    SECTION("missing config file: exit 1") {
        CHECK(run_cli("simulate --config /nonexistent.json").exit_code == 1);
    }
}

TEST_CASE("analyze command", "[cli]") {
    TempDir dir("analyze");

    SECTION("bundle in, comparison table out") {
        const auto sim_cfg = write_json(dir.path / "sim.json", wiener_config(dir.path / "sim_out", 2000));
        REQUIRE(run_cli("simulate --config " + sim_cfg).exit_code == 0);
        nlohmann::json ana = {
            {"input_bundle", (dir.path / "sim_out").string()},
            {"analysis", {{"estimators", {"sliding_msf"}}, {"lags", {1.0, 2.0}}}},
            {"output", {{"dir", (dir.path / "ana_out").string()}}}};
        const auto cfg = write_json(dir.path / "ana.json", ana);
        const auto r = run_cli("analyze --config " + cfg);
        CHECK(r.exit_code == 0);
        REQUIRE(fs::exists(dir.path / "ana_out" / "comparison.csv"));
        const ResultBundle bundle = load_bundle((dir.path / "ana_out").string());
        const auto& table = bundle.reports.at("analyze.comparison");
        REQUIRE(table.is_array());
        CHECK(table.size() == 2);
        for (const auto& row : table) {
            // Wiener: sliding and ensemble MSF agree
            CHECK(row.at("separation_se").get<double>() < 4.0);
            CHECK(row.at("ks").at("pass").get<bool>());
        }
    }

    SECTION("time-dependent diffusion: disagreement is a finding, exit 0") {
        nlohmann::json sim = {
            {"process", {{"kind", "ito"}, {"params", {{"diffusion", "exp_t"}, {"gamma", 1.0}}}}},
            {"grid", {{"t0", 0.0}, {"dt", 0.25}, {"n_steps", 10}}},
            {"n_paths", 20000},
            {"seed", 3},
            {"substeps", 20},
            {"analysis", {{"estimators", {"sliding_msf"}}, {"lags", {0.5}}}},
            {"output", {{"dir", (dir.path / "exp_out").string()}}}};
        const auto cfg = write_json(dir.path / "exp.json", sim);
        const auto r = run_cli("analyze --config " + cfg);
        CHECK(r.exit_code == 0);
        CHECK(r.output.find("> 5 SE") != std::string::npos);
        const ResultBundle bundle = load_bundle((dir.path / "exp_out").string());
        const auto& row = bundle.reports.at("analyze.comparison").at(0);
        CHECK(row.at("separation_se").get<double>() > 5.0);
        CHECK_FALSE(row.at("ks").at("pass").get<bool>());
    }

    SECTION("lag off the grid: exit 1") {
        auto cfg_json = wiener_config(dir.path / "out");
        cfg_json["analysis"]["lags"] = {0.3};
        const auto cfg = write_json(dir.path / "bad.json", cfg_json);
        CHECK(run_cli("analyze --config " + cfg).exit_code == 1);
    }

    SECTION("missing bundle: exit 1") {
        nlohmann::json ana = {{"input_bundle", (dir.path / "nowhere").string()},
                              {"analysis", {{"lags", {1.0}}}},
                              {"output", {{"dir", (dir.path / "x").string()}}}};
        const auto cfg = write_json(dir.path / "ana.json", ana);
        CHECK(run_cli("analyze --config " + cfg).exit_code == 1);
    }
}

TEST_CASE("build-ensemble command", "[cli]") {
    TempDir dir("build");
    const auto series = synthetic_periodic(30, 96, 9001);
    save_series(series, (dir.path / "series.csv").string());

    SECTION("periodic series: detector picks the period") {
        nlohmann::json cfg_json = {
            {"input", {{"file", (dir.path / "series.csv").string()}}},
            {"candidate_periods", {48, 96, 192}},
            {"seed", 5},
            {"output", {{"dir", (dir.path / "out").string()}}}};
        const auto cfg = write_json(dir.path / "cfg.json", cfg_json);
        const auto r = run_cli("build-ensemble --config " + cfg);
        CHECK(r.exit_code == 0);
        CHECK(r.output.find("period 96") != std::string::npos);
        CHECK(fs::exists(dir.path / "out" / "paths.csv"));
        CHECK(fs::exists(dir.path / "out" / "profile.csv"));
        const ResultBundle bundle = load_bundle((dir.path / "out").string());
        CHECK(bundle.reports.at("build_ensemble.periodicity").at("best_period") == 96);
        CHECK(bundle.reports.at("build_ensemble.segmentation").at("n_segments") == 30);
    }

    SECTION("homogeneous series without fixed period: exit 2, report attached") {
        LongSeries flat;
        flat.value_kind = ValueKind::Level;
        std::mt19937_64 rng = make_stream(17, 0);
        std::normal_distribution<double> normal(0.0, 1.0);
        double x = 0.0;
        for (std::size_t i = 0; i < 2880; ++i) {
            flat.timestamps.push_back(static_cast<double>(i));
            flat.values.push_back(x);
            x += normal(rng);
        }
        save_series(flat, (dir.path / "flat.csv").string());
        nlohmann::json cfg_json = {
            {"input", {{"file", (dir.path / "flat.csv").string()}}},
            {"candidate_periods", {48, 96, 192}},
            {"seed", 6},
            {"output", {{"dir", (dir.path / "flat_out").string()}}}};
        const auto cfg = write_json(dir.path / "flat.json", cfg_json);
        const auto r = run_cli("build-ensemble --config " + cfg);
        CHECK(r.exit_code == 2);
        // the no-decision report is still written, flagged as failed
        CHECK(fs::exists(dir.path / "flat_out" / ".failed"));
        const ResultBundle bundle = load_bundle((dir.path / "flat_out").string());
        CHECK(bundle.reports.at("build_ensemble.periodicity").at("best_period").is_null());
    }

    SECTION("fixed period skips the detector") {
        nlohmann::json cfg_json = {
            {"input", {{"file", (dir.path / "series.csv").string()}}},
            {"period", 96},
            {"output", {{"dir", (dir.path / "fixed_out").string()}}}};
        const auto cfg = write_json(dir.path / "fixed.json", cfg_json);
        const auto r = run_cli("build-ensemble --config " + cfg);
        CHECK(r.exit_code == 0);
        const ResultBundle bundle = load_bundle((dir.path / "fixed_out").string());
        CHECK(bundle.reports.find("build_ensemble.periodicity") == bundle.reports.end());
        CHECK(bundle.reports.at("build_ensemble.segmentation").at("detector_skipped") == true);
    }
}

TEST_CASE("report command", "[cli]") {
    TempDir dir("report");

    SECTION("renders every analysis in the bundle") {
        const auto sim_cfg = write_json(dir.path / "sim.json", wiener_config(dir.path / "out", 500));
        REQUIRE(run_cli("simulate --config " + sim_cfg).exit_code == 0);
        nlohmann::json ana = {
            {"input_bundle", (dir.path / "out").string()},
            {"analysis", {{"estimators", {"sliding_msf", "sliding_increment_mean"}},
                          {"lags", {1.0, 2.0, 4.0}}}},
            {"output", {{"dir", (dir.path / "ana").string()}}}};
        REQUIRE(run_cli("analyze --config " + write_json(dir.path / "a.json", ana)).exit_code == 0);
        const auto r = run_cli("report " + (dir.path / "ana").string());
        CHECK(r.exit_code == 0);
        REQUIRE(fs::exists(dir.path / "ana" / "reports" / "summary.txt"));
        std::ifstream in(dir.path / "ana" / "reports" / "summary.txt");
        std::stringstream ss;
        ss << in.rdbuf();
        // every (estimator, T) pair appears
        CHECK(ss.str().find("sliding_msf") != std::string::npos);
        CHECK(ss.str().find("sliding_increment_mean") != std::string::npos);

        // the flattened table is well-formed CSV: constant field count per row
        std::ifstream csv(dir.path / "ana" / "reports" / "analyze_comparison.csv");
        std::string line;
        std::size_t expected_fields = 0, row_no = 0;
        while (std::getline(csv, line)) {
            ++row_no;
            std::size_t fields = 1;
            bool quoted = false;
            for (char c : line) {
                if (c == '"') quoted = !quoted;
                if (c == ',' && !quoted) ++fields;
            }
            if (row_no == 1)
                expected_fields = fields;
            else
                CHECK(fields == expected_fields);
        }
        CHECK(row_no == 7); // header + 2 estimators x 3 lags
    }

    SECTION("empty bundle: notes 'no analyses', exit 0") {
        ResultBundle empty;
        empty.config_echo = nlohmann::json::object();
        save_bundle(empty, (dir.path / "empty").string(), true);
        const auto r = run_cli("report " + (dir.path / "empty").string());
        CHECK(r.exit_code == 0);
        std::ifstream in(dir.path / "empty" / "reports" / "summary.txt");
        std::stringstream ss;
        ss << in.rdbuf();
        CHECK(ss.str().find("no analyses") != std::string::npos);
    }

    SECTION("missing bundle directory: exit 1") {
        CHECK(run_cli("report " + (dir.path / "missing").string()).exit_code == 1);
    }
}

TEST_CASE("csv ensemble format round-trips through analyze", "[cli]") {
    TempDir dir("csvfmt");
    auto cfg_json = wiener_config(dir.path / "out", 50);
    cfg_json["output"]["format"] = "csv";
    const auto cfg = write_json(dir.path / "cfg.json", cfg_json);
    REQUIRE(run_cli("simulate --config " + cfg).exit_code == 0);
    REQUIRE(fs::exists(dir.path / "out" / "paths.csv"));
    nlohmann::json ana = {{"input_bundle", (dir.path / "out").string()},
                          {"analysis", {{"estimators", {"sliding_msf"}}, {"lags", {1.0}}}},
                          {"output", {{"dir", (dir.path / "ana").string()}}}};
    const auto r = run_cli("analyze --config " + write_json(dir.path / "a.json", ana));
    CHECK(r.exit_code == 0);
}

TEST_CASE("degenerate estimator inputs give exit 2", "[cli]") {
    TempDir dir("degenerate");
    // a one-path bundle cannot support a cross-path moment
    auto sim = wiener_config(dir.path / "one", 1);
    const auto sim_cfg = write_json(dir.path / "sim.json", sim);
    REQUIRE(run_cli("simulate --config " + sim_cfg).exit_code == 0);
    nlohmann::json ana = {{"input_bundle", (dir.path / "one").string()},
                          {"analysis", {{"estimators", {"ensemble_moment"}}, {"lags", {1.0}}}},
                          {"output", {{"dir", (dir.path / "ana").string()}}}};
    const auto r = run_cli("analyze --config " + write_json(dir.path / "a.json", ana));
    CHECK(r.exit_code == 2);
    CHECK(r.output.find("ensemble_moment") != std::string::npos); // names the failing request
}

TEST_CASE("bundled configs parse and reference reachable inputs", "[cli][configs]") {
    std::size_t n_configs = 0;
    for (const auto& entry : fs::directory_iterator(ENSEMBLAB_CONFIG_DIR)) {
        if (entry.path().extension() != ".json") continue;
        ++n_configs;
        INFO(entry.path().string());
        CHECK_NOTHROW(load_run_config(entry.path().string()));
    }
    CHECK(n_configs >= 7);
}

TEST_CASE("seed precedence: flag over environment over config", "[cli]") {
    TempDir dir("seeds");
    const auto cfg = write_json(dir.path / "cfg.json", wiener_config(dir.path / "o1", 10));

    ::setenv(kSeedEnvVar, "1234", 1);
    const auto r_env = run_cli("simulate --config " + cfg);
    ::unsetenv(kSeedEnvVar);
    CHECK(r_env.exit_code == 0);
    CHECK(r_env.output.find("seed 1234 (env)") != std::string::npos);

    auto cfg2 = wiener_config(dir.path / "o2", 10);
    const auto f2 = write_json(dir.path / "c2.json", cfg2);
    const auto r_flag = run_cli("simulate --config " + f2 + " --seed 777");
    CHECK(r_flag.exit_code == 0);
    CHECK(r_flag.output.find("seed 777 (flag)") != std::string::npos);
}
