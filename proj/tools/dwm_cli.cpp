// Command-line front end: run scenarios, calibrate detectors, analyze traces.
#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "dwm/dwm.hpp"

namespace fs = std::filesystem;
using namespace dwm;

namespace {

/// Failure attributed to one input, printed as `error: <field>: <message>`.
struct CliError : std::runtime_error {
    CliError(const std::string& field, const std::string& message) : std::runtime_error(field + ": " + message) {}
};

std::string read_text(const fs::path& path, const std::string& field) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CliError(field, "cannot open '" + path.string() + "'");
    std::stringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) throw CliError("out", "cannot write '" + path.string() + "'");
}

std::string nll_csv(const std::vector<NllPoint>& points) {
    std::string out = "window_end_t,nll,threshold\n";
    for (const auto& p : points) {
        out += std::to_string(p.window_end_t);
        out += ',';
        append_number(out, p.nll);
        out += ',';
        append_number(out, p.threshold);
        out += '\n';
    }
    return out;
}

nlohmann::json nll_json(const std::vector<NllPoint>& points) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& p : points) out.push_back({{"window_end_t", p.window_end_t}, {"nll", p.nll}, {"threshold", p.threshold}});
    return out;
}

nlohmann::json alarm_json(const Trace& trace) {
    const AlarmLog log = alarm_log(trace);
    return {{"windows_evaluated", trace.windows.size()},
            {"alarm_times", log.alarm_times},
            {"first_alarm", log.first_alarm ? nlohmann::json(*log.first_alarm) : nlohmann::json(nullptr)}};
}

fs::path default_out_dir(std::uint64_t seed) {
    const char* base = std::getenv("DWM_OUT_DIR");
    return fs::path(base != nullptr && *base != '\0' ? base : "dwm-runs") / ("run-" + std::to_string(seed));
}

/// Writes every artifact into a sibling staging directory, then swaps it in.
void publish_run(const fs::path& out, const std::vector<std::pair<std::string, std::string>>& files) {
    const fs::path target = fs::absolute(out);
    fs::create_directories(target.parent_path());
    const fs::path staging = target.parent_path() / (target.filename().string() + ".tmp");
    std::error_code ec;
    fs::remove_all(staging, ec);
    fs::create_directories(staging, ec);
    if (ec) throw CliError("out", "cannot create '" + staging.string() + "': " + ec.message());
    for (const auto& [name, text] : files) write_text(staging / name, text);
    fs::remove_all(target, ec);
    fs::rename(staging, target, ec);
    if (ec) throw CliError("out", "cannot publish '" + target.string() + "': " + ec.message());
}

int cmd_run(const std::string& scenario_path, std::optional<std::uint64_t> seed_flag, std::optional<std::string> out_flag) {
    const std::string text = read_text(scenario_path, "scenario");
    const ScenarioConfig config = parse_scenario_text(text);
    const std::uint64_t seed = seed_flag.value_or(config.seed);
    const fs::path out = out_flag ? fs::path(*out_flag) : default_out_dir(seed);

    Trace trace = run_scenario(config, seed);
    const auto thresholds = calibrate_detector(config);
    analyze(trace, config, thresholds);
    const RunReport report = oracle_metrics(trace, config);

    std::ostringstream csv;
    write_trace(csv, trace);
    nlohmann::json report_json = to_json(report);
    report_json["seed"] = seed;
    publish_run(out, {{"scenario.json", text},
                      {"trace.csv", csv.str()},
                      {"thresholds.json", to_json(trace.stat_names, thresholds).dump(2) + "\n"},
                      {"report.json", report_json.dump(2) + "\n"},
                      {"nll_series.csv", nll_csv(nll_series(trace, thresholds))}});
    for (const auto& w : config.warnings) std::cerr << "warning: " << w << "\n";
    std::cout << report_json.dump(2) << "\n";
    return 0;
}

int cmd_calibrate(const std::string& scenario_path, std::optional<double> alpha, std::optional<std::size_t> n_cal) {
    ScenarioConfig config = load_scenario(scenario_path);
    if (alpha) {
        if (!(*alpha > 0.0 && *alpha < 0.5)) throw CliError("alpha", "must lie in (0, 0.5)");
        config.detector.alpha = *alpha;
    }
    if (n_cal) config.detector.n_cal = *n_cal;
    if (static_cast<double>(config.detector.resolved_n_cal()) < 10.0 / config.detector.alpha) {
        throw CliError("ncal", "must be at least 10/alpha");
    }
    std::vector<std::string> names;
    for (const auto& t : detector_tests(config)) names.push_back(t.name);
    std::cout << to_json(names, calibrate_detector(config)).dump(2) << "\n";
    return 0;
}

int cmd_detect(const std::string& trace_path, const std::string& scenario_path) {
    const ScenarioConfig config = load_scenario(scenario_path);
    Trace trace;
    try {
        trace = import_trace(trace_path);
        verify_trace(trace, config.plant);
    } catch (const std::exception& e) {
        throw CliError("trace", e.what());
    }
    analyze(trace, config, calibrate_detector(config));
    nlohmann::json out = alarm_json(trace);
    out["report"] = to_json(oracle_metrics(trace, config));
    std::cout << out.dump(2) << "\n";
    return 0;
}

int cmd_report(const std::string& run_dir) {
    const fs::path dir(run_dir);
    const ScenarioConfig config = parse_scenario_text(read_text(dir / "scenario.json", "run"));
    Trace trace;
    std::vector<Threshold> thresholds;
    try {
        trace = import_trace((dir / "trace.csv").string());
        thresholds = thresholds_from_json(nlohmann::json::parse(read_text(dir / "thresholds.json", "run")));
    } catch (const CliError&) {
        throw;
    } catch (const std::exception& e) {
        throw CliError("run", e.what());
    }
    const auto points = nll_series(trace, thresholds);
    write_text(dir / "nll_series.csv", nll_csv(points));
    nlohmann::json out = to_json(oracle_metrics(trace, config));
    out["nll_series"] = nll_json(points);
    std::cout << out.dump(2) << "\n";
    return 0;
}

int cmd_validate(const std::string& scenario_path) {
    const ScenarioConfig config = load_scenario(scenario_path);
    for (const auto& w : config.warnings) std::cerr << "warning: " << w << "\n";
    std::cout << "ok: " << plant_kind(config.plant) << " scenario, horizon " << config.horizon << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dynamic watermarking simulator and detector"};
    app.require_subcommand(1);

    std::string scenario, trace_path, run_dir;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<double> alpha;
    std::optional<std::size_t> n_cal;

    auto* run = app.add_subcommand("run", "Simulate a scenario and write a run directory");
    run->add_option("--scenario", scenario, "Scenario JSON file")->required();
    run->add_option("--seed", seed, "Master seed (defaults to the scenario's seed)");
    run->add_option("--out", out, "Output directory (defaults to $DWM_OUT_DIR/run-<seed>)");

    auto* calibrate = app.add_subcommand("calibrate", "Print calibrated thresholds for a scenario");
    calibrate->add_option("--scenario", scenario, "Scenario JSON file")->required();
    calibrate->add_option("--alpha", alpha, "Per-window false-alarm probability");
    calibrate->add_option("--ncal", n_cal, "Number of simulated null windows");

    auto* detect = app.add_subcommand("detect", "Run the detector over an exported trace");
    detect->add_option("--trace", trace_path, "Trace CSV file")->required();
    detect->add_option("--scenario", scenario, "Scenario JSON file")->required();

    auto* report = app.add_subcommand("report", "Recompute the report and NLL series of a run directory");
    report->add_option("--run", run_dir, "Run directory written by `run`")->required();

    auto* validate = app.add_subcommand("validate", "Check a scenario file");
    validate->add_option("--scenario", scenario, "Scenario JSON file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::string message = e.what();
        const auto known = app.get_subcommands([&](CLI::App* sub) { return argc > 1 && sub->check_name(argv[1]); });
        if (argc > 1 && argv[1][0] != '-' && known.empty()) {
            message = "unknown subcommand '" + std::string(argv[1]) + "'";
        }
        std::cerr << "error: usage: " << message << "\n" << app.help();
        return 2;
    }

    try {
        if (*run) return cmd_run(scenario, seed, out);
        if (*calibrate) return cmd_calibrate(scenario, alpha, n_cal);
        if (*detect) return cmd_detect(trace_path, scenario);
        if (*report) return cmd_report(run_dir);
        if (*validate) return cmd_validate(scenario);
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const CliError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << app.get_subcommands().front()->get_name() << ": " << e.what() << "\n";
        return 1;
    }
    return 2;
}
