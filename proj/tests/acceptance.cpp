// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "dwm/harness.hpp"

using namespace dwm;

namespace {

// Tolerances and seed budgets.
constexpr double kHonestMeanTol = 0.02;
constexpr double kHonestRuntimeSec = 1.0;
constexpr double kPerformanceTol = 0.03;
constexpr double kPerformanceRuntimeSec = 10.0;
constexpr int kSeeds20Required = 18;
constexpr double kReproRuntimeSec = 5.0;
constexpr std::size_t kDetectWithinSteps = 1000;
constexpr double kReplayDeviationFraction = 0.8;
constexpr double kArmaxExactTol = 1e-9;
constexpr std::size_t kArmaxBurnIn = 100;
constexpr double kRiccatiTol = 1e-10;
constexpr double kInnovationCovTol = 0.05;
constexpr int kMimoSeeds = 50;
constexpr double kMimoPowerFloor = 0.1;
constexpr double kMimoDetectRate = 0.9;
constexpr double kLaplaceTol = 0.03;
constexpr std::size_t kFreshNullWindows = 10'000;
constexpr double kBinomialSigmas = 3.0;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* format, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, format, args...);
    return buf;
}

ScenarioConfig scalar_scenario(std::size_t horizon) {
    auto c = parse_scenario_text(R"({"schema_version": 1, "horizon": 1000,
        "plant": {"kind": "scalar", "a": 0.5, "b": 1, "sigma_w2": 1},
        "policy": {"kind": "linear", "gain": -0.3},
        "watermark": {"sigma_e2": 0.25}})");
    c.horizon = horizon;
    return c;
}

ScenarioConfig arx_scenario(double a1 = 0.2) {
    return parse_scenario_text(R"({"schema_version": 1, "horizon": 9000,
        "plant": {"kind": "arx", "a": [0.7, )" + std::to_string(a1) + R"(], "b": [1, 0.5], "sigma_w2": 1},
        "policy": {"kind": "deadbeat"},
        "watermark": {"sigma_e2": 1},
        "attack": {"kind": "additive_estimated", "onset": 4500},
        "detector": {"window": 500, "alpha": 0.001}})");
}

ScenarioConfig mimo_scenario() {
    return parse_scenario_text(R"({"schema_version": 1, "horizon": 10000,
        "plant": {"kind": "mimo", "A": [[0.5, 0.1], [0, 0.4]], "B": [[1, 0.3], [0.2, 1]], "sigma_w2": 1},
        "policy": {"kind": "linear", "gain": -0.2},
        "watermark": {"sigma_e2": 0.5},
        "detector": {"window": 2000, "alpha": 0.001}})");
}

std::size_t stat_index(const Trace& tr, const std::string& name) {
    for (std::size_t k = 0; k < tr.stat_names.size(); ++k) {
        if (tr.stat_names[k] == name) return k;
    }
    throw std::logic_error("statistic " + name + " not enabled");
}

double mean_window_value(const Trace& tr, const std::string& name) {
    const std::size_t k = stat_index(tr, name);
    double sum = 0.0;
    for (const auto& w : tr.windows) sum += w.values[k];
    return sum / static_cast<double>(tr.windows.size());
}

struct AlarmTiming {
    std::size_t pre_onset = 0;
    std::optional<std::size_t> first_post_onset;
};

/// Alarm timing restricted to one statistic, or to any statistic when name is empty.
AlarmTiming timing(const Trace& tr, const std::vector<Threshold>& th, std::size_t onset, const std::string& name = "") {
    AlarmTiming out;
    for (const auto& w : tr.windows) {
        bool alarm = w.alarm;
        if (!name.empty()) {
            const std::size_t k = stat_index(tr, name);
            alarm = th[k].exceeded(w.values[k]);
        }
        if (!alarm) continue;
        if (w.end < onset) {
            ++out.pre_onset;
        } else if (!out.first_post_onset) {
            out.first_post_onset = w.end;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------

Outcome honest_consistency() {
    const auto start = Clock::now();
    auto config = scalar_scenario(100'000);
    config.detector.tests = {"test1", "test2"};
    Trace tr = run_scenario(config, 1);
    analyze(tr, config, calibrate_detector(config));
    const double test1 = mean_window_value(tr, "test1");
    const double test2 = mean_window_value(tr, "test2");
    const double elapsed = seconds_since(start);
    const double target2 = 1.0 * 0.25 + 1.0;
    const bool ok = std::abs(test1 / 1.0 - 1.0) <= kHonestMeanTol && std::abs(test2 / target2 - 1.0) <= kHonestMeanTol &&
                    elapsed < kHonestRuntimeSec;
    return {ok, fmt("test1 mean %.4f (target 1), test2 mean %.4f (target %.2f), %.2f s", test1, test2, target2, elapsed)};
}

Outcome stationary_performance() {
    const auto start = Clock::now();
    const auto config = scalar_scenario(1'000'000);
    const RunReport rep = oracle_metrics(run_scenario(config, 1), config);
    const double elapsed = seconds_since(start);
    const double expected = (1.0 + 0.25) / (1.0 - 0.2 * 0.2);
    const bool ok = std::abs(rep.ms_x / expected - 1.0) <= kPerformanceTol && elapsed < kPerformanceRuntimeSec;
    return {ok, fmt("mean-square x %.4f vs %.4f (%.2f%%), %.2f s", rep.ms_x, expected,
                    100.0 * (rep.ms_x / expected - 1.0), elapsed)};
}

struct ReproStats {
    int clean = 0;
    int timely = 0;
    std::vector<long> delays;
};

ReproStats reproduction_stats(const ScenarioConfig& config) {
    const auto th = calibrate_detector(config);
    ReproStats s;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        Trace tr = run_scenario(config, seed);
        analyze(tr, config, th);
        const AlarmTiming t = timing(tr, th, config.attack.onset);
        s.clean += t.pre_onset == 0;
        const bool on_time = t.first_post_onset && *t.first_post_onset - config.attack.onset < kDetectWithinSteps;
        s.timely += on_time;
        s.delays.push_back(t.first_post_onset ? static_cast<long>(*t.first_post_onset - config.attack.onset) : -1);
    }
    return s;
}

Outcome arx_reproduction() {
    const auto start = Clock::now();
    const ReproStats s = reproduction_stats(arx_scenario());
    const double elapsed = seconds_since(start);
    const bool ok = s.clean >= kSeeds20Required && s.timely >= kSeeds20Required && elapsed < kReproRuntimeSec;
    return {ok, fmt("no pre-onset alarm in %d/20 seeds, alarm within %zu steps in %d/20 seeds, %.2f s", s.clean,
                    kDetectWithinSteps, s.timely, elapsed)};
}

Outcome watermark_necessity() {
    auto unmarked = arx_scenario();
    unmarked.horizon = 10'000;
    unmarked.watermark.excitation = Distribution::gaussian(0.0);
    unmarked.attack = {NoiseSimulation{}, 0};
    const auto th0 = calibrate_detector(unmarked);
    int silent = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        Trace tr = run_scenario(unmarked, seed);
        analyze(tr, unmarked, th0);
        silent += alarm_log(tr).alarm_times.empty();
    }

    auto marked = arx_scenario();
    marked.horizon = 10'000;
    marked.attack = {NoiseSimulation{}, 4500};
    const auto th1 = calibrate_detector(marked);
    int flagged = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        Trace tr = run_scenario(marked, seed);
        analyze(tr, marked, th1);
        const AlarmTiming t = timing(tr, th1, marked.attack.onset, "xcorr");
        flagged += t.first_post_onset && *t.first_post_onset - marked.attack.onset < kDetectWithinSteps;
    }
    const bool ok = silent >= kSeeds20Required && flagged >= kSeeds20Required;
    return {ok, fmt("sigma_e2=0: no alarm in %d/20 seeds; sigma_e2=1: xcorr flags within 2 windows in %d/20 seeds",
                    silent, flagged)};
}

Outcome replay_detection() {
    auto config = scalar_scenario(10'000);
    config.attack = {Replay{500}, 5000};
    const auto th = calibrate_detector(config);
    const double target = 1.0 * 0.25;
    int hits = 0;
    double worst = std::numeric_limits<double>::infinity();
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        Trace tr = run_scenario(config, seed);
        analyze(tr, config, th);
        const std::size_t k = stat_index(tr, "xcorr");
        for (const auto& w : tr.windows) {
            if (w.start != config.attack.onset) continue;
            worst = std::min(worst, w.values[k]);
            hits += w.values[k] >= kReplayDeviationFraction * target && w.alarm;
        }
    }
    return {hits >= kSeeds20Required,
            fmt("deviation >= %.1f x %.2f with alarm in first attacked window: %d/20 seeds (smallest deviation %.3f)",
                kReplayDeviationFraction, target, hits, worst)};
}

Outcome armax_exactness() {
    const auto config = parse_scenario_text(R"({"schema_version": 1, "horizon": 10000,
        "plant": {"kind": "armax", "a": [0.5], "b": [1, 0.5], "c": [1, 0.3], "delay": 2, "sigma_w2": 1},
        "policy": {"kind": "linear", "gain": -0.2},
        "watermark": {"sigma_e2": 1}})");
    const Trace tr = run_scenario(config, 1);
    const DetectorInputs in = detector_inputs(tr, config);
    double worst = 0.0;
    for (std::size_t t = kArmaxBurnIn; t < tr.size(); ++t) {
        const double expected = tr.e_raw(t - 2) + tr.w(t);
        worst = std::max(worst, std::abs(in.primary(static_cast<Eigen::Index>(t), 0) - expected));
    }
    return {worst < kArmaxExactTol, fmt("max |ztilde - (e[t-2] + w[t])| = %.3e", worst)};
}

Outcome kalman_correctness() {
    PartialPlant scalar;
    scalar.A = Eigen::MatrixXd::Constant(1, 1, 0.9);
    scalar.B = Eigen::VectorXd::Ones(1);
    scalar.C = Eigen::RowVectorXd::Ones(1);
    scalar.sigma_w2 = 1.0;
    scalar.sigma_n2 = 1.0;
    const double a = 0.9, q = 1.0, r = 1.0;
    const double beta = r * (1.0 - a * a) - q;
    const double closed_form = 0.5 * (-beta + std::sqrt(beta * beta + 4.0 * q * r));
    const double riccati_err = std::abs(kalman_design(scalar).P(0, 0) - closed_form);

    const auto covariance_error = [](const ScenarioConfig& config) {
        const Trace tr = run_scenario(config, 1);
        const DetectorInputs in = detector_inputs(tr, config);
        const KalmanDesign d = kalman_design(std::get<PartialPlant>(config.plant));
        const Eigen::Index skip = static_cast<Eigen::Index>(resolved_burn_in(config));
        const Eigen::MatrixXd qs = in.secondary.bottomRows(in.secondary.rows() - skip);
        const Eigen::MatrixXd cov = qs.transpose() * qs / static_cast<double>(qs.rows());
        const Eigen::MatrixXd target = d.sigma_R2 * d.gain * d.gain.transpose();
        return (cov - target).cwiseAbs().maxCoeff() / target.cwiseAbs().maxCoeff();
    };
    const auto scalar_run = parse_scenario_text(R"({"schema_version": 1, "horizon": 100000,
        "plant": {"kind": "partial", "A": [[0.9]], "B": [1], "C": [1], "sigma_w2": 1, "sigma_n2": 1},
        "policy": {"kind": "linear", "gain": -0.3}, "watermark": {"sigma_e2": 1}})");
    const auto two_state_run = parse_scenario_text(R"({"schema_version": 1, "horizon": 100000,
        "plant": {"kind": "partial", "A": [[0.9, 0.2], [0, 0.5]], "B": [1, 1], "C": [1, 0], "sigma_w2": 1, "sigma_n2": 1},
        "policy": {"kind": "linear", "gain": -0.3}, "watermark": {"sigma_e2": 1}})");
    const double err1 = covariance_error(scalar_run);
    const double err2 = covariance_error(two_state_run);
    const bool ok = riccati_err < kRiccatiTol && err1 <= kInnovationCovTol && err2 <= kInnovationCovTol;
    return {ok, fmt("|P - closed form| = %.2e; q covariance vs sigma_R2 K K^T: %.2f%% (1 state), %.2f%% (2 states)",
                    riccati_err, 100.0 * err1, 100.0 * err2)};
}

Outcome mimo_property() {
    auto config = mimo_scenario();
    const auto th = calibrate_detector(config);
    int honest_clean = 0;
    for (int seed = 1; seed <= kMimoSeeds; ++seed) {
        Trace tr = run_scenario(config, static_cast<std::uint64_t>(seed));
        analyze(tr, config, th);
        honest_clean += alarm_log(tr).alarm_times.empty();
    }
    const bool honest_ok = honest_clean >= static_cast<int>(std::ceil(kMimoDetectRate * kMimoSeeds));
    std::string detail = fmt("honest runs without alarm %d/%d", honest_clean, kMimoSeeds);

    bool attacks_ok = true;
    const std::size_t onset = 4000;
    const std::vector<AttackKind> attacks = {Replay{2000}, NoiseSimulation{}, AdditiveEstimated{}};
    for (const auto& kind : attacks) {
        config.attack = {kind, onset};
        int eligible = 0, detected = 0;
        for (int seed = 1; seed <= kMimoSeeds; ++seed) {
            Trace tr = run_scenario(config, static_cast<std::uint64_t>(seed));
            analyze(tr, config, th);
            const RunReport rep = oracle_metrics(tr, config);
            if (rep.distortion_power_post_onset < kMimoPowerFloor * 1.0) continue;
            ++eligible;
            detected += rep.first_alarm_post_onset.has_value();
        }
        const double rate = eligible > 0 ? static_cast<double>(detected) / eligible : 1.0;
        attacks_ok = attacks_ok && rate >= kMimoDetectRate;
        detail += fmt("; %s detected %d/%d", attack_name(kind).c_str(), detected, eligible);
    }
    return {honest_ok && attacks_ok, detail};
}

Outcome laplace_matched() {
    auto config = parse_scenario_text(R"({"schema_version": 1, "horizon": 100000,
        "plant": {"kind": "scalar", "a": 0.5, "b": 1, "sigma_w2": 1, "noise": "laplace"},
        "policy": {"kind": "linear", "gain": -0.3},
        "watermark": {"sigma_e2": 1, "distribution": "matched"},
        "detector": {"tests": ["test1", "test2"], "n_cal": 10000}})");
    Trace tr = run_scenario(config, 1);
    analyze(tr, config, calibrate_detector(config));
    const double test2 = mean_window_value(tr, "test2");
    const double test1 = mean_window_value(tr, "test1");
    const double target = 2.0 * 1.0;
    return {std::abs(test2 / target - 1.0) <= kLaplaceTol,
            fmt("test2 mean %.4f vs %.1f; residual sd ratio raw/noise-only %.4f (sqrt 2 = 1.4142)", test2, target,
                std::sqrt(test2 / test1))};
}

Outcome calibration_soundness() {
    NullModel mimo;
    mimo.excitation = Distribution::gaussian(0.5);
    mimo.actuators = 2;
    mimo.noise = Distribution::gaussian(1.0);
    mimo.noise_dim = 2;
    mimo.excitation_map = Eigen::Matrix2d{{1.0, 0.3}, {0.2, 1.0}};
    mimo.noise_map = Eigen::Matrix2d::Identity();
    Eigen::MatrixXd sigma0 = 0.5 * mimo.excitation_map * mimo.excitation_map.transpose();
    sigma0.diagonal().array() += 1.0;

    NullModel scalar;
    scalar.excitation = Distribution::gaussian(0.25);
    scalar.excitation_map = Eigen::MatrixXd::Ones(1, 1);
    scalar.noise_map = Eigen::MatrixXd::Ones(1, 1);
    scalar.secondary_map = Eigen::MatrixXd::Ones(1, 1);

    struct Case {
        TestDef test;
        const NullModel* model;
    };
    const std::vector<Case> cases = {
        {{"variance", StatKind::variance, StatInput::primary, Eigen::MatrixXd::Constant(1, 1, 1.25)}, &scalar},
        {{"cross_corr", StatKind::cross_corr, StatInput::primary, 0.5 * mimo.excitation_map}, &mimo},
        {{"covariance", StatKind::covariance, StatInput::primary, sigma0}, &mimo},
        {{"neg_log_likelihood", StatKind::neg_log_likelihood, StatInput::primary, sigma0}, &mimo},
    };
    bool ok = true;
    std::string detail;
    for (double alpha : {0.05, 0.01, 0.001}) {
        CalibrationOptions opt;
        opt.window = 100;
        opt.alpha = alpha;
        opt.n_cal = 100'000;
        opt.seed = 17;
        detail += fmt("%salpha=%g:", detail.empty() ? "" : "; ", alpha);
        for (const auto& c : cases) {
            const Threshold th = calibrate_threshold(c.test, *c.model, opt);
            std::size_t exceed = 0;
            for (std::size_t w = 0; w < kFreshNullWindows; ++w) {
                RandomStream rng(1'000'003, StreamTag::calibration, w);
                exceed += th.exceeded(evaluate(c.test, simulate_null_window(*c.model, opt.window, rng)).value);
            }
            const double rate = static_cast<double>(exceed) / kFreshNullWindows;
            const double band = kBinomialSigmas * std::sqrt(alpha * (1.0 - alpha) / kFreshNullWindows);
            const bool pass = std::abs(rate - alpha) <= band;
            ok = ok && pass;
            detail += fmt(" %s %.4f%s", c.test.name.c_str(), rate, pass ? "" : "(out of band)");
        }
    }
    return {ok, detail};
}

void informational_variant() {
    const ReproStats s = reproduction_stats(arx_scenario(0.3));
    std::printf("INFO  a1=0.3 variant of criterion 3: no pre-onset alarm in %d/20 seeds, alarm within %zu steps in %d/20 seeds\n",
                s.clean, kDetectWithinSteps, s.timely);
}

} // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"honest-sensor consistency", honest_consistency},
        {"stationary mean-square performance", stationary_performance},
        {"ARX attack reproduction", arx_reproduction},
        {"watermark necessity", watermark_necessity},
        {"replay detection", replay_detection},
        {"ARMAX filter exactness", armax_exactness},
        {"Kalman/Riccati correctness", kalman_correctness},
        {"MIMO detection property", mimo_property},
        {"non-Gaussian matched excitation", laplace_matched},
        {"threshold calibration soundness", calibration_soundness},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failures += !o.pass;
        std::printf("%s %2zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), o.detail.c_str());
        std::fflush(stdout);
    }
    informational_variant();
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
    return failures == 0 ? 0 : 1;
}
