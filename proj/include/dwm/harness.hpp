// Closed-loop execution, the detector pipeline over a finished trace, and
// ground-truth metrics that need the noise realizations.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "dwm/adversary.hpp"
#include "dwm/detect.hpp"
#include "dwm/linsys.hpp"
#include "dwm/random.hpp"
#include "dwm/residual.hpp"
#include "dwm/scenario.hpp"
#include "dwm/trace.hpp"
#include "dwm/watermark.hpp"

namespace dwm {

// ============================================================================
// Simulation
// ============================================================================

namespace detail {

inline double scalar_initial(const ScenarioConfig& c) { return c.initial_state ? (*c.initial_state)(0) : 0.0; }

inline Eigen::VectorXd vector_initial(const ScenarioConfig& c, Eigen::Index n) {
    return c.initial_state ? *c.initial_state : Eigen::VectorXd::Zero(n);
}

inline Eigen::VectorXd draw_vector(const Distribution& d, Eigen::Index n, RandomStream& rng) {
    Eigen::VectorXd out(n);
    for (Eigen::Index i = 0; i < n; ++i) out(i) = sample(d, rng);
    return out;
}

} // namespace detail

/// Runs the loop for config.horizon steps. At each t:
///   1. the plant produces x[t], y[t] from x[t-1], u[t-1] and fresh noise,
///   2. the sensor reports z[t],
///   3. the policy computes u_g[t] from the reports,
///   4. each actuator adds its shaped excitation: u[t] = u_g[t] + e_shaped[t].
inline Trace run_scenario(const ScenarioConfig& config, std::uint64_t seed) {
    const LoopDims dims = loop_dims(config.plant);
    Trace tr = make_trace(static_cast<std::size_t>(dims.state), static_cast<std::size_t>(dims.output),
                          static_cast<std::size_t>(dims.input), static_cast<std::size_t>(dims.noise));
    const std::size_t T = config.horizon;
    for (Series* s : {&tr.x, &tr.y, &tr.z, &tr.u, &tr.u_g, &tr.e_raw, &tr.e_shaped, &tr.w, &tr.n}) s->reserve(T);

    RandomStream process(seed, StreamTag::process_noise);
    RandomStream measurement(seed, StreamTag::measurement_noise);
    std::vector<RandomStream> excitation_streams;
    std::vector<ExcitationShaper> shapers;
    for (Eigen::Index i = 0; i < dims.input; ++i) {
        excitation_streams.emplace_back(seed, StreamTag::excitation, static_cast<std::uint64_t>(i));
        shapers.emplace_back(shaping_for(config));
    }
    Sensor sensor(config.attack, public_knowledge(config), RandomStream(seed, StreamTag::attack));
    const WatermarkSpec watermark{config.watermark.excitation, shaping_for(config)};

    Eigen::VectorXd e_raw(dims.input), e_shaped(dims.input);
    for (std::size_t t = 0; t < T; ++t) {
        const auto ti = static_cast<std::ptrdiff_t>(t);
        std::visit(
            [&](const auto& p) {
                using P = std::decay_t<decltype(p)>;
                if constexpr (std::is_same_v<P, ScalarPlant>) {
                    const double w = t == 0 ? 0.0 : sample(config.noise, process);
                    const double x = t == 0 ? detail::scalar_initial(config) : step_scalar(p, tr.x(t - 1), tr.u(t - 1), w);
                    tr.w.push_back(w);
                    tr.x.push_back(x);
                    tr.y.push_back(x);
                    tr.n.push_back(0.0);
                } else if constexpr (std::is_same_v<P, ArxPlant>) {
                    double w = 0.0, y = detail::scalar_initial(config);
                    if (t > 0) {
                        w = sample(config.noise, process);
                        const auto yh = detail::newest_first(tr.y, ti - 1, p.a().size());
                        const auto uh = detail::newest_first(tr.u, ti - 1, p.b().size());
                        y = step_arx(p, yh, uh, w);
                    }
                    tr.w.push_back(w);
                    tr.x.push_back(y);
                    tr.y.push_back(y);
                    tr.n.push_back(0.0);
                } else if constexpr (std::is_same_v<P, ArmaxPlant>) {
                    const double w = sample(config.noise, process);
                    tr.w.push_back(w);
                    const auto yh = detail::newest_first(tr.y, ti - 1, p.ar_order());
                    const auto uh = detail::newest_first(tr.u, ti - 1, p.delay() + p.input_order());
                    const auto wh = detail::newest_first(tr.w, ti, p.c().size());
                    const double y = step_armax(p, yh, uh, wh);
                    tr.x.push_back(y);
                    tr.y.push_back(y);
                    tr.n.push_back(0.0);
                } else if constexpr (std::is_same_v<P, PartialPlant>) {
                    const Distribution meas = Distribution::gaussian(p.sigma_n2);
                    if (t == 0) {
                        const Eigen::VectorXd x0 = detail::vector_initial(config, dims.state);
                        const double n = sample(meas, measurement);
                        tr.w.push_back(Eigen::VectorXd(Eigen::VectorXd::Zero(dims.noise)));
                        tr.x.push_back(x0);
                        tr.y.push_back(p.C.dot(x0) + n);
                        tr.n.push_back(n);
                    } else {
                        const Eigen::VectorXd w = detail::draw_vector(config.noise, dims.noise, process);
                        const double n = sample(meas, measurement);
                        const PartialStep step = step_partial(p, tr.x.vec(t - 1), tr.u(t - 1), w, n);
                        tr.w.push_back(w);
                        tr.x.push_back(step.x_next);
                        tr.y.push_back(step.y);
                        tr.n.push_back(n);
                    }
                } else {
                    if (t == 0) {
                        const Eigen::VectorXd x0 = detail::vector_initial(config, dims.state);
                        tr.w.push_back(Eigen::VectorXd(Eigen::VectorXd::Zero(dims.noise)));
                        tr.x.push_back(x0);
                        tr.y.push_back(x0);
                    } else {
                        const Eigen::VectorXd w = detail::draw_vector(config.noise, dims.noise, process);
                        const Eigen::VectorXd x = step_statespace(p, tr.x.vec(t - 1), tr.u.vec(t - 1), w);
                        tr.w.push_back(w);
                        tr.x.push_back(x);
                        tr.y.push_back(x);
                    }
                    tr.n.push_back(0.0);
                }
            },
            config.plant);

        tr.z.push_back(sensor.report(SensorView{t, tr.y, tr.z, tr.u_g}));
        const Eigen::VectorXd u_g = evaluate_policy(config.policy.policy, tr.z, tr.u_g, t);
        tr.u_g.push_back(u_g);
        for (Eigen::Index i = 0; i < dims.input; ++i) {
            e_raw(i) = draw_excitation(watermark, excitation_streams[static_cast<std::size_t>(i)]);
            e_shaped(i) = shapers[static_cast<std::size_t>(i)](e_raw(i));
        }
        tr.e_raw.push_back(e_raw);
        tr.e_shaped.push_back(e_shaped);
        tr.u.push_back(Eigen::VectorXd(u_g + e_shaped));
    }
    return tr;
}

// ============================================================================
// Detector pipeline
// ============================================================================

/// Detector inputs aligned by report time t. Row t of `e` is the excitation
/// that drives the residual in row t. Rows with valid[t] == false carry no
/// residual (they precede the first computable one).
struct DetectorInputs {
    Eigen::MatrixXd e;
    Eigen::MatrixXd primary;
    Eigen::MatrixXd secondary;
    std::vector<bool> valid;
};

inline DetectorInputs detector_inputs(const Trace& tr, const ScenarioConfig& config) {
    const auto T = static_cast<Eigen::Index>(tr.size());
    DetectorInputs in;
    in.valid.assign(tr.size(), false);
    std::visit(
        [&](const auto& p) {
            using P = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<P, ScalarPlant>) {
                in.e = in.primary = in.secondary = Eigen::MatrixXd::Zero(T, 1);
                for (Eigen::Index t = 1; t < T; ++t) {
                    const auto k = static_cast<std::size_t>(t - 1);
                    const auto r = scalar_residual(tr.z(k), tr.z(k + 1), tr.u_g(k), tr.e_raw(k), p);
                    in.e(t, 0) = tr.e_raw(k);
                    in.primary(t, 0) = r.raw;
                    in.secondary(t, 0) = r.watermark_removed;
                    in.valid[static_cast<std::size_t>(t)] = true;
                }
            } else if constexpr (std::is_same_v<P, ArxPlant>) {
                in.e = in.primary = in.secondary = Eigen::MatrixXd::Zero(T, 1);
                for (Eigen::Index t = 1; t < T; ++t) {
                    const auto zh = detail::newest_first(tr.z, t, p.a().size() + 1);
                    const auto gh = detail::newest_first(tr.u_g, t - 1, p.b().size());
                    const auto k = static_cast<std::size_t>(t - 1);
                    const auto r = arx_residual(zh, gh, tr.e_raw(k), p);
                    in.e(t, 0) = tr.e_raw(k);
                    in.primary(t, 0) = r.raw;
                    in.secondary(t, 0) = r.watermark_removed;
                    in.valid[static_cast<std::size_t>(t)] = true;
                }
            } else if constexpr (std::is_same_v<P, ArmaxPlant>) {
                in.e = in.primary = in.secondary = Eigen::MatrixXd::Zero(T, 1);
                ArmaxPredictionFilter filter(p);
                const auto l = static_cast<std::ptrdiff_t>(p.delay());
                for (Eigen::Index t = 0; t < T; ++t) {
                    const auto ts = static_cast<std::size_t>(t);
                    if (t >= 1) filter.push_policy_input(tr.u_g(ts - 1));
                    const double e_lag = tr.e_raw.at_or_zero(t - l);
                    const auto out = filter.step(tr.z(ts), e_lag);
                    in.e(t, 0) = e_lag;
                    in.primary(t, 0) = out.ztilde;
                    in.secondary(t, 0) = out.watermark_removed;
                    in.valid[ts] = true;
                }
            } else if constexpr (std::is_same_v<P, PartialPlant>) {
                const KalmanDesign design = kalman_design(p);
                KalmanFilter filter(p, design);
                in.e = in.primary = Eigen::MatrixXd::Zero(T, 1);
                in.secondary = Eigen::MatrixXd::Zero(T, p.A.rows());
                for (Eigen::Index t = 1; t < T; ++t) {
                    const auto k = static_cast<std::size_t>(t - 1);
                    const auto out = filter.step(tr.z(k + 1), tr.u_g(k), tr.e_shaped(k));
                    in.e(t, 0) = tr.e_raw(k);
                    in.primary(t, 0) = out.innovation;
                    in.secondary.row(t) = out.correction.transpose();
                    in.valid[static_cast<std::size_t>(t)] = true;
                }
            } else {
                in.e = Eigen::MatrixXd::Zero(T, p.B.cols());
                in.primary = Eigen::MatrixXd::Zero(T, p.A.rows());
                for (Eigen::Index t = 1; t < T; ++t) {
                    const auto k = static_cast<std::size_t>(t - 1);
                    in.e.row(t) = tr.e_raw.vec(k).transpose();
                    in.primary.row(t) = mimo_residual(tr.z.vec(k), tr.z.vec(k + 1), tr.u_g.vec(k), p).transpose();
                    in.valid[static_cast<std::size_t>(t)] = true;
                }
            }
        },
        config.plant);
    return in;
}

/// Honest-sensor law of the detector inputs for this scenario.
inline NullModel null_model(const ScenarioConfig& config) {
    NullModel m;
    m.excitation = config.watermark.excitation;
    m.noise = config.noise;
    const auto one = [](double v) { return Eigen::MatrixXd::Constant(1, 1, v); };
    std::visit(
        [&](const auto& p) {
            using P = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<P, ScalarPlant>) {
                m.excitation_map = one(p.b);
                m.noise_map = m.secondary_map = one(1.0);
            } else if constexpr (std::is_same_v<P, ArxPlant>) {
                m.excitation_map = one(p.b()[0]);
                m.noise_map = m.secondary_map = one(1.0);
            } else if constexpr (std::is_same_v<P, ArmaxPlant>) {
                m.excitation_map = one(1.0);
                m.noise_map = m.secondary_map = one(1.0);
            } else if constexpr (std::is_same_v<P, PartialPlant>) {
                const KalmanDesign design = kalman_design(p);
                m.noise = Distribution::gaussian(design.sigma_R2);
                m.excitation_map = one(0.0);
                m.noise_map = one(1.0);
                m.secondary_map = design.gain;
            } else {
                m.actuators = p.B.cols();
                m.noise_dim = p.A.rows();
                m.excitation_map = p.B;
                m.noise_map = Eigen::MatrixXd::Identity(p.A.rows(), p.A.rows());
            }
        },
        config.plant);
    return m;
}

/// The enabled tests with their honest-sensor targets.
inline std::vector<TestDef> detector_tests(const ScenarioConfig& config) {
    const double se2 = config.watermark.excitation.variance;
    const auto one = [](double v) { return Eigen::MatrixXd::Constant(1, 1, v); };
    std::vector<TestDef> all;
    std::visit(
        [&](const auto& p) {
            using P = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<P, PartialPlant>) {
                const KalmanDesign design = kalman_design(p);
                all.push_back({"xcorr", StatKind::cross_corr, StatInput::secondary,
                               Eigen::MatrixXd::Zero(p.A.rows(), 1)});
                all.push_back({"test2", StatKind::variance, StatInput::primary, one(design.sigma_R2)});
                all.push_back({"nll", StatKind::neg_log_likelihood, StatInput::primary, one(design.sigma_R2)});
            } else if constexpr (std::is_same_v<P, MimoPlant>) {
                Eigen::MatrixXd sigma0 = se2 * p.B * p.B.transpose();
                sigma0.diagonal().array() += p.sigma_w2;
                all.push_back({"cov", StatKind::covariance, StatInput::primary, sigma0});
                all.push_back({"xcorr", StatKind::cross_corr, StatInput::primary, se2 * p.B});
                all.push_back({"nll", StatKind::neg_log_likelihood, StatInput::primary, sigma0});
            } else {
                double gain = 1.0;
                if constexpr (std::is_same_v<P, ScalarPlant>) gain = p.b;
                else if constexpr (std::is_same_v<P, ArxPlant>) gain = p.b()[0];
                const double sw2 = plant_sigma_w2(config.plant);
                const double raw_var = gain * gain * se2 + sw2;
                all.push_back({"test1", StatKind::variance, StatInput::secondary, one(sw2)});
                all.push_back({"test2", StatKind::variance, StatInput::primary, one(raw_var)});
                all.push_back({"xcorr", StatKind::cross_corr, StatInput::primary, one(gain * se2)});
                all.push_back({"nll", StatKind::neg_log_likelihood, StatInput::primary, one(raw_var)});
            }
        },
        config.plant);
    std::vector<TestDef> out;
    for (const auto& name : enabled_tests(config)) {
        for (const auto& test : all) {
            if (test.name == name) out.push_back(test);
        }
    }
    return out;
}

inline CalibrationOptions calibration_options(const ScenarioConfig& config) {
    CalibrationOptions opt;
    opt.window = config.detector.window;
    opt.alpha = config.detector.alpha;
    opt.n_cal = config.detector.resolved_n_cal();
    opt.seed = config.detector.calibration_seed;
    return opt;
}

inline std::vector<Threshold> calibrate_detector(const ScenarioConfig& config) {
    const auto tests = detector_tests(config);
    return calibrate_thresholds(tests, null_model(config), calibration_options(config));
}

/// Evaluates every enabled test on each complete, post-burn-in window
/// [n l, (n+1) l) and flags windows where any statistic leaves its band.
inline void analyze(Trace& trace, const ScenarioConfig& config, const std::vector<Threshold>& thresholds) {
    const auto tests = detector_tests(config);
    if (thresholds.size() != tests.size()) throw std::invalid_argument("analyze: one threshold per test required");
    const DetectorInputs in = detector_inputs(trace, config);
    const std::size_t l = config.detector.window;
    const std::size_t burn_in = resolved_burn_in(config);
    trace.stat_names.clear();
    for (const auto& t : tests) trace.stat_names.push_back(t.name);
    trace.windows.clear();
    for (std::size_t id = 0; (id + 1) * l <= trace.size(); ++id) {
        const std::size_t start = id * l;
        if (start < burn_in) continue;
        bool complete = true;
        for (std::size_t t = start; t < start + l; ++t) complete = complete && in.valid[t];
        if (!complete) continue;
        const auto s = static_cast<Eigen::Index>(start);
        const auto len = static_cast<Eigen::Index>(l);
        WindowData data;
        data.e = in.e.middleRows(s, len);
        data.primary = in.primary.middleRows(s, len);
        if (in.secondary.size() > 0) data.secondary = in.secondary.middleRows(s, len);
        WindowRecord rec{id, start, start + l - 1, {}, false};
        for (std::size_t k = 0; k < tests.size(); ++k) {
            const double v = evaluate(tests[k], data).value;
            rec.values.push_back(v);
            rec.alarm = rec.alarm || thresholds[k].exceeded(v);
        }
        trace.windows.push_back(std::move(rec));
    }
}

/// Alarm log over evaluated windows; entries are window end times.
inline AlarmLog alarm_log(const Trace& trace) {
    AlarmLog log;
    for (const auto& w : trace.windows) {
        if (!w.alarm) continue;
        log.alarm_times.push_back(w.end);
        if (!log.first_alarm) log.first_alarm = w.end;
    }
    return log;
}

// ============================================================================
// Ground-truth metrics
// ============================================================================

struct RunReport {
    std::string plant;
    std::string attack;
    std::size_t horizon = 0;
    std::size_t onset = 0;
    /// (1/T) sum ||v[t]||^2 over the run and over t >= onset.
    double distortion_power = 0.0;
    double distortion_power_post_onset = 0.0;
    /// (1/T) sum ||z[t] - x[t]||^2 (z - y for partially observed plants).
    double d_mean_square = 0.0;
    double ms_x = 0.0;
    double ms_z = 0.0;
    std::size_t windows_evaluated = 0;
    std::size_t alarms = 0;
    std::optional<std::size_t> first_alarm;
    std::optional<std::size_t> first_alarm_post_onset;
    std::optional<std::size_t> detection_delay;
    std::size_t false_alarms_before_onset = 0;
};

/// Additive distortion v[t] per step (rows), computed with the true noise.
inline Series distortion_series(const Trace& tr, const ScenarioConfig& config) {
    const std::size_t T = tr.size();
    Series v(tr.z.width());
    std::visit(
        [&](const auto& p) {
            using P = std::decay_t<decltype(p)>;
            const auto ti = [](std::size_t t) { return static_cast<std::ptrdiff_t>(t); };
            if constexpr (std::is_same_v<P, PartialPlant>) {
                const KalmanDesign design = kalman_design(p);
                KalmanFilter reported(p, design), truth(p, design);
                v = Series(static_cast<std::size_t>(p.A.rows()));
                v.push_back(Eigen::VectorXd(Eigen::VectorXd::Zero(p.A.rows())));
                for (std::size_t t = 1; t < T; ++t) {
                    const auto f = reported.step(tr.z(t), tr.u_g(t - 1), tr.e_shaped(t - 1));
                    const auto r = truth.step(tr.y(t), tr.u_g(t - 1), tr.e_shaped(t - 1));
                    v.push_back(Eigen::VectorXd(f.correction - r.correction));
                }
            } else {
                for (std::size_t t = 0; t < T; ++t) {
                    if constexpr (std::is_same_v<P, ScalarPlant>) {
                        v.push_back(t == 0 ? tr.z(0) - tr.y(0)
                                           : tr.z(t) - step_scalar(p, tr.z(t - 1), tr.u(t - 1), tr.w(t)));
                    } else if constexpr (std::is_same_v<P, ArxPlant>) {
                        if (t == 0) {
                            v.push_back(tr.z(0) - tr.y(0));
                            continue;
                        }
                        const auto zh = detail::newest_first(tr.z, ti(t) - 1, p.a().size());
                        const auto uh = detail::newest_first(tr.u, ti(t) - 1, p.b().size());
                        v.push_back(tr.z(t) - step_arx(p, zh, uh, tr.w(t)));
                    } else if constexpr (std::is_same_v<P, ArmaxPlant>) {
                        const auto zh = detail::newest_first(tr.z, ti(t) - 1, p.ar_order());
                        const auto uh = detail::newest_first(tr.u, ti(t) - 1, p.delay() + p.input_order());
                        const auto wh = detail::newest_first(tr.w, ti(t), p.c().size());
                        v.push_back(tr.z(t) - step_armax(p, zh, uh, wh));
                    } else {
                        if (t == 0) {
                            v.push_back(Eigen::VectorXd(tr.z.vec(0) - tr.y.vec(0)));
                            continue;
                        }
                        v.push_back(Eigen::VectorXd(
                            tr.z.vec(t) - step_statespace(p, tr.z.vec(t - 1), tr.u.vec(t - 1), tr.w.vec(t))));
                    }
                }
            }
        },
        config.plant);
    return v;
}

inline RunReport oracle_metrics(const Trace& tr, const ScenarioConfig& config) {
    const std::size_t T = tr.size();
    if (T == 0) throw std::invalid_argument("oracle_metrics: empty trace");
    if (tr.w.size() != T || tr.y.size() != T || tr.x.size() != T) {
        throw std::invalid_argument("oracle_metrics: trace lacks ground-truth noise or outputs");
    }
    RunReport rep;
    rep.plant = plant_kind(config.plant);
    rep.attack = attack_name(config.attack.kind);
    rep.horizon = T;
    rep.onset = config.attack.onset;

    const Series v = distortion_series(tr, config);
    const bool partial = std::holds_alternative<PartialPlant>(config.plant);
    double post_sum = 0.0;
    std::size_t post_count = 0;
    for (std::size_t t = 0; t < T; ++t) {
        const double vv = v.vec(t).squaredNorm();
        rep.distortion_power += vv;
        if (t >= rep.onset) {
            post_sum += vv;
            ++post_count;
        }
        const Eigen::VectorXd truth = partial ? tr.y.vec(t) : tr.x.vec(t);
        rep.d_mean_square += (tr.z.vec(t) - truth).squaredNorm();
        rep.ms_x += tr.x.vec(t).squaredNorm();
        rep.ms_z += tr.z.vec(t).squaredNorm();
    }
    const auto Td = static_cast<double>(T);
    rep.distortion_power /= Td;
    rep.distortion_power_post_onset = post_count > 0 ? post_sum / static_cast<double>(post_count) : 0.0;
    rep.d_mean_square /= Td;
    rep.ms_x /= Td;
    rep.ms_z /= Td;

    rep.windows_evaluated = tr.windows.size();
    for (const auto& w : tr.windows) {
        if (!w.alarm) continue;
        ++rep.alarms;
        if (!rep.first_alarm) rep.first_alarm = w.end;
        if (w.end < rep.onset) {
            ++rep.false_alarms_before_onset;
        } else if (!rep.first_alarm_post_onset) {
            rep.first_alarm_post_onset = w.end;
            rep.detection_delay = w.end - rep.onset;
        }
    }
    return rep;
}

inline nlohmann::json to_json(const RunReport& r) {
    auto opt = [](const std::optional<std::size_t>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
    return {{"plant", r.plant},
            {"attack", r.attack},
            {"horizon", r.horizon},
            {"onset", r.onset},
            {"distortion_power", r.distortion_power},
            {"distortion_power_post_onset", r.distortion_power_post_onset},
            {"d_mean_square", r.d_mean_square},
            {"ms_x", r.ms_x},
            {"ms_z", r.ms_z},
            {"windows_evaluated", r.windows_evaluated},
            {"alarms", r.alarms},
            {"first_alarm", opt(r.first_alarm)},
            {"first_alarm_post_onset", opt(r.first_alarm_post_onset)},
            {"delay", opt(r.detection_delay)},
            {"false_alarms_before_onset", r.false_alarms_before_onset}};
}

inline nlohmann::json to_json(const std::vector<std::string>& names, const std::vector<Threshold>& thresholds) {
    nlohmann::json out = nlohmann::json::array();
    for (std::size_t i = 0; i < thresholds.size(); ++i) {
        const auto& t = thresholds[i];
        auto bound = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
        out.push_back({{"test", names[i]},
                       {"kind", std::string(to_string(t.kind))},
                       {"alpha", t.alpha},
                       {"method", std::string(to_string(t.method))},
                       {"lower", bound(t.lower)},
                       {"upper", bound(t.upper)}});
    }
    return out;
}

inline std::vector<Threshold> thresholds_from_json(const nlohmann::json& j) {
    std::vector<Threshold> out;
    for (const auto& item : j) {
        Threshold t;
        t.alpha = item.at("alpha").get<double>();
        const std::string kind = item.at("kind").get<std::string>();
        for (StatKind k : {StatKind::variance, StatKind::cross_corr, StatKind::covariance, StatKind::neg_log_likelihood}) {
            if (to_string(k) == kind) t.kind = k;
        }
        t.method = item.at("method").get<std::string>() == "chi_square" ? CalibrationMethod::chi_square
                                                                         : CalibrationMethod::monte_carlo;
        if (!item.at("lower").is_null()) t.lower = item.at("lower").get<double>();
        if (!item.at("upper").is_null()) t.upper = item.at("upper").get<double>();
        out.push_back(t);
    }
    return out;
}

struct NllPoint {
    std::size_t window_end_t = 0;
    double nll = 0.0;
    double threshold = 0.0;
};

/// Windowed negative log-likelihood against its calibrated threshold.
inline std::vector<NllPoint> nll_series(const Trace& trace, const std::vector<Threshold>& thresholds) {
    std::vector<NllPoint> out;
    const auto it = std::find(trace.stat_names.begin(), trace.stat_names.end(), "nll");
    if (it == trace.stat_names.end()) return out;
    const auto k = static_cast<std::size_t>(it - trace.stat_names.begin());
    for (const auto& w : trace.windows) out.push_back({w.end, w.values[k], thresholds.at(k).upper});
    return out;
}

} // namespace dwm
