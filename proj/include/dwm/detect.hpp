// Finite-window test statistics, threshold calibration and the windowed
// alarm procedure.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/chi_squared.hpp>

#include "dwm/random.hpp"

namespace dwm {

enum class StatKind { variance, cross_corr, covariance, neg_log_likelihood };

inline std::string_view to_string(StatKind kind) {
    switch (kind) {
    case StatKind::variance: return "variance";
    case StatKind::cross_corr: return "cross_corr";
    case StatKind::covariance: return "covariance";
    case StatKind::neg_log_likelihood: return "neg_log_likelihood";
    }
    return "unknown";
}

struct WindowStat {
    StatKind kind = StatKind::variance;
    std::size_t window_len = 0;
    double value = 0.0;
    /// value relative to its target where that is meaningful, NaN otherwise.
    double normalized = std::numeric_limits<double>::quiet_NaN();
};

// ============================================================================
// Window statistics
// ============================================================================

/// value = (1/l) sum samples^2, normalized = value / target.
inline WindowStat variance_stat(std::span<const double> samples, double target) {
    if (samples.size() < 2) {
        throw std::invalid_argument("variance_stat: window needs at least two samples");
    }
    double sum = 0.0;
    for (double s : samples) sum += s * s;
    const double value = sum / static_cast<double>(samples.size());
    return {StatKind::variance, samples.size(), value, value / target};
}

/// |(1/l) sum e[j] r[j] - target| with e[j] already aligned to the residual it drives.
inline WindowStat cross_corr_stat(std::span<const double> e, std::span<const double> r, double target) {
    if (e.size() != r.size()) throw std::invalid_argument("cross_corr_stat: misaligned window lengths");
    if (e.empty()) throw std::invalid_argument("cross_corr_stat: empty window");
    double sum = 0.0;
    for (std::size_t j = 0; j < e.size(); ++j) sum += e[j] * r[j];
    const double value = std::abs(sum / static_cast<double>(e.size()) - target);
    return {StatKind::cross_corr, e.size(), value,
            target != 0.0 ? value / std::abs(target) : std::numeric_limits<double>::quiet_NaN()};
}

/// Multi-actuator form: e is l x m, r is l x n, target is n x m (column i is
/// the expected correlation of actuator i's excitation with the residual).
/// The value is the largest per-actuator deviation norm.
inline WindowStat cross_corr_stat(const Eigen::MatrixXd& e, const Eigen::MatrixXd& r, const Eigen::MatrixXd& target) {
    if (e.rows() != r.rows()) throw std::invalid_argument("cross_corr_stat: misaligned window lengths");
    if (e.rows() == 0) throw std::invalid_argument("cross_corr_stat: empty window");
    if (target.rows() != r.cols() || target.cols() != e.cols()) {
        throw std::invalid_argument("cross_corr_stat: target has wrong shape");
    }
    const Eigen::MatrixXd corr = r.transpose() * e / static_cast<double>(e.rows());
    const Eigen::MatrixXd deviation = corr - target;
    double value = 0.0;
    double target_norm = 0.0;
    for (Eigen::Index i = 0; i < deviation.cols(); ++i) {
        value = std::max(value, deviation.col(i).norm());
        target_norm = std::max(target_norm, target.col(i).norm());
    }
    return {StatKind::cross_corr, static_cast<std::size_t>(e.rows()), value,
            target_norm > 0.0 ? value / target_norm : std::numeric_limits<double>::quiet_NaN()};
}

namespace detail {

inline Eigen::MatrixXd sample_covariance(const Eigen::MatrixXd& r) {
    return r.transpose() * r / static_cast<double>(r.rows());
}

inline double log_det_spd(const Eigen::MatrixXd& m, const char* what) {
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() != Eigen::Success) {
        throw std::invalid_argument(std::string(what) + " is not positive definite");
    }
    return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

/// log of the multivariate gamma function Gamma_n(a).
inline double log_multigamma(double a, Eigen::Index n) {
    double out = static_cast<double>(n * (n - 1)) / 4.0 * std::log(std::numbers::pi);
    for (Eigen::Index j = 1; j <= n; ++j) out += std::lgamma(a + (1.0 - static_cast<double>(j)) / 2.0);
    return out;
}

inline void require_window_shape(const Eigen::MatrixXd& r, const Eigen::MatrixXd& sigma0, const char* where) {
    if (sigma0.rows() != r.cols() || sigma0.cols() != r.cols()) {
        throw std::invalid_argument(std::string(where) + ": Sigma0 dimension mismatch");
    }
    if (r.rows() <= r.cols()) {
        throw std::invalid_argument(std::string(where) + ": window length must exceed the dimension");
    }
}

} // namespace detail

/// S = (1/l) sum r r^T;  value = tr(Sigma0^-1 S) - log det(Sigma0^-1 S) - n  (>= 0, zero iff S = Sigma0).
inline WindowStat cov_stat(const Eigen::MatrixXd& r, const Eigen::MatrixXd& sigma0) {
    detail::require_window_shape(r, sigma0, "cov_stat");
    const Eigen::MatrixXd S = detail::sample_covariance(r);
    const double logdet_sigma0 = detail::log_det_spd(sigma0, "Sigma0");
    const double logdet_S = detail::log_det_spd(S, "window sample covariance");
    const double trace = Eigen::LLT<Eigen::MatrixXd>(sigma0).solve(S).trace();
    const double value = trace - (logdet_S - logdet_sigma0) - static_cast<double>(r.cols());
    return {StatKind::covariance, static_cast<std::size_t>(r.rows()), std::max(value, 0.0),
            std::numeric_limits<double>::quiet_NaN()};
}

/// Negative log Wishart density of W = l S with scale Sigma0 and l degrees of freedom.
inline double wishart_nll(const Eigen::MatrixXd& S, const Eigen::MatrixXd& sigma0, std::size_t l) {
    const Eigen::Index n = S.rows();
    const double dof = static_cast<double>(l);
    const Eigen::MatrixXd W = dof * S;
    const double logdet_W = detail::log_det_spd(W, "scaled sample covariance");
    const double logdet_sigma0 = detail::log_det_spd(sigma0, "Sigma0");
    const double trace = Eigen::LLT<Eigen::MatrixXd>(sigma0).solve(W).trace();
    const double log_density = 0.5 * (dof - static_cast<double>(n) - 1.0) * logdet_W - 0.5 * trace -
                               0.5 * dof * static_cast<double>(n) * std::numbers::ln2 - 0.5 * dof * logdet_sigma0 -
                               detail::log_multigamma(0.5 * dof, n);
    return -log_density;
}

inline WindowStat nll_window(const Eigen::MatrixXd& r, const Eigen::MatrixXd& sigma0) {
    detail::require_window_shape(r, sigma0, "nll_window");
    const auto l = static_cast<std::size_t>(r.rows());
    return {StatKind::neg_log_likelihood, l, wishart_nll(detail::sample_covariance(r), sigma0, l),
            std::numeric_limits<double>::quiet_NaN()};
}

// ============================================================================
// Null model and test definitions
// ============================================================================

/// One window of detector inputs. Row j of `e` is the excitation aligned with
/// row j of the residuals it drives.
struct WindowData {
    Eigen::MatrixXd e;
    Eigen::MatrixXd primary;
    Eigen::MatrixXd secondary;
};

/// Honest-sensor law of the detector inputs:
///   e ~ excitation^m,  w ~ noise^k (iid components),
///   primary = excitation_map e + noise_map w,  secondary = secondary_map w.
struct NullModel {
    Distribution excitation = Distribution::gaussian(0.0);
    Eigen::Index actuators = 1;
    Distribution noise = Distribution::gaussian(1.0);
    Eigen::Index noise_dim = 1;
    Eigen::MatrixXd excitation_map;
    Eigen::MatrixXd noise_map;
    Eigen::MatrixXd secondary_map;
};

inline WindowData simulate_null_window(const NullModel& model, std::size_t l, RandomStream& rng) {
    const auto rows = static_cast<Eigen::Index>(l);
    Eigen::MatrixXd e(rows, model.actuators);
    Eigen::MatrixXd w(rows, model.noise_dim);
    for (Eigen::Index j = 0; j < rows; ++j) {
        for (Eigen::Index i = 0; i < model.actuators; ++i) e(j, i) = sample(model.excitation, rng);
        for (Eigen::Index i = 0; i < model.noise_dim; ++i) w(j, i) = sample(model.noise, rng);
    }
    WindowData out;
    out.primary = e * model.excitation_map.transpose() + w * model.noise_map.transpose();
    if (model.secondary_map.size() > 0) out.secondary = w * model.secondary_map.transpose();
    out.e = std::move(e);
    return out;
}

enum class StatInput { primary, secondary };

/// A named test. `target` is sigma^2 (1x1) for variance, the n x m expected
/// correlation for cross_corr, and Sigma0 for covariance and NLL.
struct TestDef {
    std::string name;
    StatKind kind = StatKind::variance;
    StatInput input = StatInput::primary;
    Eigen::MatrixXd target;
};

inline const Eigen::MatrixXd& select_input(const TestDef& test, const WindowData& data) {
    return test.input == StatInput::primary ? data.primary : data.secondary;
}

inline WindowStat evaluate(const TestDef& test, const WindowData& data) {
    const Eigen::MatrixXd& input = select_input(test, data);
    switch (test.kind) {
    case StatKind::variance: {
        if (input.cols() != 1) throw std::invalid_argument("variance test needs a scalar residual");
        return variance_stat(std::span<const double>(input.data(), static_cast<std::size_t>(input.rows())),
                             test.target(0, 0));
    }
    case StatKind::cross_corr: return cross_corr_stat(data.e, input, test.target);
    case StatKind::covariance: return cov_stat(input, test.target);
    case StatKind::neg_log_likelihood: return nll_window(input, test.target);
    }
    throw std::logic_error("unreachable");
}

// ============================================================================
// Thresholds
// ============================================================================

enum class CalibrationMethod { chi_square, monte_carlo };

inline std::string_view to_string(CalibrationMethod m) {
    return m == CalibrationMethod::chi_square ? "chi_square" : "monte_carlo";
}

/// Decision region [lower, upper]; one-sided statistics keep lower = -inf.
struct Threshold {
    StatKind kind = StatKind::variance;
    double alpha = 0.0;
    double lower = -std::numeric_limits<double>::infinity();
    double upper = std::numeric_limits<double>::infinity();
    CalibrationMethod method = CalibrationMethod::monte_carlo;

    bool exceeded(double value) const { return value < lower || value > upper; }
};

/// Two-sided band for the mean square of l iid N(0, target) samples.
inline Threshold variance_threshold_chi_square(std::size_t l, double alpha, double target) {
    const boost::math::chi_squared chi2(static_cast<double>(l));
    Threshold t;
    t.kind = StatKind::variance;
    t.alpha = alpha;
    t.method = CalibrationMethod::chi_square;
    t.lower = target * boost::math::quantile(chi2, alpha / 2.0) / static_cast<double>(l);
    t.upper = target * boost::math::quantile(chi2, 1.0 - alpha / 2.0) / static_cast<double>(l);
    return t;
}

namespace detail {

inline bool input_is_gaussian(const NullModel& model, const TestDef& test) {
    const Eigen::MatrixXd& noise_map = test.input == StatInput::primary ? model.noise_map : model.secondary_map;
    const bool noise_used = noise_map.size() > 0 && noise_map.cwiseAbs().maxCoeff() > 0.0;
    const bool excitation_used = test.input == StatInput::primary && model.excitation_map.size() > 0 &&
                                 model.excitation_map.cwiseAbs().maxCoeff() > 0.0;
    const auto gaussian_or_zero = [](const Distribution& d) {
        return d.kind == DistributionKind::gaussian || d.variance == 0.0;
    };
    return (!noise_used || gaussian_or_zero(model.noise)) &&
           (!excitation_used || gaussian_or_zero(model.excitation));
}

inline Threshold quantile_threshold(StatKind kind, std::vector<double> values, double alpha, bool two_sided) {
    std::sort(values.begin(), values.end());
    const std::size_t N = values.size();
    Threshold t;
    t.kind = kind;
    t.alpha = alpha;
    t.method = CalibrationMethod::monte_carlo;
    const double tail = two_sided ? alpha / 2.0 : alpha;
    const auto k = static_cast<std::size_t>(std::floor(tail * static_cast<double>(N)));
    t.upper = values[N - 1 - k];
    if (two_sided) t.lower = values[k];
    return t;
}

} // namespace detail

struct CalibrationOptions {
    std::size_t window = 500;
    double alpha = 1e-3;
    std::size_t n_cal = 10000;
    std::uint64_t seed = 1;
    /// 0 = one worker per hardware thread.
    unsigned threads = 0;
};

/// Thresholds for a batch of tests sharing one null model. Variance tests on
/// Gaussian inputs use chi-square quantiles; everything else is calibrated on
/// n_cal simulated null windows (window i always uses stream (seed, i), so the
/// result does not depend on the thread count).
inline std::vector<Threshold> calibrate_thresholds(std::span<const TestDef> tests, const NullModel& model,
                                                   const CalibrationOptions& opt) {
    if (!(opt.alpha > 0.0 && opt.alpha < 0.5)) {
        throw std::invalid_argument("calibrate: alpha must lie in (0, 0.5)");
    }
    if (static_cast<double>(opt.n_cal) < 10.0 / opt.alpha) {
        throw std::invalid_argument("calibrate: n_cal must be at least 10/alpha");
    }
    std::vector<Threshold> out(tests.size());
    std::vector<std::size_t> simulated;
    for (std::size_t i = 0; i < tests.size(); ++i) {
        if (tests[i].kind == StatKind::variance && detail::input_is_gaussian(model, tests[i])) {
            out[i] = variance_threshold_chi_square(opt.window, opt.alpha, tests[i].target(0, 0));
        } else {
            simulated.push_back(i);
        }
    }
    if (simulated.empty()) return out;

    std::vector<std::vector<double>> values(simulated.size(), std::vector<double>(opt.n_cal));
    unsigned workers = opt.threads != 0 ? opt.threads : std::max(1u, std::thread::hardware_concurrency());
    workers = static_cast<unsigned>(std::min<std::size_t>(workers, opt.n_cal));
    auto work = [&](std::size_t begin, std::size_t end) {
        for (std::size_t w = begin; w < end; ++w) {
            RandomStream rng(opt.seed, StreamTag::calibration, w);
            const WindowData data = simulate_null_window(model, opt.window, rng);
            for (std::size_t s = 0; s < simulated.size(); ++s) {
                values[s][w] = evaluate(tests[simulated[s]], data).value;
            }
        }
    };
    if (workers <= 1) {
        work(0, opt.n_cal);
    } else {
        std::vector<std::jthread> pool;
        const std::size_t chunk = (opt.n_cal + workers - 1) / workers;
        for (unsigned k = 0; k < workers; ++k) {
            const std::size_t begin = k * chunk;
            const std::size_t end = std::min(opt.n_cal, begin + chunk);
            if (begin < end) pool.emplace_back(work, begin, end);
        }
    }
    for (std::size_t s = 0; s < simulated.size(); ++s) {
        const TestDef& test = tests[simulated[s]];
        out[simulated[s]] = detail::quantile_threshold(test.kind, std::move(values[s]), opt.alpha,
                                                       test.kind == StatKind::variance);
    }
    return out;
}

inline Threshold calibrate_threshold(const TestDef& test, const NullModel& model, const CalibrationOptions& opt) {
    return calibrate_thresholds(std::span<const TestDef>(&test, 1), model, opt).front();
}

// ============================================================================
// Windowed alarms
// ============================================================================

struct AlarmLog {
    std::vector<std::size_t> alarm_times;
    std::optional<std::size_t> first_alarm;
};

/// Flags every window whose statistic leaves the threshold band. NaN entries
/// (windows without a statistic) never alarm; monitoring never stops.
inline AlarmLog sequential_detect(std::span<const double> stats, const Threshold& threshold) {
    AlarmLog log;
    for (std::size_t i = 0; i < stats.size(); ++i) {
        if (!std::isnan(stats[i]) && threshold.exceeded(stats[i])) {
            log.alarm_times.push_back(i);
            if (!log.first_alarm) log.first_alarm = i;
        }
    }
    return log;
}

} // namespace dwm
