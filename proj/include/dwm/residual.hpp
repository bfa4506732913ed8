// Detector-side residuals for each plant class: the quantities whose
// statistics the actuator checks against their honest-sensor laws.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "dwm/linsys.hpp"

namespace dwm {

/// Residual with the actuator's own excitation removed (`watermark_removed`)
/// and without removal (`raw`). For honest reports the former is the process noise.
struct ResidualPair {
    double watermark_removed = 0.0;
    double raw = 0.0;
};

/// raw = z[k+1] - a z[k] - b g_k(z^k);  watermark_removed = raw - b e[k]
inline ResidualPair scalar_residual(double z_prev, double z_next, double g, double e, const ScalarPlant& plant) {
    const double raw = z_next - plant.a * z_prev - plant.b * g;
    return {raw - plant.b * e, raw};
}

/// z_hist = (z[k+1], z[k], ..., z[k-p]); g_hist = (g_k, ..., g_{k-h}).
inline ResidualPair arx_residual(std::span<const double> z_hist, std::span<const double> g_hist, double e,
                                 const ArxPlant& plant) {
    const auto& a = plant.a();
    const auto& b = plant.b();
    if (z_hist.size() < a.size() + 1 || g_hist.size() < b.size()) {
        throw std::invalid_argument("arx_residual: history shorter than coefficient vectors");
    }
    double raw = z_hist[0];
    for (std::size_t m = 0; m < a.size(); ++m) raw += a[m] * z_hist[m + 1];
    for (std::size_t r = 0; r < b.size(); ++r) raw -= b[r] * g_hist[r];
    return {raw - b[0] * e, raw};
}

inline Eigen::VectorXd mimo_residual(const Eigen::VectorXd& z_prev, const Eigen::VectorXd& z_next,
                                     const Eigen::VectorXd& g, const MimoPlant& plant) {
    if (z_prev.size() != plant.A.rows() || z_next.size() != plant.A.rows() || g.size() != plant.B.cols()) {
        throw std::invalid_argument("mimo_residual: dimension mismatch");
    }
    return z_next - plant.A * z_prev - plant.B * g;
}

// ============================================================================
// ARMAX prediction-error filter
// ============================================================================

/// Runs
///   z_{t|t-1} = -sum a_k z[t-k] + sum b_k u_g[t-l-k] + sum_{k>=1} c_k ztilde[t-k]
///   ztilde[t] = z[t] - z_{t|t-1}
/// from a zero initial condition. With honest reports ztilde[t] = e[t-l] + w[t].
class ArmaxPredictionFilter {
public:
    struct Output {
        double ztilde = 0.0;
        /// ztilde[t] - e[t-l]
        double watermark_removed = 0.0;
        /// False while the filter is still inside its burn-in period.
        bool valid = false;
    };

    explicit ArmaxPredictionFilter(const ArmaxPlant& plant)
        : plant_(plant),
          z_hist_(plant.ar_order(), 0.0),
          ug_hist_(plant.delay() + plant.input_order(), 0.0),
          ztilde_hist_(plant.ma_order(), 0.0),
          burn_in_(std::max({plant.ar_order(), plant.delay() + plant.input_order(), plant.ma_order()})) {}

    static std::size_t default_burn_in(const ArmaxPlant& plant) {
        return std::max({plant.ar_order(), plant.delay() + plant.input_order(), plant.ma_order()});
    }

    double predict() const {
        const auto& a = plant_.a();
        const auto& b = plant_.b();
        const auto& c = plant_.c();
        const std::size_t l = plant_.delay();
        double prediction = 0.0;
        for (std::size_t k = 0; k < a.size(); ++k) prediction -= a[k] * z_hist_[k];
        for (std::size_t k = 0; k < b.size(); ++k) prediction += b[k] * ug_hist_[l - 1 + k];
        for (std::size_t k = 1; k < c.size(); ++k) prediction += c[k] * ztilde_hist_[k - 1];
        return prediction;
    }

    /// Consumes z[t] together with the actuator's own e[t-l].
    Output step(double z, double e_lagged) {
        const double ztilde = z - predict();
        shift_in(z_hist_, z);
        shift_in(ztilde_hist_, ztilde);
        const bool valid = steps_ >= burn_in_;
        ++steps_;
        return {ztilde, ztilde - e_lagged, valid};
    }

    /// Records u_g[t] once the policy has acted on z^t.
    void push_policy_input(double u_g) { shift_in(ug_hist_, u_g); }

    std::size_t burn_in() const noexcept { return burn_in_; }

private:
    static void shift_in(std::vector<double>& hist, double value) {
        if (hist.empty()) return;
        for (std::size_t k = hist.size() - 1; k > 0; --k) hist[k] = hist[k - 1];
        hist[0] = value;
    }

    ArmaxPlant plant_;
    std::vector<double> z_hist_;
    std::vector<double> ug_hist_;
    std::vector<double> ztilde_hist_;
    std::size_t burn_in_;
    std::size_t steps_ = 0;
};

// ============================================================================
// Steady-state Kalman filter for partially observed plants
// ============================================================================

/// Steady-state design.
///
/// `P` is the stationary one-step prediction covariance (the Riccati fixed
/// point), `gain` the measurement-update gain P C^T / (C P C^T + sigma_n2)
/// applied after the predict step, and `predictor_gain` = A * gain. The true
/// innovations have variance sigma_R2 = C P C^T + sigma_n2.
struct KalmanDesign {
    Eigen::VectorXd gain;
    Eigen::VectorXd predictor_gain;
    Eigen::MatrixXd P;
    Eigen::MatrixXd P_filtered;
    double sigma_R2 = 0.0;
    std::size_t iterations = 0;
};

/// One Riccati iteration on the prediction covariance:
/// P+ = A P A^T - A P C^T (C P C^T + R)^-1 C P A^T + sigma_w2 I
inline Eigen::MatrixXd riccati_step(const PartialPlant& plant, const Eigen::MatrixXd& P) {
    const Eigen::VectorXd PCt = P * plant.C.transpose();
    const double S = plant.C.dot(PCt) + plant.sigma_n2;
    const Eigen::MatrixXd filtered = P - PCt * PCt.transpose() / S;
    Eigen::MatrixXd next = plant.A * filtered * plant.A.transpose();
    next.diagonal().array() += plant.sigma_w2;
    return 0.5 * (next + next.transpose());
}

inline KalmanDesign kalman_design(const PartialPlant& plant, double tol = 1e-12, std::size_t max_iter = 1'000'000) {
    validate(plant);
    const Eigen::Index p = plant.A.rows();
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(p, p);
    std::size_t iter = 0;
    for (; iter < max_iter; ++iter) {
        Eigen::MatrixXd next = riccati_step(plant, P);
        const double change = (next - P).cwiseAbs().maxCoeff();
        P = std::move(next);
        if (change < tol) break;
    }
    if (iter == max_iter) {
        throw std::runtime_error("kalman_design: Riccati iteration did not converge");
    }
    KalmanDesign design;
    design.P = P;
    const Eigen::VectorXd PCt = P * plant.C.transpose();
    design.sigma_R2 = plant.C.dot(PCt) + plant.sigma_n2;
    design.gain = PCt / design.sigma_R2;
    design.predictor_gain = plant.A * design.gain;
    design.P_filtered = P - PCt * PCt.transpose() / design.sigma_R2;
    design.iterations = iter + 1;
    return design;
}

/// Time-invariant filter
///   xhat(k+1|k)   = A xhat(k|k) + B g_k + B e[k]
///   xhat(k+1|k+1) = xhat(k+1|k) + K nu[k+1],  nu[k+1] = z[k+1] - C xhat(k+1|k)
class KalmanFilter {
public:
    struct Output {
        double innovation = 0.0;
        /// xhat(k+1|k+1) - A xhat(k|k) - B g_k - B e[k] = K nu[k+1]
        Eigen::VectorXd correction;
        double predicted_measurement = 0.0;
    };

    KalmanFilter(const PartialPlant& plant, KalmanDesign design)
        : plant_(plant), design_(std::move(design)), estimate_(Eigen::VectorXd::Zero(plant.A.rows())) {}

    KalmanFilter(const PartialPlant& plant, KalmanDesign design, Eigen::VectorXd initial_estimate)
        : plant_(plant), design_(std::move(design)), estimate_(std::move(initial_estimate)) {}

    Output step(double z_next, double g, double e) {
        const Eigen::VectorXd predicted = plant_.A * estimate_ + plant_.B * g + plant_.B * e;
        Output out;
        out.predicted_measurement = plant_.C.dot(predicted);
        out.innovation = z_next - out.predicted_measurement;
        out.correction = design_.gain * out.innovation;
        estimate_ = predicted + out.correction;
        return out;
    }

    const Eigen::VectorXd& estimate() const noexcept { return estimate_; }
    const KalmanDesign& design() const noexcept { return design_; }

private:
    PartialPlant plant_;
    KalmanDesign design_;
    Eigen::VectorXd estimate_;
};

} // namespace dwm
