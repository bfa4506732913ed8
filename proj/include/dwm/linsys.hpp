// Discrete-time linear plants and their exact one-step transition maps.
//
// Every stepper is a pure function of the current history and an externally
// supplied noise sample; the caller owns all randomness.
#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "dwm/series.hpp"

namespace dwm {

/// Thrown when a plant description violates its structural invariants.
class ModelError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// ============================================================================
// Polynomials in the backward shift operator
// ============================================================================

namespace poly {

/// Roots, in the variable z = q, of c0 + c1 q^-1 + ... + ch q^-h
/// (equivalently of c0 z^h + c1 z^(h-1) + ... + ch), via the companion matrix.
inline std::vector<std::complex<double>> shift_roots(std::span<const double> coeffs) {
    if (coeffs.empty() || coeffs[0] == 0.0) {
        throw ModelError("polynomial leading coefficient must be nonzero");
    }
    const auto degree = static_cast<Eigen::Index>(coeffs.size() - 1);
    if (degree == 0) {
        return {};
    }
    Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(degree, degree);
    for (Eigen::Index j = 0; j < degree; ++j) {
        companion(0, j) = -coeffs[static_cast<std::size_t>(j + 1)] / coeffs[0];
    }
    for (Eigen::Index i = 1; i < degree; ++i) {
        companion(i, i - 1) = 1.0;
    }
    Eigen::EigenSolver<Eigen::MatrixXd> solver(companion, false);
    std::vector<std::complex<double>> roots;
    for (Eigen::Index i = 0; i < degree; ++i) {
        roots.push_back(solver.eigenvalues()(i));
    }
    return roots;
}

/// Largest |z| over the companion eigenvalues; 0 for a constant polynomial.
inline double max_root_magnitude(std::span<const double> coeffs) {
    double largest = 0.0;
    for (const auto& root : shift_roots(coeffs)) {
        largest = std::max(largest, std::abs(root));
    }
    return largest;
}

/// True when every root in q^-1 lies strictly outside the unit circle.
inline bool strictly_minimum_phase(std::span<const double> coeffs, double tol = 1e-9) {
    return max_root_magnitude(coeffs) < 1.0 - tol;
}

inline void require_minimum_phase(std::span<const double> coeffs, const std::string& name) {
    const double largest = max_root_magnitude(coeffs);
    if (!(largest < 1.0 - 1e-9)) {
        std::ostringstream msg;
        msg << "polynomial " << name << "(q^-1) is not strictly minimum phase: it has a root with |q^-1| = "
            << (largest > 0.0 ? 1.0 / largest : INFINITY) << " (must exceed 1)";
        throw ModelError(msg.str());
    }
}

} // namespace poly

// ============================================================================
// Plant descriptions
// ============================================================================

/// x[t+1] = a x[t] + b u[t] + w[t+1]
struct ScalarPlant {
    double a = 0.0;
    double b = 1.0;
    double sigma_w2 = 1.0;
};

inline void validate(const ScalarPlant& plant) {
    if (!(plant.sigma_w2 > 0.0)) throw ModelError("scalar plant: sigma_w2 must be positive");
    if (plant.b == 0.0) throw ModelError("scalar plant: b must be nonzero");
}

/// y[t+1] = -sum_{m=0}^{p} a_m y[t-m] + sum_{r=0}^{h} b_r u[t-r] + w[t+1]
///
/// B(q^-1) = b0 + b1 q^-1 + ... must be strictly minimum phase; checked on construction.
class ArxPlant {
public:
    ArxPlant(std::vector<double> a, std::vector<double> b, double sigma_w2)
        : a_(std::move(a)), b_(std::move(b)), sigma_w2_(sigma_w2) {
        if (b_.empty() || b_[0] == 0.0) throw ModelError("ARX plant: b0 must be nonzero");
        if (!(sigma_w2_ > 0.0)) throw ModelError("ARX plant: sigma_w2 must be positive");
        poly::require_minimum_phase(b_, "B");
    }

    const std::vector<double>& a() const noexcept { return a_; }
    const std::vector<double>& b() const noexcept { return b_; }
    double sigma_w2() const noexcept { return sigma_w2_; }

private:
    std::vector<double> a_;
    std::vector<double> b_;
    double sigma_w2_;
};

/// y[t] = -sum_{k=1}^{p} a_k y[t-k] + sum_{k=0}^{h} b_k u[t-l-k] + sum_{k=0}^{r} c_k w[t-k]
///
/// `a` holds (a1..ap); `c` starts with c0 = 1. B and C must be strictly minimum phase.
class ArmaxPlant {
public:
    ArmaxPlant(std::vector<double> a, std::vector<double> b, std::vector<double> c,
               std::size_t delay, double sigma_w2)
        : a_(std::move(a)), b_(std::move(b)), c_(std::move(c)), delay_(delay), sigma_w2_(sigma_w2) {
        if (b_.empty() || b_[0] == 0.0) throw ModelError("ARMAX plant: b0 must be nonzero");
        if (c_.empty() || c_[0] != 1.0) throw ModelError("ARMAX plant: c0 must equal 1");
        if (delay_ < 1) throw ModelError("ARMAX plant: delay must be at least 1");
        if (!(sigma_w2_ > 0.0)) throw ModelError("ARMAX plant: sigma_w2 must be positive");
        poly::require_minimum_phase(b_, "B");
        poly::require_minimum_phase(c_, "C");
    }

    const std::vector<double>& a() const noexcept { return a_; }
    const std::vector<double>& b() const noexcept { return b_; }
    const std::vector<double>& c() const noexcept { return c_; }
    std::size_t delay() const noexcept { return delay_; }
    double sigma_w2() const noexcept { return sigma_w2_; }

    std::size_t ar_order() const noexcept { return a_.size(); }
    std::size_t input_order() const noexcept { return b_.size() - 1; }
    std::size_t ma_order() const noexcept { return c_.size() - 1; }

private:
    std::vector<double> a_;
    std::vector<double> b_;
    std::vector<double> c_;
    std::size_t delay_;
    double sigma_w2_;
};

/// x[t+1] = A x[t] + B u[t] + w[t+1],  y[t+1] = C x[t+1] + n[t+1]; scalar u and y.
struct PartialPlant {
    Eigen::MatrixXd A;
    Eigen::VectorXd B;
    Eigen::RowVectorXd C;
    double sigma_w2 = 1.0;
    double sigma_n2 = 1.0;

    Eigen::Index order() const { return A.rows(); }
};

inline Eigen::Index observability_rank(const Eigen::MatrixXd& A, const Eigen::RowVectorXd& C) {
    const Eigen::Index p = A.rows();
    Eigen::MatrixXd obs(p, p);
    Eigen::RowVectorXd row = C;
    for (Eigen::Index i = 0; i < p; ++i) {
        obs.row(i) = row;
        row = row * A;
    }
    return Eigen::FullPivLU<Eigen::MatrixXd>(obs).rank();
}

inline void validate(const PartialPlant& plant) {
    const Eigen::Index p = plant.A.rows();
    if (p == 0 || plant.A.cols() != p) throw ModelError("partial plant: A must be square and nonempty");
    if (plant.B.size() != p) throw ModelError("partial plant: B must have one entry per state");
    if (plant.C.size() != p) throw ModelError("partial plant: C must have one entry per state");
    if (!(plant.sigma_w2 > 0.0)) throw ModelError("partial plant: sigma_w2 must be positive");
    if (!(plant.sigma_n2 > 0.0)) throw ModelError("partial plant: sigma_n2 must be positive");
    if (observability_rank(plant.A, plant.C) != p) throw ModelError("partial plant: (A, C) is not observable");
}

/// x[t+1] = A x[t] + B u[t] + w[t+1] with w ~ N(0, sigma_w2 I_n), x fully measured.
struct MimoPlant {
    Eigen::MatrixXd A;
    Eigen::MatrixXd B;
    double sigma_w2 = 1.0;

    Eigen::Index states() const { return A.rows(); }
    Eigen::Index inputs() const { return B.cols(); }
};

/// Throws on malformed dimensions; returns warnings for conditions that only
/// void the detection guarantee (B not of full row rank).
inline std::vector<std::string> validate(const MimoPlant& plant) {
    const Eigen::Index n = plant.A.rows();
    if (n == 0 || plant.A.cols() != n) throw ModelError("MIMO plant: A must be square and nonempty");
    if (plant.B.rows() != n || plant.B.cols() == 0) throw ModelError("MIMO plant: B must be n x m with m >= 1");
    if (!(plant.sigma_w2 > 0.0)) throw ModelError("MIMO plant: sigma_w2 must be positive");
    std::vector<std::string> warnings;
    if (Eigen::FullPivLU<Eigen::MatrixXd>(plant.B).rank() != n) {
        warnings.emplace_back("MIMO plant: rank(B) < n, zero-distortion guarantee does not apply");
    }
    return warnings;
}

using PlantModel = std::variant<ScalarPlant, ArxPlant, ArmaxPlant, PartialPlant, MimoPlant>;

// ============================================================================
// Steppers
// ============================================================================

namespace detail {

inline void require_finite(std::initializer_list<double> values, const char* where) {
    for (double v : values) {
        if (!std::isfinite(v)) {
            throw std::domain_error(std::string(where) + ": non-finite input");
        }
    }
}

inline void require_finite(const Eigen::VectorXd& v, const char* where) {
    if (!v.allFinite()) {
        throw std::domain_error(std::string(where) + ": non-finite input");
    }
}

} // namespace detail

inline double step_scalar(const ScalarPlant& plant, double x, double u, double w) {
    detail::require_finite({plant.a, plant.b, x, u, w}, "step_scalar");
    return plant.a * x + plant.b * u + w;
}

/// Autoregressive and input parts shared by the ARX and ARMAX steppers, so the
/// degenerate ARMAX case reproduces ARX bit for bit.
namespace detail {

inline double regression(std::span<const double> a, std::span<const double> y_newest_first,
                         std::span<const double> b, std::span<const double> u_newest_first) {
    double acc = 0.0;
    for (std::size_t m = 0; m < a.size(); ++m) acc -= a[m] * y_newest_first[m];
    for (std::size_t r = 0; r < b.size(); ++r) acc += b[r] * u_newest_first[r];
    return acc;
}

} // namespace detail

/// y_hist = (y[t], y[t-1], ..., y[t-p]), u_hist = (u[t], ..., u[t-h]); returns y[t+1].
inline double step_arx(const ArxPlant& plant, std::span<const double> y_hist,
                       std::span<const double> u_hist, double w) {
    if (y_hist.size() < plant.a().size() || u_hist.size() < plant.b().size()) {
        throw std::invalid_argument("step_arx: history shorter than coefficient vectors");
    }
    detail::require_finite({w}, "step_arx");
    return detail::regression(plant.a(), y_hist, plant.b(), u_hist) + w;
}

/// y_hist = (y[t-1], ..., y[t-p]); u_hist = (u[t-1], ..., u[t-l-h]);
/// w_hist = (w[t], w[t-1], ..., w[t-r]). Returns y[t].
inline double step_armax(const ArmaxPlant& plant, std::span<const double> y_hist,
                         std::span<const double> u_hist, std::span<const double> w_hist) {
    const std::size_t l = plant.delay();
    if (y_hist.size() < plant.ar_order() || u_hist.size() < l + plant.input_order() ||
        w_hist.size() < plant.c().size()) {
        throw std::invalid_argument("step_armax: insufficient history");
    }
    detail::require_finite({w_hist[0]}, "step_armax");
    const double ar_input = detail::regression(plant.a(), y_hist, plant.b(), u_hist.subspan(l - 1));
    double moving_average = 0.0;
    for (std::size_t k = 0; k < plant.c().size(); ++k) moving_average += plant.c()[k] * w_hist[k];
    return ar_input + moving_average;
}

inline Eigen::VectorXd step_statespace(const MimoPlant& plant, const Eigen::VectorXd& x,
                                       const Eigen::VectorXd& u, const Eigen::VectorXd& w) {
    if (x.size() != plant.A.rows() || w.size() != plant.A.rows() || u.size() != plant.B.cols()) {
        throw std::invalid_argument("step_statespace: dimension mismatch");
    }
    detail::require_finite(x, "step_statespace");
    detail::require_finite(u, "step_statespace");
    detail::require_finite(w, "step_statespace");
    return plant.A * x + plant.B * u + w;
}

struct PartialStep {
    Eigen::VectorXd x_next;
    double y = 0.0;
};

inline PartialStep step_partial(const PartialPlant& plant, const Eigen::VectorXd& x, double u,
                                const Eigen::VectorXd& w, double n) {
    if (x.size() != plant.A.rows() || w.size() != plant.A.rows()) {
        throw std::invalid_argument("step_partial: dimension mismatch");
    }
    detail::require_finite(x, "step_partial");
    detail::require_finite(w, "step_partial");
    detail::require_finite({u, n}, "step_partial");
    PartialStep out;
    out.x_next = plant.A * x + plant.B * u + w;
    out.y = plant.C.dot(out.x_next) + n;
    return out;
}

// ============================================================================
// Control policies: u_g[t] = g_t(z^t)
// ============================================================================

/// u_g[t] = gain * z[t]
struct LinearFeedback {
    Eigen::MatrixXd gain;
};

/// u_g[t] = offset + sum_i z_gains[i] z[t-i] + sum_j u_gains[j] u_g[t-1-j]
///
/// Past policy outputs are themselves functions of z, so the rule stays a
/// function of the reported history alone.
struct AffineHistory {
    std::vector<Eigen::MatrixXd> z_gains;
    std::vector<Eigen::MatrixXd> u_gains;
    Eigen::VectorXd offset;
};

/// Arbitrary deterministic rule of (z rows 0..t, u_g rows 0..t-1, t).
struct HistoryRule {
    std::function<Eigen::VectorXd(const Series& z, const Series& u_g, std::size_t t)> rule;
};

using ControlPolicy = std::variant<LinearFeedback, AffineHistory, HistoryRule>;

inline Eigen::VectorXd evaluate_policy(const ControlPolicy& policy, const Series& z, const Series& u_g,
                                       std::size_t t) {
    return std::visit(
        [&](const auto& p) -> Eigen::VectorXd {
            using P = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<P, LinearFeedback>) {
                return p.gain * z.vec(t);
            } else if constexpr (std::is_same_v<P, AffineHistory>) {
                Eigen::VectorXd out = p.offset;
                const auto ti = static_cast<std::ptrdiff_t>(t);
                for (std::size_t i = 0; i < p.z_gains.size(); ++i) {
                    out += p.z_gains[i] * z.vec_or_zero(ti - static_cast<std::ptrdiff_t>(i));
                }
                for (std::size_t j = 0; j < p.u_gains.size(); ++j) {
                    out += p.u_gains[j] * u_g.vec_or_zero(ti - 1 - static_cast<std::ptrdiff_t>(j));
                }
                return out;
            } else {
                return p.rule(z, u_g, t);
            }
        },
        policy);
}

/// Cancelling policy for an ARX plant: u_g[k] = (sum_m a_m z[k-m] - sum_{r>=1} b_r u_g[k-r]) / b0.
/// With honest reports the closed loop output is b0 e[k] + w[k+1].
inline AffineHistory deadbeat_policy(const ArxPlant& plant) {
    AffineHistory policy;
    const double b0 = plant.b()[0];
    for (double a : plant.a()) policy.z_gains.push_back(Eigen::MatrixXd::Constant(1, 1, a / b0));
    for (std::size_t r = 1; r < plant.b().size(); ++r) {
        policy.u_gains.push_back(Eigen::MatrixXd::Constant(1, 1, -plant.b()[r] / b0));
    }
    policy.offset = Eigen::VectorXd::Zero(1);
    return policy;
}

} // namespace dwm
