// Sensor reporting strategies.
//
// A sensor sees the true outputs, its own past reports and the past policy
// outputs (which it can recompute from its reports), together with the public
// plant description. The excitation and process-noise realizations are never
// part of its view.
#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "dwm/linsys.hpp"
#include "dwm/random.hpp"
#include "dwm/residual.hpp"
#include "dwm/series.hpp"

namespace dwm {

/// Information available to the sensor when it reports z[t].
struct SensorView {
    std::size_t t = 0;
    /// True outputs, rows 0..t.
    const Series& y;
    /// Own past reports, rows 0..t-1.
    const Series& z;
    /// Past policy outputs, rows 0..t-1.
    const Series& u_g;
};

/// Public facts about the loop: plant, noise law and excitation variance.
struct PublicKnowledge {
    PlantModel plant;
    Distribution noise = Distribution::gaussian(1.0);
    double sigma_e2 = 0.0;
    /// Required for partially observed plants.
    std::optional<KalmanDesign> kalman;
};

using AttackParams = std::map<std::string, double>;

struct Honest {};

/// Loop the last `record_len` honest outputs before onset.
struct Replay {
    std::size_t record_len = 0;
};

/// Report a simulated closed-loop trajectory driven by the sensor's own noise.
struct NoiseSimulation {};

/// z = y + n - w_hat: replace the estimated process noise by a fresh draw.
struct AdditiveEstimated {};

struct CustomAttack {
    std::string name;
    AttackParams params;
};

using AttackKind = std::variant<Honest, Replay, NoiseSimulation, AdditiveEstimated, CustomAttack>;

struct AttackStrategy {
    AttackKind kind = Honest{};
    std::size_t onset = 0;
};

inline std::string attack_name(const AttackKind& kind) {
    return std::visit(
        [](const auto& k) -> std::string {
            using K = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<K, Honest>) return "honest";
            else if constexpr (std::is_same_v<K, Replay>) return "replay";
            else if constexpr (std::is_same_v<K, NoiseSimulation>) return "noise_sim";
            else if constexpr (std::is_same_v<K, AdditiveEstimated>) return "additive_estimated";
            else return "custom";
        },
        kind);
}

// ============================================================================
// Custom rules
// ============================================================================

using CustomRule = std::function<Eigen::VectorXd(const SensorView&, const AttackParams&, RandomStream&)>;

struct CustomRuleEntry {
    /// Accepted parameter names with their defaults.
    AttackParams defaults;
    CustomRule rule;
};

/// Named custom rules available to scenarios. Built in:
///   bias  {value}    z = y + value
///   scale {factor}   z = factor * y
///   noise {variance} z = y + N(0, variance) per component
inline std::map<std::string, CustomRuleEntry>& custom_rule_registry() {
    static std::map<std::string, CustomRuleEntry> registry = [] {
        std::map<std::string, CustomRuleEntry> r;
        r["bias"] = {{{"value", 1.0}}, [](const SensorView& v, const AttackParams& p, RandomStream&) {
                         return Eigen::VectorXd(v.y.vec(v.t).array() + p.at("value"));
                     }};
        r["scale"] = {{{"factor", 1.0}}, [](const SensorView& v, const AttackParams& p, RandomStream&) {
                          return Eigen::VectorXd(p.at("factor") * v.y.vec(v.t));
                      }};
        r["noise"] = {{{"variance", 1.0}}, [](const SensorView& v, const AttackParams& p, RandomStream& rng) {
                          Eigen::VectorXd out = v.y.vec(v.t);
                          const Distribution d = Distribution::gaussian(p.at("variance"));
                          for (Eigen::Index i = 0; i < out.size(); ++i) out(i) += sample(d, rng);
                          return out;
                      }};
        return r;
    }();
    return registry;
}

inline void register_custom_rule(const std::string& name, CustomRuleEntry entry) {
    custom_rule_registry()[name] = std::move(entry);
}

/// Fills defaults and rejects unknown rules or parameters.
inline AttackParams resolve_custom_params(const std::string& name, const AttackParams& given) {
    const auto& registry = custom_rule_registry();
    const auto it = registry.find(name);
    if (it == registry.end()) throw std::invalid_argument("unknown custom attack '" + name + "'");
    AttackParams out = it->second.defaults;
    for (const auto& [key, value] : given) {
        if (!out.contains(key)) {
            throw std::invalid_argument("custom attack '" + name + "' has no parameter '" + key + "'");
        }
        out[key] = value;
    }
    return out;
}

// ============================================================================
// Additive attack on ARX plants
// ============================================================================

namespace detail {

/// (s[from], s[from-1], ..., s[from-count+1]) with zero padding, column j.
inline std::vector<double> newest_first(const Series& s, std::ptrdiff_t from, std::size_t count, std::size_t j = 0) {
    std::vector<double> out(count);
    for (std::size_t k = 0; k < count; ++k) out[k] = s.at_or_zero(from - static_cast<std::ptrdiff_t>(k), j);
    return out;
}

} // namespace detail

/// Conditional-mean estimate of w[t] from the one-step output innovation
///   iota = y[t] + sum a_m y[t-1-m] - sum b_r u_g[t-1-r]  (= b0 e[t-1] + w[t] with honest reports),
/// scaled by sigma_w2 / (sigma_w2 + b0^2 sigma_e2).
inline double estimate_noise_arx(const ArxPlant& plant, double sigma_e2, const SensorView& view) {
    const auto t = static_cast<std::ptrdiff_t>(view.t);
    double iota = view.y(view.t);
    for (std::size_t m = 0; m < plant.a().size(); ++m) {
        iota += plant.a()[m] * view.y.at_or_zero(t - 1 - static_cast<std::ptrdiff_t>(m));
    }
    for (std::size_t r = 0; r < plant.b().size(); ++r) {
        iota -= plant.b()[r] * view.u_g.at_or_zero(t - 1 - static_cast<std::ptrdiff_t>(r));
    }
    const double b0 = plant.b()[0];
    const double beta = plant.sigma_w2() / (plant.sigma_w2() + b0 * b0 * sigma_e2);
    return beta * iota;
}

struct AdditiveStep {
    double v = 0.0;
    double z = 0.0;
};

/// v = n - w_hat, z = y + v.
inline AdditiveStep additive_attack_step(const ArxPlant& plant, double sigma_e2, const SensorView& view, double n) {
    const double v = n - estimate_noise_arx(plant, sigma_e2, view);
    return {v, view.y(view.t) + v};
}

// ============================================================================
// Sensor
// ============================================================================

class Sensor {
public:
    Sensor(AttackStrategy strategy, PublicKnowledge knowledge, RandomStream rng)
        : strategy_(std::move(strategy)), knowledge_(std::move(knowledge)), rng_(std::move(rng)) {
        if (const auto* replay = std::get_if<Replay>(&strategy_.kind)) {
            if (replay->record_len == 0) throw std::invalid_argument("replay: record_len must be positive");
            if (strategy_.onset < replay->record_len) {
                throw std::invalid_argument("replay: record_len exceeds the honest history available at onset");
            }
        }
        if (const auto* custom = std::get_if<CustomAttack>(&strategy_.kind)) {
            params_ = resolve_custom_params(custom->name, custom->params);
            rule_ = custom_rule_registry().at(custom->name).rule;
        }
        if (const auto* armax = std::get_if<ArmaxPlant>(&knowledge_.plant)) {
            armax_filter_.emplace(*armax);
            w_sim_hist_.assign(armax->c().size(), 0.0);
        }
        if (const auto* partial = std::get_if<PartialPlant>(&knowledge_.plant)) {
            if (!knowledge_.kalman) knowledge_.kalman = kalman_design(*partial);
            kalman_.emplace(*partial, *knowledge_.kalman);
        }
    }

    const AttackStrategy& strategy() const noexcept { return strategy_; }

    /// z[t]. Must be called once per step, in order.
    Eigen::VectorXd report(const SensorView& view) {
        if (view.y.size() != view.t + 1 || view.z.size() != view.t || view.u_g.size() != view.t) {
            throw std::invalid_argument("Sensor::report: view is not causal for step t");
        }
        track(view);
        if (view.t < strategy_.onset || std::holds_alternative<Honest>(strategy_.kind)) {
            return view.y.vec(view.t);
        }
        return std::visit(
            [&](const auto& kind) -> Eigen::VectorXd {
                using K = std::decay_t<decltype(kind)>;
                if constexpr (std::is_same_v<K, Honest>) {
                    return view.y.vec(view.t);
                } else if constexpr (std::is_same_v<K, Replay>) {
                    const std::size_t source =
                        strategy_.onset - kind.record_len + (view.t - strategy_.onset) % kind.record_len;
                    return view.y.vec(source);
                } else if constexpr (std::is_same_v<K, NoiseSimulation>) {
                    return simulate(view);
                } else if constexpr (std::is_same_v<K, AdditiveEstimated>) {
                    return additive(view);
                } else {
                    return rule_(view, params_, rng_);
                }
            },
            strategy_.kind);
    }

private:
    bool simulates() const { return std::holds_alternative<NoiseSimulation>(strategy_.kind); }

    /// Advances the sensor's own filters on the true outputs and, for the
    /// simulation attack, draws its noise on the same schedule the plant does.
    void track(const SensorView& view) {
        const std::size_t t = view.t;
        if (armax_filter_) {
            if (t >= 1) armax_filter_->push_policy_input(view.u_g(t - 1));
            last_innovation_ = armax_filter_->step(view.y(t), 0.0).ztilde;
            if (simulates()) {
                for (std::size_t k = w_sim_hist_.size() - 1; k > 0; --k) w_sim_hist_[k] = w_sim_hist_[k - 1];
                w_sim_hist_[0] = sample(knowledge_.noise, rng_);
            }
        }
        if (kalman_) {
            previous_estimate_ = kalman_->estimate();
            if (t >= 1) last_innovation_ = kalman_->step(view.y(t), view.u_g(t - 1), 0.0).innovation;
            else last_innovation_ = 0.0;
            if (simulates() && t >= 1) {
                const auto& plant = std::get<PartialPlant>(knowledge_.plant);
                w_sim_.resize(plant.A.rows());
                for (Eigen::Index i = 0; i < w_sim_.size(); ++i) w_sim_(i) = sample(knowledge_.noise, rng_);
                n_sim_ = sample(Distribution::gaussian(plant.sigma_n2), rng_);
            }
        }
        if (!armax_filter_ && !kalman_ && simulates() && t >= 1) {
            const auto width = static_cast<Eigen::Index>(view.y.width());
            w_sim_.resize(width);
            for (Eigen::Index i = 0; i < width; ++i) w_sim_(i) = sample(knowledge_.noise, rng_);
        }
    }

    Eigen::VectorXd simulate(const SensorView& view) {
        const std::size_t t = view.t;
        const auto ti = static_cast<std::ptrdiff_t>(t);
        return std::visit(
            [&](const auto& plant) -> Eigen::VectorXd {
                using P = std::decay_t<decltype(plant)>;
                if constexpr (std::is_same_v<P, ScalarPlant>) {
                    if (t == 0) return view.y.vec(0);
                    return Eigen::VectorXd::Constant(1, step_scalar(plant, view.z(t - 1), view.u_g(t - 1), w_sim_(0)));
                } else if constexpr (std::is_same_v<P, ArxPlant>) {
                    if (t == 0) return view.y.vec(0);
                    const auto z_hist = detail::newest_first(view.z, ti - 1, plant.a().size());
                    const auto u_hist = detail::newest_first(view.u_g, ti - 1, plant.b().size());
                    return Eigen::VectorXd::Constant(1, step_arx(plant, z_hist, u_hist, w_sim_(0)));
                } else if constexpr (std::is_same_v<P, ArmaxPlant>) {
                    const auto z_hist = detail::newest_first(view.z, ti - 1, plant.ar_order());
                    const auto u_hist =
                        detail::newest_first(view.u_g, ti - 1, plant.delay() + plant.input_order());
                    return Eigen::VectorXd::Constant(1, step_armax(plant, z_hist, u_hist, w_sim_hist_));
                } else if constexpr (std::is_same_v<P, MimoPlant>) {
                    if (t == 0) return view.y.vec(0);
                    return step_statespace(plant, view.z.vec(t - 1), view.u_g.vec(t - 1), w_sim_);
                } else {
                    if (t == 0) return view.y.vec(0);
                    if (!x_sim_) x_sim_ = previous_estimate_;
                    const PartialStep step = step_partial(plant, *x_sim_, view.u_g(t - 1), w_sim_, n_sim_);
                    x_sim_ = step.x_next;
                    return Eigen::VectorXd::Constant(1, step.y);
                }
            },
            knowledge_.plant);
    }

    Eigen::VectorXd additive(const SensorView& view) {
        const std::size_t t = view.t;
        const auto ti = static_cast<std::ptrdiff_t>(t);
        const double sigma_e2 = knowledge_.sigma_e2;
        return std::visit(
            [&](const auto& plant) -> Eigen::VectorXd {
                using P = std::decay_t<decltype(plant)>;
                if constexpr (std::is_same_v<P, ScalarPlant>) {
                    const double iota = view.y(t) - plant.a * view.y.at_or_zero(ti - 1) -
                                        plant.b * view.u_g.at_or_zero(ti - 1);
                    const double beta = plant.sigma_w2 / (plant.sigma_w2 + plant.b * plant.b * sigma_e2);
                    const double n = sample(knowledge_.noise, rng_);
                    return Eigen::VectorXd::Constant(1, view.y(t) + n - beta * iota);
                } else if constexpr (std::is_same_v<P, ArxPlant>) {
                    const double n = sample(knowledge_.noise, rng_);
                    return Eigen::VectorXd::Constant(1, additive_attack_step(plant, sigma_e2, view, n).z);
                } else if constexpr (std::is_same_v<P, ArmaxPlant>) {
                    const double beta = plant.sigma_w2() / (plant.sigma_w2() + sigma_e2);
                    const double n = sample(knowledge_.noise, rng_);
                    return Eigen::VectorXd::Constant(1, view.y(t) + n - beta * last_innovation_);
                } else if constexpr (std::is_same_v<P, MimoPlant>) {
                    const Eigen::Index dim = plant.A.rows();
                    const Eigen::VectorXd iota = view.y.vec(t) - plant.A * view.y.vec_or_zero(ti - 1) -
                                                 plant.B * view.u_g.vec_or_zero(ti - 1);
                    Eigen::MatrixXd sigma0 = sigma_e2 * plant.B * plant.B.transpose();
                    sigma0.diagonal().array() += plant.sigma_w2;
                    const Eigen::VectorXd w_hat = plant.sigma_w2 * sigma0.llt().solve(iota);
                    Eigen::VectorXd n(dim);
                    for (Eigen::Index i = 0; i < dim; ++i) n(i) = sample(knowledge_.noise, rng_);
                    return view.y.vec(t) + n - w_hat;
                } else {
                    const double sigma_R2 = knowledge_.kalman->sigma_R2;
                    const double cb = plant.C.dot(plant.B);
                    const double beta = sigma_R2 / (sigma_R2 + cb * cb * sigma_e2);
                    const double n = sample(Distribution::gaussian(sigma_R2), rng_);
                    return Eigen::VectorXd::Constant(1, view.y(t) + n - beta * last_innovation_);
                }
            },
            knowledge_.plant);
    }

    AttackStrategy strategy_;
    PublicKnowledge knowledge_;
    RandomStream rng_;
    AttackParams params_;
    CustomRule rule_;

    std::optional<ArmaxPredictionFilter> armax_filter_;
    std::optional<KalmanFilter> kalman_;
    double last_innovation_ = 0.0;
    Eigen::VectorXd previous_estimate_;
    std::optional<Eigen::VectorXd> x_sim_;
    Eigen::VectorXd w_sim_;
    double n_sim_ = 0.0;
    std::vector<double> w_sim_hist_;
};

} // namespace dwm
