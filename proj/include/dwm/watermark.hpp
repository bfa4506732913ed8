// Private excitation: drawing, matching to the process-noise law, and shaping
// so that the excitation reaches the plant output as a white sequence.
#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <variant>
#include <vector>

#include "dwm/linsys.hpp"
#include "dwm/random.hpp"

namespace dwm {

/// No shaping: the raw excitation is applied directly.
struct NoShaping {};

/// Inverse-B filter for ARX plants: B(q^-1) e'[t] = b0 e[t].
struct PreEqualizer {
    std::vector<double> b;
};

/// B^-1(q^-1) C(q^-1) filter for ARMAX plants: B(q^-1) s[t] = C(q^-1) e[t].
struct ArmaxShaping {
    std::vector<double> b;
    std::vector<double> c;
};

using Shaping = std::variant<NoShaping, PreEqualizer, ArmaxShaping>;

struct WatermarkSpec {
    Distribution excitation = Distribution::gaussian(0.0);
    Shaping shaping = NoShaping{};

    double sigma_e2() const noexcept { return excitation.variance; }
};

/// Recent shaped and raw samples, newest first.
struct ShaperState {
    std::vector<double> shaped_hist;
    std::vector<double> raw_hist;

    static ShaperState zeros(std::size_t shaped_len, std::size_t raw_len) {
        return {std::vector<double>(shaped_len, 0.0), std::vector<double>(raw_len, 0.0)};
    }
};

inline ShaperState initial_state(const Shaping& shaping) {
    return std::visit(
        [](const auto& s) -> ShaperState {
            using S = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<S, NoShaping>) {
                return {};
            } else if constexpr (std::is_same_v<S, PreEqualizer>) {
                return ShaperState::zeros(s.b.size() - 1, 0);
            } else {
                return ShaperState::zeros(s.b.size() - 1, s.c.size() - 1);
            }
        },
        shaping);
}

/// Validates the shaping filter against the same minimum-phase rule as the plant.
inline void validate(const Shaping& shaping) {
    std::visit(
        [](const auto& s) {
            using S = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<S, PreEqualizer>) {
                if (s.b.empty() || s.b[0] == 0.0) throw ModelError("pre-equalizer: b0 must be nonzero");
                poly::require_minimum_phase(s.b, "B");
            } else if constexpr (std::is_same_v<S, ArmaxShaping>) {
                if (s.b.empty() || s.b[0] == 0.0) throw ModelError("ARMAX shaping: b0 must be nonzero");
                if (s.c.empty()) throw ModelError("ARMAX shaping: C must be nonempty");
                poly::require_minimum_phase(s.b, "B");
                poly::require_minimum_phase(s.c, "C");
            }
        },
        shaping);
}

inline double draw_excitation(const WatermarkSpec& spec, RandomStream& rng) {
    return sample(spec.excitation, rng);
}

namespace detail {

inline void push_front(std::vector<double>& hist, double value) {
    if (hist.empty()) return;
    for (std::size_t k = hist.size() - 1; k > 0; --k) hist[k] = hist[k - 1];
    hist[0] = value;
}

} // namespace detail

/// e'[t] = -(1/b0) sum_{k=1}^{h} b_k e'[t-k] + e[t]
inline double pre_equalize(ShaperState& state, std::span<const double> b, double e_new) {
    if (state.shaped_hist.size() + 1 < b.size()) {
        throw std::invalid_argument("pre_equalize: shaper state shorter than filter order");
    }
    double feedback = 0.0;
    for (std::size_t k = 1; k < b.size(); ++k) feedback += b[k] * state.shaped_hist[k - 1];
    const double shaped = -feedback / b[0] + e_new;
    detail::push_front(state.shaped_hist, shaped);
    return shaped;
}

/// s[t] = (sum_k c_k e[t-k] - sum_{k>=1} b_k s[t-k]) / b0
inline double armax_shape(ShaperState& state, std::span<const double> b, std::span<const double> c,
                          double e_new) {
    if (state.shaped_hist.size() + 1 < b.size() || state.raw_hist.size() + 1 < c.size()) {
        throw std::invalid_argument("armax_shape: shaper state shorter than filter order");
    }
    double acc = c[0] * e_new;
    for (std::size_t k = 1; k < c.size(); ++k) acc += c[k] * state.raw_hist[k - 1];
    for (std::size_t k = 1; k < b.size(); ++k) acc -= b[k] * state.shaped_hist[k - 1];
    const double shaped = acc / b[0];
    detail::push_front(state.shaped_hist, shaped);
    detail::push_front(state.raw_hist, e_new);
    return shaped;
}

/// One actuator's shaping filter with its own state.
class ExcitationShaper {
public:
    explicit ExcitationShaper(Shaping shaping) : shaping_(std::move(shaping)), state_(initial_state(shaping_)) {}

    double operator()(double e_raw) {
        return std::visit(
            [&](const auto& s) -> double {
                using S = std::decay_t<decltype(s)>;
                if constexpr (std::is_same_v<S, NoShaping>) {
                    return e_raw;
                } else if constexpr (std::is_same_v<S, PreEqualizer>) {
                    return pre_equalize(state_, s.b, e_raw);
                } else {
                    return armax_shape(state_, s.b, s.c, e_raw);
                }
            },
            shaping_);
    }

    /// Number of samples before the shaper leaves its zero initial condition behind.
    std::size_t order() const { return std::max(state_.shaped_hist.size(), state_.raw_hist.size()); }

private:
    Shaping shaping_;
    ShaperState state_;
};

/// Distribution of e such that b * e has the law of the process noise.
inline Distribution match_distribution(const Distribution& target, double b) {
    if (b == 0.0) {
        throw std::invalid_argument("match_distribution: input gain must be nonzero");
    }
    return {target.kind, target.variance / (b * b)};
}

} // namespace dwm
