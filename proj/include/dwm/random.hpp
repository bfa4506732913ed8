// Seeded random streams and the zero-mean noise distributions used for
// process noise, excitation and attacker noise.
#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace dwm {

/// Stream tags. A stream is identified by (master seed, tag, index) so that
/// adding a stream (e.g. one more actuator) never perturbs the others.
enum class StreamTag : std::uint32_t {
    process_noise = 1,
    measurement_noise = 2,
    excitation = 3,
    attack = 4,
    calibration = 5,
};

class RandomStream {
public:
    RandomStream(std::uint64_t master_seed, StreamTag tag, std::uint64_t index = 0) {
        std::seed_seq seq{static_cast<std::uint32_t>(master_seed),
                          static_cast<std::uint32_t>(master_seed >> 32),
                          static_cast<std::uint32_t>(tag),
                          static_cast<std::uint32_t>(index),
                          static_cast<std::uint32_t>(index >> 32)};
        engine_.seed(seq);
    }

    double standard_normal() { return normal_(engine_); }
    double standard_exponential() { return exponential_(engine_); }
    /// Uniform on [0, 1).
    double uniform01() { return uniform_(engine_); }
    bool coin() { return (engine_() >> 63) != 0; }

    std::mt19937_64& engine() noexcept { return engine_; }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::exponential_distribution<double> exponential_{1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

enum class DistributionKind { gaussian, laplace, uniform };

inline std::string_view to_string(DistributionKind kind) {
    switch (kind) {
    case DistributionKind::gaussian: return "gaussian";
    case DistributionKind::laplace: return "laplace";
    case DistributionKind::uniform: return "uniform";
    }
    return "unknown";
}

inline DistributionKind distribution_kind_from_string(std::string_view name) {
    if (name == "gaussian") return DistributionKind::gaussian;
    if (name == "laplace") return DistributionKind::laplace;
    if (name == "uniform") return DistributionKind::uniform;
    throw std::invalid_argument("unknown distribution '" + std::string(name) + "'");
}

/// Zero-mean distribution parameterized by its variance.
struct Distribution {
    DistributionKind kind = DistributionKind::gaussian;
    double variance = 1.0;

    /// Natural scale parameter: sd for Gaussian, b for Laplace, half-width for uniform.
    double scale() const {
        switch (kind) {
        case DistributionKind::gaussian: return std::sqrt(variance);
        case DistributionKind::laplace: return std::sqrt(variance / 2.0);
        case DistributionKind::uniform: return std::sqrt(3.0 * variance);
        }
        return 0.0;
    }

    static Distribution gaussian(double variance) { return {DistributionKind::gaussian, variance}; }
    static Distribution laplace_with_scale(double s) { return {DistributionKind::laplace, 2.0 * s * s}; }

    friend bool operator==(const Distribution&, const Distribution&) = default;
};

inline double sample(const Distribution& dist, RandomStream& rng) {
    if (dist.variance == 0.0) {
        return 0.0;
    }
    switch (dist.kind) {
    case DistributionKind::gaussian: return dist.scale() * rng.standard_normal();
    case DistributionKind::laplace: {
        const double magnitude = dist.scale() * rng.standard_exponential();
        return rng.coin() ? magnitude : -magnitude;
    }
    case DistributionKind::uniform: return dist.scale() * (2.0 * rng.uniform01() - 1.0);
    }
    return 0.0;
}

} // namespace dwm
