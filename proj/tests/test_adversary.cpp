#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "dwm/harness.hpp"

using namespace dwm;

namespace {

const char* kArxScenario = R"({
    "schema_version": 1, "horizon": 3000,
    "plant": {"kind": "arx", "a": [0.7, 0.2], "b": [1, 0.5], "sigma_w2": 1},
    "policy": {"kind": "deadbeat"},
    "watermark": {"sigma_e2": 1},
    "attack": {"kind": "honest"}})";

PublicKnowledge scalar_knowledge(double sigma_e2 = 0.0) {
    PublicKnowledge k;
    k.plant = ScalarPlant{0.5, 1.0, 1.0};
    k.noise = Distribution::gaussian(1.0);
    k.sigma_e2 = sigma_e2;
    return k;
}

/// Feeds a fixed output sequence to a sensor with zero policy outputs.
std::vector<double> reports_for(Sensor& sensor, const std::vector<double>& y_values) {
    Series y(1), z(1), u_g(1);
    std::vector<double> out;
    for (std::size_t t = 0; t < y_values.size(); ++t) {
        y.push_back(y_values[t]);
        const double report = sensor.report(SensorView{t, y, z, u_g})(0);
        z.push_back(report);
        u_g.push_back(0.0);
        out.push_back(report);
    }
    return out;
}

} // namespace

TEST(Report, HonestSensorRepeatsOutput) {
    Sensor sensor({Honest{}, 0}, scalar_knowledge(), RandomStream(1, StreamTag::attack));
    const std::vector<double> y{0.3, -1.2, 4.5, 0.0};
    EXPECT_EQ(reports_for(sensor, y), y);
}

TEST(Report, ReplayLoopsRecordedBlock) {
    Sensor sensor({Replay{3}, 10}, scalar_knowledge(), RandomStream(1, StreamTag::attack));
    std::vector<double> y;
    for (int t = 0; t < 16; ++t) y.push_back(100.0 + t);
    const auto z = reports_for(sensor, y);
    for (int t = 0; t < 10; ++t) EXPECT_EQ(z[t], y[t]);
    EXPECT_EQ(z[10], y[7]);
    EXPECT_EQ(z[11], y[8]);
    EXPECT_EQ(z[12], y[9]);
    EXPECT_EQ(z[13], y[7]);
    EXPECT_EQ(z[14], y[8]);
}

TEST(Report, ReplayLongerThanHistoryIsRejected) {
    EXPECT_THROW(Sensor({Replay{11}, 10}, scalar_knowledge(), RandomStream(1, StreamTag::attack)),
                 std::invalid_argument);
    EXPECT_THROW(Sensor({Replay{0}, 10}, scalar_knowledge(), RandomStream(1, StreamTag::attack)),
                 std::invalid_argument);
}

TEST(Report, RejectsNonCausalView) {
    Sensor sensor({Honest{}, 0}, scalar_knowledge(), RandomStream(1, StreamTag::attack));
    Series y(1), z(1), u_g(1);
    y.push_back(1.0);
    y.push_back(2.0);
    EXPECT_THROW(sensor.report(SensorView{0, y, z, u_g}), std::invalid_argument);
}

// With no excitation and the sensor's noise stream coupled to the plant's,
// the simulated trajectory coincides with the true one.
TEST(Report, CoupledNoiseSimulationReproducesScalarOutput) {
    const ScalarPlant plant{0.5, 1.0, 1.0};
    const double f = -0.3;
    const std::uint64_t seed = 21;
    Sensor sensor({NoiseSimulation{}, 0}, scalar_knowledge(), RandomStream(seed, StreamTag::process_noise));
    RandomStream process(seed, StreamTag::process_noise);
    Series y(1), z(1), u_g(1);
    double x = 0.0;
    for (std::size_t t = 0; t < 2000; ++t) {
        if (t > 0) x = plant.a * x + plant.b * u_g(t - 1) + process.standard_normal();
        y.push_back(x);
        z.push_back(sensor.report(SensorView{t, y, z, u_g}));
        ASSERT_DOUBLE_EQ(z(t), y(t)) << "t=" << t;
        u_g.push_back(f * z(t));
    }
}

TEST(Report, CoupledNoiseSimulationReproducesArmaxOutput) {
    const ArmaxPlant plant({0.5}, {1.0, 0.5}, {1.0, 0.3}, 2, 1.0);
    PublicKnowledge k;
    k.plant = plant;
    const std::uint64_t seed = 22;
    Sensor sensor({NoiseSimulation{}, 0}, k, RandomStream(seed, StreamTag::process_noise));
    RandomStream process(seed, StreamTag::process_noise);
    Series y(1), z(1), u_g(1);
    std::vector<double> w;
    for (std::size_t t = 0; t < 2000; ++t) {
        w.push_back(process.standard_normal());
        const auto at = [](const auto& s, std::ptrdiff_t i) { return i < 0 ? 0.0 : s(static_cast<std::size_t>(i)); };
        const auto wt = [&](std::ptrdiff_t i) { return i < 0 ? 0.0 : w[static_cast<std::size_t>(i)]; };
        const auto ti = static_cast<std::ptrdiff_t>(t);
        const double yt = -0.5 * at(y, ti - 1) + 1.0 * at(u_g, ti - 2) + 0.5 * at(u_g, ti - 3) + wt(ti) + 0.3 * wt(ti - 1);
        y.push_back(yt);
        z.push_back(sensor.report(SensorView{t, y, z, u_g}));
        ASSERT_NEAR(z(t), y(t), 1e-12) << "t=" << t;
        u_g.push_back(-0.2 * z(t));
    }
}

TEST(EstimateNoiseArx, AtRestHalvesTheInnovation) {
    const ArxPlant plant({0.7, 0.2}, {1.0, 0.5}, 1.0);
    Series y(1), z(1), u_g(1);
    for (int t = 0; t < 3; ++t) {
        y.push_back(0.0);
        z.push_back(0.0);
        u_g.push_back(0.0);
    }
    y.push_back(2.0);
    EXPECT_DOUBLE_EQ(estimate_noise_arx(plant, 1.0, SensorView{3, y, z, u_g}), 1.0);
}

TEST(EstimateNoiseArx, HonestHistoryGivesHalfOfExcitationPlusNoise) {
    const auto config = parse_scenario_text(kArxScenario);
    const Trace tr = run_scenario(config, 5);
    const auto& plant = std::get<ArxPlant>(config.plant);
    Series y(1), z(1), u_g(1);
    for (std::size_t t = 0; t < tr.size(); ++t) {
        y.push_back(tr.y(t));
        if (t >= 10) {
            const double estimate = estimate_noise_arx(plant, 1.0, SensorView{t, y, z, u_g});
            ASSERT_NEAR(estimate, 0.5 * (tr.e_raw(t - 1) + tr.w(t)), 1e-12) << "t=" << t;
        }
        z.push_back(tr.z(t));
        u_g.push_back(tr.u_g(t));
    }
}

TEST(EstimateNoiseArx, GainFollowsConditionalMeanFormula) {
    const ArxPlant plant({0.7}, {2.0}, 1.5);
    Series y(1), z(1), u_g(1);
    y.push_back(0.0);
    z.push_back(0.0);
    u_g.push_back(0.0);
    y.push_back(3.0);
    const double sigma_e2 = 0.5;
    const double beta = 1.5 / (1.5 + 4.0 * sigma_e2);
    EXPECT_DOUBLE_EQ(estimate_noise_arx(plant, sigma_e2, SensorView{1, y, z, u_g}), beta * 3.0);
}

TEST(AdditiveAttackStep, FreshNoiseEqualToEstimateCancels) {
    const ArxPlant plant({0.7, 0.2}, {1.0, 0.5}, 1.0);
    Series y(1), z(1), u_g(1);
    y.push_back(0.0);
    z.push_back(0.0);
    u_g.push_back(0.0);
    y.push_back(2.0);
    const SensorView view{1, y, z, u_g};
    const auto step = additive_attack_step(plant, 1.0, view, estimate_noise_arx(plant, 1.0, view));
    EXPECT_EQ(step.v, 0.0);
    EXPECT_EQ(step.z, 2.0);
}

TEST(AdditiveAttackStep, ZeroEstimatePassesNoiseThrough) {
    const ArxPlant plant({0.7, 0.2}, {1.0, 0.5}, 1.0);
    Series y(1), z(1), u_g(1);
    y.push_back(0.0);
    const auto step = additive_attack_step(plant, 1.0, SensorView{0, y, z, u_g}, 1.0);
    EXPECT_EQ(step.v, 1.0);
    EXPECT_EQ(step.z, 1.0);
}

// Independent scripted loop: plant, pre-equalizer, deadbeat policy and the
// additive attack written out by hand from the recorded noise.
TEST(AdditiveAttackStep, MatchesHandSimulatedRun) {
    auto config = parse_scenario_text(kArxScenario);
    config.horizon = 10;
    config.attack = {AdditiveEstimated{}, 3};
    const std::uint64_t seed = 77;
    const Trace tr = run_scenario(config, seed);
    RandomStream attack(seed, StreamTag::attack);

    std::vector<double> y(10, 0.0), z(10, 0.0), ug(10, 0.0), ep(10, 0.0), u(10, 0.0);
    auto at = [](const std::vector<double>& s, int i) { return i < 0 ? 0.0 : s[static_cast<std::size_t>(i)]; };
    for (int t = 0; t < 10; ++t) {
        const double w = tr.w(static_cast<std::size_t>(t));
        const double e = tr.e_raw(static_cast<std::size_t>(t));
        y[t] = t == 0 ? 0.0 : -0.7 * at(y, t - 1) - 0.2 * at(y, t - 2) + at(u, t - 1) + 0.5 * at(u, t - 2) + w;
        if (t < 3) {
            z[t] = y[t];
        } else {
            const double iota = y[t] + 0.7 * at(y, t - 1) + 0.2 * at(y, t - 2) - at(ug, t - 1) - 0.5 * at(ug, t - 2);
            const double n = attack.standard_normal();
            z[t] = y[t] + n - 0.5 * iota;
        }
        ug[t] = 0.7 * z[t] + 0.2 * at(z, t - 1) - 0.5 * at(ug, t - 1);
        ep[t] = -0.5 * at(ep, t - 1) + e;
        u[t] = ug[t] + ep[t];
        ASSERT_NEAR(tr.y(static_cast<std::size_t>(t)), y[t], 1e-12) << "t=" << t;
        ASSERT_NEAR(tr.z(static_cast<std::size_t>(t)), z[t], 1e-12) << "t=" << t;
        ASSERT_NEAR(tr.u(static_cast<std::size_t>(t)), u[t], 1e-12) << "t=" << t;
    }
}

TEST(AttackStrategy, PreOnsetTracesMatchHonestRunBitForBit) {
    const std::size_t onset = 1200;
    const std::vector<std::string> scenarios = {
        kArxScenario,
        R"({"schema_version": 1, "horizon": 3000,
            "plant": {"kind": "mimo", "A": [[0.5, 0.1], [0, 0.4]], "B": [[1, 0.3], [0.2, 1]], "sigma_w2": 1},
            "policy": {"kind": "linear", "gain": -0.2}, "watermark": {"sigma_e2": 0.5}})",
        R"({"schema_version": 1, "horizon": 3000,
            "plant": {"kind": "partial", "A": [[0.9, 0.2], [0, 0.5]], "B": [1, 1], "C": [1, 0], "sigma_w2": 1, "sigma_n2": 1},
            "policy": {"kind": "linear", "gain": -0.3}, "watermark": {"sigma_e2": 1}})",
        R"({"schema_version": 1, "horizon": 3000,
            "plant": {"kind": "armax", "a": [0.5], "b": [1, 0.5], "c": [1, 0.3], "delay": 2, "sigma_w2": 1},
            "policy": {"kind": "linear", "gain": -0.2}, "watermark": {"sigma_e2": 1}})"};
    const std::vector<AttackKind> attacks = {Replay{500}, NoiseSimulation{}, AdditiveEstimated{},
                                             CustomAttack{"bias", {{"value", 3.0}}}};
    for (const auto& text : scenarios) {
        auto config = parse_scenario_text(text);
        const Trace honest = run_scenario(config, 8);
        for (const auto& kind : attacks) {
            config.attack = {kind, onset};
            const Trace attacked = run_scenario(config, 8);
            for (std::size_t t = 0; t < onset; ++t) {
                ASSERT_TRUE(std::ranges::equal(attacked.z.row(t), honest.z.row(t))) << attack_name(kind) << " t=" << t;
                ASSERT_TRUE(std::ranges::equal(attacked.u.row(t), honest.u.row(t))) << attack_name(kind) << " t=" << t;
                ASSERT_TRUE(std::ranges::equal(attacked.x.row(t), honest.x.row(t))) << attack_name(kind) << " t=" << t;
            }
            bool differs = false;
            for (std::size_t t = onset; t < attacked.size() && !differs; ++t) {
                differs = !std::ranges::equal(attacked.z.row(t), honest.z.row(t));
            }
            EXPECT_TRUE(differs) << attack_name(kind);
        }
    }
}

TEST(NoiseSimulation, UndetectableByVarianceWithoutWatermark) {
    auto config = parse_scenario_text(kArxScenario);
    config.horizon = 100'000;
    config.watermark.excitation = Distribution::gaussian(0.0);
    config.attack = {NoiseSimulation{}, 0};
    const Trace tr = run_scenario(config, 31);
    const DetectorInputs in = detector_inputs(tr, config);
    double sum = 0.0;
    std::size_t count = 0;
    for (Eigen::Index t = 10; t < in.secondary.rows(); ++t) {
        sum += in.secondary(t, 0) * in.secondary(t, 0);
        ++count;
    }
    const double mean = sum / static_cast<double>(count);
    EXPECT_NEAR(mean, 1.0, 4.0 * std::sqrt(2.0 / static_cast<double>(count)));
    // The reports are not the true outputs, yet the test cannot tell.
    EXPECT_GT(oracle_metrics(tr, config).distortion_power, 0.5);
}

TEST(CustomAttack, BuiltInRulesAndValidation) {
    Sensor bias({CustomAttack{"bias", {{"value", 2.5}}}, 0}, scalar_knowledge(), RandomStream(1, StreamTag::attack));
    EXPECT_EQ(reports_for(bias, {1.0, -1.0}), (std::vector<double>{3.5, 1.5}));
    Sensor scale({CustomAttack{"scale", {{"factor", -2.0}}}, 1}, scalar_knowledge(), RandomStream(1, StreamTag::attack));
    EXPECT_EQ(reports_for(scale, {1.0, 3.0}), (std::vector<double>{1.0, -6.0}));
    EXPECT_THROW(Sensor({CustomAttack{"nope", {}}, 0}, scalar_knowledge(), RandomStream(1, StreamTag::attack)),
                 std::invalid_argument);
    EXPECT_THROW(Sensor({CustomAttack{"bias", {{"gain", 1.0}}}, 0}, scalar_knowledge(), RandomStream(1, StreamTag::attack)),
                 std::invalid_argument);
}

TEST(CustomAttack, RegisteredRulesAreUsable) {
    register_custom_rule("freeze", {{}, [](const SensorView& v, const AttackParams&, RandomStream&) {
                                        return Eigen::VectorXd(v.z.vec(v.t - 1));
                                    }});
    Sensor sensor({CustomAttack{"freeze", {}}, 2}, scalar_knowledge(), RandomStream(1, StreamTag::attack));
    EXPECT_EQ(reports_for(sensor, {1.0, 2.0, 3.0, 4.0}), (std::vector<double>{1.0, 2.0, 2.0, 2.0}));
}
