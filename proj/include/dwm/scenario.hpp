// Scenario files: JSON description of a closed loop, its watermark, the
// sensor's behaviour and the detector settings.
//
// Parsing is strict. Every offending field is collected before throwing, and
// unknown keys are rejected so that typos never silently fall back to defaults.
#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "dwm/adversary.hpp"
#include "dwm/linsys.hpp"
#include "dwm/random.hpp"
#include "dwm/residual.hpp"
#include "dwm/watermark.hpp"

namespace dwm {

inline constexpr int kSchemaVersion = 1;

struct FieldError {
    std::string field;
    std::string message;
};

class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(std::vector<FieldError> errors)
        : std::runtime_error(join(errors)), errors_(std::move(errors)) {}

    const std::vector<FieldError>& errors() const noexcept { return errors_; }

private:
    static std::string join(const std::vector<FieldError>& errors) {
        std::string out;
        for (const auto& e : errors) {
            if (!out.empty()) out += "; ";
            out += e.field + ": " + e.message;
        }
        return out;
    }

    std::vector<FieldError> errors_;
};

struct PolicyConfig {
    std::string kind = "none";
    ControlPolicy policy = LinearFeedback{};
};

struct WatermarkConfig {
    Distribution excitation = Distribution::gaussian(0.0);
    bool matched = false;
    bool shaping = true;
};

struct DetectorConfig {
    std::size_t window = 500;
    double alpha = 1e-3;
    /// Empty means every test available for the plant class.
    std::vector<std::string> tests;
    std::optional<std::size_t> burn_in;
    std::uint64_t calibration_seed = 1;
    std::optional<std::size_t> n_cal;

    std::size_t resolved_n_cal() const {
        if (n_cal) return *n_cal;
        return std::max<std::size_t>(10000, static_cast<std::size_t>(std::ceil(20.0 / alpha)));
    }
};

struct ScenarioConfig {
    std::uint64_t seed = 1;
    std::size_t horizon = 1000;
    std::optional<Eigen::VectorXd> initial_state;
    PlantModel plant = ScalarPlant{};
    /// Process-noise law; its variance always equals the plant's sigma_w2.
    Distribution noise = Distribution::gaussian(1.0);
    PolicyConfig policy;
    WatermarkConfig watermark;
    AttackStrategy attack;
    DetectorConfig detector;
    /// Warnings raised by validation that do not prevent a run.
    std::vector<std::string> warnings;
};

// ============================================================================
// Derived quantities
// ============================================================================

inline std::string plant_kind(const PlantModel& plant) {
    static constexpr const char* names[] = {"scalar", "arx", "armax", "partial", "mimo"};
    return names[plant.index()];
}

inline double plant_sigma_w2(const PlantModel& plant) {
    return std::visit(
        [](const auto& p) -> double {
            using P = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<P, ArxPlant> || std::is_same_v<P, ArmaxPlant>) return p.sigma_w2();
            else return p.sigma_w2;
        },
        plant);
}

/// (state width, output width, input width, noise width)
struct LoopDims {
    Eigen::Index state = 1;
    Eigen::Index output = 1;
    Eigen::Index input = 1;
    Eigen::Index noise = 1;
};

inline LoopDims loop_dims(const PlantModel& plant) {
    if (const auto* p = std::get_if<PartialPlant>(&plant)) return {p->A.rows(), 1, 1, p->A.rows()};
    if (const auto* p = std::get_if<MimoPlant>(&plant)) return {p->A.rows(), p->A.rows(), p->B.cols(), p->A.rows()};
    return {};
}

inline Shaping shaping_for(const ScenarioConfig& config) {
    if (!config.watermark.shaping) return NoShaping{};
    if (const auto* p = std::get_if<ArxPlant>(&config.plant)) return PreEqualizer{p->b()};
    if (const auto* p = std::get_if<ArmaxPlant>(&config.plant)) return ArmaxShaping{p->b(), p->c()};
    return NoShaping{};
}

inline std::vector<std::string> available_tests(const PlantModel& plant) {
    if (std::holds_alternative<PartialPlant>(plant)) return {"xcorr", "test2", "nll"};
    if (std::holds_alternative<MimoPlant>(plant)) return {"cov", "xcorr", "nll"};
    return {"test1", "test2", "xcorr", "nll"};
}

inline std::size_t default_burn_in(const PlantModel& plant) {
    return std::visit(
        [](const auto& p) -> std::size_t {
            using P = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<P, ArxPlant>) return 1 + std::max(p.a().size(), p.b().size());
            else if constexpr (std::is_same_v<P, ArmaxPlant>) return ArmaxPredictionFilter::default_burn_in(p);
            else if constexpr (std::is_same_v<P, PartialPlant>) return 50;
            else return 1;
        },
        plant);
}

inline std::size_t resolved_burn_in(const ScenarioConfig& config) {
    return config.detector.burn_in.value_or(default_burn_in(config.plant));
}

inline std::vector<std::string> enabled_tests(const ScenarioConfig& config) {
    return config.detector.tests.empty() ? available_tests(config.plant) : config.detector.tests;
}

inline PublicKnowledge public_knowledge(const ScenarioConfig& config) {
    PublicKnowledge k;
    k.plant = config.plant;
    k.noise = config.noise;
    k.sigma_e2 = config.watermark.excitation.variance;
    if (const auto* p = std::get_if<PartialPlant>(&config.plant)) k.kalman = kalman_design(*p);
    return k;
}

// ============================================================================
// Parsing
// ============================================================================

namespace detail {

using nlohmann::json;

class FieldReader {
public:
    std::vector<FieldError> errors;

    void fail(const std::string& field, const std::string& message) { errors.push_back({field, message}); }

    void reject_unknown(const json& obj, const std::string& prefix, std::initializer_list<const char*> allowed) {
        if (!obj.is_object()) return;
        for (const auto& [key, value] : obj.items()) {
            if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }) ==
                allowed.end()) {
                fail(path(prefix, key), "unknown field");
            }
        }
    }

    static std::string path(const std::string& prefix, const std::string& key) {
        return prefix.empty() ? key : prefix + "." + key;
    }

    const json* object(const json& parent, const std::string& prefix, const char* key, bool required) {
        const std::string field = path(prefix, key);
        if (!parent.contains(key)) {
            if (required) fail(field, "missing required section");
            return nullptr;
        }
        const json& v = parent.at(key);
        if (!v.is_object()) {
            fail(field, "must be an object");
            return nullptr;
        }
        return &v;
    }

    std::optional<double> number(const json& parent, const std::string& prefix, const char* key, bool required) {
        const std::string field = path(prefix, key);
        if (!parent.contains(key)) {
            if (required) fail(field, "missing required field");
            return std::nullopt;
        }
        const json& v = parent.at(key);
        if (!v.is_number()) {
            fail(field, "must be a number");
            return std::nullopt;
        }
        const double d = v.get<double>();
        if (!std::isfinite(d)) {
            fail(field, "must be finite");
            return std::nullopt;
        }
        return d;
    }

    std::optional<std::uint64_t> unsigned_int(const json& parent, const std::string& prefix, const char* key,
                                              bool required) {
        const std::string field = path(prefix, key);
        if (!parent.contains(key)) {
            if (required) fail(field, "missing required field");
            return std::nullopt;
        }
        const json& v = parent.at(key);
        if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
            fail(field, "must be a non-negative integer");
            return std::nullopt;
        }
        return v.get<std::uint64_t>();
    }

    std::optional<std::string> string(const json& parent, const std::string& prefix, const char* key,
                                      bool required) {
        const std::string field = path(prefix, key);
        if (!parent.contains(key)) {
            if (required) fail(field, "missing required field");
            return std::nullopt;
        }
        const json& v = parent.at(key);
        if (!v.is_string()) {
            fail(field, "must be a string");
            return std::nullopt;
        }
        return v.get<std::string>();
    }

    std::optional<bool> boolean(const json& parent, const std::string& prefix, const char* key) {
        if (!parent.contains(key)) return std::nullopt;
        const json& v = parent.at(key);
        if (!v.is_boolean()) {
            fail(path(prefix, key), "must be true or false");
            return std::nullopt;
        }
        return v.get<bool>();
    }

    std::optional<std::vector<double>> vector(const json& parent, const std::string& prefix, const char* key,
                                              bool required) {
        const std::string field = path(prefix, key);
        if (!parent.contains(key)) {
            if (required) fail(field, "missing required field");
            return std::nullopt;
        }
        const json& v = parent.at(key);
        if (v.is_number()) return std::vector<double>{v.get<double>()};
        if (!v.is_array()) {
            fail(field, "must be an array of numbers");
            return std::nullopt;
        }
        std::vector<double> out;
        for (const auto& item : v) {
            if (!item.is_number() || !std::isfinite(item.get<double>())) {
                fail(field, "must be an array of finite numbers");
                return std::nullopt;
            }
            out.push_back(item.get<double>());
        }
        return out;
    }

    /// Accepts a number (1x1), a flat array (column vector) or an array of rows.
    std::optional<Eigen::MatrixXd> matrix(const json& v, const std::string& field) {
        if (v.is_number()) return Eigen::MatrixXd::Constant(1, 1, v.get<double>());
        if (!v.is_array() || v.empty()) {
            fail(field, "must be a number, a vector or a matrix");
            return std::nullopt;
        }
        if (!v.front().is_array()) {
            Eigen::MatrixXd out(static_cast<Eigen::Index>(v.size()), 1);
            for (std::size_t i = 0; i < v.size(); ++i) {
                if (!v[i].is_number()) {
                    fail(field, "must contain only numbers");
                    return std::nullopt;
                }
                out(static_cast<Eigen::Index>(i), 0) = v[i].get<double>();
            }
            return out;
        }
        const std::size_t cols = v.front().size();
        Eigen::MatrixXd out(static_cast<Eigen::Index>(v.size()), static_cast<Eigen::Index>(cols));
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!v[i].is_array() || v[i].size() != cols || cols == 0) {
                fail(field, "matrix rows must be nonempty and of equal length");
                return std::nullopt;
            }
            for (std::size_t j = 0; j < cols; ++j) {
                if (!v[i][j].is_number()) {
                    fail(field, "must contain only numbers");
                    return std::nullopt;
                }
                out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v[i][j].get<double>();
            }
        }
        return out;
    }

    std::optional<Eigen::MatrixXd> matrix(const json& parent, const std::string& prefix, const char* key,
                                          bool required) {
        const std::string field = path(prefix, key);
        if (!parent.contains(key)) {
            if (required) fail(field, "missing required field");
            return std::nullopt;
        }
        return matrix(parent.at(key), field);
    }
};

inline std::optional<PlantModel> parse_plant(FieldReader& r, const json& p, std::optional<DistributionKind>& noise) {
    const std::string pre = "plant";
    const auto kind = r.string(p, pre, "kind", true);
    if (!kind) return std::nullopt;
    const auto sigma_w2 = r.number(p, pre, "sigma_w2", true);
    if (sigma_w2 && !(*sigma_w2 > 0.0)) r.fail("plant.sigma_w2", "must be positive");
    if (p.contains("noise")) {
        if (*kind == "partial") {
            r.fail("plant.noise", "partially observed plants use Gaussian noise only");
        } else if (const auto name = r.string(p, pre, "noise", false)) {
            try {
                noise = distribution_kind_from_string(*name);
            } catch (const std::invalid_argument& e) {
                r.fail("plant.noise", e.what());
            }
        }
    }
    const std::size_t before = r.errors.size();
    auto guard = [&](auto&& build, const char* field) -> std::optional<PlantModel> {
        if (r.errors.size() != before) return std::nullopt;
        try {
            return build();
        } catch (const ModelError& e) {
            r.fail(field, e.what());
            return std::nullopt;
        }
    };

    if (*kind == "scalar") {
        r.reject_unknown(p, pre, {"kind", "a", "b", "sigma_w2", "noise"});
        const auto a = r.number(p, pre, "a", true);
        const auto b = r.number(p, pre, "b", true);
        if (b && *b == 0.0) r.fail("plant.b", "must be nonzero");
        return guard([&] { return PlantModel(ScalarPlant{*a, *b, *sigma_w2}); }, "plant");
    }
    if (*kind == "arx") {
        r.reject_unknown(p, pre, {"kind", "a", "b", "sigma_w2", "noise"});
        const auto a = r.vector(p, pre, "a", true);
        const auto b = r.vector(p, pre, "b", true);
        return guard([&] { return PlantModel(ArxPlant(*a, *b, *sigma_w2)); }, "plant.b");
    }
    if (*kind == "armax") {
        r.reject_unknown(p, pre, {"kind", "a", "b", "c", "delay", "sigma_w2", "noise"});
        const auto a = r.vector(p, pre, "a", true);
        const auto b = r.vector(p, pre, "b", true);
        const auto c = r.vector(p, pre, "c", true);
        const auto delay = r.unsigned_int(p, pre, "delay", true);
        if (delay && *delay < 1) r.fail("plant.delay", "must be at least 1");
        if (r.errors.size() != before) return std::nullopt;
        if ((*c)[0] != 1.0) {
            r.fail("plant.c", "c0 must equal 1");
            return std::nullopt;
        }
        try {
            poly::require_minimum_phase(*c, "C");
        } catch (const ModelError& e) {
            r.fail("plant.c", e.what());
            return std::nullopt;
        }
        return guard([&] { return PlantModel(ArmaxPlant(*a, *b, *c, *delay, *sigma_w2)); }, "plant.b");
    }
    if (*kind == "partial") {
        r.reject_unknown(p, pre, {"kind", "A", "B", "C", "sigma_w2", "sigma_n2"});
        const auto A = r.matrix(p, pre, "A", true);
        const auto B = r.matrix(p, pre, "B", true);
        const auto C = r.matrix(p, pre, "C", true);
        const auto sigma_n2 = r.number(p, pre, "sigma_n2", true);
        if (sigma_n2 && !(*sigma_n2 > 0.0)) r.fail("plant.sigma_n2", "must be positive");
        if (r.errors.size() != before) return std::nullopt;
        if (B->cols() != 1) r.fail("plant.B", "must be a column vector (single input)");
        if (C->cols() != 1 && C->rows() != 1) r.fail("plant.C", "must be a row vector (single output)");
        if (r.errors.size() != before) return std::nullopt;
        PartialPlant plant{*A, B->col(0), C->rows() == 1 ? Eigen::RowVectorXd(C->row(0))
                                                         : Eigen::RowVectorXd(C->col(0).transpose()),
                           *sigma_w2, *sigma_n2};
        return guard([&] {
            validate(plant);
            return PlantModel(plant);
        }, "plant");
    }
    if (*kind == "mimo") {
        r.reject_unknown(p, pre, {"kind", "A", "B", "sigma_w2", "noise"});
        const auto A = r.matrix(p, pre, "A", true);
        const auto B = r.matrix(p, pre, "B", true);
        if (r.errors.size() != before) return std::nullopt;
        MimoPlant plant{*A, *B, *sigma_w2};
        return guard([&] {
            validate(plant);
            return PlantModel(plant);
        }, "plant");
    }
    r.fail("plant.kind", "must be one of scalar, arx, armax, partial, mimo");
    return std::nullopt;
}

inline std::optional<PolicyConfig> parse_policy(FieldReader& r, const json* p, const PlantModel& plant) {
    const LoopDims dims = loop_dims(plant);
    PolicyConfig out;
    out.policy = LinearFeedback{Eigen::MatrixXd::Zero(dims.input, dims.output)};
    if (!p) return out;
    const std::string pre = "policy";
    const auto kind = r.string(*p, pre, "kind", true);
    if (!kind) return std::nullopt;
    out.kind = *kind;
    const std::size_t before = r.errors.size();
    auto check_shape = [&](const Eigen::MatrixXd& m, Eigen::Index rows, Eigen::Index cols, const std::string& field) {
        if (m.rows() == rows && m.cols() == cols) return true;
        if (rows == 1 && cols == 1 && m.size() == 1) return true;
        r.fail(field, "must be " + std::to_string(rows) + " x " + std::to_string(cols));
        return false;
    };
    if (*kind == "none") {
        r.reject_unknown(*p, pre, {"kind"});
        return out;
    }
    if (*kind == "linear") {
        r.reject_unknown(*p, pre, {"kind", "gain"});
        auto gain = r.matrix(*p, pre, "gain", true);
        if (!gain) return std::nullopt;
        if (dims.input == dims.output && gain->size() == 1 && dims.input > 1) {
            gain = Eigen::MatrixXd(Eigen::MatrixXd::Identity(dims.input, dims.output) * (*gain)(0, 0));
        }
        if (!check_shape(*gain, dims.input, dims.output, "policy.gain")) return std::nullopt;
        out.policy = LinearFeedback{*gain};
        return out;
    }
    if (*kind == "affine_history") {
        r.reject_unknown(*p, pre, {"kind", "z_gains", "u_gains", "offset"});
        AffineHistory rule;
        rule.offset = Eigen::VectorXd::Zero(dims.input);
        for (const char* key : {"z_gains", "u_gains"}) {
            if (!p->contains(key)) continue;
            const json& list = p->at(key);
            const std::string field = FieldReader::path(pre, key);
            if (!list.is_array()) {
                r.fail(field, "must be an array of gains");
                continue;
            }
            for (std::size_t i = 0; i < list.size(); ++i) {
                const std::string item_field = field + "[" + std::to_string(i) + "]";
                auto g = r.matrix(list[i], item_field);
                if (!g) continue;
                const Eigen::Index cols = std::string(key) == "z_gains" ? dims.output : dims.input;
                if (!check_shape(*g, dims.input, cols, item_field)) continue;
                (std::string(key) == "z_gains" ? rule.z_gains : rule.u_gains).push_back(*g);
            }
        }
        if (const auto offset = r.matrix(*p, pre, "offset", false)) {
            if (offset->size() == dims.input) rule.offset = Eigen::Map<const Eigen::VectorXd>(offset->data(), dims.input);
            else r.fail("policy.offset", "must have one entry per input");
        }
        if (r.errors.size() != before) return std::nullopt;
        out.policy = rule;
        return out;
    }
    if (*kind == "deadbeat") {
        r.reject_unknown(*p, pre, {"kind"});
        if (const auto* arx = std::get_if<ArxPlant>(&plant)) {
            out.policy = deadbeat_policy(*arx);
            return out;
        }
        r.fail("policy.kind", "deadbeat requires an arx plant");
        return std::nullopt;
    }
    r.fail("policy.kind", "must be one of none, linear, affine_history, deadbeat");
    return std::nullopt;
}

inline std::optional<AttackStrategy> parse_attack(FieldReader& r, const json* a) {
    AttackStrategy out;
    if (!a) return out;
    const std::string pre = "attack";
    r.reject_unknown(*a, pre, {"kind", "onset", "record_len", "name", "params"});
    const auto kind = r.string(*a, pre, "kind", true);
    const auto onset = r.unsigned_int(*a, pre, "onset", false);
    if (onset) out.onset = *onset;
    if (!kind) return std::nullopt;
    auto forbid = [&](const char* key) {
        if (a->contains(key)) r.fail(FieldReader::path(pre, key), "not used by attack kind '" + *kind + "'");
    };
    if (*kind == "honest") {
        forbid("record_len");
        forbid("name");
        forbid("params");
        out.kind = Honest{};
    } else if (*kind == "replay") {
        forbid("name");
        forbid("params");
        const auto len = r.unsigned_int(*a, pre, "record_len", true);
        if (!len) return std::nullopt;
        if (*len == 0) {
            r.fail("attack.record_len", "must be positive");
            return std::nullopt;
        }
        if (*len > out.onset) {
            r.fail("attack.record_len", "exceeds the honest history available at onset");
            return std::nullopt;
        }
        out.kind = Replay{*len};
    } else if (*kind == "noise_sim" || *kind == "additive_estimated") {
        forbid("record_len");
        forbid("name");
        forbid("params");
        if (*kind == "noise_sim") out.kind = NoiseSimulation{};
        else out.kind = AdditiveEstimated{};
    } else if (*kind == "custom") {
        forbid("record_len");
        const auto name = r.string(*a, pre, "name", true);
        if (!name) return std::nullopt;
        AttackParams params;
        if (a->contains("params")) {
            const json& p = a->at("params");
            if (!p.is_object()) {
                r.fail("attack.params", "must be an object of numbers");
                return std::nullopt;
            }
            for (const auto& [key, value] : p.items()) {
                if (!value.is_number()) {
                    r.fail("attack.params." + key, "must be a number");
                    return std::nullopt;
                }
                params[key] = value.get<double>();
            }
        }
        try {
            resolve_custom_params(*name, params);
        } catch (const std::invalid_argument& e) {
            r.fail("attack.name", e.what());
            return std::nullopt;
        }
        out.kind = CustomAttack{*name, params};
    } else {
        r.fail("attack.kind", "must be one of honest, replay, noise_sim, additive_estimated, custom");
        return std::nullopt;
    }
    return out;
}

} // namespace detail

inline ScenarioConfig parse_scenario(const nlohmann::json& doc) {
    using detail::FieldReader;
    FieldReader r;
    ScenarioConfig config;
    if (!doc.is_object()) throw ValidationError(std::vector<FieldError>{{"scenario", "must be a JSON object"}});
    r.reject_unknown(doc, "",
                     {"schema_version", "seed", "horizon", "initial_state", "plant", "policy", "watermark", "attack",
                      "detector", "description"});
    if (const auto version = r.unsigned_int(doc, "", "schema_version", true)) {
        if (*version != kSchemaVersion) r.fail("schema_version", "unsupported version (expected 1)");
    }
    if (const auto seed = r.unsigned_int(doc, "", "seed", false)) config.seed = *seed;
    if (const auto horizon = r.unsigned_int(doc, "", "horizon", true)) {
        if (*horizon < 2) r.fail("horizon", "must be at least 2");
        config.horizon = *horizon;
    }
    if (doc.contains("description") && !doc.at("description").is_string()) {
        r.fail("description", "must be a string");
    }

    std::optional<DistributionKind> noise_kind;
    std::optional<PlantModel> plant;
    if (const auto* p = r.object(doc, "", "plant", true)) plant = detail::parse_plant(r, *p, noise_kind);
    if (!plant) throw ValidationError(r.errors);
    config.plant = *plant;
    const double sigma_w2 = plant_sigma_w2(config.plant);
    config.noise = Distribution{noise_kind.value_or(DistributionKind::gaussian), sigma_w2};
    if (const auto* mimo = std::get_if<MimoPlant>(&config.plant)) config.warnings = validate(*mimo);
    const LoopDims dims = loop_dims(config.plant);

    if (const auto x0 = r.matrix(doc, "", "initial_state", false)) {
        if (std::holds_alternative<ArmaxPlant>(config.plant)) {
            r.fail("initial_state", "not supported for armax plants (they start at rest)");
        } else if (x0->size() != dims.state) {
            r.fail("initial_state", "must have " + std::to_string(dims.state) + " entries");
        } else {
            config.initial_state = Eigen::Map<const Eigen::VectorXd>(x0->data(), dims.state);
        }
    }

    if (const auto policy = detail::parse_policy(r, r.object(doc, "", "policy", false), config.plant)) {
        config.policy = *policy;
    }

    if (const auto* w = r.object(doc, "", "watermark", true)) {
        const std::string pre = "watermark";
        r.reject_unknown(*w, pre, {"sigma_e2", "distribution", "shaping"});
        const auto sigma_e2 = r.number(*w, pre, "sigma_e2", false);
        if (sigma_e2 && *sigma_e2 < 0.0) r.fail("watermark.sigma_e2", "must be non-negative");
        const std::string dist = r.string(*w, pre, "distribution", false).value_or("gaussian");
        if (const auto shaping = r.boolean(*w, pre, "shaping")) config.watermark.shaping = *shaping;
        if (dist == "matched") {
            config.watermark.matched = true;
            if (const auto* scalar = std::get_if<ScalarPlant>(&config.plant)) {
                config.watermark.excitation = match_distribution(config.noise, scalar->b);
                if (sigma_e2 && std::abs(*sigma_e2 - config.watermark.excitation.variance) >
                                    1e-12 * std::max(1.0, *sigma_e2)) {
                    r.fail("watermark.sigma_e2", "conflicts with the matched variance sigma_w2 / b^2");
                }
            } else {
                r.fail("watermark.distribution", "matched excitation requires a scalar plant");
            }
        } else {
            if (!sigma_e2) r.fail("watermark.sigma_e2", "missing required field");
            try {
                config.watermark.excitation = {distribution_kind_from_string(dist), sigma_e2.value_or(0.0)};
            } catch (const std::invalid_argument& e) {
                r.fail("watermark.distribution", e.what());
            }
        }
    }

    if (const auto attack = detail::parse_attack(r, r.object(doc, "", "attack", false))) config.attack = *attack;

    if (const auto* d = r.object(doc, "", "detector", false)) {
        const std::string pre = "detector";
        r.reject_unknown(*d, pre, {"window", "alpha", "tests", "burn_in", "calibration_seed", "n_cal"});
        if (const auto window = r.unsigned_int(*d, pre, "window", false)) config.detector.window = *window;
        if (const auto alpha = r.number(*d, pre, "alpha", false)) config.detector.alpha = *alpha;
        if (const auto burn_in = r.unsigned_int(*d, pre, "burn_in", false)) config.detector.burn_in = *burn_in;
        if (const auto s = r.unsigned_int(*d, pre, "calibration_seed", false)) config.detector.calibration_seed = *s;
        if (const auto n = r.unsigned_int(*d, pre, "n_cal", false)) config.detector.n_cal = *n;
        if (d->contains("tests")) {
            const auto& tests = d->at("tests");
            const auto allowed = available_tests(config.plant);
            if (!tests.is_array() || tests.empty()) {
                r.fail("detector.tests", "must be a nonempty array of test names");
            } else {
                for (const auto& t : tests) {
                    if (!t.is_string() || std::find(allowed.begin(), allowed.end(), t.get<std::string>()) == allowed.end()) {
                        std::string list;
                        for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
                        r.fail("detector.tests", "entries must be among: " + list);
                        break;
                    }
                    config.detector.tests.push_back(t.get<std::string>());
                }
            }
        }
    }
    const auto& det = config.detector;
    const Eigen::Index dim = std::holds_alternative<MimoPlant>(config.plant) ? dims.output : 1;
    if (det.window < 2 || static_cast<Eigen::Index>(det.window) <= dim) {
        r.fail("detector.window", "must exceed the residual dimension and be at least 2");
    }
    if (!(det.alpha > 0.0 && det.alpha < 0.5)) r.fail("detector.alpha", "must lie in (0, 0.5)");
    else if (det.n_cal && static_cast<double>(*det.n_cal) < 10.0 / det.alpha) {
        r.fail("detector.n_cal", "must be at least 10/alpha");
    }

    if (!r.errors.empty()) throw ValidationError(r.errors);
    return config;
}

inline ScenarioConfig parse_scenario_text(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError(std::vector<FieldError>{{"scenario", std::string("invalid JSON: ") + e.what()}});
    }
    return parse_scenario(doc);
}

inline ScenarioConfig load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError(std::vector<FieldError>{{"scenario", "cannot open '" + path + "'"}});
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_scenario_text(buffer.str());
}

} // namespace dwm
