// Scenario description: schema, flat dotted-key configuration, typed spec.
#pragma once

#include <espf/filter.hpp>
#include <espf/orbit.hpp>
#include <espf/types.hpp>

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace espf {

/// Malformed, missing or out-of-schema scenario input.
class SpecError : public Error {
public:
    using Error::Error;
};

enum class ValueKind { text, real, integer, boolean, vector };

struct SchemaEntry {
    std::string key;           ///< dotted path, '#' stands for a list index
    ValueKind kind;
    std::string fallback;      ///< default in YAML text; empty means required
    std::string unit;
    std::string doc;
};

/// All accepted keys, in documentation order.
const std::vector<SchemaEntry> &scenario_schema();

/// Schema entry matching a concrete key (list indices normalized to '#'), or nullptr.
const SchemaEntry *find_schema_entry(const std::string &key);

/**
 * @brief Scenario settings as dotted key -> YAML scalar/flow text
 *
 * Unknown keys found while loading are collected in `warnings` and dropped.
 */
class FlatConfig {
public:
    static FlatConfig from_yaml_text(const std::string &text);
    static FlatConfig from_file(const std::filesystem::path &path);

    /// Replace one value; throws SpecError naming valid keys when the key is not in the schema.
    void set(const std::string &key, const std::string &value);
    /// "key=value" form used on the command line.
    void apply_override(const std::string &assignment);

    bool has(const std::string &key) const { return values_.count(key) > 0; }
    const std::map<std::string, std::string> &values() const { return values_; }
    const std::vector<std::string> &warnings() const { return warnings_; }

    /// Every set key plus schema defaults for non-list keys, sorted, one "key = value" per line.
    std::string resolved_text() const;

    std::string text(const std::string &key) const;
    double real(const std::string &key) const;
    long integer(const std::string &key) const;
    bool boolean(const std::string &key) const;
    Eigen::VectorXd vector(const std::string &key) const;
    /// Number of entries of a list section such as "stations".
    long list_size(const std::string &section) const;

private:
    std::string raw(const std::string &key) const;

    std::map<std::string, std::string> values_;
    std::vector<std::string> warnings_;
};

enum class ModelKind { orbit, linear };

struct LinearOutlier {
    long step = 0;      ///< 1-based measurement index
    double offset = 0.0;
};

struct LinearSpec {
    int dim = 1;                 ///< 1: static position, 2: position and velocity
    Eigen::VectorXd truth;
    double measurement_sigma = 1.0;
    double process_sigma = 0.0;  ///< truth perturbation per step (velocity, or position when dim = 1)
    std::vector<LinearOutlier> outliers;
};

struct OrbitSpec {
    orbit::OrbitalState truth;
    orbit::SpacecraftParams craft;
    orbit::ForceModel forces;
    double substep = 10.0; // s
    orbit::EarthRotation earth;
    std::vector<orbit::AreaEvent> events;
    std::vector<orbit::Station> stations;
};

struct ScenarioSpec {
    std::string name;
    std::string epoch;
    ModelKind model = ModelKind::orbit;
    std::uint64_t seed = 1;
    double cadence = 60.0;
    double duration = 10800.0;
    OrbitSpec orbit;
    LinearSpec linear;

    Eigen::VectorXd belief_offset;
    Eigen::VectorXd belief_half_width;
    double ukf_sigma_fraction = 1.0 / 3.0;

    EspfConfig<double> espf;
    Eigen::VectorXd espf_process_box;
    UnscentedParams ukf;
    Eigen::VectorXd ukf_process_sigma;

    double reset_expansion = 2.0;
    long max_resets = 100;
    double final_window = 0.1;

    Index dim() const { return model == ModelKind::orbit ? 6 : linear.dim; }
    Index position_dims() const { return model == ModelKind::orbit ? 3 : 1; }
    long step_count() const;
};

/// Typed, validated spec; throws SpecError.
ScenarioSpec build_spec(const FlatConfig &config);

/// Accepts a file path or a directory containing scenario.yaml; "x" also tries "x.yaml".
std::filesystem::path resolve_scenario_path(const std::filesystem::path &path);

} // namespace espf
