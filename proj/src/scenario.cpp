#include <espf/scenario.hpp>

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

namespace espf {

namespace {

using K = ValueKind;

std::vector<SchemaEntry> make_schema() {
    return {
        {"name", K::text, "unnamed", "", "scenario label"},
        {"model", K::text, "orbit", "", "orbit | linear"},
        {"epoch", K::text, "unspecified", "", "civil epoch, metadata only"},
        {"seed", K::integer, "1", "", "measurement noise seed"},
        {"cadence_s", K::real, "60", "s", "measurement interval"},
        {"duration_s", K::real, "10800", "s", "arc length"},

        {"truth.position_km", K::vector, "[6984.457, 1612.255, 13.093]", "km", "initial ECI position"},
        {"truth.velocity_kms", K::vector, "[-1.677, 7.261, 0.260]", "km/s", "initial ECI velocity"},
        {"spacecraft.mass_kg", K::real, "2000", "kg", ""},
        {"spacecraft.area_m2", K::real, "20", "m^2", ""},
        {"spacecraft.cd", K::real, "2", "", "drag coefficient"},
        {"force.j2", K::boolean, "true", "", ""},
        {"force.drag", K::boolean, "true", "", ""},
        {"force.substep_s", K::real, "10", "s", "RK4 step"},
        {"earth.gmst0_deg", K::real, "0", "deg", "Greenwich angle at t = 0"},
        {"events.#.at_measurement", K::integer, "", "", "measurement index from which the area applies"},
        {"events.#.area_m2", K::real, "", "m^2", "new area"},
        {"stations.#.name", K::text, "station", "", ""},
        {"stations.#.lat_deg", K::real, "", "deg", "geodetic latitude"},
        {"stations.#.lon_deg", K::real, "", "deg", "east longitude"},
        {"stations.#.alt_km", K::real, "0", "km", ""},
        {"stations.#.ra_bias_arcsec", K::real, "0", "arcsec", "unmodeled bias"},
        {"stations.#.dec_bias_arcsec", K::real, "0", "arcsec", "unmodeled bias"},
        {"stations.#.noise_arcsec", K::real, "1", "arcsec", "Gaussian noise per angle"},
        {"stations.#.min_elevation_deg", K::real, "0", "deg", "visibility mask"},

        {"linear.dim", K::integer, "1", "", "1: static position, 2: constant velocity"},
        {"linear.truth", K::vector, "0", "", "initial true state"},
        {"linear.measurement_sigma", K::real, "1", "", "position noise"},
        {"linear.process_sigma", K::real, "0", "", "truth perturbation per step"},
        {"linear.outliers.#.step", K::integer, "", "", "measurement index"},
        {"linear.outliers.#.offset", K::real, "", "", "added to that measurement"},

        {"belief.offset", K::vector, "0", "state", "initial estimate minus truth"},
        {"belief.half_width", K::vector, "", "state", "ESPF support box half widths"},
        {"belief.ukf_sigma_fraction", K::real, "0.3333333333333333", "", "UKF std per axis / half width"},

        {"espf.eta", K::real, "0.99", "", "necessity level of the residual gate"},
        {"espf.s_threshold", K::real, "5", "", "pruning surprisal"},
        {"espf.epsilon", K::real, "1e-12", "", "surprisal floor"},
        {"espf.sigma0", K::real, "1", "", ""},
        {"espf.sigma_min", K::real, "0.1", "", ""},
        {"espf.sigma_max", K::real, "3", "", ""},
        {"espf.lambda_d", K::real, "0", "", "dispersion gain"},
        {"espf.lambda_s", K::real, "0", "", "surprisal gain"},
        {"espf.lambda_t", K::real, "0", "", "temporal decay"},
        {"espf.lambda_plus", K::real, "0", "", "radius gain on expansion"},
        {"espf.lambda_minus", K::real, "0", "", "radius gain on contraction"},
        {"espf.s_ref", K::real, "0", "", ""},
        {"espf.s0", K::real, "1", "", ""},
        {"espf.alpha", K::real, "1", "", "graded compatibility sensitivity"},
        {"espf.generation", K::text, "smolyak", "", "axis | smolyak"},
        {"espf.smolyak_level", K::integer, "2", "", ""},
        {"espf.min_survivors", K::integer, "0", "", "0 means n + 1"},
        {"espf.compatibility", K::text, "binary", "", "binary | graded"},
        {"espf.necessity_floor", K::real, "0.001", "", ""},
        {"espf.regularization", K::real, "1e-6", "state^2", "diagonal loading of spreads"},
        {"espf.measurement_regularization", K::real, "1e-6", "", "relative to mean sensor variance"},
        {"espf.process_box", K::vector, "0", "state", "process noise box half widths per step"},

        {"ukf.alpha", K::real, "0.001", "", ""},
        {"ukf.beta", K::real, "2", "", ""},
        {"ukf.kappa", K::real, "0", "", ""},
        {"ukf.process_sigma", K::vector, "0", "state", "process noise std per step"},

        {"reset.expansion", K::real, "2", "", "box growth on total falsification"},
        {"reset.max", K::integer, "100", "", "resets before the run is abandoned"},
        {"metrics.final_window", K::real, "0.1", "", "trailing share of records in the final RMS"},
    };
}

std::string normalize_key(const std::string &key) {
    std::string out;
    std::stringstream ss(key);
    std::string part;
    bool first = true;
    while (std::getline(ss, part, '.')) {
        if (!first) out += '.';
        first = false;
        const bool index = !part.empty() && std::all_of(part.begin(), part.end(), ::isdigit);
        out += index ? "#" : part;
    }
    return out;
}

std::string flow_text(const YAML::Node &node) {
    YAML::Emitter out;
    out << YAML::Flow << node;
    return out.c_str();
}

void flatten(const YAML::Node &node, const std::string &prefix, std::map<std::string, std::string> &out) {
    if (node.IsMap()) {
        for (const auto &kv : node) {
            const std::string key = kv.first.as<std::string>();
            flatten(kv.second, prefix.empty() ? key : prefix + "." + key, out);
        }
    } else if (node.IsSequence()) {
        const bool records = node.size() > 0 && node[0].IsMap();
        if (!records) {
            out[prefix] = flow_text(node);
            return;
        }
        for (std::size_t i = 0; i < node.size(); ++i) flatten(node[i], prefix + "." + std::to_string(i), out);
    } else if (node.IsScalar()) {
        out[prefix] = node.Scalar();
    } else if (node.IsNull()) {
        out[prefix] = "";
    }
}

std::string valid_key_list() {
    std::string s;
    for (const auto &e : scenario_schema()) s += "\n  " + e.key;
    return s;
}

YAML::Node parse_value(const std::string &key, const std::string &text) {
    try {
        return YAML::Load(text);
    } catch (const YAML::Exception &e) {
        throw SpecError("cannot parse value of " + key + ": " + e.what());
    }
}

constexpr double kDeg = std::numbers::pi / 180.0;

} // namespace

const std::vector<SchemaEntry> &scenario_schema() {
    static const std::vector<SchemaEntry> schema = make_schema();
    return schema;
}

const SchemaEntry *find_schema_entry(const std::string &key) {
    const std::string normalized = normalize_key(key);
    for (const auto &e : scenario_schema())
        if (e.key == normalized) return &e;
    return nullptr;
}

FlatConfig FlatConfig::from_yaml_text(const std::string &text) {
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::Exception &e) {
        throw SpecError(std::string("scenario is not valid YAML: ") + e.what());
    }
    if (!root.IsMap()) throw SpecError("scenario must be a mapping of sections");
    std::map<std::string, std::string> raw;
    flatten(root, "", raw);

    FlatConfig cfg;
    for (const auto &[key, value] : raw) {
        if (!find_schema_entry(key)) {
            cfg.warnings_.push_back("unknown key ignored: " + key);
            continue;
        }
        cfg.values_[key] = value;
    }
    return cfg;
}

FlatConfig FlatConfig::from_file(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) throw SpecError("cannot read scenario file: " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return from_yaml_text(ss.str());
}

void FlatConfig::set(const std::string &key, const std::string &value) {
    if (!find_schema_entry(key)) throw SpecError("unknown key '" + key + "'; valid keys:" + valid_key_list());
    values_[key] = value;
}

void FlatConfig::apply_override(const std::string &assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw SpecError("override must look like key=value: " + assignment);
    set(assignment.substr(0, eq), assignment.substr(eq + 1));
}

std::string FlatConfig::resolved_text() const {
    std::map<std::string, std::string> all = values_;
    std::set<std::string> list_prefixes;
    for (const auto &[key, _] : values_) {
        const auto norm = normalize_key(key);
        const auto hash = norm.rfind('#');
        if (hash != std::string::npos) list_prefixes.insert(key.substr(0, key.rfind('.')));
    }
    for (const auto &e : scenario_schema()) {
        if (e.fallback.empty()) continue;
        if (e.key.find('#') == std::string::npos) {
            all.emplace(e.key, e.fallback);
            continue;
        }
        const std::string field = e.key.substr(e.key.rfind('.') + 1);
        for (const auto &prefix : list_prefixes) {
            if (normalize_key(prefix + "." + field) == e.key) all.emplace(prefix + "." + field, e.fallback);
        }
    }
    std::string out;
    for (const auto &[key, value] : all) out += key + " = " + value + "\n";
    return out;
}

std::string FlatConfig::raw(const std::string &key) const {
    if (auto it = values_.find(key); it != values_.end()) return it->second;
    const SchemaEntry *e = find_schema_entry(key);
    if (!e) throw SpecError("unknown key '" + key + "'");
    if (e->fallback.empty()) throw SpecError("missing required key: " + key);
    return e->fallback;
}

std::string FlatConfig::text(const std::string &key) const { return raw(key); }

double FlatConfig::real(const std::string &key) const {
    try {
        return parse_value(key, raw(key)).as<double>();
    } catch (const YAML::Exception &) {
        throw SpecError("expected a number for " + key + ", got '" + raw(key) + "'");
    }
}

long FlatConfig::integer(const std::string &key) const {
    try {
        return parse_value(key, raw(key)).as<long>();
    } catch (const YAML::Exception &) {
        throw SpecError("expected an integer for " + key + ", got '" + raw(key) + "'");
    }
}

bool FlatConfig::boolean(const std::string &key) const {
    try {
        return parse_value(key, raw(key)).as<bool>();
    } catch (const YAML::Exception &) {
        throw SpecError("expected true/false for " + key + ", got '" + raw(key) + "'");
    }
}

Eigen::VectorXd FlatConfig::vector(const std::string &key) const {
    const YAML::Node node = parse_value(key, raw(key));
    try {
        if (node.IsScalar()) return Eigen::VectorXd::Constant(1, node.as<double>());
        if (!node.IsSequence()) throw SpecError("expected a list of numbers for " + key);
        Eigen::VectorXd v(static_cast<Index>(node.size()));
        for (std::size_t i = 0; i < node.size(); ++i) v[static_cast<Index>(i)] = node[i].as<double>();
        return v;
    } catch (const YAML::Exception &) {
        throw SpecError("expected a list of numbers for " + key + ", got '" + raw(key) + "'");
    }
}

long FlatConfig::list_size(const std::string &section) const {
    long count = 0;
    const std::string prefix = section + ".";
    for (const auto &[key, _] : values_) {
        if (key.rfind(prefix, 0) != 0) continue;
        const std::string rest = key.substr(prefix.size());
        const std::string head = rest.substr(0, rest.find('.'));
        if (head.empty() || !std::all_of(head.begin(), head.end(), ::isdigit)) continue;
        count = std::max(count, std::stol(head) + 1);
    }
    return count;
}

long ScenarioSpec::step_count() const { return static_cast<long>(std::floor(duration / cadence + 1e-9)); }

namespace {

Eigen::VectorXd sized(const FlatConfig &c, const std::string &key, Index n) {
    Eigen::VectorXd v = c.vector(key);
    if (v.size() == 1 && n > 1) return Eigen::VectorXd::Constant(n, v[0]);
    if (v.size() != n) {
        throw SpecError(key + " needs " + std::to_string(n) + " entries, got " + std::to_string(v.size()));
    }
    return v;
}

Eigen::Vector3d vec3(const FlatConfig &c, const std::string &key) { return sized(c, key, 3); }

template <typename Enum>
Enum choose(const FlatConfig &c, const std::string &key, std::initializer_list<std::pair<const char *, Enum>> options) {
    const std::string value = c.text(key);
    std::string names;
    for (const auto &[name, e] : options) {
        if (value == name) return e;
        names += std::string(names.empty() ? "" : ", ") + name;
    }
    throw SpecError(key + " must be one of " + names + ", got '" + value + "'");
}

EspfConfig<double> espf_config(const FlatConfig &c) {
    EspfConfig<double> e;
    e.eta = c.real("espf.eta");
    e.s_threshold = c.real("espf.s_threshold");
    e.epsilon = c.real("espf.epsilon");
    e.sigma0 = c.real("espf.sigma0");
    e.sigma_min = c.real("espf.sigma_min");
    e.sigma_max = c.real("espf.sigma_max");
    e.lambda_d = c.real("espf.lambda_d");
    e.lambda_s = c.real("espf.lambda_s");
    e.lambda_t = c.real("espf.lambda_t");
    e.lambda_plus = c.real("espf.lambda_plus");
    e.lambda_minus = c.real("espf.lambda_minus");
    e.s_ref = c.real("espf.s_ref");
    e.s0 = c.real("espf.s0");
    e.alpha = c.real("espf.alpha");
    e.generation = choose<Generation>(c, "espf.generation", {{"axis", Generation::axis}, {"smolyak", Generation::smolyak}});
    e.smolyak_level = static_cast<int>(c.integer("espf.smolyak_level"));
    e.min_survivors = c.integer("espf.min_survivors");
    e.compatibility = choose<CompatibilityRule>(
        c, "espf.compatibility", {{"binary", CompatibilityRule::binary}, {"graded", CompatibilityRule::graded}});
    e.necessity_floor = c.real("espf.necessity_floor");
    e.regularization = c.real("espf.regularization");
    e.measurement_regularization = c.real("espf.measurement_regularization");
    try {
        e.validate();
    } catch (const ArgumentError &err) {
        throw SpecError(err.what());
    }
    return e;
}

} // namespace

ScenarioSpec build_spec(const FlatConfig &c) {
    ScenarioSpec s;
    s.name = c.text("name");
    s.epoch = c.text("epoch");
    s.model = choose<ModelKind>(c, "model", {{"orbit", ModelKind::orbit}, {"linear", ModelKind::linear}});
    const long seed = c.integer("seed");
    if (seed < 0) throw SpecError("seed must be non-negative");
    s.seed = static_cast<std::uint64_t>(seed);
    s.cadence = c.real("cadence_s");
    s.duration = c.real("duration_s");
    if (!(s.cadence > 0)) throw SpecError("cadence_s must be positive");
    if (!(s.duration > 0)) throw SpecError("duration_s must be positive");
    if (s.step_count() < 1) throw SpecError("duration_s shorter than one cadence");

    if (s.model == ModelKind::orbit) {
        auto &o = s.orbit;
        o.truth.position = vec3(c, "truth.position_km");
        o.truth.velocity = vec3(c, "truth.velocity_kms");
        if (!(o.truth.position.norm() > orbit::kEarthRadius)) throw SpecError("truth position is below the surface");
        o.craft = {c.real("spacecraft.mass_kg"), c.real("spacecraft.area_m2"), c.real("spacecraft.cd")};
        o.forces.j2 = c.boolean("force.j2");
        o.forces.drag = c.boolean("force.drag");
        o.substep = c.real("force.substep_s");
        if (!(o.substep > 0)) throw SpecError("force.substep_s must be positive");
        o.earth.theta0 = c.real("earth.gmst0_deg") * kDeg;
        for (long i = 0; i < c.list_size("events"); ++i) {
            const std::string p = "events." + std::to_string(i) + ".";
            o.events.push_back({c.integer(p + "at_measurement"), c.real(p + "area_m2")});
        }
        std::stable_sort(o.events.begin(), o.events.end(),
                         [](const auto &a, const auto &b) { return a.index < b.index; });
        for (long i = 0; i < c.list_size("stations"); ++i) {
            const std::string p = "stations." + std::to_string(i) + ".";
            orbit::Station st;
            st.name = c.text(p + "name");
            st.latitude = c.real(p + "lat_deg") * kDeg;
            st.longitude = c.real(p + "lon_deg") * kDeg;
            st.altitude = c.real(p + "alt_km");
            st.ra_bias = c.real(p + "ra_bias_arcsec");
            st.dec_bias = c.real(p + "dec_bias_arcsec");
            st.noise_sigma = c.real(p + "noise_arcsec");
            st.min_elevation = c.real(p + "min_elevation_deg") * kDeg;
            o.stations.push_back(st);
        }
        if (o.stations.empty()) throw SpecError("an orbit scenario needs at least one station");
        try {
            o.craft.validate();
            for (const auto &st : o.stations) st.validate();
            for (const auto &ev : o.events) orbit::apply_event(o.craft, ev);
        } catch (const ArgumentError &err) {
            throw SpecError(err.what());
        }
    } else {
        auto &l = s.linear;
        l.dim = static_cast<int>(c.integer("linear.dim"));
        if (l.dim != 1 && l.dim != 2) throw SpecError("linear.dim must be 1 or 2");
        l.truth = sized(c, "linear.truth", l.dim);
        l.measurement_sigma = c.real("linear.measurement_sigma");
        l.process_sigma = c.real("linear.process_sigma");
        if (!(l.measurement_sigma >= 0)) throw SpecError("linear.measurement_sigma must be non-negative");
        if (!(l.process_sigma >= 0)) throw SpecError("linear.process_sigma must be non-negative");
        for (long i = 0; i < c.list_size("linear.outliers"); ++i) {
            const std::string p = "linear.outliers." + std::to_string(i) + ".";
            l.outliers.push_back({c.integer(p + "step"), c.real(p + "offset")});
        }
    }

    const Index n = s.dim();
    s.belief_offset = sized(c, "belief.offset", n);
    s.belief_half_width = sized(c, "belief.half_width", n);
    if (!(s.belief_half_width.array() > 0).all()) throw SpecError("belief.half_width entries must be positive");
    s.ukf_sigma_fraction = c.real("belief.ukf_sigma_fraction");
    if (!(s.ukf_sigma_fraction > 0)) throw SpecError("belief.ukf_sigma_fraction must be positive");

    s.espf = espf_config(c);
    s.espf_process_box = sized(c, "espf.process_box", n);
    if (!(s.espf_process_box.array() >= 0).all()) throw SpecError("espf.process_box entries must be non-negative");
    s.ukf = {c.real("ukf.alpha"), c.real("ukf.beta"), c.real("ukf.kappa")};
    if (!(s.ukf.alpha > 0)) throw SpecError("ukf.alpha must be positive");
    s.ukf_process_sigma = sized(c, "ukf.process_sigma", n);
    if (!(s.ukf_process_sigma.array() >= 0).all()) throw SpecError("ukf.process_sigma entries must be non-negative");

    s.reset_expansion = c.real("reset.expansion");
    s.max_resets = c.integer("reset.max");
    if (!(s.reset_expansion > 1)) throw SpecError("reset.expansion must exceed 1");
    if (s.max_resets < 0) throw SpecError("reset.max must be non-negative");
    s.final_window = c.real("metrics.final_window");
    if (!(s.final_window > 0 && s.final_window <= 1)) throw SpecError("metrics.final_window must lie in (0,1]");
    return s;
}

std::filesystem::path resolve_scenario_path(const std::filesystem::path &path) {
    namespace fs = std::filesystem;
    if (fs::is_regular_file(path)) return path;
    if (fs::is_directory(path) && fs::is_regular_file(path / "scenario.yaml")) return path / "scenario.yaml";
    fs::path with_ext = path;
    with_ext += ".yaml";
    if (fs::is_regular_file(with_ext)) return with_ext;
    throw SpecError("scenario file not found: " + path.string());
}

} // namespace espf
