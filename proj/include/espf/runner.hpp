// Scenario execution: truth and measurement synthesis, ESPF and UKF side by side.
#pragma once

#include <espf/filter.hpp>
#include <espf/scenario.hpp>
#include <espf/ukf.hpp>

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace espf {

using Vec = Vector<double>;
using Mat = Matrix<double>;

/// One measurement epoch of a synthesized track.
struct TrackStep {
    double time = 0.0;
    Vec truth;
    std::optional<Vec> measurement;          ///< absent when nothing observed the target
    Vec noise_sigma;                         ///< per measurement component
    std::function<Vec(const Vec &)> process; ///< filter model from the previous epoch to this one
    std::function<Vec(const Vec &)> observe; ///< filter model of the measurement
};

struct Track {
    std::string name;
    Index dim = 0;
    Index position_dims = 0;
    Vec initial_truth;
    std::vector<TrackStep> steps;
};

/// Truth first, then seeded measurement noise and biases.
Track build_track(const ScenarioSpec &spec);

struct FilterChoice {
    bool espf = true;
    bool ukf = true;
};

/// Per-assimilation record.
struct StepRecord {
    Index step = 0; ///< 1-based epoch index
    double time = 0.0;
    Vec truth;
    Vec measurement;

    Vec espf_mode;
    Index espf_live = 0;
    Index espf_pruned = 0;
    double espf_mean_surprisal = 0.0;
    double espf_retention = 0.0;
    double espf_log_det = 0.0;
    double espf_sigma = 0.0;
    Vec espf_compatibility;
    bool espf_reset = false;
    double espf_residual = 0.0; ///< norm of y - h(mode)

    Vec ukf_mean;
    double ukf_cov_trace = 0.0;
    double ukf_residual = 0.0;
};

struct ResetEvent {
    Index step = 0;
    double time = 0.0;
    bool recovered = false; ///< measurement assimilated after the expansion
};

struct RunTrace {
    std::string scenario;
    Index dim = 0;
    Index position_dims = 0;
    FilterChoice filters;
    std::vector<StepRecord> records;
    std::vector<ResetEvent> resets;
};

/// Settings the generic runner needs beyond the track itself.
struct RunSettings {
    FilterChoice filters;
    EspfConfig<double> espf;
    Vec espf_process_box;
    UnscentedParams ukf;
    Vec ukf_process_sigma;
    Vec belief_offset;
    Vec belief_half_width;
    double ukf_sigma_fraction = 1.0 / 3.0;
    double reset_expansion = 2.0;
    long max_resets = 100;

    static RunSettings from_spec(const ScenarioSpec &spec, FilterChoice filters = {});
};

/// Thrown when resets exceed the configured budget.
class ResetBudgetError : public Error {
public:
    using Error::Error;
};

RunTrace run_track(const Track &track, const RunSettings &settings);
RunTrace run(const ScenarioSpec &spec, FilterChoice filters = {});

struct Summary {
    std::size_t records = 0;
    std::size_t window = 0;
    std::optional<double> espf_final_rms;
    std::optional<double> ukf_final_rms;
    std::optional<double> avg_surprisal;
    std::optional<double> retention; ///< percent
    std::vector<Index> prune_series;
    std::size_t resets = 0;
};

/// Final-window position RMS, average surprisal, necessity retention, prune counts.
Summary metrics(const RunTrace &trace, double final_window);

/// Position RMS over records [first, records.size()).
double position_rms(const RunTrace &trace, std::size_t first, bool espf);

} // namespace espf
