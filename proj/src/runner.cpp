#include <espf/runner.hpp>

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <random>

namespace espf {

namespace {

using orbit::Vec3;

Track build_orbit_track(const ScenarioSpec &spec) {
    const OrbitSpec &o = spec.orbit;
    Track track;
    track.name = spec.name;
    track.dim = 6;
    track.position_dims = 3;
    track.initial_truth = o.truth.packed();

    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const int substeps = std::max(1, static_cast<int>(std::ceil(spec.cadence / o.substep - 1e-9)));
    const double dt = spec.cadence;

    orbit::OrbitalState truth = o.truth;
    orbit::SpacecraftParams craft = o.craft;
    std::size_t next_event = 0;

    for (long k = 1; k <= spec.step_count(); ++k) {
        while (next_event < o.events.size() && o.events[next_event].index <= k - 1) {
            craft = orbit::apply_event(craft, o.events[next_event++]);
            spdlog::debug("{}: area {} m^2 from epoch {}", spec.name, craft.area, k - 1);
        }
        const double t_prev = truth.epoch;
        truth = orbit::propagate(truth, craft, dt, substeps, o.forces);

        TrackStep step;
        step.time = truth.epoch;
        step.truth = truth.packed();

        std::vector<double> ys, sig;
        std::vector<Vec3> sites;
        for (const auto &st : o.stations) {
            if (!(orbit::elevation(truth.position, st, o.earth, truth.epoch) > st.min_elevation)) continue;
            const orbit::Angles a = orbit::observe(truth, st, o.earth);
            const double s = st.noise_sigma * orbit::kArcsec;
            ys.push_back(a.ra + s * gauss(rng));
            ys.push_back(a.dec + s * gauss(rng));
            sig.push_back(s);
            sig.push_back(s);
            sites.push_back(orbit::station_eci(st, o.earth, truth.epoch));
        }
        step.noise_sigma = Eigen::Map<const Vec>(sig.data(), static_cast<Index>(sig.size()));
        if (!ys.empty()) {
            const Vec y = Eigen::Map<const Vec>(ys.data(), static_cast<Index>(ys.size()));
            step.measurement = y;
            step.observe = [sites, y](const Vec &x) {
                Vec out(static_cast<Index>(2 * sites.size()));
                for (std::size_t i = 0; i < sites.size(); ++i) {
                    const orbit::Angles a = orbit::line_of_sight_angles(Vec3(x.head<3>()) - sites[i]);
                    const Index j = static_cast<Index>(2 * i);
                    // RA unwrapped next to the observed value
                    out[j] = y[j] + orbit::wrap_pi(a.ra - y[j]);
                    out[j + 1] = a.dec;
                }
                return out;
            };
        }
        step.process = [craft = o.craft, forces = o.forces, t_prev, dt, substeps](const Vec &x) {
            return Vec(orbit::propagate(orbit::OrbitalState::unpack(x, t_prev), craft, dt, substeps, forces).packed());
        };
        track.steps.push_back(std::move(step));
    }
    return track;
}

Track build_linear_track(const ScenarioSpec &spec) {
    const LinearSpec &l = spec.linear;
    Track track;
    track.name = spec.name;
    track.dim = l.dim;
    track.position_dims = 1;
    track.initial_truth = l.truth;

    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double dt = spec.cadence;
    Mat f = Mat::Identity(l.dim, l.dim);
    if (l.dim == 2) f(0, 1) = dt;

    Vec truth = l.truth;
    for (long k = 1; k <= spec.step_count(); ++k) {
        truth = f * truth;
        if (l.process_sigma > 0) truth[l.dim - 1] += l.process_sigma * gauss(rng);
        TrackStep step;
        step.time = k * dt;
        step.truth = truth;
        double y = truth[0] + l.measurement_sigma * gauss(rng);
        for (const auto &o : l.outliers)
            if (o.step == k) y += o.offset;
        step.measurement = Vec::Constant(1, y);
        step.noise_sigma = Vec::Constant(1, l.measurement_sigma);
        step.process = [f](const Vec &x) { return Vec(f * x); };
        step.observe = [](const Vec &x) { return Vec(x.head(1)); };
        track.steps.push_back(std::move(step));
    }
    return track;
}

struct EspfRunner {
    const RunSettings &settings;
    EspfState<double> state;
    ProcessNoise<double> noise;
    std::vector<ResetEvent> &resets;

    void predict(const TrackStep &step) { state = espf::predict(state, step.process, noise, settings.espf); }

    void assimilate(const TrackStep &step, StepRecord &rec) {
        const Vec &y = *step.measurement;
        const SpreadMatrix<double> r(Mat(step.noise_sigma.array().square().matrix().asDiagonal()));
        std::optional<UpdateResult<double>> updated;
        try {
            updated = update(state, y, step.observe, r, settings.espf);
        } catch (const TotalIncompatibilityError &) {
            if (static_cast<long>(resets.size()) >= settings.max_resets) {
                throw ResetBudgetError("reset budget of " + std::to_string(settings.max_resets) + " exhausted");
            }
            const Hyperrectangle<double> box = state.box.scaled(settings.reset_expansion);
            spdlog::warn("epistemic reset at epoch {} (t = {} s): support expanded {}x", rec.step, rec.time,
                         settings.reset_expansion);
            state = initialize(box, settings.espf);
            rec.espf_reset = true;
            ResetEvent ev{rec.step, rec.time, false};
            try {
                updated = update(state, y, step.observe, r, settings.espf);
                ev.recovered = true;
            } catch (const TotalIncompatibilityError &) {
                spdlog::warn("measurement at epoch {} still incompatible after expansion; skipped", rec.step);
            }
            resets.push_back(ev);
        }

        if (updated) {
            const auto &d = updated->diagnostics;
            const Index tau = state.tau;
            state = regenerate(updated->state, settings.espf);
            state.tau = tau + 1;
            rec.espf_live = updated->state.ensemble.live_count();
            rec.espf_pruned = d.pruned;
            rec.espf_mean_surprisal = d.mean_surprisal;
            rec.espf_retention = d.necessity_retention;
            rec.espf_compatibility = d.compatibility;
        } else {
            rec.espf_live = state.ensemble.live_count();
            rec.espf_pruned = state.ensemble.size();
            rec.espf_mean_surprisal = surprisal(0.0, settings.espf.epsilon);
            rec.espf_retention = 0.0;
            rec.espf_compatibility = Vec::Zero(state.ensemble.size());
        }
        rec.espf_mode = state.mode;
        rec.espf_log_det = state.spread.log_det();
        rec.espf_sigma = state.sigma;
        rec.espf_residual = (y - step.observe(state.mode)).norm();
    }
};

} // namespace

Track build_track(const ScenarioSpec &spec) {
    return spec.model == ModelKind::orbit ? build_orbit_track(spec) : build_linear_track(spec);
}

RunSettings RunSettings::from_spec(const ScenarioSpec &spec, FilterChoice filters) {
    RunSettings s;
    s.filters = filters;
    s.espf = spec.espf;
    s.espf_process_box = spec.espf_process_box;
    s.ukf = spec.ukf;
    s.ukf_process_sigma = spec.ukf_process_sigma;
    s.belief_offset = spec.belief_offset;
    s.belief_half_width = spec.belief_half_width;
    s.ukf_sigma_fraction = spec.ukf_sigma_fraction;
    s.reset_expansion = spec.reset_expansion;
    s.max_resets = spec.max_resets;
    return s;
}

RunTrace run_track(const Track &track, const RunSettings &settings) {
    const Index n = track.dim;
    detail::require_same_size(settings.belief_offset.size(), n, "belief offset");
    detail::require_same_size(settings.belief_half_width.size(), n, "belief half width");

    RunTrace trace;
    trace.scenario = track.name;
    trace.dim = n;
    trace.position_dims = track.position_dims;
    trace.filters = settings.filters;

    const Vec mean0 = track.initial_truth + settings.belief_offset;
    std::optional<EspfRunner> espf;
    if (settings.filters.espf) {
        const auto box = Hyperrectangle<double>::centered(mean0, settings.belief_half_width);
        espf.emplace(EspfRunner{settings, initialize(box, settings.espf),
                                ProcessNoise<double>::from_box(
                                    Hyperrectangle<double>::centered(Vec::Zero(n), settings.espf_process_box)),
                                trace.resets});
    }
    std::optional<GaussianBelief<double>> ukf;
    const Mat q = settings.ukf_process_sigma.array().square().matrix().asDiagonal();
    if (settings.filters.ukf) {
        const Vec sd = settings.ukf_sigma_fraction * settings.belief_half_width;
        ukf = GaussianBelief<double>{mean0, sd.array().square().matrix().asDiagonal()};
    }

    for (std::size_t k = 0; k < track.steps.size(); ++k) {
        const TrackStep &step = track.steps[k];
        if (espf) espf->predict(step);
        if (ukf) *ukf = ukf_predict(*ukf, step.process, q, settings.ukf);
        if (!step.measurement) continue;

        StepRecord rec;
        rec.step = static_cast<Index>(k + 1);
        rec.time = step.time;
        rec.truth = step.truth;
        rec.measurement = *step.measurement;
        if (espf) espf->assimilate(step, rec);
        if (ukf) {
            const Mat r = step.noise_sigma.array().square().matrix().asDiagonal();
            *ukf = ukf_update(*ukf, *step.measurement, step.observe, r, settings.ukf);
            rec.ukf_mean = ukf->mean;
            rec.ukf_cov_trace = ukf->covariance.trace();
            rec.ukf_residual = (*step.measurement - step.observe(ukf->mean)).norm();
        }
        trace.records.push_back(std::move(rec));
    }
    return trace;
}

RunTrace run(const ScenarioSpec &spec, FilterChoice filters) {
    return run_track(build_track(spec), RunSettings::from_spec(spec, filters));
}

double position_rms(const RunTrace &trace, std::size_t first, bool use_espf) {
    const Index p = trace.position_dims;
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = first; i < trace.records.size(); ++i) {
        const StepRecord &r = trace.records[i];
        const Vec &est = use_espf ? r.espf_mode : r.ukf_mean;
        sum += (est.head(p) - r.truth.head(p)).squaredNorm();
        ++count;
    }
    if (count == 0) throw ArgumentError("position_rms: empty window");
    return std::sqrt(sum / static_cast<double>(count));
}

Summary metrics(const RunTrace &trace, double final_window) {
    if (trace.records.empty()) throw ArgumentError("metrics: empty trace");
    if (!(final_window > 0 && final_window <= 1)) throw ArgumentError("metrics: final window must lie in (0,1]");
    Summary s;
    s.records = trace.records.size();
    s.window = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(final_window * static_cast<double>(s.records))));
    const std::size_t first = s.records - s.window;
    s.resets = trace.resets.size();
    if (trace.filters.ukf) s.ukf_final_rms = position_rms(trace, first, false);
    if (trace.filters.espf) {
        s.espf_final_rms = position_rms(trace, first, true);
        double surprisal_sum = 0.0, retention_sum = 0.0;
        for (const auto &r : trace.records) {
            surprisal_sum += r.espf_mean_surprisal;
            retention_sum += r.espf_retention;
            s.prune_series.push_back(r.espf_pruned);
        }
        s.avg_surprisal = surprisal_sum / static_cast<double>(s.records);
        s.retention = 100.0 * retention_sum / static_cast<double>(s.records);
    }
    return s;
}

} // namespace espf
