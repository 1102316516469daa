// Epistemic Support-Point Filter - predict / update / regenerate cycle
#pragma once

#include <espf/geometry.hpp>
#include <espf/possibility.hpp>
#include <espf/sparse_grid.hpp>
#include <espf/types.hpp>
#include <espf/unscented.hpp>

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace espf {

// =============================================================================
// Configuration
// =============================================================================

enum class Generation { axis, smolyak };

/// How a residual is scored against the admissible residual region.
enum class CompatibilityRule {
    binary, ///< 1 inside the ellipsoid, 0 outside
    graded  ///< exp(-alpha * d^2 / (2 r^2)) on the Mahalanobis residual
};

/// How prior plausibility and evidence are combined.
enum class FusionRule {
    min,    ///< ordinal sup-min update with pruning and adaptive regeneration
    product ///< Gaussian-limit preset: unscented placement and moment fusion
};

template <typename Scalar> struct EspfConfig {
    Scalar eta = Scalar(0.99);       ///< necessity level of the residual gate
    Scalar s_threshold = Scalar(5);  ///< surprisal above which a point is pruned
    Scalar epsilon = Scalar(kSurprisalEpsilon);
    Scalar sigma0 = Scalar(1);
    Scalar sigma_min = Scalar(0.1);
    Scalar sigma_max = Scalar(3);
    Scalar lambda_d = Scalar(0);     ///< dispersion gain
    Scalar lambda_s = Scalar(0);     ///< surprisal gain
    Scalar lambda_t = Scalar(0);     ///< temporal decay rate
    Scalar lambda_plus = Scalar(0);  ///< radius gain on expansion
    Scalar lambda_minus = Scalar(0); ///< radius gain on contraction
    Scalar s_ref = Scalar(0);
    Scalar s0 = Scalar(1);
    Scalar alpha = Scalar(1);        ///< surprisal-to-possibility sensitivity (graded rule)
    Generation generation = Generation::smolyak;
    int smolyak_level = 2;
    Index min_survivors = 0;         ///< 0 means n + 1
    CompatibilityRule compatibility = CompatibilityRule::binary;
    FusionRule fusion = FusionRule::min;
    Scalar necessity_floor = Scalar(1e-3);
    Scalar regularization = Scalar(kDefaultRegularization); ///< state-space loading
    /// Measurement-space loading, relative to the mean sensor variance.
    Scalar measurement_regularization = Scalar(1e-6);
    UnscentedParams unscented{};

    Index survivor_floor(Index dim) const { return min_survivors > 0 ? min_survivors : dim + 1; }

    void validate() const {
        auto fail = [](const std::string &why) { throw ArgumentError("EspfConfig: " + why); };
        if (!(eta > Scalar(0) && eta < Scalar(1))) fail("eta must lie in (0,1)");
        if (!(sigma_min > Scalar(0) && sigma_min <= sigma0 && sigma0 <= sigma_max)) {
            fail("require 0 < sigma_min <= sigma0 <= sigma_max");
        }
        for (Scalar g : {lambda_d, lambda_s, lambda_t, lambda_plus, lambda_minus}) {
            if (!(g >= Scalar(0))) fail("gains must be non-negative");
        }
        if (!(epsilon > Scalar(0))) fail("epsilon must be positive");
        if (!(alpha > Scalar(0))) fail("alpha must be positive");
        if (!(necessity_floor > Scalar(0) && necessity_floor <= Scalar(1))) fail("necessity_floor must lie in (0,1]");
        if (!(regularization > Scalar(0)) || !(measurement_regularization > Scalar(0))) {
            fail("regularization must be positive");
        }
        if (smolyak_level < 1) fail("smolyak_level must be >= 1");
        if (min_survivors < 0) fail("min_survivors must be >= 1 (or 0 for n+1)");
        if (s_threshold != s_threshold) fail("s_threshold is NaN");
    }

    /// Settings under which the cycle reproduces the unscented Kalman filter.
    static EspfConfig gaussian_limit(const UnscentedParams &ut = {}) {
        EspfConfig c;
        c.fusion = FusionRule::product;
        c.compatibility = CompatibilityRule::graded;
        c.generation = Generation::axis;
        c.s_threshold = std::numeric_limits<Scalar>::infinity();
        c.lambda_d = c.lambda_s = c.lambda_t = c.lambda_plus = c.lambda_minus = Scalar(0);
        c.unscented = ut;
        return c;
    }
};

// =============================================================================
// State
// =============================================================================

using AliveMask = Eigen::Array<bool, Eigen::Dynamic, 1>;

template <typename Scalar> struct SupportEnsemble {
    PointSet<Scalar> points;      ///< n x M
    Vector<Scalar> plausibility;  ///< pi^(i)
    Vector<Scalar> compatibility; ///< Comp^(i)
    Vector<Scalar> surprisal;     ///< -log(Comp^(i) + eps)
    Vector<Scalar> necessity;     ///< N^(i)
    AliveMask alive;
    UnscentedWeights<Scalar> weights; ///< product fusion only

    Index size() const { return points.cols(); }
    Index live_count() const { return alive.count(); }

    std::vector<Index> live_indices() const {
        std::vector<Index> out;
        for (Index i = 0; i < size(); ++i)
            if (alive[i]) out.push_back(i);
        return out;
    }

    PointSet<Scalar> live_points() const {
        const auto idx = live_indices();
        PointSet<Scalar> out(points.rows(), static_cast<Index>(idx.size()));
        for (std::size_t j = 0; j < idx.size(); ++j) out.col(static_cast<Index>(j)) = points.col(idx[j]);
        return out;
    }
};

template <typename Scalar> struct EspfState {
    Vector<Scalar> mode;
    SpreadMatrix<Scalar> spread;
    Scalar sigma = Scalar(1);
    Scalar prev_dispersion = Scalar(0); ///< D_{k-1}
    Scalar radius = Scalar(1);          ///< kernel radius r_k of the last regeneration
    Index tau = 0;                      ///< assimilations since (re)initialization
    SupportEnsemble<Scalar> ensemble;
    Hyperrectangle<Scalar> box;

    Index dim() const { return mode.size(); }
};

template <typename Scalar> struct UpdateDiagnostics {
    Index evaluated = 0;              ///< live points scored against the measurement
    Index pruned = 0;
    Scalar mean_surprisal = Scalar(0);
    Scalar necessity_retention = Scalar(0); ///< share of evaluated points left with pi*N > 0
    Scalar gate_radius = Scalar(0);
    Vector<Scalar> compatibility;     ///< per point (0 for points not evaluated)
    Vector<Scalar> surprisal;
    Vector<Scalar> prior_plausibility;
    Vector<Scalar> posterior_plausibility;
    Vector<Scalar> necessity;
    Vector<Scalar> weights;           ///< mode weights (UT mean weights under product fusion)
    AliveMask pruned_mask;
    Matrix<Scalar> residual_shape;    ///< Pi_e (S under product fusion)
};

/// Bounded perturbation description: a box for ordinal fusion, a spread for product fusion.
template <typename Scalar> struct ProcessNoise {
    Hyperrectangle<Scalar> box;
    Matrix<Scalar> spread;

    static ProcessNoise none(Index n) {
        return {Hyperrectangle<Scalar>(Vector<Scalar>::Zero(n), Vector<Scalar>::Zero(n)),
                Matrix<Scalar>::Zero(n, n)};
    }
    static ProcessNoise from_box(const Hyperrectangle<Scalar> &box) {
        return {box, Matrix<Scalar>::Zero(box.dim(), box.dim())};
    }
    static ProcessNoise from_spread(const Matrix<Scalar> &spread) {
        const Index n = spread.rows();
        return {Hyperrectangle<Scalar>(Vector<Scalar>::Zero(n), Vector<Scalar>::Zero(n)), spread};
    }
};

// =============================================================================
// Building blocks
// =============================================================================

/**
 * @brief Singleton necessities over the live points
 *
 * N^(i) = max(1 - max_{j != i, alive} pi^(j), floor) for live i; 0 for dead points.
 */
template <typename Scalar>
Vector<Scalar> singleton_necessity(const Vector<Scalar> &plausibility, const AliveMask &alive,
                                   Scalar floor) {
    const Index m = plausibility.size();
    detail::require_same_size(m, alive.size(), "singleton_necessity");
    Vector<Scalar> live_field = Vector<Scalar>::Zero(m);
    for (Index i = 0; i < m; ++i)
        if (alive[i]) live_field[i] = plausibility[i];
    const PossibilityField<Scalar> field(live_field);
    Vector<Scalar> out = Vector<Scalar>::Zero(m);
    for (Index i = 0; i < m; ++i) {
        if (!alive[i]) continue;
        const Index singleton[] = {i};
        out[i] = std::max(necessity(field, std::span<const Index>(singleton)), floor);
    }
    return out;
}

/// Convex weights pi^(i) N^(i) / sum_j pi^(j) N^(j) over live points.
template <typename Scalar>
Vector<Scalar> mode_weights(const Vector<Scalar> &plausibility, const Vector<Scalar> &necessity,
                            const AliveMask &alive) {
    Vector<Scalar> w = Vector<Scalar>::Zero(plausibility.size());
    for (Index i = 0; i < w.size(); ++i)
        if (alive[i]) w[i] = plausibility[i] * necessity[i];
    const Scalar total = w.sum();
    if (!(total > Scalar(0))) {
        throw TotalIncompatibilityError("mode extraction: every live point has zero weight");
    }
    return w / total;
}

namespace detail {

template <typename Scalar, typename Model>
Vector<Scalar> apply_model(Model &model, const Eigen::Ref<const Vector<Scalar>> &x, Index point) {
    Vector<Scalar> out;
    try {
        out = model(Vector<Scalar>(x));
    } catch (const std::exception &e) {
        throw PropagationError(point, e.what());
    }
    if (!out.allFinite()) throw PropagationError(point, "model returned non-finite values");
    return out;
}

template <typename Scalar>
void reset_ensemble_scores(SupportEnsemble<Scalar> &e, Scalar epsilon, Scalar floor) {
    const Index m = e.size();
    e.alive = AliveMask::Constant(m, true);
    e.compatibility = Vector<Scalar>::Ones(m);
    e.surprisal = Vector<Scalar>::Constant(m, surprisal(Scalar(1), epsilon));
    e.necessity = singleton_necessity(e.plausibility, e.alive, floor);
}

/// x +/- scale * L_i around `mode`, center first.
template <typename Scalar>
PointSet<Scalar> symmetric_points(const Vector<Scalar> &mode, const Matrix<Scalar> &factor, Scalar scale) {
    const Index n = mode.size();
    PointSet<Scalar> pts = mode.replicate(1, 2 * n + 1);
    for (Index i = 0; i < n; ++i) {
        pts.col(1 + i) += scale * factor.col(i);
        pts.col(1 + n + i) -= scale * factor.col(i);
    }
    return pts;
}

template <typename Scalar>
void place_unscented(EspfState<Scalar> &s, const EspfConfig<Scalar> &config) {
    const Index n = s.dim();
    auto &e = s.ensemble;
    e.weights = UnscentedWeights<Scalar>::make(n, config.unscented);
    const Scalar scale = static_cast<Scalar>(config.unscented.spread_scale(n));
    e.points = symmetric_points(s.mode, s.spread.cholesky(), scale);
    s.sigma = scale;
    e.plausibility.resize(e.points.cols());
    for (Index i = 0; i < e.points.cols(); ++i) {
        e.plausibility[i] = kernel_plausibility<Scalar>(e.points.col(i), s.mode, s.spread, Scalar(1));
    }
    reset_ensemble_scores(e, config.epsilon, config.necessity_floor);
    s.box = Hyperrectangle<Scalar>::bounding(e.points);
}

} // namespace detail

// =============================================================================
// Initialization
// =============================================================================

/**
 * @brief Uniform support over a box
 *
 * Points come from the configured generation scheme; every point is fully
 * plausible and the mode is the box center.
 */
template <typename Scalar>
EspfState<Scalar> initialize(const Hyperrectangle<Scalar> &box, const EspfConfig<Scalar> &config) {
    config.validate();
    if (box.dim() < 1) throw ArgumentError("initialize: empty state dimension");
    if (box.degenerate()) throw ArgumentError("initialize: support box is degenerate on every axis");

    EspfState<Scalar> s;
    s.box = box;
    s.mode = box.center();
    s.sigma = config.sigma0;
    s.tau = 0;
    s.radius = plausibility_radius(config.eta);

    auto &e = s.ensemble;
    if (config.generation == Generation::axis) {
        e.points = axis_support_points(box);
    } else {
        e.points = map_to_box(smolyak_grid<Scalar>(box.dim(), config.smolyak_level), box);
    }
    e.plausibility = Vector<Scalar>::Ones(e.points.cols());
    detail::reset_ensemble_scores(e, config.epsilon, config.necessity_floor);

    s.spread = estimate_spread(e.points, s.mode, config.regularization);
    s.prev_dispersion = s.spread.log_det();

    if (config.fusion == FusionRule::product) detail::place_unscented(s, config);
    return s;
}

/// Support regenerated around a given mode and spread (x +/- sigma0 L_i, or unscented placement).
template <typename Scalar>
EspfState<Scalar> initialize_from_kernel(const Vector<Scalar> &mode, const Matrix<Scalar> &spread,
                                         const EspfConfig<Scalar> &config) {
    config.validate();
    detail::require_same_size(mode.size(), spread.rows(), "initialize_from_kernel");
    EspfState<Scalar> s;
    s.mode = mode;
    s.spread = SpreadMatrix<Scalar>(spread, config.regularization);
    s.prev_dispersion = s.spread.log_det();
    s.tau = 0;
    s.radius = plausibility_radius(config.eta);
    if (config.fusion == FusionRule::product) {
        detail::place_unscented(s, config);
        return s;
    }
    s.sigma = config.sigma0;
    auto &e = s.ensemble;
    e.points = detail::symmetric_points(mode, s.spread.cholesky(), s.sigma);
    e.plausibility.resize(e.points.cols());
    for (Index i = 0; i < e.points.cols(); ++i) {
        e.plausibility[i] = kernel_plausibility<Scalar>(e.points.col(i), mode, s.spread, s.radius);
    }
    detail::reset_ensemble_scores(e, config.epsilon, config.necessity_floor);
    s.box = Hyperrectangle<Scalar>::bounding(e.points);
    return s;
}

// =============================================================================
// Prediction
// =============================================================================

/**
 * @brief Propagate the support through the process model
 *
 * Each live point is mapped through `process`; the support box becomes the
 * bounding box of the images Minkowski-summed with the noise box. Plausibilities
 * are unchanged. Under product fusion the weighted moments plus the noise spread
 * replace mode and spread, and points are re-placed around them.
 */
template <typename Scalar, typename Process>
EspfState<Scalar> predict(const EspfState<Scalar> &state, Process &&process,
                          const ProcessNoise<Scalar> &noise, const EspfConfig<Scalar> &config) {
    const Index n = state.dim();
    detail::require_same_size(noise.box.dim(), n, "predict noise box");
    EspfState<Scalar> next = state;
    auto &e = next.ensemble;

    for (Index i = 0; i < e.size(); ++i) {
        if (!e.alive[i]) continue;
        Vector<Scalar> image = detail::apply_model<Scalar>(process, e.points.col(i), i);
        detail::require_same_size(image.size(), n, "process model output");
        e.points.col(i) = image;
    }

    if (config.fusion == FusionRule::product) {
        detail::require_same_size(noise.spread.rows(), n, "predict noise spread");
        const auto &w = e.weights;
        Vector<Scalar> mean = w.weighted_mean(e.points);
        const Matrix<Scalar> centered = e.points.colwise() - mean;
        Matrix<Scalar> cov = centered * w.cov.asDiagonal() * centered.transpose() + noise.spread;
        next.mode = std::move(mean);
        next.spread = SpreadMatrix<Scalar>(cov, config.regularization);
        detail::place_unscented(next, config);
        next.box = next.box + noise.box;
        return next;
    }

    next.mode = detail::apply_model<Scalar>(process, state.mode, -1);
    next.box = Hyperrectangle<Scalar>::bounding(e.live_points()) + noise.box;
    next.mode = next.box.clamp(next.mode);
    return next;
}

// =============================================================================
// Measurement update
// =============================================================================

template <typename Scalar> struct UpdateResult {
    EspfState<Scalar> state;
    UpdateDiagnostics<Scalar> diagnostics;
};

namespace detail {

template <typename Scalar, typename Measurement>
UpdateResult<Scalar> update_product(const EspfState<Scalar> &state, const Vector<Scalar> &y,
                                    Measurement &h, const SpreadMatrix<Scalar> &meas_spread,
                                    const EspfConfig<Scalar> &config) {
    EspfState<Scalar> next = state;
    auto &e = next.ensemble;
    const Index m_pts = e.size();
    const Index m = y.size();
    detail::require_same_size(meas_spread.dim(), m, "update measurement spread");

    Matrix<Scalar> gamma(m, m_pts);
    for (Index i = 0; i < m_pts; ++i) gamma.col(i) = apply_model<Scalar>(h, e.points.col(i), i);

    const auto &w = e.weights;
    const Vector<Scalar> y_hat = w.weighted_mean(gamma);
    const Matrix<Scalar> dy = gamma.colwise() - y_hat;
    const Matrix<Scalar> dx = e.points.colwise() - state.mode;
    const Matrix<Scalar> innovation_cov = dy * w.cov.asDiagonal() * dy.transpose() + meas_spread.matrix();
    const Matrix<Scalar> cross = dx * w.cov.asDiagonal() * dy.transpose();

    const SpreadMatrix<Scalar> s_spread(innovation_cov, config.regularization);
    // K = Pxy S^-1 through the factor of S.
    const Eigen::LLT<Matrix<Scalar>> s_llt(s_spread.matrix());
    if (s_llt.info() != Eigen::Success) throw NumericalDegeneracyError("update: innovation spread not invertible");
    const Matrix<Scalar> gain = s_llt.solve(cross.transpose()).transpose();

    next.mode = state.mode + gain * (y - y_hat);
    const Matrix<Scalar> posterior = state.spread.matrix() - gain * s_spread.matrix() * gain.transpose();
    next.spread = SpreadMatrix<Scalar>(posterior, config.regularization);

    UpdateDiagnostics<Scalar> d;
    d.evaluated = m_pts;
    d.gate_radius = Scalar(1);
    d.residual_shape = s_spread.matrix();
    d.prior_plausibility = e.plausibility;
    d.compatibility.resize(m_pts);
    d.surprisal.resize(m_pts);
    for (Index i = 0; i < m_pts; ++i) {
        const Scalar d2 = s_spread.mahalanobis2(y - gamma.col(i));
        d.compatibility[i] = possibility_from_surprisal(d2 / Scalar(2), config.alpha);
        d.surprisal[i] = surprisal(d.compatibility[i], config.epsilon);
    }
    Vector<Scalar> fused = e.plausibility.cwiseProduct(d.compatibility);
    d.posterior_plausibility = fused.maxCoeff() > Scalar(0) ? Vector<Scalar>(fused / fused.maxCoeff()) : fused;
    d.mean_surprisal = d.surprisal.mean();
    d.pruned_mask = AliveMask::Constant(m_pts, false);
    d.necessity = singleton_necessity(d.posterior_plausibility, e.alive, config.necessity_floor);
    d.weights = w.mean;
    d.necessity_retention = Scalar(1);

    e.compatibility = d.compatibility;
    e.surprisal = d.surprisal;
    e.plausibility = d.posterior_plausibility;
    e.necessity = d.necessity;
    return {std::move(next), std::move(d)};
}

} // namespace detail

/**
 * @brief Ordinal measurement update
 *
 * Maps live points into measurement space, gates residuals against the outer
 * bound of the predicted-measurement spread and the sensor spread, prunes by
 * surprisal (never below the survivor floor), fuses by pointwise min and
 * extracts the necessity-weighted mode. Throws TotalIncompatibilityError when
 * no live point is compatible.
 */
template <typename Scalar, typename Measurement>
UpdateResult<Scalar> update(const EspfState<Scalar> &state, const Vector<Scalar> &y, Measurement &&h,
                            const SpreadMatrix<Scalar> &meas_spread, const EspfConfig<Scalar> &config) {
    if (config.fusion == FusionRule::product) {
        return detail::update_product(state, y, h, meas_spread, config);
    }

    const std::vector<Index> live = state.ensemble.live_indices();
    if (live.empty()) throw StructuralError("update: no live support points");
    const Index m = y.size();
    detail::require_same_size(meas_spread.dim(), m, "update measurement spread");

    EspfState<Scalar> next = state;
    auto &e = next.ensemble;
    const Index m_pts = e.size();
    const Index n_live = static_cast<Index>(live.size());

    // 1. predicted measurements
    Matrix<Scalar> gamma(m, n_live);
    for (Index j = 0; j < n_live; ++j) {
        gamma.col(j) = detail::apply_model<Scalar>(h, e.points.col(live[j]), live[j]);
        detail::require_same_size(gamma.rows(), m, "measurement model output");
    }

    // 2. joint residual region
    const Scalar meas_eps = config.measurement_regularization *
                            std::max(meas_spread.trace() / static_cast<Scalar>(m), std::numeric_limits<Scalar>::min());
    const Vector<Scalar> gamma_mean = gamma.rowwise().mean();
    const SpreadMatrix<Scalar> predicted_spread = estimate_spread(gamma, gamma_mean, meas_eps);
    const ResidualEllipsoid<Scalar> region(minkowski_outer_bound(predicted_spread, meas_spread, meas_eps),
                                           plausibility_radius(config.eta));

    UpdateDiagnostics<Scalar> d;
    d.evaluated = n_live;
    d.gate_radius = region.radius;
    d.residual_shape = region.shape.matrix();
    d.prior_plausibility = e.plausibility;
    d.compatibility = Vector<Scalar>::Zero(m_pts);
    d.surprisal = Vector<Scalar>::Zero(m_pts);
    d.pruned_mask = AliveMask::Constant(m_pts, false);

    // 3-4. compatibility and surprisal
    Vector<Scalar> distance2 = Vector<Scalar>::Zero(m_pts);
    for (Index j = 0; j < n_live; ++j) {
        const Index i = live[j];
        const Vector<Scalar> residual = y - gamma.col(j);
        distance2[i] = region.shape.mahalanobis2(residual);
        if (config.compatibility == CompatibilityRule::binary) {
            d.compatibility[i] = uniform_compatibility(residual, region);
        } else {
            d.compatibility[i] = possibility_from_surprisal(
                distance2[i] / (Scalar(2) * region.radius * region.radius), config.alpha);
        }
        d.surprisal[i] = surprisal(d.compatibility[i], config.epsilon);
    }
    Scalar surprisal_sum = Scalar(0);
    for (Index i : live) surprisal_sum += d.surprisal[i];
    d.mean_surprisal = surprisal_sum / static_cast<Scalar>(n_live);

    // pruning, never below the survivor floor
    std::vector<Index> candidates;
    for (Index i : live)
        if (d.surprisal[i] > config.s_threshold) candidates.push_back(i);
    const Index floor = std::min(config.survivor_floor(state.dim()), n_live);
    const Index keep_back = std::max<Index>(0, floor - (n_live - static_cast<Index>(candidates.size())));
    std::stable_sort(candidates.begin(), candidates.end(), [&](Index a, Index b) {
        if (d.surprisal[a] != d.surprisal[b]) return d.surprisal[a] < d.surprisal[b];
        return distance2[a] < distance2[b];
    });
    for (std::size_t c = static_cast<std::size_t>(keep_back); c < candidates.size(); ++c) {
        e.alive[candidates[c]] = false;
        d.pruned_mask[candidates[c]] = true;
    }
    d.pruned = static_cast<Index>(candidates.size()) - keep_back;

    // 5. sup-min fusion on the survivors
    Vector<Scalar> evidence = Vector<Scalar>::Zero(m_pts);
    for (Index i = 0; i < m_pts; ++i)
        if (e.alive[i]) evidence[i] = d.compatibility[i];
    Vector<Scalar> prior_live = Vector<Scalar>::Zero(m_pts);
    for (Index i = 0; i < m_pts; ++i)
        if (e.alive[i]) prior_live[i] = e.plausibility[i];
    const PossibilityField<Scalar> posterior =
        min_join(PossibilityField<Scalar>(prior_live), PossibilityField<Scalar>(evidence));
    if (!(posterior.sup() > Scalar(0))) {
        throw TotalIncompatibilityError("update: measurement is incompatible with the entire support");
    }
    d.posterior_plausibility = posterior.values();

    // 6-7. necessity and mode
    d.necessity = singleton_necessity(d.posterior_plausibility, e.alive, config.necessity_floor);
    d.weights = mode_weights(d.posterior_plausibility, d.necessity, e.alive);
    next.mode = e.points * d.weights;

    Index retained = 0;
    for (Index i : live)
        if (e.alive[i] && d.posterior_plausibility[i] * d.necessity[i] > Scalar(0)) ++retained;
    d.necessity_retention = static_cast<Scalar>(retained) / static_cast<Scalar>(n_live);

    e.compatibility = d.compatibility;
    e.surprisal = d.surprisal;
    e.plausibility = d.posterior_plausibility;
    e.necessity = d.necessity;
    return {std::move(next), std::move(d)};
}

// =============================================================================
// Regeneration
// =============================================================================

/**
 * @brief Re-encode the posterior as a fresh support around the mode
 *
 * Spread from the survivors, dispersion-driven radius adaptation, surprisal- and
 * dispersion-driven point spread with clamping and temporal decay, then
 * x +/- sigma_k L_i with kernel plausibilities.
 */
template <typename Scalar>
EspfState<Scalar> regenerate(const EspfState<Scalar> &state, const EspfConfig<Scalar> &config) {
    if (config.fusion == FusionRule::product) {
        EspfState<Scalar> next = state;
        detail::place_unscented(next, config);
        return next;
    }
    const auto &e = state.ensemble;
    const std::vector<Index> live = e.live_indices();
    if (live.empty()) throw StructuralError("regenerate: no surviving support points");

    EspfState<Scalar> next = state;
    next.spread = estimate_spread(e.live_points(), state.mode, config.regularization);

    const Scalar dispersion = next.spread.log_det();
    const Scalar delta = dispersion - state.prev_dispersion;
    Scalar factor = Scalar(1);
    if (delta > Scalar(0)) factor = Scalar(1) + config.lambda_plus * delta;
    if (delta < Scalar(0)) factor = Scalar(1) - config.lambda_minus * (-delta);
    factor = std::max(factor, Scalar(0.1));
    next.radius = plausibility_radius(config.eta) * factor;

    Scalar mean_surprisal = Scalar(0);
    for (Index i : live) mean_surprisal += e.surprisal[i];
    mean_surprisal /= static_cast<Scalar>(live.size());
    const Scalar scaled_surprisal =
        config.s0 * (Scalar(1) + config.lambda_s * (mean_surprisal - config.s_ref));
    const Scalar sigma_raw =
        config.sigma0 * std::exp(-config.lambda_d * dispersion +
                                 config.lambda_s * (scaled_surprisal - config.s_ref));
    Scalar sigma = std::clamp(std::isnan(sigma_raw) ? config.sigma0 : sigma_raw, config.sigma_min,
                              config.sigma_max);
    sigma *= std::exp(-config.lambda_t * static_cast<Scalar>(state.tau));
    next.sigma = sigma;
    next.prev_dispersion = dispersion;

    auto &ne = next.ensemble;
    ne.points = detail::symmetric_points(state.mode, next.spread.cholesky(), sigma);
    ne.plausibility.resize(ne.points.cols());
    for (Index i = 0; i < ne.points.cols(); ++i) {
        ne.plausibility[i] = kernel_plausibility<Scalar>(ne.points.col(i), state.mode, next.spread, next.radius);
    }
    ne.plausibility = PossibilityField<Scalar>(ne.plausibility).normalized().values();
    detail::reset_ensemble_scores(ne, config.epsilon, config.necessity_floor);
    next.box = Hyperrectangle<Scalar>::bounding(ne.points);
    return next;
}

// =============================================================================
// Full cycle
// =============================================================================

template <typename Scalar> struct StepResult {
    EspfState<Scalar> state;
    std::optional<UpdateDiagnostics<Scalar>> diagnostics;
};

/// Predict, then update and regenerate when a measurement is present.
template <typename Scalar, typename Process, typename Measurement>
StepResult<Scalar> step(const EspfState<Scalar> &state, Process &&process, const ProcessNoise<Scalar> &noise,
                        const std::optional<Vector<Scalar>> &measurement, Measurement &&h,
                        const SpreadMatrix<Scalar> &meas_spread, const EspfConfig<Scalar> &config) {
    EspfState<Scalar> predicted = predict(state, process, noise, config);
    if (!measurement) return {std::move(predicted), std::nullopt};
    UpdateResult<Scalar> updated = update(predicted, *measurement, h, meas_spread, config);
    EspfState<Scalar> next = regenerate(updated.state, config);
    next.tau = state.tau + 1;
    return {std::move(next), std::move(updated.diagnostics)};
}

} // namespace espf
