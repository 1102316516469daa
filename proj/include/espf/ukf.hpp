// Unscented Kalman filter baseline and Gaussian-limit comparison
#pragma once

#include <espf/filter.hpp>
#include <espf/geometry.hpp>
#include <espf/types.hpp>
#include <espf/unscented.hpp>

#include <optional>
#include <vector>

namespace espf {

template <typename Scalar> struct GaussianBelief {
    Vector<Scalar> mean;
    Matrix<Scalar> covariance;

    Index dim() const { return mean.size(); }
};

/// 2n+1 scaled sigma points: mean, mean + c L_i, mean - c L_i.
template <typename Scalar>
PointSet<Scalar> sigma_points(const GaussianBelief<Scalar> &belief, const UnscentedParams &params,
                              Scalar regularization = Scalar(kDefaultRegularization)) {
    detail::require_same_size(belief.mean.size(), belief.covariance.rows(), "sigma_points");
    const Matrix<Scalar> lower = regularized_cholesky(belief.covariance, regularization).lower;
    return detail::symmetric_points(belief.mean, lower, static_cast<Scalar>(params.spread_scale(belief.dim())));
}

template <typename Scalar, typename Process>
GaussianBelief<Scalar> ukf_predict(const GaussianBelief<Scalar> &belief, Process &&process,
                                   const Matrix<Scalar> &process_noise, const UnscentedParams &params = {}) {
    const Index n = belief.dim();
    detail::require_same_size(process_noise.rows(), n, "ukf_predict process noise");
    const auto w = UnscentedWeights<Scalar>::make(n, params);
    PointSet<Scalar> chi = sigma_points(belief, params);
    for (Index i = 0; i < chi.cols(); ++i) chi.col(i) = detail::apply_model<Scalar>(process, chi.col(i), i);

    GaussianBelief<Scalar> out;
    out.mean = w.weighted_mean(chi);
    const Matrix<Scalar> centered = chi.colwise() - out.mean;
    out.covariance = centered * w.cov.asDiagonal() * centered.transpose() + process_noise;
    out.covariance = Scalar(0.5) * (out.covariance + out.covariance.transpose());
    return out;
}

/// Innovation quantities of one update, kept for diagnostics.
template <typename Scalar> struct UkfInnovation {
    Vector<Scalar> predicted;   ///< y-hat
    Matrix<Scalar> covariance;  ///< S
    Matrix<Scalar> cross;       ///< Sigma_xy
    Matrix<Scalar> gain;        ///< K
};

template <typename Scalar> struct UkfUpdateResult {
    GaussianBelief<Scalar> belief;
    UkfInnovation<Scalar> innovation;
};

template <typename Scalar, typename Measurement>
UkfUpdateResult<Scalar> ukf_update_detailed(const GaussianBelief<Scalar> &belief, const Vector<Scalar> &y,
                                            Measurement &&h, const Matrix<Scalar> &meas_noise,
                                            const UnscentedParams &params = {}) {
    const Index n = belief.dim();
    const Index m = y.size();
    detail::require_same_size(meas_noise.rows(), m, "ukf_update measurement noise");
    const auto w = UnscentedWeights<Scalar>::make(n, params);
    const PointSet<Scalar> chi = sigma_points(belief, params);

    Matrix<Scalar> gamma(m, chi.cols());
    for (Index i = 0; i < chi.cols(); ++i) gamma.col(i) = detail::apply_model<Scalar>(h, chi.col(i), i);

    UkfInnovation<Scalar> inn;
    inn.predicted = w.weighted_mean(gamma);
    const Matrix<Scalar> dy = gamma.colwise() - inn.predicted;
    const Matrix<Scalar> dx = chi.colwise() - belief.mean;
    inn.covariance = dy * w.cov.asDiagonal() * dy.transpose() + meas_noise;
    inn.cross = dx * w.cov.asDiagonal() * dy.transpose();

    const Eigen::LLT<Matrix<Scalar>> llt(Scalar(0.5) * (inn.covariance + inn.covariance.transpose()));
    if (llt.info() != Eigen::Success) throw NumericalDegeneracyError("ukf_update: innovation covariance is singular");
    inn.gain = llt.solve(inn.cross.transpose()).transpose();

    UkfUpdateResult<Scalar> out;
    out.belief.mean = belief.mean + inn.gain * (y - inn.predicted);
    out.belief.covariance = belief.covariance - inn.gain * inn.covariance * inn.gain.transpose();
    out.belief.covariance = Scalar(0.5) * (out.belief.covariance + out.belief.covariance.transpose());
    out.innovation = std::move(inn);
    return out;
}

template <typename Scalar, typename Measurement>
GaussianBelief<Scalar> ukf_update(const GaussianBelief<Scalar> &belief, const Vector<Scalar> &y, Measurement &&h,
                                  const Matrix<Scalar> &meas_noise, const UnscentedParams &params = {}) {
    return ukf_update_detailed(belief, y, h, meas_noise, params).belief;
}

/**
 * @brief Joseph-stabilized posterior covariance
 *
 * (I - K H) P (I - K H)^T + K R K^T with H = Sigma_xy^T P^-1, the statistical
 * linearization implied by the unscented cross-covariance.
 */
template <typename Scalar>
Matrix<Scalar> joseph_covariance(const Matrix<Scalar> &prior, const UkfInnovation<Scalar> &inn,
                                 const Matrix<Scalar> &meas_noise) {
    const Index n = prior.rows();
    const Matrix<Scalar> h = prior.llt().solve(inn.cross).transpose();
    const Matrix<Scalar> a = Matrix<Scalar>::Identity(n, n) - inn.gain * h;
    return a * prior * a.transpose() + inn.gain * meas_noise * inn.gain.transpose();
}

// =============================================================================
// Gaussian-limit comparison
// =============================================================================

template <typename Scalar> struct GaussianLimitStep {
    Vector<Scalar> espf_mode;
    Vector<Scalar> ukf_mean;
    Scalar mode_discrepancy = Scalar(0);   ///< max-abs difference of mode and mean
    Scalar spread_discrepancy = Scalar(0); ///< Frobenius norm of spread minus covariance
};

template <typename Scalar> struct GaussianLimitReport {
    std::vector<GaussianLimitStep<Scalar>> steps;
    Scalar max_mode_discrepancy = Scalar(0);
    Scalar max_spread_discrepancy = Scalar(0);
};

/**
 * @brief Run the ESPF Gaussian-limit preset and the UKF on the same inputs
 *
 * One predict per entry of `measurements`, followed by an update whenever the
 * entry holds a value. Discrepancies are recorded after every step.
 */
template <typename Scalar, typename Process, typename Measurement>
GaussianLimitReport<Scalar>
gaussian_limit_espf(const GaussianBelief<Scalar> &belief, Process &&process, Measurement &&h,
                    const Matrix<Scalar> &process_noise, const Matrix<Scalar> &meas_noise,
                    const std::vector<std::optional<Vector<Scalar>>> &measurements,
                    const UnscentedParams &params = {}) {
    const auto config = EspfConfig<Scalar>::gaussian_limit(params);
    EspfState<Scalar> espf = initialize_from_kernel(belief.mean, belief.covariance, config);
    GaussianBelief<Scalar> ukf = belief;
    const auto noise = ProcessNoise<Scalar>::from_spread(process_noise);
    const SpreadMatrix<Scalar> meas_spread(meas_noise, config.regularization);

    GaussianLimitReport<Scalar> report;
    for (const auto &y : measurements) {
        espf = step(espf, process, noise, y, h, meas_spread, config).state;
        ukf = ukf_predict(ukf, process, process_noise, params);
        if (y) ukf = ukf_update(ukf, *y, h, meas_noise, params);

        GaussianLimitStep<Scalar> s;
        s.espf_mode = espf.mode;
        s.ukf_mean = ukf.mean;
        s.mode_discrepancy = (espf.mode - ukf.mean).cwiseAbs().maxCoeff();
        s.spread_discrepancy = (espf.spread.matrix() - ukf.covariance).norm();
        report.max_mode_discrepancy = std::max(report.max_mode_discrepancy, s.mode_discrepancy);
        report.max_spread_discrepancy = std::max(report.max_spread_discrepancy, s.spread_discrepancy);
        report.steps.push_back(std::move(s));
    }
    return report;
}

} // namespace espf
