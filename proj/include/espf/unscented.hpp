// Scaled unscented transform parameters and weights
#pragma once

#include <espf/types.hpp>

#include <cmath>

namespace espf {

/// Scaled unscented transform tuning (alpha, beta, kappa).
struct UnscentedParams {
    double alpha = 1e-3;
    double beta = 2.0;
    double kappa = 0.0;

    double lambda(Index n) const {
        return alpha * alpha * (static_cast<double>(n) + kappa) - static_cast<double>(n);
    }
    /// Column scale sqrt(n + lambda) applied to the Cholesky factor.
    double spread_scale(Index n) const {
        return alpha * std::sqrt(static_cast<double>(n) + kappa);
    }
};

template <typename Scalar> struct UnscentedWeights {
    Vector<Scalar> mean; ///< w_m, sums to 1
    Vector<Scalar> cov;  ///< w_c
    UnscentedParams params;

    static UnscentedWeights make(Index n, const UnscentedParams &params) {
        // n + lambda = alpha^2 (n + kappa), formed without the cancellation in n + lambda.
        const Scalar a2 = static_cast<Scalar>(params.alpha * params.alpha);
        const Scalar denom = a2 * (static_cast<Scalar>(n) + static_cast<Scalar>(params.kappa));
        if (!(denom > Scalar(0))) throw ArgumentError("unscented transform: n + lambda must be positive");
        UnscentedWeights w;
        w.params = params;
        w.mean = Vector<Scalar>::Constant(2 * n + 1, Scalar(1) / (Scalar(2) * denom));
        w.cov = w.mean;
        w.mean[0] = Scalar(1) - static_cast<Scalar>(n) / denom;
        w.cov[0] = w.mean[0] + (Scalar(1) - a2 + static_cast<Scalar>(params.beta));
        return w;
    }

    /// sum_i w_m^(i) y_i evaluated as y_0 + sum_{i>0} w_m^(i) (y_i - y_0).
    Vector<Scalar> weighted_mean(const Matrix<Scalar> &y) const {
        const Vector<Scalar> y0 = y.col(0);
        return y0 + (y.rightCols(y.cols() - 1).colwise() - y0) * mean.tail(mean.size() - 1);
    }
};

} // namespace espf
