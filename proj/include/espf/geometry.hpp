// Epistemic Geometry - spread matrices, ellipsoids, radius and kernel
#pragma once

#include <espf/types.hpp>

#include <cmath>
#include <string>

namespace espf {

/// Base diagonal loading used to keep spread matrices positive definite.
inline constexpr double kDefaultRegularization = 1e-6;
inline constexpr int kMaxRegularizationRetries = 10;

// =============================================================================
// Regularized Cholesky
// =============================================================================

template <typename Scalar> struct CholeskyResult {
    Matrix<Scalar> lower;      ///< L with L L^T = matrix + jitter * I
    Scalar jitter = Scalar(0); ///< diagonal loading that was needed (0 if none)
};

namespace detail {

template <typename Scalar>
bool try_cholesky(const Matrix<Scalar> &m, Matrix<Scalar> &lower) {
    Eigen::LLT<Matrix<Scalar>> llt(m);
    if (llt.info() != Eigen::Success) return false;
    lower = llt.matrixL();
    const Scalar scale = m.diagonal().cwiseAbs().maxCoeff();
    for (Index i = 0; i < lower.rows(); ++i) {
        const Scalar d = lower(i, i);
        // Pivots at rounding level mean the factor is not usable downstream.
        if (!std::isfinite(d) || !(d * d > Scalar(1e-15) * scale)) return false;
    }
    return true;
}

} // namespace detail

/**
 * @brief Cholesky factor with escalating diagonal loading
 *
 * Tries the matrix as given, then adds epsilon*I, 2*epsilon*I, 4*epsilon*I, ...
 * up to kMaxRegularizationRetries attempts.
 */
template <typename Derived>
CholeskyResult<typename Derived::Scalar>
regularized_cholesky(const Eigen::MatrixBase<Derived> &matrix,
                     typename Derived::Scalar epsilon = kDefaultRegularization) {
    using Scalar = typename Derived::Scalar;
    if (matrix.rows() != matrix.cols()) throw StructuralError("regularized_cholesky: matrix is not square");
    if (matrix.rows() == 0) throw StructuralError("regularized_cholesky: empty matrix");
    if (!matrix.allFinite()) throw NumericalDegeneracyError("regularized_cholesky: non-finite entries");

    const Matrix<Scalar> sym = Scalar(0.5) * (matrix + matrix.transpose());
    const Index n = sym.rows();
    CholeskyResult<Scalar> out;
    if (detail::try_cholesky(sym, out.lower)) return out;

    Scalar jitter = epsilon;
    for (int retry = 0; retry < kMaxRegularizationRetries; ++retry, jitter *= Scalar(2)) {
        const Matrix<Scalar> loaded = sym + jitter * Matrix<Scalar>::Identity(n, n);
        if (detail::try_cholesky(loaded, out.lower)) {
            out.jitter = jitter;
            return out;
        }
    }
    throw NumericalDegeneracyError("regularized_cholesky: matrix remains indefinite after " +
                                   std::to_string(kMaxRegularizationRetries) + " escalations");
}

// =============================================================================
// Spread matrix
// =============================================================================

/**
 * @brief Symmetric positive-definite spread tensor with its factor
 *
 * Holds the (possibly diagonally loaded) matrix, its lower Cholesky factor and
 * the dispersion log det.
 */
template <typename Scalar> class SpreadMatrix {
public:
    SpreadMatrix() = default;

    explicit SpreadMatrix(const Matrix<Scalar> &matrix, Scalar epsilon = kDefaultRegularization) {
        CholeskyResult<Scalar> chol = regularized_cholesky(matrix, epsilon);
        const Index n = matrix.rows();
        matrix_ = Scalar(0.5) * (matrix + matrix.transpose()) + chol.jitter * Matrix<Scalar>::Identity(n, n);
        lower_ = std::move(chol.lower);
        log_det_ = Scalar(2) * lower_.diagonal().array().log().sum();
    }

    static SpreadMatrix diagonal(const Vector<Scalar> &variances) {
        return SpreadMatrix(variances.asDiagonal().toDenseMatrix());
    }

    Index dim() const { return matrix_.rows(); }
    const Matrix<Scalar> &matrix() const { return matrix_; }
    const Matrix<Scalar> &cholesky() const { return lower_; }
    Scalar log_det() const { return log_det_; }
    Scalar trace() const { return matrix_.trace(); }

    /// Squared Mahalanobis length v^T M^-1 v via the factor.
    template <typename Derived> Scalar mahalanobis2(const Eigen::MatrixBase<Derived> &v) const {
        detail::require_same_size(v.size(), dim(), "SpreadMatrix::mahalanobis2");
        const Vector<Scalar> w = lower_.template triangularView<Eigen::Lower>().solve(v);
        return w.squaredNorm();
    }

private:
    Matrix<Scalar> matrix_;
    Matrix<Scalar> lower_;
    Scalar log_det_ = Scalar(0);
};

/**
 * @brief Directional spread of a point cloud about a mode
 *
 * (1/M) sum_j (x_j - mode)(x_j - mode)^T + epsilon I over the M columns of
 * `points`.
 */
template <typename Scalar>
SpreadMatrix<Scalar> estimate_spread(const PointSet<Scalar> &points, const Vector<Scalar> &mode,
                                     Scalar epsilon = kDefaultRegularization) {
    if (points.cols() < 1) throw StructuralError("estimate_spread: no points");
    detail::require_same_size(points.rows(), mode.size(), "estimate_spread");
    const Matrix<Scalar> centered = points.colwise() - mode;
    Matrix<Scalar> pi = centered * centered.transpose() / static_cast<Scalar>(points.cols());
    pi.diagonal().array() += epsilon;
    return SpreadMatrix<Scalar>(pi, epsilon);
}

// =============================================================================
// Radius, Minkowski bound, compatibility, kernel
// =============================================================================

/// r = sqrt(-2 ln(1 - eta)) for a necessity level eta in (0,1).
template <typename Scalar> Scalar plausibility_radius(Scalar eta) {
    if (!(eta > Scalar(0) && eta < Scalar(1))) {
        throw ArgumentError("plausibility_radius: necessity level must lie in (0,1)");
    }
    return std::sqrt(Scalar(-2) * std::log1p(-eta));
}

/// Inverse of plausibility_radius: eta = 1 - exp(-r^2/2).
template <typename Scalar> Scalar necessity_level(Scalar radius) {
    return -std::expm1(-radius * radius / Scalar(2));
}

/**
 * @brief Trace-minimal outer ellipsoid of the Minkowski sum of two ellipsoids
 *
 * (1 + beta) a + (1 + 1/beta) b with beta = sqrt(tr b / tr a). Falls back to
 * a + b when either trace is zero.
 */
template <typename Scalar>
Matrix<Scalar> minkowski_outer_bound(const Matrix<Scalar> &a, const Matrix<Scalar> &b) {
    detail::require_same_size(a.rows(), b.rows(), "minkowski_outer_bound");
    const Scalar ta = a.trace(), tb = b.trace();
    if (!(ta > Scalar(0)) || !(tb > Scalar(0))) return a + b;
    const Scalar beta = std::sqrt(tb / ta);
    return (Scalar(1) + beta) * a + (Scalar(1) + Scalar(1) / beta) * b;
}

template <typename Scalar>
SpreadMatrix<Scalar> minkowski_outer_bound(const SpreadMatrix<Scalar> &a, const SpreadMatrix<Scalar> &b,
                                           Scalar epsilon = kDefaultRegularization) {
    return SpreadMatrix<Scalar>(minkowski_outer_bound(a.matrix(), b.matrix()), epsilon);
}

/// Admissible residual region {e : e^T shape^-1 e <= radius^2}.
template <typename Scalar> struct ResidualEllipsoid {
    SpreadMatrix<Scalar> shape;
    Scalar radius = Scalar(1);

    ResidualEllipsoid(SpreadMatrix<Scalar> s, Scalar r) : shape(std::move(s)), radius(r) {
        if (!(radius > Scalar(0))) throw ArgumentError("ResidualEllipsoid: radius must be positive");
    }

    template <typename Derived> bool contains(const Eigen::MatrixBase<Derived> &residual) const {
        return shape.mahalanobis2(residual) <= radius * radius;
    }
};

/// Uniform possibility over the admissible residual region: exactly 1 or 0.
template <typename Derived>
typename Derived::Scalar uniform_compatibility(const Eigen::MatrixBase<Derived> &residual,
                                               const ResidualEllipsoid<typename Derived::Scalar> &region) {
    using Scalar = typename Derived::Scalar;
    return region.contains(residual) ? Scalar(1) : Scalar(0);
}

/// Gaussian-shaped possibility kernel exp(-(x-mode)^T spread^-1 (x-mode) / (2 r^2)).
template <typename Scalar>
Scalar kernel_plausibility(const Vector<Scalar> &x, const Vector<Scalar> &mode,
                           const SpreadMatrix<Scalar> &spread, Scalar radius) {
    if (!(radius > Scalar(0))) throw ArgumentError("kernel_plausibility: radius must be positive");
    const Scalar d2 = spread.mahalanobis2(x - mode);
    return std::exp(-d2 / (Scalar(2) * radius * radius));
}

} // namespace espf
