// Common dense types and error classes for the ESPF library.
#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>

namespace espf {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Points stored column-wise: one column per support point.
template <typename Scalar>
using PointSet = Matrix<Scalar>;

using Index = Eigen::Index;

// =============================================================================
// Errors
// =============================================================================

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Mismatched index sets, empty axes, wrong dimensions.
class StructuralError : public Error {
public:
    using Error::Error;
};

/// A scalar or integer argument outside its admissible range.
class ArgumentError : public Error {
public:
    using Error::Error;
};

/// Evidence rules out every hypothesis: the posterior field is identically 0.
class TotalIncompatibilityError : public Error {
public:
    using Error::Error;
};

/// Matrix stayed indefinite or singular after regularization.
class NumericalDegeneracyError : public Error {
public:
    using Error::Error;
};

/// A process model failed for one support point.
class PropagationError : public Error {
public:
    PropagationError(Index point, const std::string &what)
        : Error("propagation failed at support point " + std::to_string(point) +
                ": " + what),
          point_(point) {}

    Index point() const { return point_; }

private:
    Index point_;
};

namespace detail {

inline void require_same_size(Index a, Index b, const char *what) {
    if (a != b) {
        throw StructuralError(std::string(what) + ": size " + std::to_string(a) +
                              " does not match " + std::to_string(b));
    }
}

} // namespace detail

} // namespace espf
