// Possibility Core - ordinal possibility primitives over finite hypothesis sets
#pragma once

#include <espf/types.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

namespace espf {

/// Default floor added inside the surprisal logarithm.
inline constexpr double kSurprisalEpsilon = 1e-12;

// =============================================================================
// Possibility field
// =============================================================================

/**
 * @brief Discrete possibility distribution over an indexed hypothesis set
 *
 * Values are plausibility degrees in [0,1]. The field is not required to be
 * sup-normalized; call normalized() to obtain a field whose maximum is exactly 1.
 */
template <typename Scalar> class PossibilityField {
public:
    PossibilityField() = default;

    explicit PossibilityField(Vector<Scalar> values) : values_(std::move(values)) {
        for (Index i = 0; i < values_.size(); ++i) {
            const Scalar v = values_[i];
            if (!(v >= Scalar(0) && v <= Scalar(1))) {
                throw ArgumentError("plausibility at hypothesis " + std::to_string(i) +
                                    " is outside [0,1]");
            }
        }
    }

    static PossibilityField uniform(Index size) {
        return PossibilityField(Vector<Scalar>::Ones(size));
    }

    Index size() const { return values_.size(); }
    bool empty() const { return values_.size() == 0; }
    Scalar operator[](Index i) const { return values_[i]; }
    const Vector<Scalar> &values() const { return values_; }

    Scalar sup() const { return empty() ? Scalar(0) : values_.maxCoeff(); }

    /// Sup-normalized copy. Throws TotalIncompatibilityError on an all-zero field.
    PossibilityField normalized() const {
        const Scalar top = sup();
        if (!(top > Scalar(0))) {
            throw TotalIncompatibilityError(
                "possibility field is identically zero; evidence falsifies every hypothesis");
        }
        Vector<Scalar> out = values_ / top;
        for (Index i = 0; i < out.size(); ++i) {
            if (values_[i] == top) out[i] = Scalar(1);
        }
        return PossibilityField(std::move(out));
    }

private:
    Vector<Scalar> values_;
};

// =============================================================================
// Min / sup algebra
// =============================================================================

/// Pointwise minimum of two fields over the same hypothesis set.
template <typename Scalar>
PossibilityField<Scalar> min_join(const PossibilityField<Scalar> &a,
                                  const PossibilityField<Scalar> &b) {
    detail::require_same_size(a.size(), b.size(), "min_join");
    return PossibilityField<Scalar>(a.values().cwiseMin(b.values()));
}

/// Joint field over X x Y under min-independence: table(x, y) = min(a[x], b[y]).
template <typename Scalar>
Matrix<Scalar> min_joint(const PossibilityField<Scalar> &over_x,
                         const PossibilityField<Scalar> &over_y) {
    Matrix<Scalar> table(over_x.size(), over_y.size());
    for (Index x = 0; x < over_x.size(); ++x) {
        for (Index y = 0; y < over_y.size(); ++y) {
            table(x, y) = std::min(over_x[x], over_y[y]);
        }
    }
    return table;
}

enum class Marginal {
    x, ///< keep rows, sup over columns
    y  ///< keep columns, sup over rows
};

/// Sup-projection of a joint table indexed (x, y).
template <typename Derived>
PossibilityField<typename Derived::Scalar> sup_marginal(const Eigen::MatrixBase<Derived> &joint,
                                                        Marginal keep) {
    using Scalar = typename Derived::Scalar;
    if (joint.rows() == 0 || joint.cols() == 0) {
        throw StructuralError("sup_marginal: joint table has an empty axis");
    }
    if (keep == Marginal::x) {
        return PossibilityField<Scalar>(joint.rowwise().maxCoeff());
    }
    return PossibilityField<Scalar>(joint.colwise().maxCoeff().transpose());
}

/**
 * @brief Normalized min-conditioning
 *
 * joint = min(prior, conditional); returns joint unchanged when the observation
 * is fully plausible, otherwise min(1, joint / observed_plausibility).
 */
template <typename Scalar>
PossibilityField<Scalar> condition(const PossibilityField<Scalar> &prior,
                                   const PossibilityField<Scalar> &conditional,
                                   Scalar observed_plausibility) {
    if (observed_plausibility == Scalar(0)) {
        throw TotalIncompatibilityError("condition: observation has zero plausibility");
    }
    if (!(observed_plausibility > Scalar(0) && observed_plausibility <= Scalar(1))) {
        throw ArgumentError("condition: observed plausibility must lie in (0,1]");
    }
    PossibilityField<Scalar> joint = min_join(prior, conditional);
    if (observed_plausibility == Scalar(1)) return joint;
    Vector<Scalar> scaled =
        (joint.values() / observed_plausibility).cwiseMin(Scalar(1));
    return PossibilityField<Scalar>(std::move(scaled));
}

/// N(A) = 1 - sup of the field outside A. Indices in `subset` must be in range.
template <typename Scalar>
Scalar necessity(const PossibilityField<Scalar> &field, std::span<const Index> subset) {
    std::vector<bool> inside(static_cast<std::size_t>(field.size()), false);
    for (Index i : subset) {
        if (i < 0 || i >= field.size()) {
            throw StructuralError("necessity: hypothesis index out of range");
        }
        inside[static_cast<std::size_t>(i)] = true;
    }
    Scalar outside = Scalar(0);
    for (Index i = 0; i < field.size(); ++i) {
        if (!inside[static_cast<std::size_t>(i)]) outside = std::max(outside, field[i]);
    }
    return Scalar(1) - outside;
}

/// Logarithmic surprisal -log(plausibility + epsilon).
template <typename Scalar>
Scalar surprisal(Scalar plausibility, Scalar epsilon = Scalar(kSurprisalEpsilon)) {
    return -std::log(plausibility + epsilon);
}

/// Inverse surprisal transform exp(-alpha * delta_s).
template <typename Scalar>
Scalar possibility_from_surprisal(Scalar delta_s, Scalar alpha = Scalar(1)) {
    if (!(alpha > Scalar(0))) throw ArgumentError("surprisal sensitivity must be positive");
    if (delta_s < Scalar(0)) throw ArgumentError("surprisal increment must be non-negative");
    return std::exp(-alpha * delta_s);
}

// =============================================================================
// Capacities and the Choquet integral
// =============================================================================

/**
 * @brief Monotone set function over an indexed hypothesis set
 *
 * Three families are supported: maxitive capacities induced by a possibility
 * field (sup over the subset), additive capacities induced by weights, and
 * arbitrary capacities tabulated over subset bitmasks (sets of at most 20).
 */
template <typename Scalar> class Capacity {
public:
    enum class Kind { maxitive, additive, tabulated };

    /// Canonical possibility measure: sup over the subset of the sup-normalized field.
    static Capacity possibility(const PossibilityField<Scalar> &field) {
        return Capacity(Kind::maxitive, field.normalized().values());
    }

    /// Maxitive capacity on the field as given, without normalization.
    static Capacity relaxed_possibility(const PossibilityField<Scalar> &field) {
        return Capacity(Kind::maxitive, field.values());
    }

    static Capacity additive(const Vector<Scalar> &weights) {
        if ((weights.array() < Scalar(0)).any()) {
            throw ArgumentError("additive capacity weights must be non-negative");
        }
        return Capacity(Kind::additive, weights);
    }

    /// `table[mask]` is the capacity of the subset whose members are the set bits.
    static Capacity tabulated(Index size, std::vector<Scalar> table) {
        if (size < 0 || size > 20) throw ArgumentError("tabulated capacity supports at most 20 hypotheses");
        if (table.size() != (std::size_t{1} << size)) {
            throw StructuralError("tabulated capacity needs 2^size entries");
        }
        Capacity c(Kind::tabulated, Vector<Scalar>::Zero(size));
        c.table_ = std::move(table);
        return c;
    }

    Kind kind() const { return kind_; }
    Index size() const { return data_.size(); }

    /// Base field of a maxitive capacity.
    std::optional<PossibilityField<Scalar>> base() const {
        if (kind_ != Kind::maxitive) return std::nullopt;
        return PossibilityField<Scalar>(data_);
    }

    Scalar operator()(std::span<const Index> subset) const {
        for (Index i : subset) {
            if (i < 0 || i >= size()) throw StructuralError("capacity: hypothesis index out of range");
        }
        switch (kind_) {
        case Kind::maxitive: {
            Scalar out = Scalar(0);
            for (Index i : subset) out = std::max(out, data_[i]);
            return out;
        }
        case Kind::additive: {
            Scalar out = Scalar(0);
            std::vector<bool> seen(static_cast<std::size_t>(size()), false);
            for (Index i : subset) {
                if (!seen[static_cast<std::size_t>(i)]) out += data_[i];
                seen[static_cast<std::size_t>(i)] = true;
            }
            return out;
        }
        case Kind::tabulated: {
            std::uint32_t mask = 0;
            for (Index i : subset) mask |= (std::uint32_t{1} << i);
            return table_[mask];
        }
        }
        return Scalar(0);
    }

private:
    Capacity(Kind kind, Vector<Scalar> data) : kind_(kind), data_(std::move(data)) {}

    Kind kind_;
    Vector<Scalar> data_;
    std::vector<Scalar> table_;
};

/**
 * @brief Choquet integral of scores with respect to a capacity
 *
 * Hypotheses are ordered by descending score (ties by ascending index) and the
 * telescoping sum  sum_i [f(h_i) - f(h_{i+1})] * mu({h_1..h_i})  is evaluated
 * with f(h_{n+1}) = 0.
 */
template <typename Derived>
typename Derived::Scalar choquet_integral(const Eigen::MatrixBase<Derived> &scores,
                                          const Capacity<typename Derived::Scalar> &capacity) {
    using Scalar = typename Derived::Scalar;
    const Index n = scores.size();
    if (n == 0) throw StructuralError("choquet_integral: empty hypothesis set");
    detail::require_same_size(n, capacity.size(), "choquet_integral");
    if (!scores.allFinite()) throw ArgumentError("choquet_integral: non-finite score");

    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](Index a, Index b) { return scores[a] > scores[b]; });

    Scalar total = Scalar(0);
    for (std::size_t i = 0; i < order.size(); ++i) {
        const Scalar next = (i + 1 < order.size()) ? scores[order[i + 1]] : Scalar(0);
        const Scalar step = scores[order[i]] - next;
        if (step == Scalar(0)) continue;
        total += step * capacity(std::span<const Index>(order.data(), i + 1));
    }
    return total;
}

/// Measurement-modulated capacity: base = min(field, kappa), not renormalized.
template <typename Scalar>
Capacity<Scalar> compatibility_capacity(const PossibilityField<Scalar> &field,
                                        const Vector<Scalar> &kappa) {
    detail::require_same_size(field.size(), kappa.size(), "compatibility_capacity");
    return Capacity<Scalar>::relaxed_possibility(min_join(field, PossibilityField<Scalar>(kappa)));
}

} // namespace espf
