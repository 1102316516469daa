// Sparse Grid - Clenshaw-Curtis / Smolyak support-point generation
#pragma once

#include <espf/types.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <vector>

namespace espf {

/// Two unit-cube points closer than this in every coordinate are the same point.
inline constexpr double kGridTolerance = 1e-12;

// =============================================================================
// Hyperrectangle
// =============================================================================

/// Axis-aligned box [lower, upper] in state space.
template <typename Scalar> class Hyperrectangle {
public:
    Hyperrectangle() = default;

    Hyperrectangle(Vector<Scalar> lower, Vector<Scalar> upper)
        : lower_(std::move(lower)), upper_(std::move(upper)) {
        detail::require_same_size(lower_.size(), upper_.size(), "Hyperrectangle bounds");
        if (!lower_.allFinite() || !upper_.allFinite()) {
            throw ArgumentError("Hyperrectangle bounds must be finite");
        }
        if ((lower_.array() > upper_.array()).any()) {
            throw ArgumentError("Hyperrectangle lower bound exceeds upper bound");
        }
    }

    static Hyperrectangle centered(const Vector<Scalar> &center, const Vector<Scalar> &half_widths) {
        return Hyperrectangle(center - half_widths.cwiseAbs(), center + half_widths.cwiseAbs());
    }

    /// Smallest box containing every column of `points`.
    template <typename Derived>
    static Hyperrectangle bounding(const Eigen::MatrixBase<Derived> &points) {
        if (points.cols() == 0) throw StructuralError("bounding box of an empty point set");
        return Hyperrectangle(points.rowwise().minCoeff(), points.rowwise().maxCoeff());
    }

    Index dim() const { return lower_.size(); }
    const Vector<Scalar> &lower() const { return lower_; }
    const Vector<Scalar> &upper() const { return upper_; }
    Vector<Scalar> center() const { return Scalar(0.5) * (lower_ + upper_); }
    Vector<Scalar> half_widths() const { return Scalar(0.5) * (upper_ - lower_); }
    bool degenerate() const { return (upper_.array() == lower_.array()).all(); }

    bool contains(const Vector<Scalar> &x, Scalar tol = Scalar(0)) const {
        return ((x.array() >= lower_.array() - tol) && (x.array() <= upper_.array() + tol)).all();
    }

    Vector<Scalar> clamp(const Vector<Scalar> &x) const {
        return x.cwiseMax(lower_).cwiseMin(upper_);
    }

    /// Minkowski sum of two boxes.
    Hyperrectangle operator+(const Hyperrectangle &other) const {
        detail::require_same_size(dim(), other.dim(), "Hyperrectangle Minkowski sum");
        return Hyperrectangle(lower_ + other.lower_, upper_ + other.upper_);
    }

    /// Same center, half-widths multiplied by `factor`.
    Hyperrectangle scaled(Scalar factor) const {
        return centered(center(), factor * half_widths());
    }

private:
    Vector<Scalar> lower_;
    Vector<Scalar> upper_;
};

// =============================================================================
// Univariate Clenshaw-Curtis rule
// =============================================================================

struct GridLevelRule {
    int level = 0;
    Index node_count = 0;
    std::vector<double> nodes; ///< ascending, in [-1, 1]
};

namespace detail {

/// cos(p*pi/q) with the fraction reduced first so equal nodes at different
/// levels are bit-identical.
inline double cosine_node(long long p, long long q) {
    if (q == 0) return 1.0;
    const long long g = std::gcd(p, q);
    p /= g;
    q /= g;
    if (2 * p == q) return 0.0;
    if (2 * p > q) return -cosine_node(q - p, q);
    return std::cos(std::numbers::pi * static_cast<double>(p) / static_cast<double>(q));
}

} // namespace detail

/// Nested Clenshaw-Curtis nodes: m = 2^(level-1) + 1 points cos(j*pi/(m-1)).
inline GridLevelRule clenshaw_curtis_nodes(int level) {
    if (level < 1) throw ArgumentError("clenshaw_curtis_nodes: level must be >= 1");
    if (level > 30) throw ArgumentError("clenshaw_curtis_nodes: level too large");
    GridLevelRule rule;
    rule.level = level;
    rule.node_count = (Index{1} << (level - 1)) + 1;
    const long long q = rule.node_count - 1;
    rule.nodes.reserve(static_cast<std::size_t>(rule.node_count));
    for (long long j = q; j >= 0; --j) rule.nodes.push_back(detail::cosine_node(j, q));
    return rule;
}

// =============================================================================
// Smolyak grid
// =============================================================================

template <typename Scalar> struct SmolyakGrid {
    Index dim = 0;
    int level = 0;
    PointSet<Scalar> points; ///< dim x M unit-cube points, center first then lexicographic
};

namespace detail {

template <typename Scalar>
bool same_point(const Eigen::Ref<const Vector<Scalar>> &a, const Eigen::Ref<const Vector<Scalar>> &b) {
    return ((a - b).cwiseAbs().array() < Scalar(kGridTolerance)).all();
}

/// Visit every multi-index i (entries >= 1) with |i|_1 <= budget.
template <typename Visit>
void for_each_multi_index(Index dim, int budget, std::vector<int> &current, Visit &&visit) {
    const int used = std::accumulate(current.begin(), current.end(), 0);
    if (static_cast<Index>(current.size()) == dim) {
        visit(current);
        return;
    }
    const int remaining_dims = static_cast<int>(dim - static_cast<Index>(current.size())) - 1;
    for (int level = 1; used + level + remaining_dims <= budget; ++level) {
        current.push_back(level);
        for_each_multi_index(dim, budget, current, visit);
        current.pop_back();
    }
}

} // namespace detail

/**
 * @brief Smolyak sparse grid on [-1,1]^dim
 *
 * Union over all multi-indices with |i|_1 <= level + dim - 1 of the tensor
 * products of the univariate Clenshaw-Curtis node sets, deduplicated.
 */
template <typename Scalar = double> SmolyakGrid<Scalar> smolyak_grid(Index dim, int level) {
    if (dim < 1) throw ArgumentError("smolyak_grid: dimension must be >= 1");
    if (level < 1) throw ArgumentError("smolyak_grid: level must be >= 1");
    const int budget = level + static_cast<int>(dim) - 1;
    const int max_level = budget - static_cast<int>(dim) + 1;

    std::vector<GridLevelRule> rules;
    for (int l = 1; l <= max_level; ++l) rules.push_back(clenshaw_curtis_nodes(l));

    std::vector<Vector<Scalar>> unique;
    std::vector<int> current;
    detail::for_each_multi_index(dim, budget, current, [&](const std::vector<int> &multi) {
        // Odometer over the tensor product of the selected node sets.
        std::vector<std::size_t> digit(static_cast<std::size_t>(dim), 0);
        while (true) {
            Vector<Scalar> p(dim);
            for (Index d = 0; d < dim; ++d) {
                const auto &nodes = rules[static_cast<std::size_t>(multi[d] - 1)].nodes;
                p[d] = static_cast<Scalar>(nodes[digit[static_cast<std::size_t>(d)]]);
            }
            const bool seen = std::any_of(unique.begin(), unique.end(), [&](const Vector<Scalar> &q) {
                return detail::same_point<Scalar>(p, q);
            });
            if (!seen) unique.push_back(std::move(p));

            Index d = 0;
            for (; d < dim; ++d) {
                auto &k = digit[static_cast<std::size_t>(d)];
                if (++k < rules[static_cast<std::size_t>(multi[d] - 1)].nodes.size()) break;
                k = 0;
            }
            if (d == dim) break;
        }
    });

    std::sort(unique.begin(), unique.end(), [](const Vector<Scalar> &a, const Vector<Scalar> &b) {
        const bool a_center = a.isZero(0), b_center = b.isZero(0);
        if (a_center != b_center) return a_center;
        return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
    });

    SmolyakGrid<Scalar> grid;
    grid.dim = dim;
    grid.level = level;
    grid.points.resize(dim, static_cast<Index>(unique.size()));
    for (std::size_t j = 0; j < unique.size(); ++j) grid.points.col(static_cast<Index>(j)) = unique[j];
    return grid;
}

/// Affine map of unit-cube points into `box`: 0.5(u-l) o xi + 0.5(u+l).
template <typename Scalar>
PointSet<Scalar> map_to_box(const PointSet<Scalar> &unit_points, const Hyperrectangle<Scalar> &box) {
    detail::require_same_size(unit_points.rows(), box.dim(), "map_to_box");
    PointSet<Scalar> out =
        (box.half_widths().asDiagonal() * unit_points).colwise() + box.center();
    // Keep images inside the box despite rounding in the affine map.
    for (Index j = 0; j < out.cols(); ++j) out.col(j) = box.clamp(out.col(j));
    return out;
}

template <typename Scalar>
PointSet<Scalar> map_to_box(const SmolyakGrid<Scalar> &grid, const Hyperrectangle<Scalar> &box) {
    return map_to_box(grid.points, box);
}

/// Unit-cube axis scheme: the origin followed by +e_i (i = 1..n) then -e_i.
template <typename Scalar> PointSet<Scalar> axis_unit_points(Index dim) {
    PointSet<Scalar> pts = PointSet<Scalar>::Zero(dim, 2 * dim + 1);
    for (Index i = 0; i < dim; ++i) {
        pts(i, 1 + i) = Scalar(1);
        pts(i, 1 + dim + i) = Scalar(-1);
    }
    return pts;
}

/// 2n+1 support points: box center, then center +/- gamma_i e_i.
template <typename Scalar> PointSet<Scalar> axis_support_points(const Hyperrectangle<Scalar> &box) {
    const Index n = box.dim();
    const Vector<Scalar> center = box.center();
    const Vector<Scalar> gamma = box.half_widths();
    PointSet<Scalar> pts = center.replicate(1, 2 * n + 1);
    for (Index i = 0; i < n; ++i) {
        pts(i, 1 + i) = std::min(center[i] + gamma[i], box.upper()[i]);
        pts(i, 1 + n + i) = std::max(center[i] - gamma[i], box.lower()[i]);
    }
    return pts;
}

} // namespace espf
