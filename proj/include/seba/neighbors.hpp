#ifndef SEBA_NEIGHBORS_HPP
#define SEBA_NEIGHBORS_HPP

#include "error.hpp"
#include "linalg.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <utility>
#include <vector>

/**
 * @file neighbors.hpp
 *
 * @brief Exact brute-force neighbor search over the rows of a matrix.
 *
 * All searches exclude the query row itself and break distance ties by the smaller row index.
 */

namespace seba {

enum class Metric { Euclidean, Cosine };

namespace detail {

template <typename Scalar>
double squared_distance(const Matrix<Scalar>& x, Index a, Index b, std::span<const std::size_t> coords) {
    double acc = 0.0;
    if (coords.empty()) {
        for (Index k = 0; k < x.cols(); ++k) {
            const double d = static_cast<double>(x(a, k)) - static_cast<double>(x(b, k));
            acc += d * d;
        }
    } else {
        for (std::size_t k : coords) {
            const auto kk = static_cast<Index>(k);
            const double d = static_cast<double>(x(a, kk)) - static_cast<double>(x(b, kk));
            acc += d * d;
        }
    }
    return acc;
}

} // namespace detail

/// argmin over a != i of ||T_i - T_a||, smallest index on ties.
template <typename Scalar>
std::size_t target_nearest_neighbor(const Matrix<Scalar>& targets, std::size_t i) {
    const Index b = targets.rows();
    if (b < 2) {
        throw Error(ErrorKind::Dimension, "nearest neighbor needs at least 2 rows");
    }
    if (static_cast<Index>(i) >= b) {
        throw Error(ErrorKind::Dimension, "row index out of range");
    }
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Index a = 0; a < b; ++a) {
        if (a == static_cast<Index>(i)) {
            continue;
        }
        const double d = detail::squared_distance(targets, static_cast<Index>(i), a, {});
        if (d < best_d) {
            best_d = d;
            best = static_cast<std::size_t>(a);
        }
    }
    return best;
}

/**
 * Nearest neighbor of every row.
 *
 * `coords`, if non-empty, restricts the distance to those columns. For target views the
 * other columns are exactly zero in every row, so the result equals the full-width search.
 */
template <typename Scalar>
std::vector<std::size_t> nearest_neighbors(const Matrix<Scalar>& x, std::span<const std::size_t> coords = {}) {
    const Index b = x.rows();
    if (b < 2) {
        throw Error(ErrorKind::Dimension, "nearest neighbor needs at least 2 rows");
    }
    std::vector<std::size_t> best(static_cast<std::size_t>(b), 0);
    std::vector<double> best_d(static_cast<std::size_t>(b), std::numeric_limits<double>::infinity());
    for (Index i = 0; i < b; ++i) {
        for (Index a = i + 1; a < b; ++a) {
            const double d = detail::squared_distance(x, i, a, coords);
            // a visits in increasing order for row i, and i < a for row a: strict < keeps the smaller index.
            if (d < best_d[static_cast<std::size_t>(i)]) {
                best_d[static_cast<std::size_t>(i)] = d;
                best[static_cast<std::size_t>(i)] = static_cast<std::size_t>(a);
            }
            if (d < best_d[static_cast<std::size_t>(a)]) {
                best_d[static_cast<std::size_t>(a)] = d;
                best[static_cast<std::size_t>(a)] = static_cast<std::size_t>(i);
            }
        }
    }
    return best;
}

/// Distances from `query` to every row of `points` under `metric` (cosine distance = 1 - cos).
template <typename Scalar, typename Derived>
std::vector<double> distances_to(const Matrix<Scalar>& points, const Eigen::MatrixBase<Derived>& query, Metric metric) {
    if (query.size() != points.cols()) {
        throw Error(ErrorKind::Dimension, "query width does not match the point set");
    }
    std::vector<double> out(static_cast<std::size_t>(points.rows()));
    double qn = 0.0;
    if (metric == Metric::Cosine) {
        for (Index k = 0; k < query.size(); ++k) {
            qn += static_cast<double>(query.coeff(k)) * static_cast<double>(query.coeff(k));
        }
        qn = std::sqrt(qn);
    }
    for (Index r = 0; r < points.rows(); ++r) {
        double acc = 0.0;
        if (metric == Metric::Euclidean) {
            for (Index k = 0; k < points.cols(); ++k) {
                const double d = static_cast<double>(points(r, k)) - static_cast<double>(query.coeff(k));
                acc += d * d;
            }
            out[static_cast<std::size_t>(r)] = std::sqrt(acc);
        } else {
            double pn = 0.0;
            for (Index k = 0; k < points.cols(); ++k) {
                acc += static_cast<double>(points(r, k)) * static_cast<double>(query.coeff(k));
                pn += static_cast<double>(points(r, k)) * static_cast<double>(points(r, k));
            }
            pn = std::sqrt(pn);
            const double cos = (pn < 1e-12 || qn < 1e-12) ? 0.0 : acc / (pn * qn);
            out[static_cast<std::size_t>(r)] = 1.0 - cos;
        }
    }
    return out;
}

/// Indices of the k smallest entries of `dist`, skipping `exclude`; ties by smaller index.
inline std::vector<std::size_t> k_smallest(const std::vector<double>& dist, std::size_t k,
                                           std::size_t exclude = static_cast<std::size_t>(-1)) {
    std::vector<std::pair<double, std::size_t>> order;
    order.reserve(dist.size());
    for (std::size_t r = 0; r < dist.size(); ++r) {
        if (r != exclude) {
            order.emplace_back(dist[r], r);
        }
    }
    if (k > order.size()) {
        throw Error(ErrorKind::Dimension, "asked for more neighbors than candidates");
    }
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end());
    std::vector<std::size_t> out(k);
    for (std::size_t r = 0; r < k; ++r) {
        out[r] = order[r].second;
    }
    return out;
}

/// The k nearest other rows of row i, nearest first.
template <typename Scalar>
std::vector<std::size_t> k_nearest_rows(const Matrix<Scalar>& x, std::size_t i, std::size_t k,
                                        Metric metric = Metric::Euclidean) {
    const auto dist = distances_to(x, x.row(static_cast<Index>(i)), metric);
    return k_smallest(dist, k, i);
}

} // namespace seba

#endif
