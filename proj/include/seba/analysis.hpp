#ifndef SEBA_ANALYSIS_HPP
#define SEBA_ANALYSIS_HPP

#include "error.hpp"
#include "linalg.hpp"
#include "nncore.hpp"
#include "preprocess.hpp"
#include "pretrain.hpp"
#include "rng.hpp"

#include <algorithm>
#include <cstdio>
#include <ostream>
#include <span>
#include <utility>
#include <vector>

/**
 * @file analysis.hpp
 *
 * @brief Neighborhood label diagnostics: same-class fraction among target-view neighbors and
 *        input-space versus latent-space 10-NN label consistency.
 */

namespace seba {

namespace detail {

// Row i's k nearest other rows under squared Euclidean distance (Gram form), ties by smaller index.
inline std::vector<std::vector<std::size_t>> all_k_nearest(const Matrix<double>& x, std::size_t k) {
    const Index n = x.rows();
    const Vector<double> sq = x.rowwise().squaredNorm();
    const Matrix<double> gram = x * x.transpose();
    std::vector<std::vector<std::size_t>> out(static_cast<std::size_t>(n));
    std::vector<std::pair<double, std::size_t>> order;
    order.reserve(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
        order.clear();
        for (Index a = 0; a < n; ++a) {
            if (a != i) {
                order.emplace_back(sq(i) + sq(a) - 2.0 * gram(i, a), static_cast<std::size_t>(a));
            }
        }
        std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end());
        auto& row = out[static_cast<std::size_t>(i)];
        row.resize(k);
        for (std::size_t r = 0; r < k; ++r) {
            row[r] = order[r].second;
        }
    }
    return out;
}

inline void check_labels(std::span<const int> labels, Index rows) {
    if (labels.empty()) {
        throw Error(ErrorKind::Analysis, "analysis needs labels");
    }
    if (static_cast<Index>(labels.size()) != rows) {
        throw Error(ErrorKind::Analysis, "label count does not match row count");
    }
}

} // namespace detail

struct NeighborCurve {
    /// mean_fraction[k-1] is the mean same-class fraction among the k nearest neighbors.
    std::vector<double> mean_fraction;
};

/**
 * Same-class fraction among the k nearest target-view neighbors (Euclidean, self excluded), for
 * k = 1..k_max, averaged over rows and `n_separations` random separations at `ratio`.
 */
template <typename Scalar>
NeighborCurve neighbor_fraction_curve(const Matrix<Scalar>& encoded, std::span<const int> labels, const Preprocessor& pp,
                                      double ratio, int n_separations, std::size_t k_max, Rng& rng) {
    detail::check_labels(labels, encoded.rows());
    if (n_separations < 1) {
        throw Error(ErrorKind::Analysis, "need at least one separation");
    }
    if (k_max < 1 || k_max >= static_cast<std::size_t>(encoded.rows())) {
        throw Error(ErrorKind::Analysis, "k_max must lie in [1, N_rows)");
    }
    if (static_cast<std::size_t>(encoded.cols()) != pp.encoded_dim) {
        throw Error(ErrorKind::Dimension, "encoded width does not match the preprocessor");
    }
    std::vector<double> sum(k_max, 0.0);
    for (int s = 0; s < n_separations; ++s) {
        const SeparationMask mask = sample_mask(pp, ratio, rng);
        const auto coords = mask.target_coordinates();
        Matrix<double> target(encoded.rows(), static_cast<Index>(coords.size()));
        for (std::size_t c = 0; c < coords.size(); ++c) {
            target.col(static_cast<Index>(c)) = encoded.col(static_cast<Index>(coords[c])).template cast<double>();
        }
        const auto neighbors = detail::all_k_nearest(target, k_max);
        for (std::size_t i = 0; i < neighbors.size(); ++i) {
            std::size_t same = 0;
            for (std::size_t k = 0; k < k_max; ++k) {
                same += labels[neighbors[i][k]] == labels[i] ? 1 : 0;
                sum[k] += static_cast<double>(same) / static_cast<double>(k + 1);
            }
        }
    }
    NeighborCurve curve;
    const double denom = static_cast<double>(n_separations) * static_cast<double>(encoded.rows());
    for (double v : sum) {
        curve.mean_fraction.push_back(v / denom);
    }
    return curve;
}

/// Number of same-class rows among each row's k nearest neighbors (Euclidean, self excluded).
inline std::vector<int> same_class_counts(const Matrix<double>& x, std::span<const int> labels, std::size_t k) {
    detail::check_labels(labels, x.rows());
    if (static_cast<std::size_t>(x.rows()) < k + 1) {
        throw Error(ErrorKind::Analysis, "need at least " + std::to_string(k + 1) + " rows");
    }
    const auto neighbors = detail::all_k_nearest(x, k);
    std::vector<int> counts(neighbors.size(), 0);
    for (std::size_t i = 0; i < neighbors.size(); ++i) {
        for (std::size_t a : neighbors[i]) {
            counts[i] += labels[a] == labels[i] ? 1 : 0;
        }
    }
    return counts;
}

struct ConsistencyBucket {
    int input_count = 0;
    std::size_t size = 0;
    double mean_input = 0.0;
    double mean_latent = 0.0;
};

struct ConsistencyTable {
    std::size_t k = 10;
    /// One bucket per input-space count 0..k; empty buckets have size 0 and zero means.
    std::vector<ConsistencyBucket> buckets;
    double overall_input = 0.0;
    double overall_latent = 0.0;
};

/// Buckets rows by same-class count among k input-space neighbors and compares with the latent space.
inline ConsistencyTable latent_consistency(const Matrix<double>& input, const Matrix<double>& latent,
                                           std::span<const int> labels, std::size_t k = 10) {
    if (input.rows() != latent.rows()) {
        throw Error(ErrorKind::Analysis, "input and latent row counts differ");
    }
    const auto in_counts = same_class_counts(input, labels, k);
    const auto lat_counts = same_class_counts(latent, labels, k);
    ConsistencyTable table;
    table.k = k;
    table.buckets.resize(k + 1);
    for (std::size_t b = 0; b <= k; ++b) {
        table.buckets[b].input_count = static_cast<int>(b);
    }
    for (std::size_t i = 0; i < in_counts.size(); ++i) {
        auto& b = table.buckets[static_cast<std::size_t>(in_counts[i])];
        ++b.size;
        b.mean_input += in_counts[i];
        b.mean_latent += lat_counts[i];
        table.overall_input += in_counts[i];
        table.overall_latent += lat_counts[i];
    }
    for (auto& b : table.buckets) {
        if (b.size) {
            b.mean_input /= static_cast<double>(b.size);
            b.mean_latent /= static_cast<double>(b.size);
        }
    }
    table.overall_input /= static_cast<double>(in_counts.size());
    table.overall_latent /= static_cast<double>(in_counts.size());
    return table;
}

/// Latent space = the stack's encoder output on the encoded rows.
template <typename Scalar>
ConsistencyTable latent_consistency(const Matrix<Scalar>& encoded, const EncoderStack<Scalar>& stack,
                                    std::span<const int> labels, std::size_t k = 10) {
    if (encoded.cols() != stack.input_dim()) {
        throw Error(ErrorKind::Dimension, "encoded width does not match the encoder input");
    }
    const Matrix<double> latent = mlp_forward<Scalar>(stack.encoder, encoded, nullptr).template cast<double>();
    return latent_consistency(encoded.template cast<double>().eval(), latent, labels, k);
}

/// Columns: k,mean_fraction
inline void write_curve_csv(std::ostream& out, const NeighborCurve& curve) {
    out << "k,mean_fraction\n";
    char buf[64];
    for (std::size_t k = 0; k < curve.mean_fraction.size(); ++k) {
        std::snprintf(buf, sizeof buf, "%zu,%.6f\n", k + 1, curve.mean_fraction[k]);
        out << buf;
    }
}

/// Columns: input_bucket,mean_input_count,mean_latent_count,bucket_size
inline void write_consistency_csv(std::ostream& out, const ConsistencyTable& table) {
    out << "input_bucket,mean_input_count,mean_latent_count,bucket_size\n";
    char buf[96];
    for (const auto& b : table.buckets) {
        std::snprintf(buf, sizeof buf, "%d,%.6f,%.6f,%zu\n", b.input_count, b.mean_input, b.mean_latent, b.size);
        out << buf;
    }
}

} // namespace seba

#endif
