#ifndef SEBA_PREPROCESS_HPP
#define SEBA_PREPROCESS_HPP

#include "data.hpp"
#include "error.hpp"
#include "linalg.hpp"
#include "rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

/**
 * @file preprocess.hpp
 *
 * @brief Type-aware encoding (standardization + one-hot) and feature/target view separation.
 */

namespace seba {

struct EncodedRange {
    std::size_t begin = 0;
    std::size_t end = 0;

    std::size_t size() const { return end - begin; }
    friend bool operator==(const EncodedRange&, const EncodedRange&) = default;
};

struct ColumnStats {
    std::string name;
    ColumnKind kind = ColumnKind::Numerical;
    double mean = 0.0;
    double std = 1.0;
    std::size_t cardinality = 0;
    EncodedRange range;
};

/**
 * Fitted encoding of raw records into real vectors of width `encoded_dim`.
 *
 * Numerical columns own one coordinate each, categorical columns own `cardinality` coordinates
 * (one-hot). Column ranges are contiguous, disjoint and in raw-column order.
 */
struct Preprocessor {
    std::vector<ColumnStats> columns;
    std::size_t encoded_dim = 0;
    bool normalize = true;

    std::size_t raw_dim() const { return columns.size(); }

    const EncodedRange& range(std::size_t raw_column) const { return columns[raw_column].range; }
};

struct PreprocessOptions {
    /// When false numerical columns pass through untouched (normalization ablation).
    bool normalize = true;
};

/// Fit statistics on the given rows only. Population variance; constant columns get std = 1.
inline Preprocessor fit(const Dataset& ds, std::span<const std::size_t> train_indices, PreprocessOptions options = {}) {
    if (train_indices.empty()) {
        throw Error(ErrorKind::Encoding, "cannot fit a preprocessor on zero rows");
    }
    Preprocessor pp;
    pp.normalize = options.normalize;
    std::size_t offset = 0;
    for (std::size_t j = 0; j < ds.schema.size(); ++j) {
        const auto& col = ds.schema[j];
        ColumnStats stats;
        stats.name = col.name;
        stats.kind = col.kind;
        if (col.kind == ColumnKind::Numerical) {
            double sum = 0.0;
            for (std::size_t i : train_indices) {
                sum += ds.rows(static_cast<Index>(i), static_cast<Index>(j));
            }
            const double mean = sum / static_cast<double>(train_indices.size());
            double sq = 0.0;
            for (std::size_t i : train_indices) {
                const double d = ds.rows(static_cast<Index>(i), static_cast<Index>(j)) - mean;
                sq += d * d;
            }
            const double sd = std::sqrt(sq / static_cast<double>(train_indices.size()));
            stats.mean = mean;
            stats.std = (sd > 0.0 && std::isfinite(sd)) ? sd : 1.0;
            stats.range = {offset, offset + 1};
            offset += 1;
        } else {
            stats.cardinality = col.cardinality;
            stats.range = {offset, offset + col.cardinality};
            offset += col.cardinality;
        }
        pp.columns.push_back(std::move(stats));
    }
    pp.encoded_dim = offset;
    return pp;
}

inline void check_schema(const Preprocessor& pp, const Dataset& ds) {
    if (pp.columns.size() != ds.schema.size()) {
        throw Error(ErrorKind::Encoding, "preprocessor was fitted on " + std::to_string(pp.columns.size()) +
                                             " columns, dataset has " + std::to_string(ds.schema.size()));
    }
    for (std::size_t j = 0; j < pp.columns.size(); ++j) {
        if (pp.columns[j].kind != ds.schema[j].kind) {
            throw Error(ErrorKind::Encoding, "column '" + ds.schema[j].name + "' changed kind since fit");
        }
    }
}

/// Encode the selected rows, one output row per index.
template <typename Scalar = double>
Matrix<Scalar> encode(const Preprocessor& pp, const Dataset& ds, std::span<const std::size_t> indices) {
    check_schema(pp, ds);
    Matrix<Scalar> out = Matrix<Scalar>::Zero(static_cast<Index>(indices.size()), static_cast<Index>(pp.encoded_dim));
    for (std::size_t r = 0; r < indices.size(); ++r) {
        const auto i = static_cast<Index>(indices[r]);
        if (i >= ds.rows.rows()) {
            throw Error(ErrorKind::Encoding, "row index " + std::to_string(i) + " out of range");
        }
        for (std::size_t j = 0; j < pp.columns.size(); ++j) {
            const auto& col = pp.columns[j];
            const double v = ds.rows(i, static_cast<Index>(j));
            if (col.kind == ColumnKind::Numerical) {
                const double x = pp.normalize ? (v - col.mean) / col.std : v;
                out(static_cast<Index>(r), static_cast<Index>(col.range.begin)) = static_cast<Scalar>(x);
            } else {
                if (v < 0 || v >= static_cast<double>(col.cardinality) || v != std::floor(v)) {
                    throw Error(ErrorKind::Encoding, "category index " + std::to_string(v) + " invalid for column '" +
                                                         col.name + "' of cardinality " + std::to_string(col.cardinality));
                }
                out(static_cast<Index>(r), static_cast<Index>(col.range.begin + static_cast<std::size_t>(v))) = Scalar(1);
            }
        }
    }
    return out;
}

template <typename Scalar = double>
Matrix<Scalar> encode_all(const Preprocessor& pp, const Dataset& ds) {
    std::vector<std::size_t> all(ds.n_rows());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return encode<Scalar>(pp, ds, all);
}

/**
 * A feature/target separation.
 *
 * `raw` marks target columns in raw-column space; `encoded` is its expansion onto encoded
 * coordinates, so a one-hot block always lands wholly in one view.
 */
struct SeparationMask {
    std::vector<std::uint8_t> raw;
    std::vector<std::uint8_t> encoded;
    double ratio = 0.0;

    /// Encoded coordinates that belong to the target view, ascending.
    std::vector<std::size_t> target_coordinates() const {
        std::vector<std::size_t> out;
        for (std::size_t k = 0; k < encoded.size(); ++k) {
            if (encoded[k]) {
                out.push_back(k);
            }
        }
        return out;
    }

    template <typename Scalar>
    RowVector<Scalar> encoded_row() const {
        RowVector<Scalar> m(static_cast<Index>(encoded.size()));
        for (std::size_t k = 0; k < encoded.size(); ++k) {
            m(static_cast<Index>(k)) = encoded[k] ? Scalar(1) : Scalar(0);
        }
        return m;
    }
};

/// Number of raw target columns: round(ratio * raw_dim) clamped to [1, raw_dim - 1].
inline std::size_t mask_popcount(std::size_t raw_dim, double ratio) {
    const auto wanted = static_cast<long long>(std::llround(ratio * static_cast<double>(raw_dim)));
    return static_cast<std::size_t>(std::clamp<long long>(wanted, 1, static_cast<long long>(raw_dim) - 1));
}

inline SeparationMask expand_mask(const Preprocessor& pp, std::vector<std::uint8_t> raw, double ratio) {
    if (raw.size() != pp.raw_dim()) {
        throw Error(ErrorKind::Mask, "raw mask has " + std::to_string(raw.size()) + " entries, expected " +
                                         std::to_string(pp.raw_dim()));
    }
    SeparationMask m;
    m.encoded.assign(pp.encoded_dim, 0);
    for (std::size_t j = 0; j < raw.size(); ++j) {
        if (raw[j]) {
            const auto& r = pp.range(j);
            std::fill(m.encoded.begin() + static_cast<std::ptrdiff_t>(r.begin),
                      m.encoded.begin() + static_cast<std::ptrdiff_t>(r.end), std::uint8_t{1});
        }
    }
    m.raw = std::move(raw);
    m.ratio = ratio;
    return m;
}

/// Sample a mask with a fixed number of raw target columns, uniformly without replacement.
inline SeparationMask sample_mask(const Preprocessor& pp, double ratio, Rng& rng) {
    const std::size_t raw_dim = pp.raw_dim();
    if (raw_dim < 2) {
        throw Error(ErrorKind::Mask, "separation needs at least 2 raw columns, got " + std::to_string(raw_dim));
    }
    if (!(ratio > 0.0 && ratio < 1.0)) {
        throw Error(ErrorKind::Mask, "separation ratio must lie in (0, 1)");
    }
    const std::size_t count = mask_popcount(raw_dim, ratio);
    std::vector<std::size_t> order(raw_dim);
    std::iota(order.begin(), order.end(), std::size_t{0});
    // partial Fisher-Yates
    for (std::size_t k = 0; k < count; ++k) {
        std::uniform_int_distribution<std::size_t> pick(k, raw_dim - 1);
        std::swap(order[k], order[pick(rng)]);
    }
    std::vector<std::uint8_t> raw(raw_dim, 0);
    for (std::size_t k = 0; k < count; ++k) {
        raw[order[k]] = 1;
    }
    return expand_mask(pp, std::move(raw), ratio);
}

template <typename Scalar>
struct Views {
    Matrix<Scalar> feature;
    Matrix<Scalar> target;
};

/// x_f = x * (1 - m), x_t = x * m, applied row-wise. Masked-out coordinates are exactly zero.
template <typename Scalar>
Views<Scalar> make_views(const Matrix<Scalar>& x, const SeparationMask& m) {
    if (static_cast<std::size_t>(x.cols()) != m.encoded.size()) {
        throw Error(ErrorKind::View, "row width " + std::to_string(x.cols()) + " does not match mask width " +
                                         std::to_string(m.encoded.size()));
    }
    Views<Scalar> v{x, Matrix<Scalar>::Zero(x.rows(), x.cols())};
    for (std::size_t k = 0; k < m.encoded.size(); ++k) {
        if (m.encoded[k]) {
            v.target.col(static_cast<Index>(k)) = x.col(static_cast<Index>(k));
            v.feature.col(static_cast<Index>(k)).setZero();
        }
    }
    return v;
}

template <typename Scalar>
std::pair<RowVector<Scalar>, RowVector<Scalar>> make_views(const RowVector<Scalar>& x, const SeparationMask& m) {
    Matrix<Scalar> batch = x;
    auto v = make_views<Scalar>(batch, m);
    return {v.feature.row(0), v.target.row(0)};
}

enum class Imputation { Zero, Marginal };

/**
 * Fills the masked-out part of feature views with values drawn from each raw column's
 * empirical training distribution, one independent draw per (row, column).
 */
template <typename Scalar>
class MarginalImputer {
public:
    MarginalImputer() = default;

    MarginalImputer(const Preprocessor& pp, Matrix<Scalar> encoded_train) : train_(std::move(encoded_train)) {
        if (train_.rows() == 0 || static_cast<std::size_t>(train_.cols()) != pp.encoded_dim) {
            throw Error(ErrorKind::View, "marginal imputer needs a non-empty encoded training matrix");
        }
        for (const auto& col : pp.columns) {
            ranges_.push_back(col.range);
        }
    }

    bool ready() const { return !ranges_.empty(); }

    void fill(Matrix<Scalar>& feature_view, const SeparationMask& m, Rng& rng) const {
        std::uniform_int_distribution<Index> donor(0, train_.rows() - 1);
        for (Index i = 0; i < feature_view.rows(); ++i) {
            for (std::size_t j = 0; j < m.raw.size(); ++j) {
                if (!m.raw[j]) {
                    continue;
                }
                const auto& r = ranges_[j];
                const Index d = donor(rng);
                feature_view.row(i).segment(static_cast<Index>(r.begin), static_cast<Index>(r.size())) =
                    train_.row(d).segment(static_cast<Index>(r.begin), static_cast<Index>(r.size()));
            }
        }
    }

private:
    std::vector<EncodedRange> ranges_;
    Matrix<Scalar> train_;
};

} // namespace seba

#endif
