#ifndef SEBA_SYNTHETIC_HPP
#define SEBA_SYNTHETIC_HPP

#include "data.hpp"
#include "error.hpp"
#include "rng.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <random>
#include <string>
#include <vector>

/**
 * @file synthetic.hpp
 *
 * @brief Seeded isotropic Gaussian classification data (one N(mean_c, I) blob per class).
 */

namespace seba {

struct GaussianBlobsConfig {
    std::size_t n_rows = 2000;
    std::size_t dim = 32;
    int n_classes = 4;
    /// Euclidean distance between every pair of class means.
    double separation = 6.0;
    std::uint64_t seed = 0;
};

/**
 * Class means at equal pairwise distance `separation`.
 *
 * When dim is a power of two larger than n_classes, mean c is row c+1 of the Sylvester Hadamard
 * matrix scaled by separation / sqrt(2 dim), which spreads the class signal over every
 * coordinate. Otherwise the means are scaled basis vectors (needs n_classes <= dim).
 */
inline std::vector<std::vector<double>> equidistant_means(std::size_t dim, int n_classes, double separation) {
    if (n_classes < 1 || dim < 1) {
        throw Error(ErrorKind::Config, "need at least one class and one dimension");
    }
    const auto c = static_cast<std::size_t>(n_classes);
    std::vector<std::vector<double>> means(c, std::vector<double>(dim, 0.0));
    const bool power_of_two = (dim & (dim - 1)) == 0;
    if (power_of_two && c < dim) {
        const double scale = separation / std::sqrt(2.0 * static_cast<double>(dim));
        for (std::size_t k = 0; k < c; ++k) {
            for (std::size_t j = 0; j < dim; ++j) {
                // Sylvester construction: H[r][j] = (-1)^popcount(r & j)
                const bool odd = __builtin_popcountll(static_cast<unsigned long long>((k + 1) & j)) % 2 != 0;
                means[k][j] = odd ? -scale : scale;
            }
        }
    } else if (c <= dim) {
        const double scale = separation / std::sqrt(2.0);
        for (std::size_t k = 0; k < c; ++k) {
            means[k][k] = scale;
        }
    } else {
        throw Error(ErrorKind::Config, "cannot place " + std::to_string(n_classes) + " equidistant means in " +
                                           std::to_string(dim) + " dimensions");
    }
    return means;
}

/// Balanced labels (row i has class i mod n_classes), features mean_c + N(0, I).
inline Dataset make_gaussian_blobs(const GaussianBlobsConfig& cfg) {
    if (cfg.n_rows < static_cast<std::size_t>(cfg.n_classes)) {
        throw Error(ErrorKind::Config, "fewer rows than classes");
    }
    const auto means = equidistant_means(cfg.dim, cfg.n_classes, cfg.separation);
    Rng rng = make_rng(cfg.seed, "synthetic");
    std::normal_distribution<double> normal;
    Dataset ds;
    for (std::size_t j = 0; j < cfg.dim; ++j) {
        ds.schema.push_back({"x" + std::to_string(j), ColumnKind::Numerical, 0});
    }
    ds.levels.assign(cfg.dim, {});
    ds.rows.resize(static_cast<Eigen::Index>(cfg.n_rows), static_cast<Eigen::Index>(cfg.dim));
    std::vector<int> labels(cfg.n_rows);
    for (std::size_t i = 0; i < cfg.n_rows; ++i) {
        const int y = static_cast<int>(i % static_cast<std::size_t>(cfg.n_classes));
        labels[i] = y;
        for (std::size_t j = 0; j < cfg.dim; ++j) {
            ds.rows(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                means[static_cast<std::size_t>(y)][j] + normal(rng);
        }
    }
    ds.labels = std::move(labels);
    ds.n_classes = cfg.n_classes;
    for (int c = 0; c < cfg.n_classes; ++c) {
        ds.class_names.push_back("class" + std::to_string(c));
    }
    ds.validate();
    return ds;
}

/// CSV with a header row; categorical cells and labels are written as their level names.
inline void write_dataset_csv(std::ostream& out, const Dataset& ds, const std::string& label_column = "label") {
    for (std::size_t j = 0; j < ds.n_columns(); ++j) {
        out << (j ? "," : "") << ds.schema[j].name;
    }
    if (ds.labels) {
        out << ',' << label_column;
    }
    out << '\n';
    char buf[32];
    for (std::size_t i = 0; i < ds.n_rows(); ++i) {
        for (std::size_t j = 0; j < ds.n_columns(); ++j) {
            const double v = ds.rows(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
            if (j) {
                out << ',';
            }
            if (ds.schema[j].kind == ColumnKind::Categorical) {
                out << ds.levels[j][static_cast<std::size_t>(v)];
            } else {
                std::snprintf(buf, sizeof buf, "%.17g", v);
                out << buf;
            }
        }
        if (ds.labels) {
            out << ',' << ds.class_names[static_cast<std::size_t>((*ds.labels)[i])];
        }
        out << '\n';
    }
}

inline void write_schema_json(std::ostream& out, const Dataset& ds, const std::string& label_column = "label") {
    nlohmann::json cols = nlohmann::json::array();
    for (const auto& c : ds.schema) {
        cols.push_back({{"name", c.name}, {"kind", c.kind == ColumnKind::Categorical ? "categorical" : "numerical"}});
    }
    if (ds.labels) {
        cols.push_back({{"name", label_column}, {"label", true}});
    }
    out << nlohmann::json{{"columns", cols}}.dump(2) << '\n';
}

inline void save_dataset(const Dataset& ds, const std::string& csv_path, const std::string& schema_path) {
    std::ofstream csv(csv_path);
    std::ofstream schema(schema_path);
    if (!csv || !schema) {
        throw Error(ErrorKind::Format, "cannot write '" + csv_path + "' or '" + schema_path + "'");
    }
    write_dataset_csv(csv, ds);
    write_schema_json(schema, ds);
}

} // namespace seba

#endif
