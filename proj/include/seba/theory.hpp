#ifndef SEBA_THEORY_HPP
#define SEBA_THEORY_HPP

#include "error.hpp"
#include "rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <future>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <span>
#include <thread>
#include <vector>

/**
 * @file theory.hpp
 *
 * @brief Monte Carlo estimates of the target-view mismatch probability for isotropic Gaussian
 *        class pairs, and the exponential-decay bound check.
 *
 * Class c is N(0, I_D) and class c' is N(Delta, I_D). For a coordinate subset S, a mismatch
 * occurs when a class-c' draw Z is at least as close to the anchor X as a second class-c draw
 * Y, measured on the coordinates in S only.
 */

namespace seba {

struct GaussianPairSpec {
    std::vector<double> offset;

    static GaussianPairSpec from_offset(std::vector<double> delta) {
        if (delta.empty()) {
            throw Error(ErrorKind::Theory, "dimension must be at least 1");
        }
        return GaussianPairSpec{std::move(delta)};
    }

    /// Offset with equal mass on every coordinate.
    static GaussianPairSpec uniform(std::size_t dim, double delta_sq) {
        if (dim == 0) {
            throw Error(ErrorKind::Theory, "dimension must be at least 1");
        }
        if (delta_sq < 0.0) {
            throw Error(ErrorKind::Theory, "squared separation must be non-negative");
        }
        return GaussianPairSpec{std::vector<double>(dim, std::sqrt(delta_sq / static_cast<double>(dim)))};
    }

    /// Offset along a uniformly random direction, scaled to squared norm `delta_sq`.
    static GaussianPairSpec random_direction(std::size_t dim, double delta_sq, Rng& rng) {
        auto spec = uniform(dim, delta_sq);
        if (delta_sq == 0.0) {
            return spec;
        }
        std::normal_distribution<double> normal;
        double norm = 0.0;
        do {
            norm = 0.0;
            for (auto& v : spec.offset) {
                v = normal(rng);
                norm += v * v;
            }
        } while (norm == 0.0);
        const double scale = std::sqrt(delta_sq / norm);
        for (auto& v : spec.offset) {
            v *= scale;
        }
        return spec;
    }

    std::size_t dim() const { return offset.size(); }

    double delta_sq() const {
        return std::accumulate(offset.begin(), offset.end(), 0.0, [](double acc, double v) { return acc + v * v; });
    }

    /// delta_S^2 = sum over i in S of Delta_i^2.
    double delta_sq_on(std::span<const std::size_t> subset) const {
        double acc = 0.0;
        for (std::size_t i : subset) {
            acc += offset[i] * offset[i];
        }
        return acc;
    }
};

/// One Bernoulli draw of the mismatch event on subset S.
inline bool mismatch_trial(const GaussianPairSpec& spec, std::span<const std::size_t> subset, Rng& rng) {
    if (subset.empty()) {
        throw Error(ErrorKind::Theory, "coordinate subset must be non-empty");
    }
    std::normal_distribution<double> normal;
    double dz = 0.0;
    double dy = 0.0;
    for (std::size_t i : subset) {
        if (i >= spec.dim()) {
            throw Error(ErrorKind::Theory, "coordinate " + std::to_string(i) + " outside the dimension");
        }
        const double x = normal(rng);
        const double y = normal(rng);
        const double z = spec.offset[i] + normal(rng);
        dz += (z - x) * (z - x);
        dy += (y - x) * (y - x);
    }
    return dz <= dy;
}

/// Uniform n-subset of {0..dim-1} by partial Fisher-Yates, returned sorted.
inline std::vector<std::size_t> sample_subset(std::size_t dim, std::size_t n, Rng& rng) {
    if (n < 1 || n > dim) {
        throw Error(ErrorKind::Theory, "subset size " + std::to_string(n) + " outside [1, " + std::to_string(dim) + "]");
    }
    std::vector<std::size_t> pool(dim);
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    for (std::size_t k = 0; k < n; ++k) {
        std::uniform_int_distribution<std::size_t> pick(k, dim - 1);
        std::swap(pool[k], pool[pick(rng)]);
    }
    pool.resize(n);
    std::sort(pool.begin(), pool.end());
    return pool;
}

struct MismatchEstimate {
    std::size_t dim = 0;
    std::size_t n = 0;
    double delta_sq = 0.0;
    std::size_t n_subsets = 0;
    std::size_t trials_per_subset = 0;
    std::uint64_t mismatches = 0;
    double estimate = 0.0;
    /// Binomial standard error of the pooled estimate.
    double stderr_ = 0.0;
    /// Mean and standard error of delta_S^2 over the sampled subsets.
    double subset_delta_sq_mean = 0.0;
    double subset_delta_sq_stderr = 0.0;

    std::uint64_t total_trials() const { return static_cast<std::uint64_t>(n_subsets) * trials_per_subset; }
    /// nδ²/D
    double exponent_argument() const { return static_cast<double>(n) * delta_sq / static_cast<double>(dim); }
};

/**
 * Pooled estimate of E_S[p_mismatch] for uniformly random n-subsets.
 *
 * Subset j draws from its own stream derived from a base seed taken from `rng`, so the result
 * is independent of `workers`.
 */
inline MismatchEstimate expected_mismatch(const GaussianPairSpec& spec, std::size_t n, std::size_t n_subsets,
                                          std::size_t trials_per_subset, Rng& rng, unsigned workers = 0) {
    if (n < 1 || n > spec.dim()) {
        throw Error(ErrorKind::Theory, "subset size " + std::to_string(n) + " outside [1, " + std::to_string(spec.dim()) + "]");
    }
    if (n_subsets < 1 || trials_per_subset < 1) {
        throw Error(ErrorKind::Theory, "need at least one subset and one trial per subset");
    }
    const std::uint64_t base = rng();
    std::vector<std::uint64_t> hits(n_subsets, 0);
    std::vector<double> subset_delta(n_subsets, 0.0);
    auto run = [&](std::size_t begin, std::size_t end) {
        for (std::size_t j = begin; j < end; ++j) {
            Rng local = make_rng(base, "subset", j);
            const auto subset = sample_subset(spec.dim(), n, local);
            subset_delta[j] = spec.delta_sq_on(subset);
            std::uint64_t count = 0;
            for (std::size_t t = 0; t < trials_per_subset; ++t) {
                count += mismatch_trial(spec, subset, local) ? 1 : 0;
            }
            hits[j] = count;
        }
    };
    if (workers == 0) {
        workers = std::max(1u, std::thread::hardware_concurrency());
    }
    workers = static_cast<unsigned>(std::min<std::size_t>(workers, n_subsets));
    if (workers <= 1) {
        run(0, n_subsets);
    } else {
        std::vector<std::future<void>> jobs;
        const std::size_t chunk = (n_subsets + workers - 1) / workers;
        for (std::size_t begin = 0; begin < n_subsets; begin += chunk) {
            jobs.push_back(std::async(std::launch::async, run, begin, std::min(n_subsets, begin + chunk)));
        }
        for (auto& j : jobs) {
            j.get();
        }
    }

    MismatchEstimate est;
    est.dim = spec.dim();
    est.n = n;
    est.delta_sq = spec.delta_sq();
    est.n_subsets = n_subsets;
    est.trials_per_subset = trials_per_subset;
    est.mismatches = std::accumulate(hits.begin(), hits.end(), std::uint64_t{0});
    const double total = static_cast<double>(est.total_trials());
    est.estimate = static_cast<double>(est.mismatches) / total;
    est.stderr_ = std::sqrt(est.estimate * (1.0 - est.estimate) / total);

    const double m = std::accumulate(subset_delta.begin(), subset_delta.end(), 0.0) / static_cast<double>(n_subsets);
    double sq = 0.0;
    for (double v : subset_delta) {
        sq += (v - m) * (v - m);
    }
    est.subset_delta_sq_mean = m;
    est.subset_delta_sq_stderr =
        n_subsets > 1 ? std::sqrt(sq / static_cast<double>(n_subsets - 1) / static_cast<double>(n_subsets)) : 0.0;
    return est;
}

struct BoundReport {
    /// Largest C with estimate <= 2 exp(-C nδ²/D) + 3 SE at every grid point (+inf if unconstrained).
    double c_star = std::numeric_limits<double>::infinity();
    /// True when C* is set by a point whose estimate was floored at 1/(total trials).
    bool floored = false;
    bool pass = false;
    /// Least-squares slope of log(max(estimate, floor)) against nδ²/D.
    double slope = std::numeric_limits<double>::quiet_NaN();
    double intercept = std::numeric_limits<double>::quiet_NaN();
    double floor = 0.0;
};

inline BoundReport check_bound(std::span<const MismatchEstimate> grid) {
    if (grid.empty()) {
        throw Error(ErrorKind::Theory, "bound check needs at least one estimate");
    }
    std::uint64_t total = 0;
    for (const auto& e : grid) {
        total += e.total_trials();
    }
    BoundReport report;
    report.floor = 1.0 / static_cast<double>(total);
    for (const auto& e : grid) {
        const double x = e.exponent_argument();
        if (x <= 0.0) {
            continue;  // 2 e^0 = 2 >= any probability
        }
        const double slack = e.estimate - 3.0 * e.stderr_;
        const bool use_floor = slack < report.floor;
        const double effective = use_floor ? report.floor : slack;
        const double c = -std::log(effective / 2.0) / x;
        if (c < report.c_star) {
            report.c_star = c;
            report.floored = use_floor;
        }
    }
    report.pass = report.c_star > 0.0;

    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (const auto& e : grid) {
        const double x = e.exponent_argument();
        const double y = std::log(std::max(e.estimate, report.floor));
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double n = static_cast<double>(grid.size());
    const double denom = n * sxx - sx * sx;
    if (grid.size() > 1 && denom > 0.0) {
        report.slope = (n * sxy - sx * sy) / denom;
        report.intercept = (sy - report.slope * sx) / n;
    }
    return report;
}

/// Columns: D,n,delta_sq,n_subsets,trials,estimate,stderr
inline void write_theory_csv(std::ostream& out, std::span<const MismatchEstimate> grid) {
    out << "D,n,delta_sq,n_subsets,trials,estimate,stderr\n";
    char buf[160];
    for (const auto& e : grid) {
        std::snprintf(buf, sizeof buf, "%zu,%zu,%.6g,%zu,%llu,%.8f,%.8f\n", e.dim, e.n, e.delta_sq, e.n_subsets,
                      static_cast<unsigned long long>(e.total_trials()), e.estimate, e.stderr_);
        out << buf;
    }
}

} // namespace seba

#endif
