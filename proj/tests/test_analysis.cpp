#include "test_util.hpp"

#include <seba/analysis.hpp>
#include <seba/preprocess.hpp>

#include <gtest/gtest.h>

#include <numeric>
#include <sstream>

using namespace seba;
using seba::testing::random_matrix;

namespace {

struct Encoded {
    Dataset ds;
    Preprocessor pp;
    Matrix<double> x;
};

// `shift` moves class c by c * shift on every coordinate, so classes separate on any subset.
Encoded encoded_blobs(std::size_t rows, std::size_t dim, int classes, double sep, std::uint64_t seed,
                      double shift = 0.0) {
    Encoded e;
    e.ds = seba::testing::small_blobs(rows, dim, classes, sep, seed);
    for (std::size_t i = 0; i < rows; ++i) {
        e.ds.rows.row(static_cast<Index>(i)).array() += shift * (*e.ds.labels)[i];
    }
    std::vector<std::size_t> all(rows);
    std::iota(all.begin(), all.end(), std::size_t{0});
    e.pp = fit(e.ds, all);
    e.x = encode_all<double>(e.pp, e.ds);
    return e;
}

} // namespace

TEST(SyntheticData, MeansAreEquidistant) {
    for (auto [dim, classes] : {std::pair<std::size_t, int>{32, 4}, {6, 3}, {8, 8}}) {
        const auto means = equidistant_means(dim, classes, 6.0);
        ASSERT_EQ(means.size(), static_cast<std::size_t>(classes));
        for (int a = 0; a < classes; ++a) {
            for (int b = a + 1; b < classes; ++b) {
                double d2 = 0.0;
                for (std::size_t j = 0; j < dim; ++j) {
                    d2 += (means[a][j] - means[b][j]) * (means[a][j] - means[b][j]);
                }
                EXPECT_NEAR(std::sqrt(d2), 6.0, 1e-9) << dim << "/" << classes;
            }
        }
    }
}

TEST(SyntheticData, DeterministicAndBalanced) {
    const auto a = seba::testing::small_blobs(100, 8, 4, 6.0, 3);
    const auto b = seba::testing::small_blobs(100, 8, 4, 6.0, 3);
    EXPECT_EQ(a.rows, b.rows);
    EXPECT_EQ(*a.labels, *b.labels);
    std::vector<int> counts(4, 0);
    for (int y : *a.labels) {
        ++counts[static_cast<std::size_t>(y)];
    }
    EXPECT_EQ(counts, (std::vector<int>{25, 25, 25, 25}));
}

TEST(NeighborCurve, PureClustersGiveFractionOne) {
    const auto e = encoded_blobs(80, 8, 4, 6.0, 1, 100.0);
    Rng rng(1);
    const auto curve = neighbor_fraction_curve(e.x, *e.ds.labels, e.pp, 0.5, 5, 10, rng);
    ASSERT_EQ(curve.mean_fraction.size(), 10u);
    for (double f : curve.mean_fraction) {
        EXPECT_DOUBLE_EQ(f, 1.0);
    }
}

TEST(NeighborCurve, ShuffledLabelsGiveChance) {
    auto e = encoded_blobs(400, 8, 4, 6.0, 2);
    std::vector<int> labels = *e.ds.labels;
    Rng shuffle(5);
    std::shuffle(labels.begin(), labels.end(), shuffle);
    Rng rng(2);
    const auto curve = neighbor_fraction_curve(e.x, labels, e.pp, 0.5, 5, 10, rng);
    // Excluding self leaves 99 same-class candidates out of 399.
    for (double f : curve.mean_fraction) {
        EXPECT_NEAR(f, 99.0 / 399.0, 0.03);
    }
}

TEST(NeighborCurve, NearestNeighborsArePurerThanFarOnes) {
    const auto e = encoded_blobs(400, 16, 4, 4.0, 3);
    Rng rng(3);
    const auto curve = neighbor_fraction_curve(e.x, *e.ds.labels, e.pp, 0.5, 10, 10, rng);
    EXPECT_GE(curve.mean_fraction.front(), curve.mean_fraction.back());
    EXPECT_GT(curve.mean_fraction.front(), 0.25);
}

TEST(NeighborCurve, Errors) {
    const auto e = encoded_blobs(20, 4, 2, 6.0, 4);
    Rng rng(4);
    EXPECT_THROW(neighbor_fraction_curve(e.x, *e.ds.labels, e.pp, 0.5, 1, 20, rng), Error);
    EXPECT_THROW(neighbor_fraction_curve(e.x, std::vector<int>{}, e.pp, 0.5, 1, 5, rng), Error);
    EXPECT_THROW(neighbor_fraction_curve(e.x, *e.ds.labels, e.pp, 0.5, 0, 5, rng), Error);
}

TEST(SameClassCounts, MatchesBruteForce) {
    Rng rng(5);
    const Matrix<double> x = random_matrix(40, 3, rng);
    std::vector<int> labels(40);
    for (std::size_t i = 0; i < 40; ++i) {
        labels[i] = static_cast<int>(i % 3);
    }
    const auto counts = same_class_counts(x, labels, 5);
    for (Index i = 0; i < 40; ++i) {
        std::vector<std::pair<double, Index>> d;
        for (Index a = 0; a < 40; ++a) {
            if (a != i) {
                d.emplace_back((x.row(a) - x.row(i)).norm(), a);
            }
        }
        std::sort(d.begin(), d.end());
        int same = 0;
        for (int j = 0; j < 5; ++j) {
            same += labels[static_cast<std::size_t>(d[static_cast<std::size_t>(j)].second)] ==
                    labels[static_cast<std::size_t>(i)];
        }
        EXPECT_EQ(counts[static_cast<std::size_t>(i)], same);
    }
}

TEST(LatentConsistency, IdentityLatentReproducesInputCounts) {
    const auto e = encoded_blobs(120, 8, 3, 3.0, 6);
    const auto t = latent_consistency(e.x, e.x, *e.ds.labels);
    ASSERT_EQ(t.buckets.size(), 11u);
    std::size_t total = 0;
    for (const auto& b : t.buckets) {
        total += b.size;
        if (b.size) {
            EXPECT_DOUBLE_EQ(b.mean_input, b.input_count);
            EXPECT_DOUBLE_EQ(b.mean_latent, b.input_count);
        }
    }
    EXPECT_EQ(total, 120u);
    EXPECT_DOUBLE_EQ(t.overall_input, t.overall_latent);
}

TEST(LatentConsistency, SingleClassGivesFullCounts) {
    Rng rng(7);
    const Matrix<double> x = random_matrix(30, 4, rng);
    const Matrix<double> z = random_matrix(30, 2, rng);
    const std::vector<int> labels(30, 0);
    const auto t = latent_consistency(x, z, labels);
    EXPECT_EQ(t.buckets[10].size, 30u);
    EXPECT_DOUBLE_EQ(t.overall_input, 10.0);
    EXPECT_DOUBLE_EQ(t.overall_latent, 10.0);
}

TEST(LatentConsistency, TooFewRowsOrMismatchedShapes) {
    Rng rng(8);
    const Matrix<double> x = random_matrix(10, 2, rng);
    EXPECT_THROW(latent_consistency(x, x, std::vector<int>(10, 0)), Error);
    const Matrix<double> y = random_matrix(11, 2, rng);
    EXPECT_NO_THROW(latent_consistency(y, y, std::vector<int>(11, 0)));
    EXPECT_THROW(latent_consistency(y, x, std::vector<int>(11, 0)), Error);
    EXPECT_THROW(latent_consistency(y, y, std::vector<int>(10, 0)), Error);
}

TEST(LatentConsistency, CsvFormats) {
    const std::vector<int> labels(12, 0);
    Rng rng(9);
    const Matrix<double> x = random_matrix(12, 2, rng);
    std::ostringstream out;
    write_consistency_csv(out, latent_consistency(x, x, labels));
    const std::string text = out.str();
    EXPECT_EQ(text.substr(0, text.find('\n')), "input_bucket,mean_input_count,mean_latent_count,bucket_size");
    EXPECT_NE(text.find("10,10.000000,10.000000,12\n"), std::string::npos);
    std::ostringstream curve;
    write_curve_csv(curve, NeighborCurve{{1.0, 0.5}});
    EXPECT_EQ(curve.str(), "k,mean_fraction\n1,1.000000\n2,0.500000\n");
}
