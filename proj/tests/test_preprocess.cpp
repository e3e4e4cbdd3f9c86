#include "test_util.hpp"

#include <seba/preprocess.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <set>

using namespace seba;

namespace {

Dataset one_numeric(std::vector<double> values) {
    Dataset ds;
    ds.schema = {{"v", ColumnKind::Numerical, 0}};
    ds.levels = {{}};
    ds.rows.resize(static_cast<Index>(values.size()), 1);
    for (std::size_t i = 0; i < values.size(); ++i) {
        ds.rows(static_cast<Index>(i), 0) = values[i];
    }
    return ds;
}

Dataset num_and_cat3() {
    Dataset ds;
    ds.schema = {{"v", ColumnKind::Numerical, 0}, {"c", ColumnKind::Categorical, 3}};
    ds.levels = {{}, {"p", "q", "r"}};
    ds.rows.resize(3, 2);
    ds.rows << 1.0, 0, 2.0, 1, 3.0, 2;
    ds.validate();
    return ds;
}

std::vector<std::size_t> iota_indices(std::size_t n) {
    std::vector<std::size_t> v(n);
    std::iota(v.begin(), v.end(), std::size_t{0});
    return v;
}

} // namespace

TEST(Fit, PopulationStatistics) {
    const Dataset ds = one_numeric({1, 2, 3});
    const auto pp = fit(ds, iota_indices(3));
    EXPECT_DOUBLE_EQ(pp.columns[0].mean, 2.0);
    EXPECT_NEAR(pp.columns[0].std, std::sqrt(2.0 / 3.0), 1e-15);
    EXPECT_NEAR(pp.columns[0].std, 0.8165, 1e-4);
}

TEST(Fit, ConstantColumnGetsUnitStd) {
    const Dataset ds = one_numeric({4, 4, 4});
    const auto pp = fit(ds, iota_indices(3));
    EXPECT_DOUBLE_EQ(pp.columns[0].std, 1.0);
    const auto x = encode<double>(pp, ds, iota_indices(3));
    EXPECT_TRUE((x.array() == 0.0).all());
}

TEST(Fit, EncodedWidthAndRanges) {
    const auto pp = fit(num_and_cat3(), iota_indices(3));
    EXPECT_EQ(pp.encoded_dim, 4u);
    EXPECT_EQ(pp.range(0).begin, 0u);
    EXPECT_EQ(pp.range(0).end, 1u);
    EXPECT_EQ(pp.range(1).begin, 1u);
    EXPECT_EQ(pp.range(1).end, 4u);

    const Dataset mixed = seba::testing::mixed_dataset(60, 0);
    const auto pm = fit(mixed, iota_indices(60));
    EXPECT_EQ(pm.encoded_dim, 1u + 3u + 1u + 4u);
    std::size_t next = 0;
    for (std::size_t j = 0; j < pm.raw_dim(); ++j) {
        EXPECT_EQ(pm.range(j).begin, next);
        EXPECT_GT(pm.range(j).end, pm.range(j).begin);
        next = pm.range(j).end;
    }
    EXPECT_EQ(next, pm.encoded_dim);
}

TEST(Fit, StatisticsUseTrainingRowsOnly) {
    const Dataset ds = one_numeric({1, 2, 3, 1000});
    const std::vector<std::size_t> train{0, 1, 2};
    const auto pp = fit(ds, train);
    EXPECT_DOUBLE_EQ(pp.columns[0].mean, 2.0);
}

TEST(Encode, StandardizationAndOneHot) {
    const Dataset ds = num_and_cat3();
    const auto pp = fit(ds, iota_indices(3));
    const auto x = encode<double>(pp, ds, iota_indices(3));
    ASSERT_EQ(x.cols(), 4);
    EXPECT_NEAR(x(2, 0), 1.0 / std::sqrt(2.0 / 3.0), 1e-12);
    EXPECT_NEAR(x(2, 0), 1.2247, 1e-4);
    EXPECT_EQ(x.row(2).tail(3), (RowVector<double>(3) << 0, 0, 1).finished());
    // row (2.0, category 0) -> [0, 1, 0, 0]
    EXPECT_EQ(x.row(0).tail(3), (RowVector<double>(3) << 1, 0, 0).finished());
    EXPECT_DOUBLE_EQ(x(1, 0), 0.0);
    EXPECT_EQ(x.row(1).tail(3), (RowVector<double>(3) << 0, 1, 0).finished());
}

TEST(Encode, NoNormalizationIsIdentityOnNumericals) {
    const Dataset ds = num_and_cat3();
    const auto pp = fit(ds, iota_indices(3), PreprocessOptions{false});
    const auto x = encode<double>(pp, ds, iota_indices(3));
    EXPECT_DOUBLE_EQ(x(0, 0), 1.0);
    EXPECT_DOUBLE_EQ(x(2, 0), 3.0);
}

TEST(Encode, OutOfRangeCategoryIsEncodingError) {
    Dataset ds = num_and_cat3();
    const auto pp = fit(ds, iota_indices(3));
    ds.rows(0, 1) = 3;  // cardinality 3
    try {
        encode<double>(pp, ds, iota_indices(3));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Encoding);
    }
}

TEST(Encode, HeldOutRowUnaffectedByPermutingOtherRows) {
    const Dataset ds = seba::testing::mixed_dataset(60, 1);
    std::vector<std::size_t> train(40);
    std::iota(train.begin(), train.end(), std::size_t{0});
    const auto pp = fit(ds, train);
    const std::vector<std::size_t> a{45, 50, 59};
    const std::vector<std::size_t> b{59, 45, 50};
    const auto xa = encode<double>(pp, ds, a);
    const auto xb = encode<double>(pp, ds, b);
    EXPECT_EQ(xa.row(0), xb.row(1));
    EXPECT_EQ(xa.row(2), xb.row(0));
}

TEST(Mask, PopcountArithmetic) {
    EXPECT_EQ(mask_popcount(10, 0.2), 2u);
    EXPECT_EQ(mask_popcount(4, 0.01), 1u);
    EXPECT_EQ(mask_popcount(4, 0.99), 3u);
    EXPECT_EQ(mask_popcount(64, 0.5), 32u);
}

TEST(Mask, ExpansionRule) {
    const auto pp = fit(num_and_cat3(), iota_indices(3));
    const auto m = expand_mask(pp, {1, 0}, 0.5);
    EXPECT_EQ(m.encoded, (std::vector<std::uint8_t>{1, 0, 0, 0}));
    const auto m2 = expand_mask(pp, {0, 1}, 0.5);
    EXPECT_EQ(m2.encoded, (std::vector<std::uint8_t>{0, 1, 1, 1}));
    EXPECT_THROW(expand_mask(pp, {1}, 0.5), Error);
}

TEST(Mask, SampledMasksHaveExactPopcountAndAtomicBlocks) {
    const Dataset ds = seba::testing::mixed_dataset(60, 2);
    const auto pp = fit(ds, iota_indices(60));
    Rng rng = make_rng(3, "mask-test");
    for (double ratio : {0.1, 0.25, 0.5, 0.75, 0.9}) {
        for (int t = 0; t < 200; ++t) {
            const auto m = sample_mask(pp, ratio, rng);
            const auto ones = std::count(m.raw.begin(), m.raw.end(), std::uint8_t{1});
            EXPECT_EQ(static_cast<std::size_t>(ones), mask_popcount(4, ratio));
            for (std::size_t j = 0; j < pp.raw_dim(); ++j) {
                for (std::size_t k = pp.range(j).begin; k < pp.range(j).end; ++k) {
                    EXPECT_EQ(m.encoded[k], m.raw[j]);
                }
            }
        }
    }
}

TEST(Mask, SamplingIsUniformOverColumns) {
    const Dataset ds = one_numeric({0, 1});
    Dataset wide;
    wide.schema.clear();
    for (int j = 0; j < 10; ++j) {
        wide.schema.push_back({"c" + std::to_string(j), ColumnKind::Numerical, 0});
    }
    wide.levels.assign(10, {});
    wide.rows = Matrix<double>::Zero(2, 10);
    const auto pp = fit(wide, iota_indices(2));
    Rng rng = make_rng(0, "uniform");
    std::vector<int> hits(10, 0);
    const int trials = 20000;
    for (int t = 0; t < trials; ++t) {
        const auto m = sample_mask(pp, 0.2, rng);
        for (int j = 0; j < 10; ++j) {
            hits[static_cast<std::size_t>(j)] += m.raw[static_cast<std::size_t>(j)];
        }
    }
    // each column selected with probability 0.2; binomial SE = sqrt(0.16 / 20000) ~ 0.0028
    for (int h : hits) {
        EXPECT_NEAR(static_cast<double>(h) / trials, 0.2, 0.015);
    }
}

TEST(Mask, InvalidArgumentsRejected) {
    const auto pp1 = fit(one_numeric({1, 2}), iota_indices(2));
    Rng rng(0);
    try {
        sample_mask(pp1, 0.5, rng);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Mask);
    }
    const auto pp2 = fit(num_and_cat3(), iota_indices(3));
    EXPECT_THROW(sample_mask(pp2, 0.0, rng), Error);
    EXPECT_THROW(sample_mask(pp2, 1.0, rng), Error);
}

TEST(Views, DefinitionExample) {
    SeparationMask m;
    m.encoded = {0, 1, 0, 1};
    m.raw = m.encoded;
    const RowVector<double> x = (RowVector<double>(4) << 1, 2, 3, 4).finished();
    const auto [xf, xt] = make_views<double>(x, m);
    EXPECT_EQ(xf, (RowVector<double>(4) << 1, 0, 3, 0).finished());
    EXPECT_EQ(xt, (RowVector<double>(4) << 0, 2, 0, 4).finished());
}

TEST(Views, AllOnesMaskBoundary) {
    SeparationMask m;
    m.encoded = {1, 1, 1};
    const RowVector<double> x = (RowVector<double>(3) << -1, 5, 2).finished();
    const auto [xf, xt] = make_views<double>(x, m);
    EXPECT_TRUE((xf.array() == 0.0).all());
    EXPECT_EQ(xt, x);
}

TEST(Views, ComplementarityOnRandomInputs) {
    Rng rng = make_rng(5, "views");
    std::bernoulli_distribution coin(0.4);
    for (int t = 0; t < 100; ++t) {
        const Matrix<double> x = seba::testing::random_matrix(3, 7, rng);
        SeparationMask m;
        for (int k = 0; k < 7; ++k) {
            m.encoded.push_back(coin(rng) ? 1 : 0);
        }
        const auto v = make_views(x, m);
        EXPECT_EQ(v.feature + v.target, x);
        EXPECT_TRUE((v.feature.array() * v.target.array() == 0.0).all());
    }
}

TEST(Views, WidthMismatchIsViewError) {
    SeparationMask m;
    m.encoded = {1, 0};
    const Matrix<double> x = Matrix<double>::Ones(2, 3);
    try {
        make_views(x, m);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::View);
    }
}

TEST(MarginalImputer, FilledValuesComeFromObservedTrainingBlocks) {
    const Dataset ds = seba::testing::mixed_dataset(90, 4);
    std::vector<std::size_t> train(60);
    std::iota(train.begin(), train.end(), std::size_t{0});
    const auto pp = fit(ds, train);
    const Matrix<double> enc_train = encode<double>(pp, ds, train);
    const Matrix<double> batch = encode<double>(pp, ds, std::vector<std::size_t>{70, 71, 72, 73, 74});
    MarginalImputer<double> imputer(pp, enc_train);
    Rng rng = make_rng(0, "impute");
    for (int t = 0; t < 50; ++t) {
        const auto m = sample_mask(pp, 0.5, rng);
        auto v = make_views(batch, m);
        imputer.fill(v.feature, m, rng);
        for (std::size_t j = 0; j < pp.raw_dim(); ++j) {
            const auto r = pp.range(j);
            const auto len = static_cast<Index>(r.size());
            for (Index i = 0; i < batch.rows(); ++i) {
                const RowVector<double> block = v.feature.row(i).segment(static_cast<Index>(r.begin), len);
                if (!m.raw[j]) {
                    EXPECT_EQ(block, batch.row(i).segment(static_cast<Index>(r.begin), len));
                    continue;
                }
                bool found = false;
                for (Index d = 0; d < enc_train.rows() && !found; ++d) {
                    found = block == enc_train.row(d).segment(static_cast<Index>(r.begin), len);
                }
                EXPECT_TRUE(found) << "column " << j << " got a value never seen in training";
            }
        }
    }
}
