#include "test_util.hpp"

#include <seba/data.hpp>

#include <gtest/gtest.h>

#include <algorithm>
#include <set>
#include <sstream>

using namespace seba;
using seba::testing::TempDir;
using seba::testing::write_text;

namespace {

const char* kTwoColumnSchema = R"({"columns": [{"name": "num", "kind": "numerical"},
                                               {"name": "cat", "kind": "categorical"},
                                               {"name": "y", "label": true}]})";

Dataset labelled(std::size_t rows, int classes) {
    Dataset ds;
    ds.schema = {{"v", ColumnKind::Numerical, 0}};
    ds.levels = {{}};
    ds.rows.resize(static_cast<Index>(rows), 1);
    std::vector<int> labels(rows);
    for (std::size_t i = 0; i < rows; ++i) {
        ds.rows(static_cast<Index>(i), 0) = static_cast<double>(i);
        labels[i] = static_cast<int>(i % static_cast<std::size_t>(classes));
    }
    ds.labels = labels;
    ds.n_classes = classes;
    ds.validate();
    return ds;
}

} // namespace

TEST(LoadCsv, DeclaredLevelsFixTheIndexOrder) {
    TempDir dir("data");
    write_text(dir.file("s.json"), R"({"columns": [{"name": "num", "kind": "numerical"},
                                                 {"name": "cat", "kind": "categorical", "levels": ["a", "b"]}]})");
    write_text(dir.file("d.csv"), "num,cat\n1.5,b\n2.0,a\n");
    const Dataset ds = load_csv(dir.file("d.csv"), dir.file("s.json"));
    ASSERT_EQ(ds.n_rows(), 2u);
    ASSERT_EQ(ds.n_columns(), 2u);
    EXPECT_DOUBLE_EQ(ds.rows(0, 0), 1.5);
    EXPECT_DOUBLE_EQ(ds.rows(0, 1), 1.0);
    EXPECT_DOUBLE_EQ(ds.rows(1, 0), 2.0);
    EXPECT_DOUBLE_EQ(ds.rows(1, 1), 0.0);
    EXPECT_EQ(ds.levels[1], (std::vector<std::string>{"a", "b"}));
    EXPECT_EQ(ds.schema[1].cardinality, 2u);
    EXPECT_FALSE(ds.has_labels());

    write_text(dir.file("bad.csv"), "num,cat\n1.5,c\n2.0,a\n");
    try {
        load_csv(dir.file("bad.csv"), dir.file("s.json"));
        ADD_FAILURE() << "undeclared level accepted";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Parse);
    }
    EXPECT_THROW(parse_schema(R"([{"name": "n", "kind": "numerical", "levels": ["a"]}])"), Error);
    EXPECT_THROW(parse_schema(R"([{"name": "c", "kind": "categorical", "levels": ["a", "a"]}])"), Error);
}

TEST(LoadCsv, UndeclaredLevelsUseFirstAppearance) {
    TempDir dir("data");
    write_text(dir.file("s.json"), R"({"columns": [{"name": "num", "kind": "numerical"},
                                                 {"name": "cat", "kind": "categorical"}]})");
    write_text(dir.file("d.csv"), "num,cat\n1.5,b\n2.0,a\n");
    const Dataset ds = load_csv(dir.file("d.csv"), dir.file("s.json"));
    EXPECT_DOUBLE_EQ(ds.rows(0, 1), 0.0);
    EXPECT_DOUBLE_EQ(ds.rows(1, 1), 1.0);
    EXPECT_EQ(ds.levels[1], (std::vector<std::string>{"b", "a"}));
}

TEST(LoadCsv, LabelColumnMappedInFirstAppearanceOrder) {
    std::istringstream csv("y,num,cat\ndog,1,a\ncat,2,b\ndog,3,a\n");
    const Dataset ds = parse_csv(csv, parse_schema(kTwoColumnSchema));
    ASSERT_TRUE(ds.has_labels());
    EXPECT_EQ(*ds.labels, (std::vector<int>{0, 1, 0}));
    EXPECT_EQ(ds.class_names, (std::vector<std::string>{"dog", "cat"}));
    EXPECT_EQ(ds.n_classes, 2);
    // header order differs from schema order; cells follow the schema
    EXPECT_DOUBLE_EQ(ds.rows(2, 0), 3.0);
}

TEST(LoadCsv, UnknownColumnIsSchemaError) {
    std::istringstream csv("num,cat,extra,y\n1,a,2,p\n");
    try {
        parse_csv(csv, parse_schema(kTwoColumnSchema));
        FAIL() << "expected a schema error";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Schema);
        EXPECT_NE(std::string(e.what()).find("extra"), std::string::npos);
    }
}

TEST(LoadCsv, NonNumericCellNamesRowAndColumn) {
    std::istringstream csv("num,cat,y\n1,a,p\nabc,b,q\n");
    try {
        parse_csv(csv, parse_schema(kTwoColumnSchema));
        FAIL() << "expected a parse error";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Parse);
        const std::string msg = e.what();
        EXPECT_NE(msg.find("row 2"), std::string::npos) << msg;
        EXPECT_NE(msg.find("'num'"), std::string::npos) << msg;
    }
}

TEST(LoadCsv, EmptyFileIsFormatError) {
    std::istringstream csv("");
    try {
        parse_csv(csv, parse_schema(kTwoColumnSchema));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Format);
    }
}

TEST(LoadCsv, SingleLevelCategoricalRejected) {
    std::istringstream csv("num,cat,y\n1,a,p\n2,a,q\n");
    EXPECT_THROW(parse_csv(csv, parse_schema(kTwoColumnSchema)), Error);
}

TEST(Schema, RejectsMalformedDocuments) {
    EXPECT_THROW(parse_schema("not json"), Error);
    EXPECT_THROW(parse_schema(R"({"columns": []})"), Error);
    EXPECT_THROW(parse_schema(R"([{"name": "a", "kind": "text"}])"), Error);
    EXPECT_THROW(parse_schema(R"([{"name": "a", "kind": "numerical"}, {"name": "a", "kind": "numerical"}])"), Error);
    EXPECT_THROW(parse_schema(R"([{"name": "a", "kind": "numerical"}, {"name": "y", "label": true},
                                  {"name": "z", "label": true}])"),
                 Error);
    const auto spec = parse_schema(R"([{"name": "a", "kind": "numeric"}, {"name": "y", "label": true}])");
    EXPECT_EQ(spec.features.size(), 1u);
    EXPECT_EQ(*spec.label, "y");
}

TEST(Schema, MissingFileIsSchemaError) {
    try {
        load_schema("/nonexistent/schema.json");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Schema);
    }
}

TEST(Split, FiveToOneArithmetic) {
    const auto s600 = split(labelled(600, 1), 0);
    EXPECT_EQ(s600.test.size(), 100u);
    EXPECT_EQ(s600.pool_size(), 500u);
    EXPECT_EQ(s600.valid.size(), 50u);

    const auto s6000 = split(labelled(6000, 4), 0);
    EXPECT_EQ(s6000.test.size(), 1000u);
}

TEST(Split, DeterministicPerSeed) {
    const Dataset ds = labelled(600, 5);
    const auto a = split(ds, 7);
    const auto b = split(ds, 7);
    EXPECT_EQ(a.train, b.train);
    EXPECT_EQ(a.valid, b.valid);
    EXPECT_EQ(a.test, b.test);
    const auto c = split(ds, 8);
    EXPECT_NE(a.test, c.test);
}

TEST(Split, PartitionAndStratificationOverSeeds) {
    const Dataset ds = labelled(613, 7);  // uneven class sizes
    std::vector<std::size_t> class_count(7, 0);
    for (int y : *ds.labels) {
        ++class_count[static_cast<std::size_t>(y)];
    }
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
        const auto s = split(ds, seed);
        std::vector<int> seen(ds.n_rows(), 0);
        for (const auto* part : {&s.train, &s.valid, &s.test}) {
            EXPECT_TRUE(std::is_sorted(part->begin(), part->end()));
            for (std::size_t i : *part) {
                ++seen[i];
            }
        }
        EXPECT_TRUE(std::all_of(seen.begin(), seen.end(), [](int v) { return v == 1; }));
        EXPECT_EQ(s.valid.size(), static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(s.pool_size()))));
        std::vector<std::size_t> test_per_class(7, 0);
        for (std::size_t i : s.test) {
            ++test_per_class[static_cast<std::size_t>((*ds.labels)[i])];
        }
        for (std::size_t c = 0; c < 7; ++c) {
            EXPECT_EQ(test_per_class[c], class_count[c] / 6);
        }
    }
}

TEST(Split, TooSmallDatasetsRejected) {
    EXPECT_THROW(split(labelled(11, 1), 0), Error);
    // 12 rows over 3 classes gives classes of 4 rows: no test row at 5:1
    try {
        split(labelled(12, 3), 0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Split);
    }
}

TEST(Episode, SizesAndBalance) {
    const Dataset ds = labelled(1200, 10);  // 20 test rows per class
    const auto s = split(ds, 1);
    const Episode ep = sample_episode(ds, s, 10, 5, 15, 3);
    EXPECT_EQ(ep.support.size(), 50u);
    EXPECT_EQ(ep.query.size(), 150u);
    std::vector<int> per_class(10, 0);
    std::set<std::size_t> support_rows;
    const std::set<std::size_t> test(s.test.begin(), s.test.end());
    for (const auto& item : ep.support) {
        ++per_class[static_cast<std::size_t>(item.label)];
        support_rows.insert(item.row);
        EXPECT_TRUE(test.count(item.row));
        EXPECT_EQ((*ds.labels)[item.row], item.label);
    }
    EXPECT_TRUE(std::all_of(per_class.begin(), per_class.end(), [](int v) { return v == 5; }));
    for (const auto& item : ep.query) {
        EXPECT_FALSE(support_rows.count(item.row));
        EXPECT_TRUE(test.count(item.row));
    }
}

TEST(Episode, OneShotHasOneSupportRowPerClass) {
    const Dataset ds = labelled(600, 4);
    const auto s = split(ds, 0);
    const Episode ep = sample_episode(ds, s, 4, 1, 15, 0);
    EXPECT_EQ(ep.support.size(), 4u);
    EXPECT_EQ(ep.classes, (std::vector<int>{0, 1, 2, 3}));
}

TEST(Episode, SubsetOfClassesWhenNWaySmaller) {
    const Dataset ds = labelled(1200, 10);
    const auto s = split(ds, 0);
    const Episode ep = sample_episode(ds, s, 3, 2, 5, 11);
    EXPECT_EQ(ep.classes.size(), 3u);
    for (const auto& item : ep.support) {
        EXPECT_TRUE(std::find(ep.classes.begin(), ep.classes.end(), item.label) != ep.classes.end());
    }
}

TEST(Episode, DistinctSeedsRarelyCollide) {
    const Dataset ds = labelled(1200, 4);
    const auto s = split(ds, 0);
    std::set<std::vector<std::size_t>> seen;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const Episode ep = sample_episode(ds, s, 4, 5, 15, seed);
        std::vector<std::size_t> rows;
        for (const auto& item : ep.support) {
            rows.push_back(item.row);
        }
        seen.insert(rows);
        const Episode again = sample_episode(ds, s, 4, 5, 15, seed);
        EXPECT_EQ(ep.support, again.support);
    }
    EXPECT_EQ(seen.size(), 20u);
}

TEST(Episode, TooFewTestRowsNamesTheClass) {
    const Dataset ds = labelled(120, 4);  // 5 test rows per class
    const auto s = split(ds, 0);
    try {
        sample_episode(ds, s, 4, 1, 15, 0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Episode);
        EXPECT_NE(std::string(e.what()).find("class 0"), std::string::npos);
    }
    EXPECT_THROW(sample_episode(ds, s, 5, 1, 1, 0), Error);
}
