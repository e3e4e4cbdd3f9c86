#ifndef SEBA_DATA_HPP
#define SEBA_DATA_HPP

#include "error.hpp"
#include "rng.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

/**
 * @file data.hpp
 *
 * @brief Tabular dataset loading, the 5:1 train/test partition and few-shot episode sampling.
 */

namespace seba {

enum class ColumnKind { Numerical, Categorical };

struct ColumnSchema {
    std::string name;
    ColumnKind kind = ColumnKind::Numerical;
    /// Number of category levels; zero for numerical columns.
    std::size_t cardinality = 0;
};

/**
 * Raw tabular records.
 *
 * `rows` holds one raw cell per (record, column): the value itself for numerical columns,
 * the dense category index for categorical columns.
 */
struct Dataset {
    std::vector<ColumnSchema> schema;
    Eigen::MatrixXd rows;
    std::optional<std::vector<int>> labels;
    int n_classes = 0;

    /// Level names per column in index order (empty for numerical columns).
    std::vector<std::vector<std::string>> levels;
    std::vector<std::string> class_names;

    std::size_t n_rows() const { return static_cast<std::size_t>(rows.rows()); }
    std::size_t n_columns() const { return schema.size(); }
    bool has_labels() const { return labels.has_value(); }

    /// Throws a schema error if any invariant is broken.
    void validate() const {
        if (static_cast<std::size_t>(rows.cols()) != schema.size()) {
            throw Error(ErrorKind::Schema, "row width does not match schema length");
        }
        std::unordered_set<std::string> names;
        for (std::size_t j = 0; j < schema.size(); ++j) {
            const auto& col = schema[j];
            if (!names.insert(col.name).second) {
                throw Error(ErrorKind::Schema, "duplicate column name '" + col.name + "'");
            }
            if (col.kind == ColumnKind::Categorical) {
                if (col.cardinality < 2) {
                    throw Error(ErrorKind::Schema, "categorical column '" + col.name + "' has fewer than 2 levels");
                }
                for (Eigen::Index i = 0; i < rows.rows(); ++i) {
                    const double v = rows(i, static_cast<Eigen::Index>(j));
                    if (v < 0 || v >= static_cast<double>(col.cardinality) || v != std::floor(v)) {
                        throw Error(ErrorKind::Schema, "category index out of range in column '" + col.name + "'");
                    }
                }
            }
        }
        if (labels) {
            if (labels->size() != n_rows()) {
                throw Error(ErrorKind::Schema, "label vector length does not match row count");
            }
            if (n_classes < 1) {
                throw Error(ErrorKind::Schema, "labelled dataset needs at least one class");
            }
            std::vector<char> seen(static_cast<std::size_t>(n_classes), 0);
            for (int y : *labels) {
                if (y < 0 || y >= n_classes) {
                    throw Error(ErrorKind::Schema, "label out of range");
                }
                seen[static_cast<std::size_t>(y)] = 1;
            }
            if (std::find(seen.begin(), seen.end(), 0) != seen.end()) {
                throw Error(ErrorKind::Schema, "some class has no rows");
            }
        }
    }
};

/// Column declarations read from a schema file, before the data has been seen.
struct SchemaSpec {
    struct Entry {
        std::string name;
        ColumnKind kind = ColumnKind::Numerical;
        /// Declared level order for a categorical column; empty means first-appearance order.
        std::vector<std::string> levels;
    };
    std::vector<Entry> features;
    std::optional<std::string> label;
};

inline ColumnKind parse_column_kind(const std::string& text) {
    if (text == "numerical" || text == "numeric") {
        return ColumnKind::Numerical;
    }
    if (text == "categorical") {
        return ColumnKind::Categorical;
    }
    throw Error(ErrorKind::Schema, "unknown column kind '" + text + "'");
}

/**
 * Parse a schema document.
 *
 * Accepted form: `{"columns": [{"name": "age", "kind": "numerical"}, ..., {"name": "y", "label": true}]}`
 * or the bare array. At most one column may carry `"label": true`. A categorical column may
 * declare `"levels": ["a", "b", ...]` to fix its index order; otherwise levels are indexed in
 * order of first appearance in the data file.
 */
inline SchemaSpec parse_schema(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::Schema, std::string("malformed schema: ") + e.what());
    }
    const nlohmann::json* columns = &doc;
    if (doc.is_object()) {
        if (!doc.contains("columns")) {
            throw Error(ErrorKind::Schema, "schema object has no 'columns' list");
        }
        columns = &doc["columns"];
    }
    if (!columns->is_array() || columns->empty()) {
        throw Error(ErrorKind::Schema, "schema must list at least one column");
    }

    SchemaSpec spec;
    std::unordered_set<std::string> names;
    for (const auto& entry : *columns) {
        if (!entry.is_object() || !entry.contains("name") || !entry["name"].is_string()) {
            throw Error(ErrorKind::Schema, "every schema entry needs a string 'name'");
        }
        std::string name = entry["name"].get<std::string>();
        if (!names.insert(name).second) {
            throw Error(ErrorKind::Schema, "duplicate column name '" + name + "'");
        }
        const bool is_label = entry.contains("label") && entry["label"].is_boolean() && entry["label"].get<bool>();
        if (is_label) {
            if (spec.label) {
                throw Error(ErrorKind::Schema, "more than one label column");
            }
            spec.label = name;
            continue;
        }
        if (!entry.contains("kind") || !entry["kind"].is_string()) {
            throw Error(ErrorKind::Schema, "column '" + name + "' has no 'kind'");
        }
        SchemaSpec::Entry feature{std::move(name), parse_column_kind(entry["kind"].get<std::string>()), {}};
        if (entry.contains("levels")) {
            const auto& lv = entry["levels"];
            if (feature.kind != ColumnKind::Categorical || !lv.is_array()) {
                throw Error(ErrorKind::Schema, "'levels' must be a list on a categorical column ('" + feature.name + "')");
            }
            std::unordered_set<std::string> seen;
            for (const auto& level : lv) {
                if (!level.is_string() || !seen.insert(level.get<std::string>()).second) {
                    throw Error(ErrorKind::Schema, "levels of '" + feature.name + "' must be distinct strings");
                }
                feature.levels.push_back(level.get<std::string>());
            }
        }
        spec.features.push_back(std::move(feature));
    }
    if (spec.features.empty()) {
        throw Error(ErrorKind::Schema, "schema declares no feature columns");
    }
    return spec;
}

inline SchemaSpec load_schema(const std::string& schema_path) {
    std::ifstream in(schema_path);
    if (!in) {
        throw Error(ErrorKind::Schema, "cannot open schema file '" + schema_path + "'");
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_schema(buffer.str());
}

namespace detail {

inline std::string trim(std::string_view s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r' || s[b] == '\n')) {
        ++b;
    }
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r' || s[e - 1] == '\n')) {
        --e;
    }
    return std::string(s.substr(b, e - b));
}

// Splits one CSV record; a field may be wrapped in double quotes ("" escapes a quote).
inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(trim(field));
            field.clear();
        } else {
            field.push_back(c);
        }
    }
    out.push_back(trim(field));
    return out;
}

inline std::optional<double> parse_double(const std::string& text) {
    double value = 0;
    const char* first = text.data();
    const char* last = text.data() + text.size();
    if (first != last && *first == '+') {
        ++first;
    }
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last || first == last || !std::isfinite(value)) {
        return std::nullopt;
    }
    return value;
}

} // namespace detail

/**
 * Build a Dataset from CSV text and a parsed schema.
 *
 * Category strings and labels are mapped to dense indices in order of first appearance.
 */
inline Dataset parse_csv(std::istream& in, const SchemaSpec& spec) {
    std::string line;
    if (!std::getline(in, line) || detail::trim(line).empty()) {
        throw Error(ErrorKind::Format, "empty file (no header row)");
    }
    if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF && static_cast<unsigned char>(line[1]) == 0xBB &&
        static_cast<unsigned char>(line[2]) == 0xBF) {
        line.erase(0, 3);
    }
    const auto header = detail::split_csv_line(line);

    std::unordered_map<std::string, std::size_t> feature_slot;
    for (std::size_t j = 0; j < spec.features.size(); ++j) {
        feature_slot.emplace(spec.features[j].name, j);
    }
    // header position -> feature slot, or npos for the label column
    constexpr std::size_t label_marker = static_cast<std::size_t>(-1);
    std::vector<std::size_t> position_to_slot(header.size());
    std::vector<char> slot_seen(spec.features.size(), 0);
    bool label_seen = false;
    for (std::size_t p = 0; p < header.size(); ++p) {
        const auto& name = header[p];
        if (spec.label && name == *spec.label) {
            if (label_seen) {
                throw Error(ErrorKind::Schema, "label column '" + name + "' appears twice in header");
            }
            label_seen = true;
            position_to_slot[p] = label_marker;
            continue;
        }
        auto it = feature_slot.find(name);
        if (it == feature_slot.end()) {
            throw Error(ErrorKind::Schema, "unknown column name '" + name + "' in CSV header");
        }
        if (slot_seen[it->second]) {
            throw Error(ErrorKind::Schema, "column '" + name + "' appears twice in header");
        }
        slot_seen[it->second] = 1;
        position_to_slot[p] = it->second;
    }
    for (std::size_t j = 0; j < spec.features.size(); ++j) {
        if (!slot_seen[j]) {
            throw Error(ErrorKind::Schema, "schema column '" + spec.features[j].name + "' missing from CSV header");
        }
    }
    if (spec.label && !label_seen) {
        throw Error(ErrorKind::Schema, "label column '" + *spec.label + "' missing from CSV header");
    }

    const std::size_t width = spec.features.size();
    std::vector<double> cells;
    std::vector<int> labels;
    std::vector<std::unordered_map<std::string, int>> level_index(width);
    std::vector<std::vector<std::string>> levels(width);
    for (std::size_t j = 0; j < width; ++j) {
        for (const auto& level : spec.features[j].levels) {
            level_index[j].emplace(level, static_cast<int>(levels[j].size()));
            levels[j].push_back(level);
        }
    }
    std::unordered_map<std::string, int> class_index;
    std::vector<std::string> class_names;

    std::size_t n_rows = 0;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) {
            continue;
        }
        const auto fields = detail::split_csv_line(line);
        if (fields.size() != header.size()) {
            throw Error(ErrorKind::Format, "line " + std::to_string(line_no) + " has " + std::to_string(fields.size()) +
                                               " fields, header has " + std::to_string(header.size()));
        }
        const std::size_t base = cells.size();
        cells.resize(base + width, 0.0);
        for (std::size_t p = 0; p < fields.size(); ++p) {
            const std::size_t slot = position_to_slot[p];
            const std::string& text = fields[p];
            if (slot == label_marker) {
                auto [it, inserted] = class_index.emplace(text, static_cast<int>(class_names.size()));
                if (inserted) {
                    class_names.push_back(text);
                }
                labels.push_back(it->second);
                continue;
            }
            if (spec.features[slot].kind == ColumnKind::Numerical) {
                auto value = detail::parse_double(text);
                if (!value) {
                    throw Error(ErrorKind::Parse, "non-numeric value '" + text + "' at row " + std::to_string(n_rows + 1) +
                                                      ", column '" + spec.features[slot].name + "'");
                }
                cells[base + slot] = *value;
            } else if (!spec.features[slot].levels.empty()) {
                auto it = level_index[slot].find(text);
                if (it == level_index[slot].end()) {
                    throw Error(ErrorKind::Parse, "undeclared level '" + text + "' at row " + std::to_string(n_rows + 1) +
                                                      ", column '" + spec.features[slot].name + "'");
                }
                cells[base + slot] = it->second;
            } else {
                auto [it, inserted] = level_index[slot].emplace(text, static_cast<int>(levels[slot].size()));
                if (inserted) {
                    levels[slot].push_back(text);
                }
                cells[base + slot] = it->second;
            }
        }
        ++n_rows;
    }
    if (n_rows == 0) {
        throw Error(ErrorKind::Format, "file has a header but no data rows");
    }

    Dataset ds;
    ds.rows.resize(static_cast<Eigen::Index>(n_rows), static_cast<Eigen::Index>(width));
    for (std::size_t i = 0; i < n_rows; ++i) {
        for (std::size_t j = 0; j < width; ++j) {
            ds.rows(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = cells[i * width + j];
        }
    }
    for (std::size_t j = 0; j < width; ++j) {
        ColumnSchema col{spec.features[j].name, spec.features[j].kind, 0};
        if (col.kind == ColumnKind::Categorical) {
            col.cardinality = levels[j].size();
        }
        ds.schema.push_back(std::move(col));
    }
    ds.levels = std::move(levels);
    if (spec.label) {
        ds.labels = std::move(labels);
        ds.n_classes = static_cast<int>(class_names.size());
        ds.class_names = std::move(class_names);
    }
    ds.validate();
    return ds;
}

inline Dataset load_csv(const std::string& data_path, const std::string& schema_path) {
    const SchemaSpec spec = load_schema(schema_path);
    std::ifstream in(data_path);
    if (!in) {
        throw Error(ErrorKind::Format, "cannot open data file '" + data_path + "'");
    }
    return parse_csv(in, spec);
}

/// Row index lists of the three partitions. Each list is sorted ascending.
struct SplitIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> valid;
    std::vector<std::size_t> test;

    /// Training pool, i.e. the unlabeled pretraining data (train + valid).
    std::size_t pool_size() const { return train.size() + valid.size(); }
};

/// Test rows per class: floor(count / 6); the remainder goes to the training pool.
inline constexpr std::size_t kTestDivisor = 6;
inline constexpr double kValidFraction = 0.10;

/**
 * Partition rows into train / valid / test.
 *
 * Stratified by label when labels exist, so every class reaches the test partition
 * that episodes are drawn from. The pool is then split 90/10 into train and valid.
 */
inline SplitIndices split(const Dataset& ds, std::uint64_t seed) {
    const std::size_t n = ds.n_rows();
    if (n < 12) {
        throw Error(ErrorKind::Split, "dataset has " + std::to_string(n) + " rows, at least 12 are required");
    }
    std::vector<std::vector<std::size_t>> groups;
    if (ds.labels) {
        groups.resize(static_cast<std::size_t>(ds.n_classes));
        for (std::size_t i = 0; i < n; ++i) {
            groups[static_cast<std::size_t>((*ds.labels)[i])].push_back(i);
        }
    } else {
        groups.emplace_back(n);
        for (std::size_t i = 0; i < n; ++i) {
            groups[0][i] = i;
        }
    }

    Rng rng = make_rng(seed, "split");
    SplitIndices out;
    std::vector<std::size_t> pool;
    for (std::size_t c = 0; c < groups.size(); ++c) {
        auto& members = groups[c];
        const std::size_t n_test = members.size() / kTestDivisor;
        if (n_test < 1) {
            const std::string who = ds.labels ? "class " + std::to_string(c) : std::string("dataset");
            throw Error(ErrorKind::Split, who + " has " + std::to_string(members.size()) +
                                              " rows, too few to contribute a test row at 5:1");
        }
        std::shuffle(members.begin(), members.end(), rng);
        out.test.insert(out.test.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_test));
        pool.insert(pool.end(), members.begin() + static_cast<std::ptrdiff_t>(n_test), members.end());
    }

    std::shuffle(pool.begin(), pool.end(), rng);
    const auto n_valid = static_cast<std::size_t>(std::llround(kValidFraction * static_cast<double>(pool.size())));
    out.valid.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n_valid));
    out.train.assign(pool.begin() + static_cast<std::ptrdiff_t>(n_valid), pool.end());

    std::sort(out.train.begin(), out.train.end());
    std::sort(out.valid.begin(), out.valid.end());
    std::sort(out.test.begin(), out.test.end());
    return out;
}

struct LabeledIndex {
    std::size_t row = 0;
    int label = 0;

    friend bool operator==(const LabeledIndex&, const LabeledIndex&) = default;
};

/// One N-way K-shot task. Labels are the dataset's class indices; `classes` lists the N classes in use.
struct Episode {
    int n_way = 0;
    int k_shot = 0;
    std::vector<int> classes;
    std::vector<LabeledIndex> support;
    std::vector<LabeledIndex> query;
};

inline constexpr int kDefaultQueryPerClass = 15;

/**
 * Draw an episode from the test partition.
 *
 * When `n_way` is smaller than the number of classes the episode classes are sampled uniformly.
 * Within each class, support and query rows are sampled without replacement.
 */
inline Episode sample_episode(const Dataset& ds, const SplitIndices& split, int n_way, int k_shot, int n_query_per_class,
                              std::uint64_t seed) {
    if (!ds.labels) {
        throw Error(ErrorKind::Episode, "episodes require a labelled dataset");
    }
    if (n_way < 1 || k_shot < 1 || n_query_per_class < 1) {
        throw Error(ErrorKind::Episode, "n_way, k_shot and n_query_per_class must be positive");
    }
    if (n_way > ds.n_classes) {
        throw Error(ErrorKind::Episode, "n_way=" + std::to_string(n_way) + " exceeds the " + std::to_string(ds.n_classes) +
                                            " classes of the dataset");
    }
    std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(ds.n_classes));
    for (std::size_t row : split.test) {
        by_class[static_cast<std::size_t>((*ds.labels)[row])].push_back(row);
    }

    Rng rng = make_rng(seed, "episode");
    std::vector<int> classes(static_cast<std::size_t>(ds.n_classes));
    for (int c = 0; c < ds.n_classes; ++c) {
        classes[static_cast<std::size_t>(c)] = c;
    }
    if (n_way < ds.n_classes) {
        std::shuffle(classes.begin(), classes.end(), rng);
        classes.resize(static_cast<std::size_t>(n_way));
        std::sort(classes.begin(), classes.end());
    }

    Episode ep;
    ep.n_way = n_way;
    ep.k_shot = k_shot;
    ep.classes = classes;
    const auto needed = static_cast<std::size_t>(k_shot + n_query_per_class);
    for (int c : classes) {
        auto rows = by_class[static_cast<std::size_t>(c)];
        if (rows.size() < needed) {
            const std::string name = static_cast<std::size_t>(c) < ds.class_names.size()
                                         ? " ('" + ds.class_names[static_cast<std::size_t>(c)] + "')"
                                         : std::string();
            throw Error(ErrorKind::Episode, "class " + std::to_string(c) + name + " has " + std::to_string(rows.size()) +
                                                " test rows, needs " + std::to_string(needed));
        }
        std::shuffle(rows.begin(), rows.end(), rng);
        for (std::size_t i = 0; i < static_cast<std::size_t>(k_shot); ++i) {
            ep.support.push_back({rows[i], c});
        }
        for (std::size_t i = static_cast<std::size_t>(k_shot); i < needed; ++i) {
            ep.query.push_back({rows[i], c});
        }
    }
    return ep;
}

} // namespace seba

#endif
