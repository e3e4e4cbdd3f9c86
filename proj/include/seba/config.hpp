#ifndef SEBA_CONFIG_HPP
#define SEBA_CONFIG_HPP

#include "data.hpp"
#include "error.hpp"
#include "fewshot.hpp"
#include "pretrain.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

/**
 * @file config.hpp
 *
 * @brief Flat `key = value` configuration with `[section]` headers, and the experiment settings
 *        it resolves to.
 *
 * Keys are addressed as "section.key"; keys before any header live in section "". Lines
 * starting with '#' or ';' are comments. Every default below is the paper's Table 6 value
 * unless noted.
 */

namespace seba {

class Config {
public:
    static Config parse(const std::string& text) {
        Config cfg;
        std::istringstream in(text);
        std::string line;
        std::string section;
        int line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            const std::string t = detail::trim(line);
            if (t.empty() || t[0] == '#' || t[0] == ';') {
                continue;
            }
            if (t.front() == '[') {
                if (t.back() != ']' || t.size() < 3) {
                    throw Error(ErrorKind::Config, "line " + std::to_string(line_no) + ": malformed section header");
                }
                section = detail::trim(std::string_view(t).substr(1, t.size() - 2));
                continue;
            }
            const auto eq = t.find('=');
            if (eq == std::string::npos) {
                throw Error(ErrorKind::Config, "line " + std::to_string(line_no) + ": expected key = value");
            }
            const std::string key = detail::trim(std::string_view(t).substr(0, eq));
            if (key.empty()) {
                throw Error(ErrorKind::Config, "line " + std::to_string(line_no) + ": empty key");
            }
            cfg.set(section.empty() ? key : section + "." + key, detail::trim(std::string_view(t).substr(eq + 1)));
        }
        return cfg;
    }

    static Config load(const std::string& path) {
        std::ifstream in(path);
        if (!in) {
            throw Error(ErrorKind::Config, "cannot open config file '" + path + "'");
        }
        std::stringstream buffer;
        buffer << in.rdbuf();
        return parse(buffer.str());
    }

    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    bool has(const std::string& key) const { return values_.count(key) != 0; }

    std::string get_string(const std::string& key, const std::string& fallback = {}) const {
        auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    double get_double(const std::string& key, double fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) {
            return fallback;
        }
        auto v = detail::parse_double(it->second);
        if (!v) {
            throw Error(ErrorKind::Config, key + " = '" + it->second + "' is not a number");
        }
        return *v;
    }

    long long get_int(const std::string& key, long long fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) {
            return fallback;
        }
        return parse_int(key, it->second);
    }

    bool get_bool(const std::string& key, bool fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) {
            return fallback;
        }
        const auto& v = it->second;
        if (v == "true" || v == "yes" || v == "1" || v == "on") {
            return true;
        }
        if (v == "false" || v == "no" || v == "0" || v == "off") {
            return false;
        }
        throw Error(ErrorKind::Config, key + " = '" + v + "' is not a boolean");
    }

    /// Comma-separated list; empty entries are dropped.
    std::vector<std::string> get_list(const std::string& key) const {
        std::vector<std::string> out;
        auto it = values_.find(key);
        if (it == values_.end()) {
            return out;
        }
        for (auto& item : detail::split_csv_line(it->second)) {
            if (!item.empty()) {
                out.push_back(item);
            }
        }
        return out;
    }

    const std::map<std::string, std::string>& values() const { return values_; }

    static long long parse_int(const std::string& key, const std::string& text) {
        long long v = 0;
        const auto* end = text.data() + text.size();
        auto [ptr, ec] = std::from_chars(text.data(), end, v);
        if (ec != std::errc() || ptr != end) {
            throw Error(ErrorKind::Config, key + " = '" + text + "' is not an integer");
        }
        return v;
    }

private:
    std::map<std::string, std::string> values_;
};

enum class Precision { F32, F64 };

struct ExperimentConfig {
    std::string data_csv;
    std::string data_schema;
    std::string dataset_name = "dataset";

    std::uint64_t seed = 0;
    std::vector<RatioPolicy> ratios;
    StackConfig stack;
    PretrainConfig pretrain;
    AdamConfig adam;
    bool normalize = true;
    bool parallel = true;
    Precision precision = Precision::F32;

    EvalProtocol protocol;
    std::optional<HeadKind> head;
    HeadConfig head_config;
};

/// Parses "0.1,0.2,random" into ratio policies.
inline std::vector<RatioPolicy> parse_ratios(const std::vector<std::string>& items) {
    std::vector<RatioPolicy> out;
    for (const auto& s : items) {
        if (s == "random") {
            out.push_back(RatioPolicy::random_choice());
            continue;
        }
        auto v = detail::parse_double(s);
        if (!v || !(*v > 0.0 && *v < 1.0)) {
            throw Error(ErrorKind::Config, "ratio '" + s + "' must be a number in (0, 1) or 'random'");
        }
        out.push_back(RatioPolicy::constant(*v));
    }
    return out;
}

/// Evaluation seeds 0..count-1, each derived from the master seed.
inline std::vector<std::uint64_t> evaluation_seeds(std::uint64_t master, std::size_t count) {
    std::vector<std::uint64_t> out;
    for (std::size_t s = 0; s < count; ++s) {
        out.push_back(derive_seed(master, "eval", s));
    }
    return out;
}

inline ExperimentConfig resolve(const Config& c) {
    ExperimentConfig e;
    e.data_csv = c.get_string("data.csv");
    e.data_schema = c.get_string("data.schema");
    e.dataset_name = c.get_string("data.name", "dataset");

    const long long seed = c.get_int("pretrain.seed", 0);
    if (seed < 0) {
        throw Error(ErrorKind::Config, "pretrain.seed must be non-negative");
    }
    e.seed = static_cast<std::uint64_t>(seed);
    const auto ratio_items = c.get_list("pretrain.ratios");
    if (c.has("pretrain.ratios") && ratio_items.empty()) {
        throw Error(ErrorKind::Config, "pretrain.ratios is empty");
    }
    if (ratio_items.empty()) {
        for (double r : kDefaultRatios) {
            e.ratios.push_back(RatioPolicy::constant(r));
        }
    } else {
        e.ratios = parse_ratios(ratio_items);
    }

    e.stack.hidden = c.get_int("model.hidden", 1024);
    e.stack.embed = c.get_int("model.embed", 256);
    e.stack.projector_hidden = c.get_int("model.projector_hidden", e.stack.hidden);
    e.stack.projector_out = c.get_int("model.projector_out", e.stack.embed);
    e.stack.conditioned = c.get_bool("model.conditioned", true);
    if (e.stack.hidden < 1 || e.stack.embed < 1 || e.stack.projector_hidden < 1 || e.stack.projector_out < 1) {
        throw Error(ErrorKind::Config, "layer widths must be positive");
    }

    e.pretrain.max_epochs = static_cast<int>(c.get_int("pretrain.max_epochs", 10000));
    e.pretrain.patience = static_cast<int>(c.get_int("pretrain.patience", 100));
    e.pretrain.batch_size = c.get_int("pretrain.batch_size", 1024);
    e.pretrain.step.temperature = c.get_double("pretrain.temperature", 0.1);
    const std::string imputation = c.get_string("pretrain.imputation", "zero");
    if (imputation == "zero") {
        e.pretrain.step.imputation = Imputation::Zero;
    } else if (imputation == "marginal") {
        e.pretrain.step.imputation = Imputation::Marginal;
    } else {
        throw Error(ErrorKind::Config, "pretrain.imputation must be 'zero' or 'marginal'");
    }
    e.adam.lr = c.get_double("pretrain.lr", 1e-3);
    if (e.pretrain.max_epochs < 1 || e.pretrain.patience < 0 || e.pretrain.batch_size < 2) {
        throw Error(ErrorKind::Config, "max_epochs >= 1, patience >= 0 and batch_size >= 2 are required");
    }
    if (!(e.pretrain.step.temperature > 0.0) || !(e.adam.lr >= 0.0)) {
        throw Error(ErrorKind::Config, "temperature must be positive and lr non-negative");
    }
    e.normalize = c.get_bool("pretrain.normalize", true);
    e.parallel = c.get_bool("pretrain.parallel", true);
    const std::string precision = c.get_string("pretrain.precision", "f32");
    if (precision == "f32") {
        e.precision = Precision::F32;
    } else if (precision == "f64") {
        e.precision = Precision::F64;
    } else {
        throw Error(ErrorKind::Config, "pretrain.precision must be 'f32' or 'f64'");
    }

    e.protocol.dataset = e.dataset_name;
    e.protocol.n_way = static_cast<int>(c.get_int("eval.n_way", 0));
    e.protocol.k_shot = static_cast<int>(c.get_int("eval.k_shot", 1));
    e.protocol.n_query_per_class = static_cast<int>(c.get_int("eval.n_query", kDefaultQueryPerClass));
    e.protocol.n_episodes = static_cast<int>(c.get_int("eval.episodes", 100));
    const long long n_seeds = c.get_int("eval.seeds", 1);
    if (n_seeds < 1) {
        throw Error(ErrorKind::Config, "eval.seeds must be at least 1");
    }
    e.protocol.seeds = evaluation_seeds(e.seed, static_cast<std::size_t>(n_seeds));
    if (e.protocol.n_way < 0 || e.protocol.k_shot < 1 || e.protocol.n_query_per_class < 1 || e.protocol.n_episodes < 1) {
        throw Error(ErrorKind::Config, "eval needs k_shot, n_query, episodes >= 1 and at least one seed");
    }
    if (c.has("eval.head")) {
        const auto name = c.get_string("eval.head");
        e.head = parse_head(name);
        if (!e.head) {
            throw Error(ErrorKind::Config, "unknown head '" + name + "'");
        }
    }
    e.head_config.probe.max_epochs = static_cast<int>(c.get_int("eval.probe_epochs", 10000));
    e.head_config.probe.lr = c.get_double("eval.probe_lr", 1e-3);
    e.head_config.knn_k = static_cast<int>(c.get_int("eval.knn_k", 1));
    e.head_config.finetune_encoder_lr = c.get_double("eval.finetune_lr", 1e-3);
    if (e.head_config.probe.max_epochs < 1 || e.head_config.knn_k < 1) {
        throw Error(ErrorKind::Config, "probe_epochs and knn_k must be at least 1");
    }
    return e;
}

} // namespace seba

#endif
