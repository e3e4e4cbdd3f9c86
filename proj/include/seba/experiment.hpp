#ifndef SEBA_EXPERIMENT_HPP
#define SEBA_EXPERIMENT_HPP

#include "checkpoint.hpp"
#include "config.hpp"
#include "data.hpp"
#include "fewshot.hpp"
#include "preprocess.hpp"
#include "pretrain.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

/**
 * @file experiment.hpp
 *
 * @brief End-to-end plumbing shared by the command-line tool and the acceptance suite:
 *        split + preprocessing, ensemble pretraining, checkpoint directories and evaluation.
 */

namespace seba {

struct PreparedData {
    Dataset dataset;
    SplitIndices split;
    Preprocessor preprocessor;
};

/// Split with the master seed and fit the preprocessor on the training partition only.
inline PreparedData prepare(Dataset ds, std::uint64_t seed, bool normalize) {
    PreparedData p;
    p.split = split(ds, seed);
    p.preprocessor = fit(ds, p.split.train, PreprocessOptions{normalize});
    p.dataset = std::move(ds);
    return p;
}

template <typename Scalar>
std::vector<TrainedMember<Scalar>> train_members(const PreparedData& data, const ExperimentConfig& cfg,
                                                 std::span<const RatioPolicy> ratios) {
    const Matrix<Scalar> train = encode<Scalar>(data.preprocessor, data.dataset, data.split.train);
    const Matrix<Scalar> valid = encode<Scalar>(data.preprocessor, data.dataset, data.split.valid);
    std::optional<MarginalImputer<Scalar>> imputer;
    if (cfg.pretrain.step.imputation == Imputation::Marginal) {
        imputer.emplace(data.preprocessor, train);
    }
    return pretrain_ensemble<Scalar>(train, valid, data.preprocessor, ratios, cfg.stack, cfg.pretrain, cfg.adam, cfg.seed,
                                     cfg.parallel, imputer ? &*imputer : nullptr);
}

template <typename Scalar>
std::vector<EncoderStack<Scalar>> stacks_of(const std::vector<TrainedMember<Scalar>>& members) {
    std::vector<EncoderStack<Scalar>> out;
    for (const auto& m : members) {
        out.push_back(m.stack);
    }
    return out;
}

inline HeadConfig resolved_head(const ExperimentConfig& cfg, int k_shot) {
    HeadConfig h = cfg.head_config;
    h.kind = cfg.head.value_or(default_head(k_shot));
    return h;
}

template <typename Scalar>
EvalResult evaluate_stacks(std::span<const EncoderStack<Scalar>> stacks, const PreparedData& data,
                           const EvalProtocol& protocol, const HeadConfig& head) {
    const Matrix<Scalar> encoded = encode_all<Scalar>(data.preprocessor, data.dataset);
    return evaluate<Scalar>(stacks, encoded, data.dataset, data.split, protocol, head);
}

/// Columns: member,ratio,epoch,train_loss,valid_loss,best_epoch
template <typename Scalar>
void write_pretrain_csv(std::ostream& out, const std::vector<TrainedMember<Scalar>>& members) {
    out << "member,ratio,epoch,train_loss,valid_loss,best_epoch\n";
    char buf[160];
    for (std::size_t k = 0; k < members.size(); ++k) {
        const auto& r = members[k].report;
        for (std::size_t e = 0; e < r.train_loss.size(); ++e) {
            std::snprintf(buf, sizeof buf, "%zu,%s,%zu,%.10g,%.10g,%d\n", k, members[k].stack.ratio.label().c_str(), e + 1,
                          r.train_loss[e], r.valid_loss[e], r.best_epoch);
            out << buf;
        }
    }
}

inline std::string member_file_name(std::size_t k) { return "member_" + std::to_string(k) + ".ckpt"; }

inline constexpr const char* kManifestName = "manifest.ini";

/// What an evaluation needs to rebuild the data split next to a set of checkpoints.
struct Manifest {
    std::string data_csv;
    std::string data_schema;
    std::string dataset_name;
    std::uint64_t seed = 0;
    Precision precision = Precision::F32;
    std::vector<std::string> members;

    void write(std::ostream& out) const {
        out << "[data]\ncsv = " << data_csv << "\nschema = " << data_schema << "\nname = " << dataset_name << "\n\n";
        out << "[pretrain]\nseed = " << seed << "\nprecision = " << (precision == Precision::F64 ? "f64" : "f32") << "\n";
        out << "members = ";
        for (std::size_t k = 0; k < members.size(); ++k) {
            out << (k ? "," : "") << members[k];
        }
        out << '\n';
    }

    static Manifest read(const std::string& dir) {
        const Config c = Config::load((std::filesystem::path(dir) / kManifestName).string());
        Manifest m;
        m.data_csv = c.get_string("data.csv");
        m.data_schema = c.get_string("data.schema");
        m.dataset_name = c.get_string("data.name", "dataset");
        const long long seed = c.get_int("pretrain.seed", 0);
        if (seed < 0) {
            throw Error(ErrorKind::Config, "manifest seed must be non-negative");
        }
        m.seed = static_cast<std::uint64_t>(seed);
        m.precision = c.get_string("pretrain.precision", "f32") == "f64" ? Precision::F64 : Precision::F32;
        m.members = c.get_list("pretrain.members");
        if (m.members.empty()) {
            throw Error(ErrorKind::Config, "manifest in '" + dir + "' lists no members");
        }
        return m;
    }
};

template <typename Scalar>
void save_members(const std::string& dir, const std::vector<TrainedMember<Scalar>>& members, const Preprocessor& pp,
                  Manifest manifest) {
    std::filesystem::create_directories(dir);
    manifest.members.clear();
    for (std::size_t k = 0; k < members.size(); ++k) {
        const std::string name = member_file_name(k);
        save_checkpoint((std::filesystem::path(dir) / name).string(), members[k].stack, pp);
        manifest.members.push_back(name);
    }
    std::ofstream out(std::filesystem::path(dir) / kManifestName);
    if (!out) {
        throw Error(ErrorKind::Checkpoint, "cannot write manifest in '" + dir + "'");
    }
    manifest.write(out);
}

template <typename Scalar>
struct LoadedMembers {
    std::vector<EncoderStack<Scalar>> stacks;
    Preprocessor preprocessor;
};

template <typename Scalar>
LoadedMembers<Scalar> load_members(const std::string& dir, const Manifest& manifest) {
    LoadedMembers<Scalar> out;
    for (const auto& name : manifest.members) {
        auto ck = load_checkpoint<Scalar>((std::filesystem::path(dir) / name).string());
        if (out.stacks.empty()) {
            out.preprocessor = std::move(ck.preprocessor);
        } else if (ck.preprocessor.encoded_dim != out.preprocessor.encoded_dim) {
            throw Error(ErrorKind::Checkpoint, "member '" + name + "' was fitted on a different encoding");
        }
        out.stacks.push_back(std::move(ck.stack));
    }
    return out;
}

} // namespace seba

#endif
