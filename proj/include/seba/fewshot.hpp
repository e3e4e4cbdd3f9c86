#ifndef SEBA_FEWSHOT_HPP
#define SEBA_FEWSHOT_HPP

#include "data.hpp"
#include "error.hpp"
#include "linalg.hpp"
#include "neighbors.hpp"
#include "nncore.hpp"
#include "pretrain.hpp"
#include "rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

/**
 * @file fewshot.hpp
 *
 * @brief Few-shot heads on frozen representations, ensemble fusion and episode evaluation.
 *
 * Heads take episode-local labels in [0, n_classes) and return both hard predictions and
 * per-class probabilities; the ensemble averages the probabilities of its members.
 */

namespace seba {

struct EmbeddingSet {
    Matrix<double> vectors;
    std::vector<int> labels;
    std::string source;

    Index size() const { return vectors.rows(); }
};

/// Encoder-only forward pass on unmasked rows; the projector is not used downstream.
template <typename Scalar>
EmbeddingSet embed(const EncoderStack<Scalar>& stack, const Matrix<Scalar>& x, std::string source = {}) {
    if (x.cols() != stack.input_dim()) {
        throw Error(ErrorKind::Dimension, "rows have " + std::to_string(x.cols()) + " columns, encoder expects " +
                                              std::to_string(stack.input_dim()));
    }
    EmbeddingSet out;
    out.vectors = mlp_forward<Scalar>(stack.encoder, x, nullptr).template cast<double>();
    out.source = std::move(source);
    return out;
}

struct HeadOutput {
    std::vector<int> predictions;
    Matrix<double> probabilities;  // queries x classes
};

namespace detail {

inline void check_support(const EmbeddingSet& support, const EmbeddingSet& query, int n_classes) {
    if (n_classes < 1) {
        throw Error(ErrorKind::Head, "need at least one class");
    }
    if (static_cast<Index>(support.labels.size()) != support.size()) {
        throw Error(ErrorKind::Head, "support set must be labelled");
    }
    if (support.vectors.cols() != query.vectors.cols()) {
        throw Error(ErrorKind::Dimension, "support and query embeddings differ in width");
    }
    std::vector<int> count(static_cast<std::size_t>(n_classes), 0);
    for (int y : support.labels) {
        if (y < 0 || y >= n_classes) {
            throw Error(ErrorKind::Head, "support label " + std::to_string(y) + " outside [0, n_classes)");
        }
        ++count[static_cast<std::size_t>(y)];
    }
    for (int c = 0; c < n_classes; ++c) {
        if (count[static_cast<std::size_t>(c)] == 0) {
            throw Error(ErrorKind::Head, "class " + std::to_string(c) + " has no support rows");
        }
    }
}

inline void softmax_rows(Matrix<double>& logits) {
    for (Index i = 0; i < logits.rows(); ++i) {
        const double top = logits.row(i).maxCoeff();
        double sum = 0.0;
        for (Index c = 0; c < logits.cols(); ++c) {
            logits(i, c) = std::exp(logits(i, c) - top);
            sum += logits(i, c);
        }
        logits.row(i) /= sum;
    }
}

// First index of the maximum, so ties go to the lowest class.
template <typename Derived>
int argmax(const Eigen::MatrixBase<Derived>& row) {
    int best = 0;
    for (Index c = 1; c < row.size(); ++c) {
        if (row.coeff(c) > row.coeff(best)) {
            best = static_cast<int>(c);
        }
    }
    return best;
}

inline std::vector<int> argmax_rows(const Matrix<double>& scores) {
    std::vector<int> out(static_cast<std::size_t>(scores.rows()));
    for (Index i = 0; i < scores.rows(); ++i) {
        out[static_cast<std::size_t>(i)] = argmax(scores.row(i));
    }
    return out;
}

} // namespace detail

/**
 * Nearest class prototype (mean support embedding).
 *
 * Cosine: argmax of cosine similarity, probabilities are its softmax at temperature 1.
 * Euclidean: argmin of distance, probabilities are the softmax of negative distances.
 */
inline HeadOutput prototype_classify(const EmbeddingSet& support, const EmbeddingSet& query, int n_classes,
                                     Metric metric = Metric::Cosine) {
    detail::check_support(support, query, n_classes);
    Matrix<double> protos = Matrix<double>::Zero(n_classes, support.vectors.cols());
    std::vector<int> count(static_cast<std::size_t>(n_classes), 0);
    for (Index i = 0; i < support.size(); ++i) {
        const int y = support.labels[static_cast<std::size_t>(i)];
        protos.row(y) += support.vectors.row(i);
        ++count[static_cast<std::size_t>(y)];
    }
    for (int c = 0; c < n_classes; ++c) {
        protos.row(c) /= static_cast<double>(count[static_cast<std::size_t>(c)]);
    }
    Matrix<double> scores(query.size(), n_classes);
    for (Index q = 0; q < query.size(); ++q) {
        const auto d = distances_to(protos, query.vectors.row(q), metric);
        for (int c = 0; c < n_classes; ++c) {
            // cosine distance is 1 - cos, so -d + 1 recovers the similarity exactly enough for ranking
            scores(q, c) = metric == Metric::Cosine ? 1.0 - d[static_cast<std::size_t>(c)] : -d[static_cast<std::size_t>(c)];
        }
    }
    HeadOutput out;
    out.predictions = detail::argmax_rows(scores);
    out.probabilities = scores;
    detail::softmax_rows(out.probabilities);
    return out;
}

/// Majority vote over the k nearest support embeddings; vote ties go to the lowest class.
inline HeadOutput knn_head(const EmbeddingSet& support, const EmbeddingSet& query, int n_classes, int k,
                           Metric metric = Metric::Euclidean) {
    if (k < 1) {
        throw Error(ErrorKind::Head, "k must be at least 1");
    }
    detail::check_support(support, query, n_classes);
    if (k > support.size()) {
        throw Error(ErrorKind::Head, "k=" + std::to_string(k) + " exceeds the support size");
    }
    HeadOutput out;
    out.probabilities = Matrix<double>::Zero(query.size(), n_classes);
    for (Index q = 0; q < query.size(); ++q) {
        const auto d = distances_to(support.vectors, query.vectors.row(q), metric);
        for (std::size_t r : k_smallest(d, static_cast<std::size_t>(k))) {
            out.probabilities(q, support.labels[r]) += 1.0;
        }
    }
    out.probabilities /= static_cast<double>(k);
    out.predictions = detail::argmax_rows(out.probabilities);
    return out;
}

struct ProbeConfig {
    int max_epochs = 10000;
    double lr = 1e-3;
    /// Stop once the support loss changes by less than `tolerance` for `stall_epochs` epochs in a row.
    double tolerance = 1e-8;
    int stall_epochs = 50;
    std::uint64_t seed = 0;
};

/// Mean softmax cross-entropy of logits H W^T + b; fills gradients when the pointers are given.
inline double probe_loss(const Matrix<double>& weight, const Vector<double>& bias, const Matrix<double>& h,
                         std::span<const int> labels, Matrix<double>* grad_weight = nullptr,
                         Vector<double>* grad_bias = nullptr, Matrix<double>* grad_input = nullptr) {
    Matrix<double> logits = h * weight.transpose();
    logits.rowwise() += bias.transpose();
    const auto n = static_cast<double>(h.rows());
    double loss = 0.0;
    Matrix<double> dlogits(logits.rows(), logits.cols());
    for (Index i = 0; i < logits.rows(); ++i) {
        const double top = logits.row(i).maxCoeff();
        double sum = 0.0;
        for (Index c = 0; c < logits.cols(); ++c) {
            sum += std::exp(logits(i, c) - top);
        }
        const double lse = top + std::log(sum);
        const int y = labels[static_cast<std::size_t>(i)];
        loss += lse - logits(i, y);
        for (Index c = 0; c < logits.cols(); ++c) {
            dlogits(i, c) = (std::exp(logits(i, c) - lse) - (c == y ? 1.0 : 0.0)) / n;
        }
    }
    if (grad_weight) {
        *grad_weight = dlogits.transpose() * h;
    }
    if (grad_bias) {
        *grad_bias = dlogits.colwise().sum().transpose();
    }
    if (grad_input) {
        *grad_input = dlogits * weight;
    }
    return loss / n;
}

/**
 * Affine classifier E -> n_classes trained full-batch with Adam.
 *
 * Weights start uniform in +-1/sqrt(E), bias at zero.
 */
class LinearProbe {
public:
    LinearProbe(Index input_dim, int n_classes, const ProbeConfig& cfg)
        : weight_(n_classes, input_dim), bias_(Vector<double>::Zero(n_classes)), adam_(AdamConfig{cfg.lr}), cfg_(cfg) {
        Rng rng = make_rng(cfg.seed, "probe-init");
        const double bound = 1.0 / std::sqrt(static_cast<double>(input_dim));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (Index i = 0; i < weight_.size(); ++i) {
            weight_.data()[i] = dist(rng);
        }
        grad_weight_ = Matrix<double>::Zero(weight_.rows(), weight_.cols());
        grad_bias_ = Vector<double>::Zero(bias_.size());
    }

    /// One full-batch update; returns the loss before the update and dLoss/dH if requested.
    double step(const Matrix<double>& h, std::span<const int> labels, Matrix<double>* grad_input = nullptr) {
        const double loss = probe_loss(weight_, bias_, h, labels, &grad_weight_, &grad_bias_, grad_input);
        if (!std::isfinite(loss)) {
            throw Error(ErrorKind::Head, "non-finite probe loss");
        }
        std::vector<ParamSlot<double>> slots{
            {std::span<double>(weight_.data(), static_cast<std::size_t>(weight_.size())),
             std::span<const double>(grad_weight_.data(), static_cast<std::size_t>(grad_weight_.size()))},
            {std::span<double>(bias_.data(), static_cast<std::size_t>(bias_.size())),
             std::span<const double>(grad_bias_.data(), static_cast<std::size_t>(grad_bias_.size()))}};
        adam_step(slots, adam_);
        return loss;
    }

    /// Tracks the stall criterion; returns true when training should stop.
    bool converged(double loss) {
        if (previous_ && std::abs(*previous_ - loss) < cfg_.tolerance) {
            ++stalled_;
        } else {
            stalled_ = 0;
        }
        previous_ = loss;
        return stalled_ >= cfg_.stall_epochs;
    }

    Matrix<double> logits(const Matrix<double>& h) const {
        Matrix<double> out = h * weight_.transpose();
        out.rowwise() += bias_.transpose();
        return out;
    }

    const Matrix<double>& weight() const { return weight_; }
    const Vector<double>& bias() const { return bias_; }
    int epochs_run() const { return epochs_; }
    void count_epoch() { ++epochs_; }

private:
    Matrix<double> weight_;
    Vector<double> bias_;
    Matrix<double> grad_weight_;
    Vector<double> grad_bias_;
    AdamState<double> adam_;
    ProbeConfig cfg_;
    std::optional<double> previous_;
    int stalled_ = 0;
    int epochs_ = 0;
};

inline HeadOutput probe_output(const LinearProbe& probe, const Matrix<double>& query) {
    HeadOutput out;
    out.probabilities = probe.logits(query);
    out.predictions = detail::argmax_rows(out.probabilities);
    detail::softmax_rows(out.probabilities);
    return out;
}

inline HeadOutput linear_probe(const EmbeddingSet& support, const EmbeddingSet& query, int n_classes,
                               const ProbeConfig& cfg) {
    detail::check_support(support, query, n_classes);
    LinearProbe probe(support.vectors.cols(), n_classes, cfg);
    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        const double loss = probe.step(support.vectors, support.labels);
        probe.count_epoch();
        if (probe.converged(loss)) {
            break;
        }
    }
    return probe_output(probe, query.vectors);
}

struct FinetuneConfig {
    ProbeConfig probe;
    double encoder_lr = 1e-3;
};

/**
 * Probe objective with the encoder unfrozen. Works on a copy of the encoder, so the given stack
 * is untouched. With encoder_lr = 0 this reproduces linear_probe exactly.
 */
template <typename Scalar>
HeadOutput finetune_head(const EncoderStack<Scalar>& stack, const Matrix<Scalar>& support_rows,
                         std::span<const int> support_labels, const Matrix<Scalar>& query_rows, int n_classes,
                         const FinetuneConfig& cfg) {
    if (support_rows.cols() != stack.input_dim() || query_rows.cols() != stack.input_dim()) {
        throw Error(ErrorKind::Dimension, "rows do not match the encoder input width");
    }
    Mlp<Scalar> encoder = stack.encoder;
    AdamState<Scalar> adam(AdamConfig{cfg.encoder_lr});
    {
        EmbeddingSet s{Matrix<double>(0, stack.embed_dim()), {support_labels.begin(), support_labels.end()}, {}};
        s.vectors.resize(support_rows.rows(), stack.embed_dim());
        EmbeddingSet q{Matrix<double>(0, stack.embed_dim()), {}, {}};
        detail::check_support(s, q, n_classes);
    }
    LinearProbe probe(stack.embed_dim(), n_classes, cfg.probe);
    std::vector<ParamSlot<Scalar>> slots;
    append_slots(slots, encoder);
    for (int epoch = 0; epoch < cfg.probe.max_epochs; ++epoch) {
        MlpCache<Scalar> cache;
        const Matrix<double> h = mlp_forward<Scalar>(encoder, support_rows, &cache).template cast<double>();
        Matrix<double> grad_h;
        const double loss = probe.step(h, support_labels, &grad_h);
        mlp_backward<Scalar>(encoder, cache, grad_h.template cast<Scalar>());
        adam_step(slots, adam);
        probe.count_epoch();
        if (probe.converged(loss)) {
            break;
        }
    }
    const Matrix<double> hq = mlp_forward<Scalar>(encoder, query_rows, nullptr).template cast<double>();
    return probe_output(probe, hq);
}

enum class HeadKind { ProtoCos, ProtoEucl, Linear, KnnCos, KnnEucl, Finetune };

inline std::string to_string(HeadKind kind) {
    switch (kind) {
        case HeadKind::ProtoCos: return "proto-cos";
        case HeadKind::ProtoEucl: return "proto-eucl";
        case HeadKind::Linear: return "linear";
        case HeadKind::KnnCos: return "knn-cos";
        case HeadKind::KnnEucl: return "knn-eucl";
        case HeadKind::Finetune: return "finetune";
    }
    return "unknown";
}

inline std::optional<HeadKind> parse_head(const std::string& name) {
    for (HeadKind k : {HeadKind::ProtoCos, HeadKind::ProtoEucl, HeadKind::Linear, HeadKind::KnnCos, HeadKind::KnnEucl,
                       HeadKind::Finetune}) {
        if (to_string(k) == name) {
            return k;
        }
    }
    return std::nullopt;
}

/// Cosine prototypes for 1-shot, linear probing otherwise.
inline HeadKind default_head(int k_shot) { return k_shot == 1 ? HeadKind::ProtoCos : HeadKind::Linear; }

struct HeadConfig {
    HeadKind kind = HeadKind::Linear;
    ProbeConfig probe;
    int knn_k = 1;
    double finetune_encoder_lr = 1e-3;
};

/// Runs a frozen-embedding head; finetuning needs the encoded rows and is handled separately.
inline HeadOutput run_frozen_head(const HeadConfig& cfg, const EmbeddingSet& support, const EmbeddingSet& query,
                                  int n_classes, std::uint64_t probe_seed) {
    switch (cfg.kind) {
        case HeadKind::ProtoCos: return prototype_classify(support, query, n_classes, Metric::Cosine);
        case HeadKind::ProtoEucl: return prototype_classify(support, query, n_classes, Metric::Euclidean);
        case HeadKind::KnnCos: return knn_head(support, query, n_classes, cfg.knn_k, Metric::Cosine);
        case HeadKind::KnnEucl: return knn_head(support, query, n_classes, cfg.knn_k, Metric::Euclidean);
        case HeadKind::Linear: {
            ProbeConfig p = cfg.probe;
            p.seed = probe_seed;
            return linear_probe(support, query, n_classes, p);
        }
        case HeadKind::Finetune: break;
    }
    throw Error(ErrorKind::Head, "finetune head needs encoded rows, not embeddings");
}

/// Uniform average of member probabilities, then argmax (lowest class on ties).
inline HeadOutput fuse(std::span<const HeadOutput> members) {
    if (members.empty()) {
        throw Error(ErrorKind::Head, "nothing to fuse");
    }
    HeadOutput out;
    out.probabilities = Matrix<double>::Zero(members[0].probabilities.rows(), members[0].probabilities.cols());
    for (const auto& m : members) {
        if (m.probabilities.rows() != out.probabilities.rows() || m.probabilities.cols() != out.probabilities.cols()) {
            throw Error(ErrorKind::Dimension, "ensemble members disagree on output shape");
        }
        out.probabilities += m.probabilities;
    }
    out.probabilities /= static_cast<double>(members.size());
    out.predictions = detail::argmax_rows(out.probabilities);
    return out;
}

inline std::uint64_t probe_seed(std::uint64_t episode_seed, std::size_t member) {
    return derive_seed(episode_seed, "probe", member);
}

template <typename Scalar>
struct EnsemblePrediction {
    HeadOutput fused;
    std::vector<HeadOutput> members;
};

/**
 * Ensemble prediction for one episode. `support_rows` / `query_rows` are encoded (unmasked)
 * records; labels are episode-local.
 */
template <typename Scalar>
EnsemblePrediction<Scalar> ensemble_predict(std::span<const EncoderStack<Scalar>> members,
                                            const Matrix<Scalar>& support_rows, std::span<const int> support_labels,
                                            const Matrix<Scalar>& query_rows, int n_classes, const HeadConfig& cfg,
                                            std::uint64_t episode_seed) {
    if (members.empty()) {
        throw Error(ErrorKind::Head, "ensemble needs at least one member");
    }
    EnsemblePrediction<Scalar> out;
    for (std::size_t k = 0; k < members.size(); ++k) {
        const auto& stack = members[k];
        if (stack.input_dim() != support_rows.cols()) {
            throw Error(ErrorKind::Dimension, "member " + std::to_string(k) + " expects width " +
                                                  std::to_string(stack.input_dim()));
        }
        if (cfg.kind == HeadKind::Finetune) {
            FinetuneConfig ft{cfg.probe, cfg.finetune_encoder_lr};
            ft.probe.seed = probe_seed(episode_seed, k);
            out.members.push_back(finetune_head(stack, support_rows, support_labels, query_rows, n_classes, ft));
        } else {
            EmbeddingSet s = embed(stack, support_rows);
            s.labels.assign(support_labels.begin(), support_labels.end());
            const EmbeddingSet q = embed(stack, query_rows);
            out.members.push_back(run_frozen_head(cfg, s, q, n_classes, probe_seed(episode_seed, k)));
        }
    }
    out.fused = fuse(out.members);
    return out;
}

struct EpisodeRecord {
    std::uint64_t seed = 0;
    int episode = 0;
    double accuracy = 0.0;
};

struct EvalReport {
    std::string dataset;
    /// "ensemble", or "member<k>:<ratio label>" for a single stack.
    std::string model = "ensemble";
    int n_way = 0;
    int k_shot = 0;
    std::string head;
    std::vector<EpisodeRecord> records;
    int n_seeds = 0;
    int n_episodes = 0;
    double mean = 0.0;
    /// Sample standard deviation over episodes; 0 for a single episode.
    double std = 0.0;

    void finalize() {
        const auto n = static_cast<double>(records.size());
        if (records.empty()) {
            mean = 0.0;
            std = 0.0;
            return;
        }
        double sum = 0.0;
        for (const auto& r : records) {
            sum += r.accuracy;
        }
        mean = sum / n;
        double sq = 0.0;
        for (const auto& r : records) {
            sq += (r.accuracy - mean) * (r.accuracy - mean);
        }
        std = records.size() > 1 ? std::sqrt(sq / (n - 1.0)) : 0.0;
    }
};

struct EvalProtocol {
    int n_way = 0;
    int k_shot = 1;
    int n_query_per_class = kDefaultQueryPerClass;
    int n_episodes = 100;
    std::vector<std::uint64_t> seeds{0};
    std::string dataset = "dataset";
};

struct EvalResult {
    EvalReport ensemble;
    std::vector<EvalReport> members;
};

inline std::uint64_t episode_seed(std::uint64_t seed, int episode) {
    return derive_seed(seed, "episode", static_cast<std::uint64_t>(episode));
}

inline std::vector<int> local_labels(const Episode& ep, const std::vector<LabeledIndex>& items) {
    std::unordered_map<int, int> local;
    for (std::size_t c = 0; c < ep.classes.size(); ++c) {
        local.emplace(ep.classes[c], static_cast<int>(c));
    }
    std::vector<int> out;
    out.reserve(items.size());
    for (const auto& it : items) {
        out.push_back(local.at(it.label));
    }
    return out;
}

inline double accuracy(std::span<const int> predicted, std::span<const int> truth) {
    if (predicted.size() != truth.size() || truth.empty()) {
        throw Error(ErrorKind::Head, "prediction and label counts differ");
    }
    std::size_t hit = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        hit += predicted[i] == truth[i] ? 1 : 0;
    }
    return static_cast<double>(hit) / static_cast<double>(truth.size());
}

/**
 * Episodic evaluation: for every seed and episode index, sample an episode from the test
 * partition, run the head on every member and fuse. `encoded` holds the encoded rows of the
 * whole dataset. Per-member accuracies come from the same episodes and probe initializations.
 */
template <typename Scalar>
EvalResult evaluate(std::span<const EncoderStack<Scalar>> members, const Matrix<Scalar>& encoded, const Dataset& ds,
                    const SplitIndices& split, const EvalProtocol& protocol, const HeadConfig& cfg) {
    if (members.empty()) {
        throw Error(ErrorKind::Head, "evaluation needs at least one member");
    }
    if (encoded.rows() != static_cast<Index>(ds.n_rows())) {
        throw Error(ErrorKind::Dimension, "encoded matrix must hold every dataset row");
    }
    const int n_way = protocol.n_way > 0 ? protocol.n_way : ds.n_classes;

    // Frozen heads only need embeddings of test rows; compute them once per member.
    std::vector<std::size_t> position(ds.n_rows(), 0);
    Matrix<Scalar> test_rows(static_cast<Index>(split.test.size()), encoded.cols());
    for (std::size_t r = 0; r < split.test.size(); ++r) {
        position[split.test[r]] = r;
        test_rows.row(static_cast<Index>(r)) = encoded.row(static_cast<Index>(split.test[r]));
    }
    std::vector<Matrix<double>> test_embeddings;
    if (cfg.kind != HeadKind::Finetune) {
        for (const auto& m : members) {
            test_embeddings.push_back(embed(m, test_rows).vectors);
        }
    }

    EvalResult result;
    auto init_report = [&](EvalReport& r) {
        r.dataset = protocol.dataset;
        r.n_way = n_way;
        r.k_shot = protocol.k_shot;
        r.head = to_string(cfg.kind);
        r.n_seeds = static_cast<int>(protocol.seeds.size());
        r.n_episodes = protocol.n_episodes;
    };
    init_report(result.ensemble);
    result.members.resize(members.size());
    for (std::size_t k = 0; k < members.size(); ++k) {
        init_report(result.members[k]);
        result.members[k].model = "member" + std::to_string(k) + ":" + members[k].ratio.label();
    }

    for (std::uint64_t seed : protocol.seeds) {
        for (int e = 0; e < protocol.n_episodes; ++e) {
            const std::uint64_t ep_seed = episode_seed(seed, e);
            const Episode ep = sample_episode(ds, split, n_way, protocol.k_shot, protocol.n_query_per_class, ep_seed);
            const auto support_labels = local_labels(ep, ep.support);
            const auto query_labels = local_labels(ep, ep.query);

            std::vector<HeadOutput> outputs;
            for (std::size_t k = 0; k < members.size(); ++k) {
                if (cfg.kind == HeadKind::Finetune) {
                    Matrix<Scalar> s(static_cast<Index>(ep.support.size()), encoded.cols());
                    Matrix<Scalar> q(static_cast<Index>(ep.query.size()), encoded.cols());
                    for (std::size_t i = 0; i < ep.support.size(); ++i) {
                        s.row(static_cast<Index>(i)) = encoded.row(static_cast<Index>(ep.support[i].row));
                    }
                    for (std::size_t i = 0; i < ep.query.size(); ++i) {
                        q.row(static_cast<Index>(i)) = encoded.row(static_cast<Index>(ep.query[i].row));
                    }
                    FinetuneConfig ft{cfg.probe, cfg.finetune_encoder_lr};
                    ft.probe.seed = probe_seed(ep_seed, k);
                    outputs.push_back(finetune_head(members[k], s, support_labels, q, n_way, ft));
                } else {
                    const auto& emb = test_embeddings[k];
                    EmbeddingSet s;
                    s.vectors.resize(static_cast<Index>(ep.support.size()), emb.cols());
                    for (std::size_t i = 0; i < ep.support.size(); ++i) {
                        s.vectors.row(static_cast<Index>(i)) = emb.row(static_cast<Index>(position[ep.support[i].row]));
                    }
                    s.labels = support_labels;
                    EmbeddingSet q;
                    q.vectors.resize(static_cast<Index>(ep.query.size()), emb.cols());
                    for (std::size_t i = 0; i < ep.query.size(); ++i) {
                        q.vectors.row(static_cast<Index>(i)) = emb.row(static_cast<Index>(position[ep.query[i].row]));
                    }
                    outputs.push_back(run_frozen_head(cfg, s, q, n_way, probe_seed(ep_seed, k)));
                }
                result.members[k].records.push_back({seed, e, accuracy(outputs.back().predictions, query_labels)});
            }
            const HeadOutput fused = fuse(outputs);
            result.ensemble.records.push_back({seed, e, accuracy(fused.predictions, query_labels)});
        }
    }
    result.ensemble.finalize();
    for (auto& r : result.members) {
        r.finalize();
    }
    return result;
}

namespace detail {

inline std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

} // namespace detail

/// Columns: dataset,n_way,k_shot,head,seed,episode,accuracy
inline void write_eval_csv(std::ostream& out, const EvalReport& report, bool header = true) {
    if (header) {
        out << "dataset,n_way,k_shot,head,seed,episode,accuracy\n";
    }
    for (const auto& r : report.records) {
        out << report.dataset << ',' << report.n_way << ',' << report.k_shot << ',' << report.head << ',' << r.seed << ','
            << r.episode << ',' << detail::format_double(r.accuracy) << '\n';
    }
}

/// Columns: dataset,model,n_way,k_shot,head,n_seeds,n_episodes,mean,std
inline void write_summary_csv(std::ostream& out, std::span<const EvalReport> reports, bool header = true) {
    if (header) {
        out << "dataset,model,n_way,k_shot,head,n_seeds,n_episodes,mean,std\n";
    }
    for (const auto& r : reports) {
        out << r.dataset << ',' << r.model << ',' << r.n_way << ',' << r.k_shot << ',' << r.head << ',' << r.n_seeds << ',' << r.n_episodes
            << ',' << detail::format_double(r.mean) << ',' << detail::format_double(r.std) << '\n';
    }
}

} // namespace seba

#endif
