#ifndef SEBA_PRETRAIN_HPP
#define SEBA_PRETRAIN_HPP

#include "error.hpp"
#include "linalg.hpp"
#include "neighbors.hpp"
#include "nncore.hpp"
#include "preprocess.hpp"
#include "rng.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdio>
#include <cmath>
#include <cstdint>
#include <functional>
#include <future>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

/**
 * @file pretrain.hpp
 *
 * @brief Separated-at-birth alignment pretraining.
 *
 * Each batch is split by one random mask into feature and target views. Positive pairs are
 * nearest neighbors among target views, and the encoder (followed by a mask-conditioned
 * projector) is trained with InfoNCE to align the feature-view representations of those pairs.
 */

namespace seba {

inline constexpr std::array<double, 5> kDefaultRatios{0.1, 0.2, 0.3, 0.4, 0.5};

/// Separation ratio of a model: a constant, or a fresh draw from kDefaultRatios for every batch.
struct RatioPolicy {
    bool random = false;
    double fixed = 0.2;

    static RatioPolicy constant(double r) { return {false, r}; }
    static RatioPolicy random_choice() { return {true, 0.0}; }

    double draw(Rng& rng) const {
        if (!random) {
            return fixed;
        }
        std::uniform_int_distribution<std::size_t> pick(0, kDefaultRatios.size() - 1);
        return kDefaultRatios[pick(rng)];
    }

    std::string label() const {
        if (random) {
            return "random";
        }
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.2f", fixed);
        return buf;
    }
};

struct StackConfig {
    Index hidden = 1024;
    Index embed = 256;
    Index projector_hidden = 1024;
    Index projector_out = 256;
    /// Feed the encoded mask to the projector next to the encoder output.
    bool conditioned = true;
};

/// Encoder (D -> hidden -> E), projector ((E [+ D]) -> hidden -> P), and their optimizer state.
template <typename Scalar>
struct EncoderStack {
    Mlp<Scalar> encoder;
    Mlp<Scalar> projector;
    AdamState<Scalar> adam;
    RatioPolicy ratio;
    bool conditioned = true;
    std::uint64_t seed = 0;

    Index input_dim() const { return encoder.front().in_dim(); }
    Index embed_dim() const { return encoder.back().out_dim(); }
    Index projector_input_dim() const { return projector.front().in_dim(); }

    std::vector<ParamSlot<Scalar>> param_slots() {
        std::vector<ParamSlot<Scalar>> slots;
        append_slots(slots, encoder);
        append_slots(slots, projector);
        return slots;
    }
};

template <typename Scalar>
EncoderStack<Scalar> make_stack(Index input_dim, const StackConfig& cfg, RatioPolicy ratio, std::uint64_t seed,
                                AdamConfig adam = {}) {
    if (input_dim < 1) {
        throw Error(ErrorKind::Dimension, "encoder input width must be positive");
    }
    if (!ratio.random && !(ratio.fixed > 0.0 && ratio.fixed < 1.0)) {
        throw Error(ErrorKind::Mask, "separation ratio must lie in (0, 1)");
    }
    Rng rng = make_rng(seed, "init");
    EncoderStack<Scalar> stack;
    const std::array<Index, 3> enc{input_dim, cfg.hidden, cfg.embed};
    const Index proj_in = cfg.conditioned ? cfg.embed + input_dim : cfg.embed;
    const std::array<Index, 3> proj{proj_in, cfg.projector_hidden, cfg.projector_out};
    stack.encoder = make_mlp<Scalar>(enc, rng);
    stack.projector = make_mlp<Scalar>(proj, rng);
    stack.adam = AdamState<Scalar>(adam);
    stack.ratio = ratio;
    stack.conditioned = cfg.conditioned;
    stack.seed = seed;
    return stack;
}

template <typename Scalar>
struct BatchEvaluation {
    double loss = 0.0;
    std::vector<std::size_t> positives;
    std::vector<double> row_losses;
};

/**
 * Alignment loss of one batch under a given mask.
 *
 * With `with_grad` the gradients of all encoder and projector parameters are written into the
 * layers' gradient buffers. The projector sees concat(h, m) when the stack is conditioned.
 */
template <typename Scalar>
BatchEvaluation<Scalar> alignment_loss(EncoderStack<Scalar>& stack, const Matrix<Scalar>& batch,
                                       const SeparationMask& mask, double temperature, bool with_grad,
                                       const MarginalImputer<Scalar>* imputer = nullptr, Rng* impute_rng = nullptr) {
    if (batch.rows() < 2) {
        throw Error(ErrorKind::Loss, "alignment needs a batch of at least 2 rows");
    }
    if (batch.cols() != stack.input_dim()) {
        throw Error(ErrorKind::Dimension, "batch width " + std::to_string(batch.cols()) + " does not match encoder input " +
                                              std::to_string(stack.input_dim()));
    }
    Views<Scalar> views = make_views(batch, mask);
    if (imputer && imputer->ready()) {
        imputer->fill(views.feature, mask, *impute_rng);
    }
    const auto target_cols = mask.target_coordinates();

    BatchEvaluation<Scalar> out;
    out.positives = nearest_neighbors(views.target, target_cols);

    MlpCache<Scalar> enc_cache;
    MlpCache<Scalar> proj_cache;
    const Matrix<Scalar> h = mlp_forward<Scalar>(stack.encoder, views.feature, with_grad ? &enc_cache : nullptr);
    Matrix<Scalar> proj_in;
    if (stack.conditioned) {
        proj_in.resize(h.rows(), h.cols() + batch.cols());
        proj_in.leftCols(h.cols()) = h;
        proj_in.rightCols(batch.cols()).rowwise() = mask.encoded_row<Scalar>();
    } else {
        proj_in = h;
    }
    const Matrix<Scalar> z = mlp_forward<Scalar>(stack.projector, proj_in, with_grad ? &proj_cache : nullptr);
    auto nce = infonce_loss<Scalar>(z, out.positives, temperature);
    out.loss = nce.loss;
    out.row_losses = std::move(nce.row_losses);
    if (with_grad) {
        const Matrix<Scalar> d_proj_in = mlp_backward<Scalar>(stack.projector, proj_cache, nce.grad);
        const Matrix<Scalar> d_h = d_proj_in.leftCols(h.cols());
        mlp_backward<Scalar>(stack.encoder, enc_cache, d_h);
    }
    return out;
}

struct StepOptions {
    double temperature = 0.1;
    Imputation imputation = Imputation::Zero;
};

/// Sample a mask, compute the alignment loss and apply one Adam step. Returns the batch loss.
template <typename Scalar>
double train_step(EncoderStack<Scalar>& stack, const Matrix<Scalar>& batch, const Preprocessor& pp, Rng& rng,
                  const StepOptions& options = {}, const MarginalImputer<Scalar>* imputer = nullptr) {
    const double ratio = stack.ratio.draw(rng);
    const SeparationMask mask = sample_mask(pp, ratio, rng);
    const MarginalImputer<Scalar>* fill = options.imputation == Imputation::Marginal ? imputer : nullptr;
    if (options.imputation == Imputation::Marginal && (!imputer || !imputer->ready())) {
        throw Error(ErrorKind::Training, "marginal imputation requested without an imputer");
    }
    const auto eval = alignment_loss(stack, batch, mask, options.temperature, true, fill, &rng);
    adam_step(stack.param_slots(), stack.adam);
    return eval.loss;
}

/// Same stochastic objective as training, without gradients or updates.
template <typename Scalar>
double evaluation_loss(EncoderStack<Scalar>& stack, const Matrix<Scalar>& batch, const Preprocessor& pp, Rng& rng,
                       const StepOptions& options = {}, const MarginalImputer<Scalar>* imputer = nullptr) {
    const double ratio = stack.ratio.draw(rng);
    const SeparationMask mask = sample_mask(pp, ratio, rng);
    const MarginalImputer<Scalar>* fill = options.imputation == Imputation::Marginal ? imputer : nullptr;
    return alignment_loss(stack, batch, mask, options.temperature, false, fill, &rng).loss;
}

struct PretrainConfig {
    int max_epochs = 10000;
    int patience = 100;
    Index batch_size = 1024;
    StepOptions step;
};

struct PretrainReport {
    std::vector<double> train_loss;
    std::vector<double> valid_loss;
    int stopped_epoch = 0;
    int best_epoch = 0;
    double best_validation_loss = std::numeric_limits<double>::infinity();
    double seconds = 0.0;
};

namespace detail {

template <typename Scalar>
Matrix<Scalar> gather_rows(const Matrix<Scalar>& x, std::span<const std::size_t> rows) {
    Matrix<Scalar> out(static_cast<Index>(rows.size()), x.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        out.row(static_cast<Index>(r)) = x.row(static_cast<Index>(rows[r]));
    }
    return out;
}

// Row-weighted mean loss over consecutive batches; batches shorter than 2 rows are skipped.
template <typename Scalar, typename Fn>
double batched_mean(const std::vector<std::size_t>& order, Index batch_size, const Matrix<Scalar>& x, Fn&& fn) {
    double total = 0.0;
    std::size_t counted = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size)) {
        const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(batch_size));
        if (stop - start < 2) {
            continue;
        }
        const Matrix<Scalar> batch =
            gather_rows(x, std::span<const std::size_t>(order.data() + start, stop - start));
        total += fn(batch) * static_cast<double>(stop - start);
        counted += stop - start;
    }
    return counted ? total / static_cast<double>(counted) : std::numeric_limits<double>::quiet_NaN();
}

} // namespace detail

/**
 * Pretrain one stack with validation-loss early stopping.
 *
 * Each epoch is one shuffled pass over `train` in batches of at most `batch_size`. Training stops
 * once the validation loss has not improved for `patience` epochs (0 behaves as 1), and the
 * parameters of the best validation epoch are restored.
 */
template <typename Scalar>
PretrainReport pretrain(EncoderStack<Scalar>& stack, const Matrix<Scalar>& train, const Matrix<Scalar>& valid,
                        const Preprocessor& pp, const PretrainConfig& cfg,
                        const MarginalImputer<Scalar>* imputer = nullptr) {
    if (valid.rows() < 2) {
        throw Error(ErrorKind::Training, "validation set needs at least 2 rows");
    }
    if (train.rows() < 2) {
        throw Error(ErrorKind::Training, "training set needs at least 2 rows");
    }
    if (cfg.batch_size < 2) {
        throw Error(ErrorKind::Training, "batch size must be at least 2");
    }
    const auto start_time = std::chrono::steady_clock::now();
    Rng shuffle_rng = make_rng(stack.seed, "shuffle");
    Rng train_rng = make_rng(stack.seed, "train-mask");
    Rng valid_rng = make_rng(stack.seed, "valid-mask");

    std::vector<std::size_t> train_order(static_cast<std::size_t>(train.rows()));
    std::iota(train_order.begin(), train_order.end(), std::size_t{0});
    std::vector<std::size_t> valid_order(static_cast<std::size_t>(valid.rows()));
    std::iota(valid_order.begin(), valid_order.end(), std::size_t{0});

    const int patience = std::max(1, cfg.patience);
    PretrainReport report;
    Mlp<Scalar> best_encoder = stack.encoder;
    Mlp<Scalar> best_projector = stack.projector;
    int since_best = 0;
    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        std::shuffle(train_order.begin(), train_order.end(), shuffle_rng);
        const double train_loss = detail::batched_mean(train_order, cfg.batch_size, train, [&](const Matrix<Scalar>& b) {
            return train_step(stack, b, pp, train_rng, cfg.step, imputer);
        });
        const double valid_loss = detail::batched_mean(valid_order, cfg.batch_size, valid, [&](const Matrix<Scalar>& b) {
            return evaluation_loss(stack, b, pp, valid_rng, cfg.step, imputer);
        });
        if (!std::isfinite(train_loss) || !std::isfinite(valid_loss)) {
            throw Error(ErrorKind::Training, "non-finite loss at epoch " + std::to_string(epoch) + " (train " +
                                                 std::to_string(train_loss) + ", valid " + std::to_string(valid_loss) + ")");
        }
        report.train_loss.push_back(train_loss);
        report.valid_loss.push_back(valid_loss);
        report.stopped_epoch = epoch;
        if (valid_loss < report.best_validation_loss) {
            report.best_validation_loss = valid_loss;
            report.best_epoch = epoch;
            best_encoder = stack.encoder;
            best_projector = stack.projector;
            since_best = 0;
        } else if (++since_best >= patience) {
            break;
        }
    }
    stack.encoder = std::move(best_encoder);
    stack.projector = std::move(best_projector);
    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_time).count();
    return report;
}

template <typename Scalar>
struct TrainedMember {
    EncoderStack<Scalar> stack;
    PretrainReport report;
};

/// Seed of ensemble member k; a pure function of (master seed, k).
inline std::uint64_t member_seed(std::uint64_t master, std::size_t k) { return derive_seed(master, "member", k); }

/**
 * Train one independently initialized stack per ratio policy.
 *
 * Members run concurrently when `parallel` is set; each owns its RNG streams, so the result does
 * not depend on scheduling.
 */
template <typename Scalar>
std::vector<TrainedMember<Scalar>> pretrain_ensemble(const Matrix<Scalar>& train, const Matrix<Scalar>& valid,
                                                     const Preprocessor& pp, std::span<const RatioPolicy> ratios,
                                                     const StackConfig& stack_cfg, const PretrainConfig& cfg,
                                                     AdamConfig adam, std::uint64_t master_seed, bool parallel = true,
                                                     const MarginalImputer<Scalar>* imputer = nullptr) {
    if (ratios.empty()) {
        throw Error(ErrorKind::Training, "ensemble needs at least one ratio");
    }
    for (const auto& r : ratios) {
        if (!r.random && !(r.fixed > 0.0 && r.fixed < 1.0)) {
            throw Error(ErrorKind::Mask, "ensemble ratio " + std::to_string(r.fixed) + " outside (0, 1)");
        }
    }
    auto run_member = [&](std::size_t k) {
        TrainedMember<Scalar> m{make_stack<Scalar>(train.cols(), stack_cfg, ratios[k], member_seed(master_seed, k), adam),
                                {}};
        m.report = pretrain(m.stack, train, valid, pp, cfg, imputer);
        return m;
    };
    std::vector<TrainedMember<Scalar>> members;
    if (parallel && ratios.size() > 1) {
        std::vector<std::future<TrainedMember<Scalar>>> jobs;
        for (std::size_t k = 0; k < ratios.size(); ++k) {
            jobs.push_back(std::async(std::launch::async, run_member, k));
        }
        for (auto& job : jobs) {
            members.push_back(job.get());
        }
    } else {
        for (std::size_t k = 0; k < ratios.size(); ++k) {
            members.push_back(run_member(k));
        }
    }
    return members;
}

} // namespace seba

#endif
