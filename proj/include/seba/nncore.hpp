#ifndef SEBA_NNCORE_HPP
#define SEBA_NNCORE_HPP

#include "error.hpp"
#include "linalg.hpp"
#include "rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

/**
 * @file nncore.hpp
 *
 * @brief Dense layers with hand-derived gradients, cosine similarity, InfoNCE and Adam.
 *
 * Everything here is a pure function of its explicit arguments; there is no global state.
 */

namespace seba {

/// Affine map y = x W^T + b over a batch of row vectors, with gradient buffers.
template <typename Scalar>
struct DenseLayer {
    Matrix<Scalar> weight;       // out x in
    Vector<Scalar> bias;         // out
    Matrix<Scalar> grad_weight;  // out x in
    Vector<Scalar> grad_bias;    // out

    DenseLayer() = default;

    DenseLayer(Index in, Index out)
        : weight(Matrix<Scalar>::Zero(out, in)),
          bias(Vector<Scalar>::Zero(out)),
          grad_weight(Matrix<Scalar>::Zero(out, in)),
          grad_bias(Vector<Scalar>::Zero(out)) {}

    Index in_dim() const { return weight.cols(); }
    Index out_dim() const { return weight.rows(); }

    /// uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and bias.
    void init_uniform(Rng& rng) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(in_dim()));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (Index i = 0; i < weight.size(); ++i) {
            weight.data()[i] = static_cast<Scalar>(dist(rng));
        }
        for (Index i = 0; i < bias.size(); ++i) {
            bias(i) = static_cast<Scalar>(dist(rng));
        }
    }

    template <typename Other>
    DenseLayer<Other> cast() const {
        DenseLayer<Other> out(in_dim(), out_dim());
        out.weight = weight.template cast<Other>();
        out.bias = bias.template cast<Other>();
        return out;
    }
};

template <typename Scalar>
using Mlp = std::vector<DenseLayer<Scalar>>;

/// Builds layers of widths dims[0] -> dims[1] -> ... and initializes them from `rng`.
template <typename Scalar>
Mlp<Scalar> make_mlp(std::span<const Index> dims, Rng& rng) {
    if (dims.size() < 2) {
        throw Error(ErrorKind::Dimension, "an MLP needs at least an input and an output width");
    }
    Mlp<Scalar> layers;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        layers.emplace_back(dims[l], dims[l + 1]);
        layers.back().init_uniform(rng);
    }
    return layers;
}

template <typename Scalar>
struct MlpCache {
    std::vector<Matrix<Scalar>> inputs;          // input to each layer
    std::vector<Matrix<Scalar>> pre_activations;  // x W^T + b of each layer
};

template <typename Scalar>
struct MlpOutput {
    Matrix<Scalar> output;
    MlpCache<Scalar> cache;
};

/// Forward pass with ReLU between layers and a linear last layer.
template <typename Scalar>
Matrix<Scalar> mlp_forward(std::span<const DenseLayer<Scalar>> layers, const Matrix<Scalar>& x,
                           MlpCache<Scalar>* cache) {
    if (layers.empty()) {
        throw Error(ErrorKind::Dimension, "empty network");
    }
    if (x.cols() != layers.front().in_dim()) {
        throw Error(ErrorKind::Dimension, "input has " + std::to_string(x.cols()) + " columns, network expects " +
                                              std::to_string(layers.front().in_dim()));
    }
    if (cache) {
        cache->inputs.clear();
        cache->pre_activations.clear();
    }
    Matrix<Scalar> h = x;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& layer = layers[l];
        if (h.cols() != layer.in_dim()) {
            throw Error(ErrorKind::Dimension, "layer " + std::to_string(l) + " width mismatch");
        }
        Matrix<Scalar> pre = h * layer.weight.transpose();
        pre.rowwise() += layer.bias.transpose();
        if (cache) {
            cache->inputs.push_back(std::move(h));
            cache->pre_activations.push_back(pre);
        }
        h = (l + 1 < layers.size()) ? Matrix<Scalar>(pre.cwiseMax(Scalar(0))) : std::move(pre);
    }
    return h;
}

template <typename Scalar>
MlpOutput<Scalar> mlp_forward(std::span<const DenseLayer<Scalar>> layers, const Matrix<Scalar>& x) {
    MlpOutput<Scalar> out;
    out.output = mlp_forward(layers, x, &out.cache);
    return out;
}

/// Backward pass. Overwrites each layer's gradient buffers and returns dLoss/dInput.
template <typename Scalar>
Matrix<Scalar> mlp_backward(std::span<DenseLayer<Scalar>> layers, const MlpCache<Scalar>& cache,
                            const Matrix<Scalar>& grad_output) {
    if (cache.inputs.size() != layers.size()) {
        throw Error(ErrorKind::Dimension, "forward cache does not match network depth");
    }
    Matrix<Scalar> grad = grad_output;
    for (std::size_t l = layers.size(); l-- > 0;) {
        auto& layer = layers[l];
        if (l + 1 < layers.size()) {
            grad = grad.cwiseProduct(
                (cache.pre_activations[l].array() > Scalar(0)).template cast<Scalar>().matrix());
        }
        layer.grad_weight.noalias() = grad.transpose() * cache.inputs[l];
        layer.grad_bias = grad.colwise().sum().transpose();
        grad = grad * layer.weight;
    }
    return grad;
}

struct CosineResult {
    double value = 0.0;
    bool degenerate = false;
};

inline constexpr double kNormFloor = 1e-12;

template <typename Derived1, typename Derived2>
CosineResult cosine_sim(const Eigen::MatrixBase<Derived1>& u, const Eigen::MatrixBase<Derived2>& v) {
    if (u.size() != v.size()) {
        throw Error(ErrorKind::Dimension, "cosine similarity of vectors with different lengths");
    }
    const double nu = static_cast<double>(u.norm());
    const double nv = static_cast<double>(v.norm());
    if (nu < kNormFloor || nv < kNormFloor) {
        return {0.0, true};
    }
    double dot = 0.0;
    for (Index i = 0; i < u.size(); ++i) {
        dot += static_cast<double>(u.derived().coeff(i)) * static_cast<double>(v.derived().coeff(i));
    }
    return {std::clamp(dot / (nu * nv), -1.0, 1.0), false};
}

template <typename Scalar>
struct InfoNceResult {
    double loss = 0.0;
    std::vector<double> row_losses;
    Matrix<Scalar> grad;  // dLoss/dZ
};

/**
 * InfoNCE over a batch with cosine similarity and temperature.
 *
 * Row i's positive is pos_index[i]; the denominator runs over every other row of the batch,
 * positive included. The returned loss is the batch mean and `grad` its exact gradient.
 */
template <typename Scalar>
InfoNceResult<Scalar> infonce_loss(const Matrix<Scalar>& z, std::span<const std::size_t> pos_index,
                                   double temperature) {
    const Index b = z.rows();
    if (b < 2) {
        throw Error(ErrorKind::Loss, "InfoNCE needs a batch of at least 2 rows");
    }
    if (static_cast<Index>(pos_index.size()) != b) {
        throw Error(ErrorKind::Loss, "one positive index per row is required");
    }
    if (!(temperature > 0.0)) {
        throw Error(ErrorKind::Loss, "temperature must be positive");
    }
    for (Index i = 0; i < b; ++i) {
        const std::size_t p = pos_index[static_cast<std::size_t>(i)];
        if (p >= static_cast<std::size_t>(b) || p == static_cast<std::size_t>(i)) {
            throw Error(ErrorKind::Loss, "row " + std::to_string(i) + " has an invalid positive index");
        }
    }

    Vector<Scalar> norms = z.rowwise().norm();
    Matrix<Scalar> unit(z.rows(), z.cols());
    for (Index i = 0; i < b; ++i) {
        if (static_cast<double>(norms(i)) < kNormFloor) {
            unit.row(i).setZero();
        } else {
            unit.row(i) = z.row(i) / norms(i);
        }
    }
    const Matrix<Scalar> sim = unit * unit.transpose();

    const double inv_t = 1.0 / temperature;
    const double inv_b = 1.0 / static_cast<double>(b);
    InfoNceResult<Scalar> out;
    out.row_losses.resize(static_cast<std::size_t>(b));
    Matrix<Scalar> coef = Matrix<Scalar>::Zero(b, b);  // dLoss/dSim
    std::vector<double> logits(static_cast<std::size_t>(b));
    double total = 0.0;
    for (Index i = 0; i < b; ++i) {
        double top = -std::numeric_limits<double>::infinity();
        for (Index j = 0; j < b; ++j) {
            logits[static_cast<std::size_t>(j)] = static_cast<double>(sim(i, j)) * inv_t;
            if (j != i) {
                top = std::max(top, logits[static_cast<std::size_t>(j)]);
            }
        }
        double denom = 0.0;
        for (Index j = 0; j < b; ++j) {
            if (j != i) {
                denom += std::exp(logits[static_cast<std::size_t>(j)] - top);
            }
        }
        const auto p = static_cast<Index>(pos_index[static_cast<std::size_t>(i)]);
        const double row = (top + std::log(denom)) - logits[static_cast<std::size_t>(p)];
        out.row_losses[static_cast<std::size_t>(i)] = row;
        total += row;
        for (Index j = 0; j < b; ++j) {
            if (j == i) {
                continue;
            }
            double g = std::exp(logits[static_cast<std::size_t>(j)] - top) / denom;
            if (j == p) {
                g -= 1.0;
            }
            coef(i, j) = static_cast<Scalar>(g * inv_t * inv_b);
        }
    }
    out.loss = total * inv_b;
    if (!std::isfinite(out.loss)) {
        throw Error(ErrorKind::Loss, "non-finite InfoNCE loss");
    }

    // sim_ij = u_i . u_j, so dL/du = (C + C^T) U; then back through row normalization.
    const Matrix<Scalar> grad_unit = (coef + coef.transpose()) * unit;
    out.grad.resize(z.rows(), z.cols());
    for (Index i = 0; i < b; ++i) {
        if (static_cast<double>(norms(i)) < kNormFloor) {
            out.grad.row(i).setZero();
            continue;
        }
        const Scalar radial = grad_unit.row(i).dot(unit.row(i));
        out.grad.row(i) = (grad_unit.row(i) - radial * unit.row(i)) / norms(i);
    }
    return out;
}

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

template <typename Scalar>
struct AdamState {
    AdamConfig config;
    std::int64_t step = 0;
    std::vector<Vector<Scalar>> first_moment;
    std::vector<Vector<Scalar>> second_moment;

    AdamState() = default;
    explicit AdamState(AdamConfig c) : config(c) {}
};

/// A parameter tensor viewed as a flat array together with its gradient.
template <typename Scalar>
struct ParamSlot {
    std::span<Scalar> value;
    std::span<const Scalar> grad;
};

template <typename Scalar>
void append_slots(std::vector<ParamSlot<Scalar>>& slots, DenseLayer<Scalar>& layer) {
    slots.push_back({std::span<Scalar>(layer.weight.data(), static_cast<std::size_t>(layer.weight.size())),
                     std::span<const Scalar>(layer.grad_weight.data(), static_cast<std::size_t>(layer.grad_weight.size()))});
    slots.push_back({std::span<Scalar>(layer.bias.data(), static_cast<std::size_t>(layer.bias.size())),
                     std::span<const Scalar>(layer.grad_bias.data(), static_cast<std::size_t>(layer.grad_bias.size()))});
}

template <typename Scalar>
void append_slots(std::vector<ParamSlot<Scalar>>& slots, Mlp<Scalar>& layers) {
    for (auto& layer : layers) {
        append_slots(slots, layer);
    }
}

/// One bias-corrected Adam update. Fails before touching any parameter if a gradient is not finite.
template <typename Scalar>
void adam_step(std::span<const ParamSlot<Scalar>> params, AdamState<Scalar>& state) {
    for (std::size_t k = 0; k < params.size(); ++k) {
        const auto& slot = params[k];
        if (slot.value.size() != slot.grad.size()) {
            throw Error(ErrorKind::Optimizer, "parameter " + std::to_string(k) + " and its gradient differ in size");
        }
        for (Scalar g : slot.grad) {
            if (!std::isfinite(static_cast<double>(g))) {
                throw Error(ErrorKind::Optimizer, "non-finite gradient in parameter tensor " + std::to_string(k));
            }
        }
    }
    if (state.first_moment.empty()) {
        for (const auto& slot : params) {
            state.first_moment.push_back(Vector<Scalar>::Zero(static_cast<Index>(slot.value.size())));
            state.second_moment.push_back(Vector<Scalar>::Zero(static_cast<Index>(slot.value.size())));
        }
    }
    if (state.first_moment.size() != params.size()) {
        throw Error(ErrorKind::Optimizer, "optimizer state tracks a different number of tensors");
    }
    for (std::size_t k = 0; k < params.size(); ++k) {
        if (static_cast<std::size_t>(state.first_moment[k].size()) != params[k].value.size()) {
            throw Error(ErrorKind::Optimizer, "optimizer state shape mismatch in tensor " + std::to_string(k));
        }
    }

    state.step += 1;
    const auto& c = state.config;
    const double t = static_cast<double>(state.step);
    const auto b1 = static_cast<Scalar>(c.beta1);
    const auto b2 = static_cast<Scalar>(c.beta2);
    const auto one_minus_b1 = static_cast<Scalar>(1.0 - c.beta1);
    const auto one_minus_b2 = static_cast<Scalar>(1.0 - c.beta2);
    const auto step_size = static_cast<Scalar>(c.lr / (1.0 - std::pow(c.beta1, t)));
    const auto inv_bias2 = static_cast<Scalar>(1.0 / std::sqrt(1.0 - std::pow(c.beta2, t)));
    const auto eps = static_cast<Scalar>(c.eps);
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& m = state.first_moment[k];
        auto& v = state.second_moment[k];
        const auto& slot = params[k];
        for (std::size_t i = 0; i < slot.value.size(); ++i) {
            const Scalar g = slot.grad[i];
            const auto ii = static_cast<Index>(i);
            m(ii) = b1 * m(ii) + one_minus_b1 * g;
            v(ii) = b2 * v(ii) + one_minus_b2 * g * g;
            slot.value[i] -= step_size * m(ii) / (std::sqrt(v(ii)) * inv_bias2 + eps);
        }
    }
}

template <typename Scalar>
void adam_step(const std::vector<ParamSlot<Scalar>>& params, AdamState<Scalar>& state) {
    adam_step(std::span<const ParamSlot<Scalar>>(params), state);
}

} // namespace seba

#endif
