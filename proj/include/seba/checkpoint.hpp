#ifndef SEBA_CHECKPOINT_HPP
#define SEBA_CHECKPOINT_HPP

#include "error.hpp"
#include "preprocess.hpp"
#include "pretrain.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

/**
 * @file checkpoint.hpp
 *
 * @brief Versioned binary checkpoint of one pretrained stack plus the preprocessor it was fitted with.
 *
 * Layout (all integers and floats little-endian):
 *
 *     magic      8 bytes  "SEBACKPT"
 *     version    u32      (1)
 *     flags      u32      bit 0: conditioned projector, bit 1: random ratio
 *     ratio      f64
 *     seed       u64
 *     n_layers   u32      (4)
 *     dims       n_layers x (u64 out, u64 in)
 *     tensors    encoder W1, b1, W2, b2, projector W1, b1, W2, b2 as f64, weights row-major
 *     normalize  u8
 *     n_columns  u64
 *     columns    n_columns x (u32 name length, name bytes, u8 kind, f64 mean, f64 std,
 *                             u64 cardinality, u64 range begin, u64 range end)
 *     encoded    u64      encoded width
 */

namespace seba {

inline constexpr std::array<char, 8> kCheckpointMagic{'S', 'E', 'B', 'A', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

class LittleEndianWriter {
public:
    explicit LittleEndianWriter(std::ostream& out) : out_(out) {}

    template <typename T>
    void put(T value) {
        static_assert(std::is_trivially_copyable_v<T>);
        std::array<unsigned char, sizeof(T)> bytes;
        std::memcpy(bytes.data(), &value, sizeof(T));
        if constexpr (std::endian::native == std::endian::big) {
            std::reverse(bytes.begin(), bytes.end());
        }
        out_.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
    }

    void put_bytes(const char* data, std::size_t n) { out_.write(data, static_cast<std::streamsize>(n)); }

private:
    std::ostream& out_;
};

class LittleEndianReader {
public:
    explicit LittleEndianReader(std::istream& in) : in_(in) {}

    template <typename T>
    T get() {
        std::array<unsigned char, sizeof(T)> bytes;
        in_.read(reinterpret_cast<char*>(bytes.data()), sizeof(T));
        if (!in_) {
            throw Error(ErrorKind::Checkpoint, "truncated checkpoint");
        }
        if constexpr (std::endian::native == std::endian::big) {
            std::reverse(bytes.begin(), bytes.end());
        }
        T value;
        std::memcpy(&value, bytes.data(), sizeof(T));
        return value;
    }

    std::string get_string(std::size_t n) {
        std::string s(n, '\0');
        in_.read(s.data(), static_cast<std::streamsize>(n));
        if (!in_) {
            throw Error(ErrorKind::Checkpoint, "truncated checkpoint");
        }
        return s;
    }

private:
    std::istream& in_;
};

template <typename Scalar>
void write_layer(LittleEndianWriter& w, const DenseLayer<Scalar>& layer) {
    for (Index r = 0; r < layer.weight.rows(); ++r) {
        for (Index c = 0; c < layer.weight.cols(); ++c) {
            w.put(static_cast<double>(layer.weight(r, c)));
        }
    }
    for (Index r = 0; r < layer.bias.size(); ++r) {
        w.put(static_cast<double>(layer.bias(r)));
    }
}

template <typename Scalar>
void read_layer(LittleEndianReader& rd, DenseLayer<Scalar>& layer) {
    for (Index r = 0; r < layer.weight.rows(); ++r) {
        for (Index c = 0; c < layer.weight.cols(); ++c) {
            layer.weight(r, c) = static_cast<Scalar>(rd.get<double>());
        }
    }
    for (Index r = 0; r < layer.bias.size(); ++r) {
        layer.bias(r) = static_cast<Scalar>(rd.get<double>());
    }
}

} // namespace detail

template <typename Scalar>
void write_checkpoint(std::ostream& out, const EncoderStack<Scalar>& stack, const Preprocessor& pp) {
    if (stack.encoder.size() != 2 || stack.projector.size() != 2) {
        throw Error(ErrorKind::Checkpoint, "checkpoints hold a 2-layer encoder and a 2-layer projector");
    }
    detail::LittleEndianWriter w(out);
    w.put_bytes(kCheckpointMagic.data(), kCheckpointMagic.size());
    w.put(kCheckpointVersion);
    std::uint32_t flags = 0;
    flags |= stack.conditioned ? 1u : 0u;
    flags |= stack.ratio.random ? 2u : 0u;
    w.put(flags);
    w.put(stack.ratio.random ? 0.0 : stack.ratio.fixed);
    w.put(static_cast<std::uint64_t>(stack.seed));
    w.put(std::uint32_t{4});
    for (const auto* net : {&stack.encoder, &stack.projector}) {
        for (const auto& layer : *net) {
            w.put(static_cast<std::uint64_t>(layer.out_dim()));
            w.put(static_cast<std::uint64_t>(layer.in_dim()));
        }
    }
    for (const auto* net : {&stack.encoder, &stack.projector}) {
        for (const auto& layer : *net) {
            detail::write_layer(w, layer);
        }
    }
    w.put(static_cast<std::uint8_t>(pp.normalize ? 1 : 0));
    w.put(static_cast<std::uint64_t>(pp.columns.size()));
    for (const auto& col : pp.columns) {
        w.put(static_cast<std::uint32_t>(col.name.size()));
        w.put_bytes(col.name.data(), col.name.size());
        w.put(static_cast<std::uint8_t>(col.kind == ColumnKind::Categorical ? 1 : 0));
        w.put(col.mean);
        w.put(col.std);
        w.put(static_cast<std::uint64_t>(col.cardinality));
        w.put(static_cast<std::uint64_t>(col.range.begin));
        w.put(static_cast<std::uint64_t>(col.range.end));
    }
    w.put(static_cast<std::uint64_t>(pp.encoded_dim));
}

template <typename Scalar>
void save_checkpoint(const std::string& path, const EncoderStack<Scalar>& stack, const Preprocessor& pp) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error(ErrorKind::Checkpoint, "cannot write '" + path + "'");
    }
    write_checkpoint(out, stack, pp);
    if (!out) {
        throw Error(ErrorKind::Checkpoint, "write to '" + path + "' failed");
    }
}

template <typename Scalar>
struct Checkpoint {
    EncoderStack<Scalar> stack;
    Preprocessor preprocessor;
};

/// Optimizer state is not stored; a loaded stack starts with a fresh Adam state.
template <typename Scalar>
Checkpoint<Scalar> read_checkpoint(std::istream& in) {
    detail::LittleEndianReader rd(in);
    const std::string magic = rd.get_string(kCheckpointMagic.size());
    if (std::memcmp(magic.data(), kCheckpointMagic.data(), kCheckpointMagic.size()) != 0) {
        throw Error(ErrorKind::Checkpoint, "not a checkpoint (bad magic)");
    }
    const auto version = rd.get<std::uint32_t>();
    if (version != kCheckpointVersion) {
        throw Error(ErrorKind::Checkpoint, "unsupported checkpoint version " + std::to_string(version));
    }
    const auto flags = rd.get<std::uint32_t>();
    const double ratio = rd.get<double>();
    Checkpoint<Scalar> ck;
    auto& stack = ck.stack;
    stack.conditioned = (flags & 1u) != 0;
    stack.ratio = (flags & 2u) ? RatioPolicy::random_choice() : RatioPolicy::constant(ratio);
    stack.seed = rd.get<std::uint64_t>();
    const auto n_layers = rd.get<std::uint32_t>();
    if (n_layers != 4) {
        throw Error(ErrorKind::Checkpoint, "expected 4 layers, found " + std::to_string(n_layers));
    }
    std::vector<std::pair<Index, Index>> dims;
    for (std::uint32_t l = 0; l < n_layers; ++l) {
        const auto out_dim = rd.get<std::uint64_t>();
        const auto in_dim = rd.get<std::uint64_t>();
        if (out_dim == 0 || in_dim == 0 || out_dim > (1u << 24) || in_dim > (1u << 24)) {
            throw Error(ErrorKind::Checkpoint, "implausible layer dimensions");
        }
        dims.emplace_back(static_cast<Index>(in_dim), static_cast<Index>(out_dim));
    }
    if (dims[1].first != dims[0].second || dims[3].first != dims[2].second) {
        throw Error(ErrorKind::Checkpoint, "inconsistent layer widths");
    }
    for (std::size_t l = 0; l < 4; ++l) {
        auto& net = l < 2 ? stack.encoder : stack.projector;
        net.emplace_back(dims[l].first, dims[l].second);
    }
    for (auto* net : {&stack.encoder, &stack.projector}) {
        for (auto& layer : *net) {
            detail::read_layer(rd, layer);
        }
    }
    auto& pp = ck.preprocessor;
    pp.normalize = rd.get<std::uint8_t>() != 0;
    const auto n_columns = rd.get<std::uint64_t>();
    if (n_columns > (1u << 24)) {
        throw Error(ErrorKind::Checkpoint, "implausible column count");
    }
    for (std::uint64_t j = 0; j < n_columns; ++j) {
        ColumnStats col;
        const auto len = rd.get<std::uint32_t>();
        if (len > (1u << 16)) {
            throw Error(ErrorKind::Checkpoint, "implausible column name length");
        }
        col.name = rd.get_string(len);
        col.kind = rd.get<std::uint8_t>() ? ColumnKind::Categorical : ColumnKind::Numerical;
        col.mean = rd.get<double>();
        col.std = rd.get<double>();
        col.cardinality = static_cast<std::size_t>(rd.get<std::uint64_t>());
        col.range.begin = static_cast<std::size_t>(rd.get<std::uint64_t>());
        col.range.end = static_cast<std::size_t>(rd.get<std::uint64_t>());
        pp.columns.push_back(std::move(col));
    }
    pp.encoded_dim = static_cast<std::size_t>(rd.get<std::uint64_t>());
    if (static_cast<Index>(pp.encoded_dim) != stack.input_dim()) {
        throw Error(ErrorKind::Checkpoint, "preprocessor width does not match encoder input");
    }
    const Index expected_proj = stack.conditioned ? stack.embed_dim() + stack.input_dim() : stack.embed_dim();
    if (stack.projector_input_dim() != expected_proj) {
        throw Error(ErrorKind::Checkpoint, "projector input width inconsistent with conditioning flag");
    }
    return ck;
}

template <typename Scalar>
Checkpoint<Scalar> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorKind::Checkpoint, "cannot open '" + path + "'");
    }
    return read_checkpoint<Scalar>(in);
}

} // namespace seba

#endif
