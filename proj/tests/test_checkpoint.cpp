#include "test_util.hpp"

#include <seba/checkpoint.hpp>

#include <gtest/gtest.h>

#include <cstring>
#include <sstream>

using namespace seba;
using seba::testing::TempDir;

namespace {

StackConfig tiny(bool conditioned) {
    StackConfig c;
    c.hidden = 6;
    c.embed = 4;
    c.projector_hidden = 5;
    c.projector_out = 3;
    c.conditioned = conditioned;
    return c;
}

Preprocessor mixed_preprocessor() {
    const Dataset ds = seba::testing::mixed_dataset(30, 0);
    std::vector<std::size_t> all(30);
    for (std::size_t i = 0; i < 30; ++i) {
        all[i] = i;
    }
    return fit(ds, all);
}

std::string serialize(const EncoderStack<double>& s, const Preprocessor& pp) {
    std::ostringstream out(std::ios::binary);
    write_checkpoint(out, s, pp);
    return out.str();
}

} // namespace

TEST(Checkpoint, RoundTripIsExactAtDoublePrecision) {
    const auto pp = mixed_preprocessor();
    const auto stack = make_stack<double>(static_cast<Index>(pp.encoded_dim), tiny(true), RatioPolicy::constant(0.3), 77);
    std::istringstream in(serialize(stack, pp), std::ios::binary);
    const auto ck = read_checkpoint<double>(in);
    for (std::size_t l = 0; l < 2; ++l) {
        EXPECT_EQ(ck.stack.encoder[l].weight, stack.encoder[l].weight);
        EXPECT_EQ(ck.stack.encoder[l].bias, stack.encoder[l].bias);
        EXPECT_EQ(ck.stack.projector[l].weight, stack.projector[l].weight);
        EXPECT_EQ(ck.stack.projector[l].bias, stack.projector[l].bias);
    }
    EXPECT_TRUE(ck.stack.conditioned);
    EXPECT_FALSE(ck.stack.ratio.random);
    EXPECT_DOUBLE_EQ(ck.stack.ratio.fixed, 0.3);
    EXPECT_EQ(ck.stack.seed, 77u);
    ASSERT_EQ(ck.preprocessor.columns.size(), pp.columns.size());
    for (std::size_t j = 0; j < pp.columns.size(); ++j) {
        EXPECT_EQ(ck.preprocessor.columns[j].name, pp.columns[j].name);
        EXPECT_EQ(ck.preprocessor.columns[j].kind, pp.columns[j].kind);
        EXPECT_EQ(ck.preprocessor.columns[j].mean, pp.columns[j].mean);
        EXPECT_EQ(ck.preprocessor.columns[j].std, pp.columns[j].std);
        EXPECT_EQ(ck.preprocessor.columns[j].cardinality, pp.columns[j].cardinality);
        EXPECT_EQ(ck.preprocessor.range(j).begin, pp.range(j).begin);
        EXPECT_EQ(ck.preprocessor.range(j).end, pp.range(j).end);
    }
    EXPECT_EQ(ck.preprocessor.encoded_dim, pp.encoded_dim);
    EXPECT_EQ(ck.preprocessor.normalize, pp.normalize);
}

TEST(Checkpoint, FloatStacksRoundTripThroughDoubleStorage) {
    const auto pp = mixed_preprocessor();
    const auto stack = make_stack<float>(static_cast<Index>(pp.encoded_dim), tiny(false), RatioPolicy::random_choice(), 1);
    std::ostringstream out(std::ios::binary);
    write_checkpoint(out, stack, pp);
    std::istringstream in(out.str(), std::ios::binary);
    const auto ck = read_checkpoint<float>(in);
    EXPECT_EQ(ck.stack.encoder[0].weight, stack.encoder[0].weight);
    EXPECT_FALSE(ck.stack.conditioned);
    EXPECT_TRUE(ck.stack.ratio.random);
    EXPECT_EQ(ck.stack.projector_input_dim(), 4);
}

TEST(Checkpoint, HeaderLayout) {
    const auto pp = mixed_preprocessor();
    const auto stack = make_stack<double>(static_cast<Index>(pp.encoded_dim), tiny(true), RatioPolicy::constant(0.5), 9);
    const std::string bytes = serialize(stack, pp);
    ASSERT_GT(bytes.size(), 64u);
    EXPECT_EQ(bytes.substr(0, 8), "SEBACKPT");
    std::uint32_t version = 0;
    std::memcpy(&version, bytes.data() + 8, 4);
    EXPECT_EQ(version, kCheckpointVersion);
    std::uint32_t flags = 0;
    std::memcpy(&flags, bytes.data() + 12, 4);
    EXPECT_EQ(flags, 1u);
    double ratio = 0;
    std::memcpy(&ratio, bytes.data() + 16, 8);
    EXPECT_EQ(ratio, 0.5);
    std::uint64_t first_out = 0;
    std::uint64_t first_in = 0;
    std::memcpy(&first_out, bytes.data() + 36, 8);
    std::memcpy(&first_in, bytes.data() + 44, 8);
    EXPECT_EQ(first_out, 6u);
    EXPECT_EQ(first_in, pp.encoded_dim);
    // first tensor value: encoder W1[0][0], row-major after the 4 dim pairs
    double w00 = 0;
    std::memcpy(&w00, bytes.data() + 36 + 4 * 16, 8);
    EXPECT_EQ(w00, stack.encoder[0].weight(0, 0));
    double w01 = 0;
    std::memcpy(&w01, bytes.data() + 36 + 4 * 16 + 8, 8);
    EXPECT_EQ(w01, stack.encoder[0].weight(0, 1));
}

TEST(Checkpoint, SavingTwiceIsByteIdentical) {
    TempDir dir("ckpt");
    const auto pp = mixed_preprocessor();
    const auto stack = make_stack<double>(static_cast<Index>(pp.encoded_dim), tiny(true), RatioPolicy::constant(0.2), 3);
    save_checkpoint(dir.file("a.ckpt"), stack, pp);
    save_checkpoint(dir.file("b.ckpt"), stack, pp);
    EXPECT_EQ(seba::testing::read_bytes(dir.file("a.ckpt")), seba::testing::read_bytes(dir.file("b.ckpt")));
    const auto loaded = load_checkpoint<double>(dir.file("a.ckpt"));
    EXPECT_EQ(loaded.stack.projector[1].bias, stack.projector[1].bias);
}

TEST(Checkpoint, CorruptFilesAreCheckpointErrors) {
    const auto pp = mixed_preprocessor();
    const auto stack = make_stack<double>(static_cast<Index>(pp.encoded_dim), tiny(true), RatioPolicy::constant(0.2), 3);
    const std::string good = serialize(stack, pp);
    auto expect_checkpoint_error = [](const std::string& bytes) {
        std::istringstream in(bytes, std::ios::binary);
        try {
            read_checkpoint<double>(in);
            ADD_FAILURE() << "expected a checkpoint error";
        } catch (const Error& e) {
            EXPECT_EQ(e.kind(), ErrorKind::Checkpoint);
        }
    };
    std::string bad_magic = good;
    bad_magic[0] = 'X';
    expect_checkpoint_error(bad_magic);
    std::string bad_version = good;
    bad_version[8] = 7;
    expect_checkpoint_error(bad_version);
    expect_checkpoint_error(good.substr(0, good.size() / 2));
    expect_checkpoint_error(good.substr(0, good.size() - 1));
    expect_checkpoint_error("");
    EXPECT_THROW(load_checkpoint<double>("/nonexistent/x.ckpt"), Error);
}
