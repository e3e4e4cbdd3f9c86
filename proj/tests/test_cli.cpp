#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

namespace fs = std::filesystem;
using seba::testing::read_bytes;
using seba::testing::TempDir;
using seba::testing::write_text;

namespace {

int run_cli(const std::string& args) {
    const std::string cmd = std::string(SEBA_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::vector<std::string> lines(const std::string& path) {
    std::ifstream in(path);
    std::vector<std::string> out;
    for (std::string l; std::getline(in, l);) {
        out.push_back(l);
    }
    return out;
}

// Small synthetic dataset plus a config with narrow layers so each pretraining run takes seconds.
class CliTest : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        dir_ = new TempDir("cli");
        const std::string csv = dir_->file("data.csv");
        const std::string schema = dir_->file("data.json");
        ASSERT_EQ(run_cli("synth --rows 600 --dim 8 --classes 4 --separation 6 --seed 1 --csv " + csv + " --schema " +
                          schema),
                  0);
        write_text(dir_->file("run.ini"), "[data]\ncsv = " + csv + "\nschema = " + schema +
                                               "\nname = blobs\n[pretrain]\nseed = 3\nmax_epochs = 3\npatience = 2\n"
                                               "batch_size = 64\n[model]\nhidden = 16\nembed = 8\n"
                                               "[eval]\nepisodes = 2\nprobe_epochs = 50\n");
        ASSERT_EQ(run_cli("pretrain --config " + dir_->file("run.ini") + " --out " + ckpt()), 0);
    }
    static void TearDownTestSuite() {
        delete dir_;
        dir_ = nullptr;
    }
    static std::string ckpt() { return dir_->file("ckpt"); }
    static std::string config() { return dir_->file("run.ini"); }
    static TempDir* dir_;
};

TempDir* CliTest::dir_ = nullptr;

} // namespace

TEST(Cli, UsageErrorsExitWithCodeTwo) {
    EXPECT_EQ(run_cli(""), 2);
    EXPECT_EQ(run_cli("frobnicate"), 2);
    EXPECT_EQ(run_cli("pretrain"), 2);
    EXPECT_EQ(run_cli("theory --trials 0"), 2);
    EXPECT_EQ(run_cli("theory --offset sideways"), 2);
    EXPECT_EQ(run_cli("--help"), 0);
}

TEST(Cli, MissingSchemaIsUsageError) {
    TempDir dir("cli-schema");
    ASSERT_EQ(run_cli("synth --rows 40 --dim 2 --classes 2 --csv " + dir.file("d.csv") + " --schema " +
                      dir.file("d.json")),
              0);
    write_text(dir.file("c.ini"), "[data]\ncsv = " + dir.file("d.csv") + "\nschema = " + dir.file("nope.json") + "\n");
    EXPECT_EQ(run_cli("pretrain --config " + dir.file("c.ini") + " --out " + dir.file("o")), 2);
    EXPECT_FALSE(fs::exists(dir.file("o/member_0.ckpt")));
}

TEST(Cli, TheoryZeroSeparationRowsAreCoinFlips) {
    TempDir dir("cli-theory");
    ASSERT_EQ(run_cli("theory --dim 10 --delta-sq-grid 0 --n-grid 2,5 --trials 4000 --subsets 20 --out " +
                      dir.file("t.csv") + " --bound-out " + dir.file("b.csv")),
              0);
    const auto rows = lines(dir.file("t.csv"));
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_EQ(rows[0], "D,n,delta_sq,n_subsets,trials,estimate,stderr");
    for (std::size_t i = 1; i < rows.size(); ++i) {
        std::stringstream ss(rows[i]);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) {
            cells.push_back(cell);
        }
        ASSERT_EQ(cells.size(), 7u);
        EXPECT_EQ(cells[4], "4000");
        EXPECT_NEAR(std::stod(cells[5]), 0.5, 0.04);
    }
    EXPECT_TRUE(fs::exists(dir.file("b.csv")));
}

TEST_F(CliTest, PretrainWritesOneCheckpointPerRatio) {
    for (int k = 0; k < 5; ++k) {
        EXPECT_TRUE(fs::exists(ckpt() + "/member_" + std::to_string(k) + ".ckpt")) << k;
    }
    EXPECT_TRUE(fs::exists(ckpt() + "/manifest.ini"));
    const auto report = lines(ckpt() + "/pretrain_report.csv");
    ASSERT_FALSE(report.empty());
    EXPECT_EQ(report[0], "member,ratio,epoch,train_loss,valid_loss,best_epoch");
}

TEST_F(CliTest, PretrainIsReproducible) {
    const std::string again = dir_->file("ckpt2");
    ASSERT_EQ(run_cli("pretrain --config " + config() + " --out " + again), 0);
    for (int k = 0; k < 5; ++k) {
        const std::string name = "/member_" + std::to_string(k) + ".ckpt";
        EXPECT_EQ(read_bytes(ckpt() + name), read_bytes(again + name)) << k;
    }
    EXPECT_EQ(read_bytes(ckpt() + "/pretrain_report.csv"), read_bytes(again + "/pretrain_report.csv"));
}

TEST_F(CliTest, EvalOneShotUsesPrototypeHead) {
    const std::string out = dir_->file("e1.csv");
    const std::string summary = dir_->file("s1.csv");
    ASSERT_EQ(run_cli("eval --checkpoints " + ckpt() + " --config " + config() + " --k-shot 1 --episodes 1 --seeds 1 "
                      "--out " + out + " --summary " + summary),
              0);
    const auto rows = lines(out);
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0], "dataset,n_way,k_shot,head,seed,episode,accuracy");
    EXPECT_EQ(rows[1].rfind("blobs,4,1,proto-cos,", 0), 0u) << rows[1];
    const auto s = lines(summary);
    ASSERT_EQ(s.size(), 7u);  // header + ensemble + 5 members
    EXPECT_EQ(s[0], "dataset,model,n_way,k_shot,head,n_seeds,n_episodes,mean,std");
}

TEST_F(CliTest, EvalIsReproducibleAndHeadsAreChecked) {
    const std::string a = dir_->file("ea.csv");
    const std::string b = dir_->file("eb.csv");
    const std::string common = "eval --checkpoints " + ckpt() + " --config " + config() + " --k-shot 5 --summary " +
                               dir_->file("sum.csv") + " --out ";
    ASSERT_EQ(run_cli(common + a), 0);
    ASSERT_EQ(run_cli(common + b), 0);
    EXPECT_EQ(read_bytes(a), read_bytes(b));
    EXPECT_EQ(lines(a).size(), 3u);
    EXPECT_EQ(lines(a)[1].rfind("blobs,4,5,linear,", 0), 0u);
    EXPECT_EQ(run_cli(common + a + " --head svm"), 2);
    EXPECT_EQ(run_cli("eval --checkpoints " + dir_->file("missing")), 2);
}

TEST_F(CliTest, AblateConditioningAndBadAxis) {
    const std::string out = dir_->file("abl.csv");
    EXPECT_EQ(run_cli("ablate --config " + config() + " --axis colour --out " + out), 2);
    ASSERT_EQ(run_cli("ablate --config " + config() + " --axis conditioning --set pretrain.ratios=0.2 --out " + out), 0);
    const auto rows = lines(out);
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_EQ(rows[0], "axis,variant,k_shot,head,projector_input_dim,mean,std");
}

TEST_F(CliTest, AnalyzeWritesBothTables) {
    const std::string out = dir_->file("analysis");
    ASSERT_EQ(run_cli("analyze --checkpoints " + ckpt() + " --separations 2 --out-dir " + out), 0);
    const auto curve = lines(out + "/neighbor_fraction.csv");
    ASSERT_EQ(curve.size(), 11u);
    EXPECT_EQ(curve[0], "k,mean_fraction");
    const auto table = lines(out + "/latent_consistency.csv");
    ASSERT_EQ(table.size(), 12u);
    EXPECT_EQ(table[0], "input_bucket,mean_input_count,mean_latent_count,bucket_size");
}
