// SPDX-License-Identifier: Apache-2.0
#include <filesystem>

#include <gtest/gtest.h>

#include "oelab/commands.hpp"

namespace oelab {
namespace {

namespace fs = std::filesystem;

class Commands : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() / ("oelab_cmd_" + std::to_string(::getpid()) + "_" +
                                         ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(root_);
  }
  void TearDown() override { fs::remove_all(root_); }

  fs::path dir(const std::string& name) const { return root_ / name; }

  fs::path root_;
};

const char* kSmall =
    "[data]\nn_train = 600\nn_eval = 100\n"
    "[model]\nhidden = 8\nfeature_dim = 3\n"
    "[training]\nepochs = 2\nbatch_in = 64\nbatch_out = 32\n"
    "[shift]\nsteps = 10\nn_in = 40\nn_out = 40\n";

ExperimentConfig small(const std::string& extra = "") { return parse_config(std::string(kSmall) + extra); }

TEST_F(Commands, GenDataIsByteIdentical) {
  const auto c = small();
  cmd::gen_data(c, dir("a"));
  cmd::gen_data(c, dir("b"));
  for (const char* f : {"train_in.csv", "train_out.csv", "eval_in.csv", "eval_out.csv", "config.resolved.ini"})
    EXPECT_EQ(io::read_file(dir("a") / f), io::read_file(dir("b") / f)) << f;
  EXPECT_TRUE(fs::exists(dir("a") / "meta.json"));
  EXPECT_EQ(io::lines(io::read_file(dir("a") / "eval_in.csv")).front(), "x0,x1,label,domain");
}

TEST_F(Commands, GenDataSeedChangesContent) {
  cmd::gen_data(small(), dir("a"));
  cmd::gen_data(with_override(small(), "run.seed", "5"), dir("b"));
  const auto a = io::read_file(dir("a") / "train_in.csv");
  const auto b = io::read_file(dir("b") / "train_in.csv");
  EXPECT_NE(a, b);
  EXPECT_EQ(io::lines(a).front(), io::lines(b).front());
}

TEST_F(Commands, GenDataEmpty) {
  cmd::gen_data(parse_config("[data]\nn_train = 0\nn_eval = 0\n"), dir("e"));
  for (const char* f : {"train_in.csv", "train_out.csv", "eval_in.csv", "eval_out.csv"})
    EXPECT_EQ(io::read_file(dir("e") / f), "x0,x1,label,domain\n") << f;
}

TEST_F(Commands, SimulateShiftWritesCsvs) {
  const auto traj = cmd::simulate_shift(small("[criterion]\nkind = oe\n"), dir("s"));
  EXPECT_EQ(traj.snapshots.size(), 11u);
  EXPECT_LT(traj.stats.back().mean_norm_out, traj.stats.front().mean_norm_out);
  EXPECT_TRUE(fs::exists(dir("s") / "trajectory.csv"));
  EXPECT_EQ(io::lines(io::read_file(dir("s") / "stats.csv")).size(), 12u);
}

TEST_F(Commands, DemoPlantedFindsPair) {
  const auto r = cmd::demo_false_likelihood(small(), dir("d"));
  ASSERT_EQ(r["result"], "found");
  EXPECT_TRUE(r["checks"]["logit_B_gt_logit_A"].get<bool>());
  EXPECT_TRUE(r["checks"]["likelihood_B_lt_likelihood_A"].get<bool>());
  EXPECT_EQ(r["A"]["domain"], "in");
  EXPECT_EQ(r["B"]["domain"], "out");
  EXPECT_TRUE(fs::exists(dir("d") / "false_likelihood.json"));
}

TEST_F(Commands, DemoCentersFindsNothing) {
  const auto r = cmd::demo_false_likelihood(small("[demo]\ngeometry = centers\n"), dir("d"));
  EXPECT_EQ(r["result"], "none");
}

TEST_F(Commands, TrainWritesOutputs) {
  const auto c = small();
  const auto outcome = cmd::train(c, dir("t"));
  ASSERT_TRUE(outcome.result.has_value());
  for (const char* f : {"epochs.jsonl", "metrics.csv", "scores.csv", "checkpoint.txt", "config.resolved.ini"})
    EXPECT_TRUE(fs::exists(dir("t") / f)) << f;
  EXPECT_EQ(io::lines(io::read_file(dir("t") / "epochs.jsonl")).size(), 2u);
  const auto metrics = io::lines(io::read_file(dir("t") / "metrics.csv"));
  EXPECT_EQ(metrics.front(), "criterion,gamma,lambda,scorer,auroc,aupr,fpr95,acc_in");
  EXPECT_EQ(metrics.at(1).substr(0, 16), "ice,1,1,ice_conf");
  for (const auto& r : score_records_from_csv(io::read_file(dir("t") / "scores.csv"))) {
    EXPECT_GT(r.score, 0.0);
    EXPECT_LE(r.score, 1.0);
  }
}

TEST_F(Commands, TrainIsReproducibleFromResolvedConfig) {
  cmd::train(small("[criterion]\nkind = plain\n"), dir("a"));
  cmd::train(load_config(dir("a") / "config.resolved.ini"), dir("b"));
  for (const char* f : {"epochs.jsonl", "metrics.csv", "scores.csv", "checkpoint.txt", "config.resolved.ini"})
    EXPECT_EQ(io::read_file(dir("a") / f), io::read_file(dir("b") / f)) << f;
}

TEST_F(Commands, TrainFromDataDir) {
  const auto c = small();
  cmd::gen_data(c, dir("data"));
  const auto inline_run = cmd::train(c, dir("x"));
  const auto file_run = cmd::train(with_override(c, "data.dir", dir("data").string()), dir("y"));
  EXPECT_EQ(io::read_file(dir("x") / "checkpoint.txt"), io::read_file(dir("y") / "checkpoint.txt"));
}

TEST_F(Commands, TrainReportsNonFiniteLoss) {
  auto c = with_override(small("[criterion]\nkind = energy\ngamma = 1000000\n"), "training.lr", "10");
  const auto outcome = cmd::train(c, dir("n"));
  EXPECT_FALSE(outcome.result.has_value());
  ASSERT_TRUE(outcome.nonfinite_step.has_value());
  EXPECT_TRUE(fs::exists(dir("n") / "status.json"));
  EXPECT_NE(io::read_file(dir("n") / "metrics.csv").find("NaN"), std::string::npos);
}

TEST_F(Commands, SweepSingleGammaMatchesTrain) {
  const auto c = small("[sweep]\ncriteria = ice\n");
  const auto rows = cmd::sweep(c, {1.0}, dir("w"));
  ASSERT_EQ(rows.size(), 1u);
  const auto outcome = cmd::train(c, dir("t"));
  ASSERT_TRUE(rows[0].last && outcome.result);
  EXPECT_EQ(rows[0].last->metrics.auroc, outcome.result->logs.back().metrics.auroc);
  EXPECT_EQ(rows[0].last->acc_in, outcome.result->logs.back().acc_in);
}

TEST_F(Commands, SweepTableShape) {
  const auto c = small("[sweep]\ncriteria = oe,ice\nworkers = 2\n");
  const std::vector<double> gammas{1, 3};
  cmd::sweep(c, gammas, dir("w"));
  const auto table = io::lines(io::read_file(dir("w") / "sweep_table.csv"));
  ASSERT_EQ(table.size(), 1u + 4 * 2);
  EXPECT_EQ(table[0], "metric,method,gamma=1,gamma=3");
  EXPECT_EQ(table[1].substr(0, 8), "AUPR,oe,");
  EXPECT_EQ(io::lines(io::read_file(dir("w") / "sweep.csv")).size(), 1u + 4);
  EXPECT_THROW(cmd::sweep(c, {}, dir("w")), ConfigError);
}

TEST_F(Commands, ExportFeatures) {
  const auto c = small();
  cmd::train(c, dir("t"));
  EXPECT_EQ(cmd::export_features(c, dir("t") / "checkpoint.txt", dir("e")), 200u);
  const auto rows = io::lines(io::read_file(dir("e") / "features.csv"));
  EXPECT_EQ(rows.front(), "idx,domain,z0,z1,z2");
  EXPECT_EQ(rows.size(), 201u);
}

TEST_F(Commands, ExportUntrainedCheckpoint) {
  const auto c = small();
  const cmd::DataSplits d = cmd::generate_data(c);
  io::write_file(dir("u") / "checkpoint.txt", checkpoint_text(init_model(c.train, c.dims, &d.train_in)));
  EXPECT_EQ(cmd::export_features(c, dir("u") / "checkpoint.txt", dir("e")), 200u);
}

TEST_F(Commands, ExportMissingCheckpoint) {
  try {
    cmd::export_features(small(), dir("missing") / "checkpoint.txt", dir("e"));
    FAIL();
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("checkpoint.txt"), std::string::npos);
  }
}

TEST_F(Commands, CheckpointRoundTrip) {
  const auto c = small();
  const auto outcome = cmd::train(c, dir("t"));
  const Model back = model_from_checkpoint(io::read_file(dir("t") / "checkpoint.txt"));
  EXPECT_EQ(back, outcome.result->model);
}

}  // namespace
}  // namespace oelab
