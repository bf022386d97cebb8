#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "pdetime/experiment.hpp"

using namespace pdetime;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("pdetime_test_" + name);
  fs::remove_all(p);
  return p;
}

std::vector<std::string> lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

// Small, fast configuration on the built-in sinusoid.
ExperimentSpec quick(Command cmd, const fs::path& out) {
  ExperimentSpec s;
  s.command = cmd;
  s.out_dir = out.string();
  s.dataset = kSyntheticSinusoid;
  s.overrides = {"data.horizons=12,24", "model.d=8", "model.k=2", "model.patch=6", "train.epochs=1",
                 "data.train_stride=8", "data.eval_stride=8"};
  return s;
}

std::vector<std::string> column(const std::vector<std::string>& rows, std::size_t k) {
  std::vector<std::string> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    std::stringstream ss(rows[i]);
    std::string cell;
    for (std::size_t j = 0; j <= k; ++j) std::getline(ss, cell, ',');
    out.push_back(cell);
  }
  return out;
}

}  // namespace

TEST(Experiment, MissingDatasetExitsTwoWithoutOutputs) {
  const fs::path out = scratch("missing");
  ExperimentSpec s;
  s.out_dir = out.string();
  s.dataset = "/nonexistent/ETTh1.csv";
  std::ostringstream con, err;
  EXPECT_EQ(run_experiment(s, con, err), 2);
  EXPECT_NE(err.str().find("does not exist"), std::string::npos) << err.str();
  EXPECT_FALSE(fs::exists(out));
}

TEST(Experiment, BadOverrideExitsTwo) {
  const fs::path out = scratch("badkey");
  ExperimentSpec s = quick(Command::Train, out);
  s.overrides.push_back("model.width=3");
  std::ostringstream con, err;
  EXPECT_EQ(run_experiment(s, con, err), 2);
  EXPECT_FALSE(fs::exists(out));
  s.overrides.back() = "data.mu=4";
  EXPECT_EQ(run_experiment(s, con, err), 2);
}

TEST(Experiment, TrainThenEvaluateReproducesMetrics) {
  const fs::path out = scratch("train");
  std::ostringstream con, err;
  ASSERT_EQ(run_experiment(quick(Command::Train, out), con, err), 0) << err.str();
  const auto rows = lines(out / "metrics.csv");
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0], kMetricsHeader);
  EXPECT_TRUE(fs::exists(out / "checkpoint_full_H12.bin"));
  EXPECT_TRUE(fs::exists(out / "checkpoint_full_H24.bin"));
  EXPECT_TRUE(fs::exists(out / "log.txt"));
  const Config snap = Config::load((out / "config-resolved.snapshot").string());
  EXPECT_EQ(snap.str("model.d"), "8");

  ASSERT_EQ(run_experiment(quick(Command::Evaluate, out), con, err), 0) << err.str();
  const auto again = lines(out / "metrics.csv");
  ASSERT_EQ(again.size(), 3u);
  EXPECT_EQ(column(again, 3), column(rows, 3));
  EXPECT_EQ(column(again, 4), column(rows, 4));
}

TEST(Experiment, BaselineRows) {
  const fs::path out = scratch("baseline");
  std::ostringstream con, err;
  ASSERT_EQ(run_experiment(quick(Command::Baseline, out), con, err), 0) << err.str();
  const auto rows = lines(out / "metrics.csv");
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(column(rows, 2), (std::vector<std::string>{"persistence", "linear", "persistence", "linear"}));
  const auto mse = column(rows, 3);
  EXPECT_LT(std::stod(mse[1]), std::stod(mse[0]));
  EXPECT_LT(std::stod(mse[3]), std::stod(mse[2]));
}

TEST(Experiment, AblationHasSixVariantsPerHorizon) {
  const fs::path out = scratch("ablate");
  ExperimentSpec s = quick(Command::Ablate, out);
  s.overrides.push_back("data.horizons=12");
  std::ostringstream con, err;
  ASSERT_EQ(run_experiment(s, con, err), 0) << err.str();
  const auto rows = lines(out / "metrics.csv");
  ASSERT_EQ(rows.size(), 7u);
  EXPECT_EQ(column(rows, 2), (std::vector<std::string>{"full", "-Temporal", "-Spatial", "-Initial",
                                                       "-Temporal-Spatial", "-All"}));
}

TEST(Experiment, EvaluateWithoutCheckpointsIsConfigError) {
  const fs::path out = scratch("empty");
  std::ostringstream con, err;
  EXPECT_EQ(run_experiment(quick(Command::Evaluate, out), con, err), 2);
}

TEST(Experiment, MetricsCsvFormat) {
  const std::string csv = metrics_csv({{"x", 96, "full", 0.5, 0.25, 1.0, 2024}});
  EXPECT_EQ(csv.substr(0, csv.find('\n')), kMetricsHeader);
  EXPECT_NE(csv.find("x,96,full,"), std::string::npos);
}
