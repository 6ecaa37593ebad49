/* Copyright 2026 The qalabel Authors.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "cli.hpp"

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "qalabel/data_io.hpp"
#include "qalabel/model.hpp"

namespace qalabel {
namespace {

namespace fs = std::filesystem;

struct Run {
  int code = -1;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "qalabel");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Run r;
  r.code = cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("qalabel_cli_" + std::to_string(::getpid()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    ::setenv("SOURCE_DATE_EPOCH", "1700000000", 1);
  }
  void TearDown() override {
    fs::remove_all(dir_);
    ::unsetenv("SOURCE_DATE_EPOCH");
  }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  static std::string slurp(const std::string& p) {
    std::ifstream is(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  }

  static std::vector<std::vector<std::string>> csv(const std::string& p) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream is(slurp(p));
    std::string line;
    while (std::getline(is, line)) {
      std::vector<std::string> cells;
      std::string cell;
      std::istringstream ls(line);
      while (std::getline(ls, cell, ',')) cells.push_back(cell);
      if (!line.empty() && line.back() == ',') cells.emplace_back();
      rows.push_back(cells);
    }
    return rows;
  }

  fs::path dir_;
};

TEST_F(CliTest, LabelLastItemGivesOnlySingletons) {
  const auto r = run({"label", "--qtype", "which_one", "--I", "9", "--per-class", "15", "--out",
                      path("o")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("size 1: 150 (100.00%)"), std::string::npos) << r.out;
  const auto events = read_events(path("o/events.jsonl"));
  EXPECT_EQ(events.size(), 150u);
  for (const auto& e : events) EXPECT_EQ(e.event.qa_label.size(), 1u);
}

TEST_F(CliTest, LabelCountsAndDeterminism) {
  const std::vector<std::string> args = {"label", "--qtype", "is_in", "--I", "3", "--K", "6",
                                         "--per-class", "10", "--seed", "4"};
  auto a = args, b = args;
  a.insert(a.end(), {"--out", path("a")});
  b.insert(b.end(), {"--out", path("b")});
  ASSERT_EQ(run(a).code, 0);
  ASSERT_EQ(run(b).code, 0);
  EXPECT_EQ(slurp(path("a/events.jsonl")), slurp(path("b/events.jsonl")));
  EXPECT_EQ(read_events(path("a/events.jsonl")).size(), 60u);
  // Re-running into the same directory replaces the file rather than growing it.
  ASSERT_EQ(run(a).code, 0);
  EXPECT_EQ(read_events(path("a/events.jsonl")).size(), 60u);
}

TEST_F(CliTest, LabelUsageErrors) {
  EXPECT_EQ(run({"label", "--I", "0", "--out", path("o")}).code, 2);
  EXPECT_EQ(run({"label", "--I", "10", "--out", path("o")}).code, 2);
  EXPECT_EQ(run({"label", "--qtype", "which_two", "--out", path("o")}).code, 2);
  EXPECT_EQ(run({"label", "--no-such-flag"}).code, 2);
  EXPECT_EQ(run({"label", "--I", "three"}).code, 2);
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"--help"}).code, 0);
}

TEST_F(CliTest, LabelReadsIdxFiles) {
  Rng rng(1);
  auto ds = synthetic_blobs(3, 4, 5, 3.0, rng);
  ds.image_rows = 2;
  ds.image_cols = 2;
  write_idx(ds, path("img.idx"), path("lbl.idx"));
  const auto r = run({"label", "--qtype", "which_one", "--I", "1", "--dataset-images",
                      path("img.idx"), "--dataset-labels", path("lbl.idx"), "--out", path("o")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto events = read_events(path("o/events.jsonl"));
  ASSERT_EQ(events.size(), 15u);
  EXPECT_EQ(events[0].num_classes, 3);
  EXPECT_EQ(run({"label", "--dataset-images", path("img.idx"), "--out", path("o")}).code, 2);
  EXPECT_EQ(run({"label", "--dataset-images", path("missing"), "--dataset-labels",
                 path("lbl.idx"), "--out", path("o")})
                .code,
            1);
}

TEST_F(CliTest, VerifyPassesAndFails) {
  auto ok = run({"verify"});
  EXPECT_EQ(ok.code, 0) << ok.out;
  EXPECT_NE(ok.out.find("all checks passed"), std::string::npos);
  EXPECT_NE(ok.out.find("PASS unbiasedness"), std::string::npos);

  auto bad = run({"verify", "--perturb-coefficient", "0.001", "--posteriors", "5"});
  EXPECT_EQ(bad.code, 1);
  EXPECT_NE(bad.out.find("FAIL unbiasedness"), std::string::npos);
  EXPECT_NE(bad.out.find("qtype="), std::string::npos);

  auto big = run({"verify", "--K", "30"});
  EXPECT_EQ(big.code, 1);
  EXPECT_NE(big.err.find("capacity"), std::string::npos);
  EXPECT_EQ(run({"verify", "--K-min", "1"}).code, 2);
}

TEST_F(CliTest, BoundsTable) {
  const auto r = run({"bounds", "--K", "10", "--out", path("o")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = csv(path("o/bounds.csv"));
  ASSERT_EQ(rows.size(), 10u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"I", "bound_whichone", "bound_isin"}));
  int argmin = 0;
  for (int i = 1; i <= 9; ++i) {
    EXPECT_EQ(rows[i][0], std::to_string(i));
    if (i > 1) {
      EXPECT_LT(std::stod(rows[i][1]), std::stod(rows[i - 1][1]));
    }
    if (argmin == 0 || std::stod(rows[i][2]) < std::stod(rows[argmin][2])) argmin = i;
  }
  EXPECT_EQ(argmin, 5);
  EXPECT_EQ(run({"bounds", "--K", "10", "--delta", "2", "--out", path("o")}).code, 2);
}

TEST_F(CliTest, TrainWritesOneMetricsFilePerRepetition) {
  const auto r = run({"train", "--qtype", "which_one", "--I", "3", "--repetitions", "5",
                      "--epochs", "2", "--per-class", "10", "--test-per-class", "5", "--hidden",
                      "8", "--batch-size", "32", "--out", path("o")});
  ASSERT_EQ(r.code, 0) << r.err;
  for (int rep = 0; rep < 5; ++rep) {
    const auto rows = csv(path("o/metrics_rep" + std::to_string(rep) + ".csv"));
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_EQ(rows[0],
              (std::vector<std::string>{"epoch", "train_qa_risk", "test_mae", "test_accuracy"}));
    EXPECT_EQ(rows[2][0], "2");
    EXPECT_TRUE(fs::exists(path("o/params_rep" + std::to_string(rep) + ".bin")));
  }
  EXPECT_FALSE(fs::exists(path("o/metrics_rep5.csv")));
  const auto cfg = Json::parse(slurp(path("o/run_config.json")));
  EXPECT_EQ(cfg["config"]["seed"], 0);
  EXPECT_EQ(cfg["config"]["repetitions"], 5);
}

TEST_F(CliTest, TrainIsDeterministicGivenSeed) {
  const std::vector<std::string> args = {"train", "--qtype", "is_in", "--I", "2", "--K", "4",
                                         "--repetitions", "1", "--epochs", "3", "--per-class",
                                         "10", "--hidden", "6", "--seed", "9"};
  auto a = args, b = args, c = args;
  a.insert(a.end(), {"--out", path("a")});
  b.insert(b.end(), {"--out", path("b")});
  c.insert(c.end(), {"--out", path("c")});
  c[c.size() - 3] = "10";
  ASSERT_EQ(run(a).code, 0);
  ASSERT_EQ(run(b).code, 0);
  ASSERT_EQ(run(c).code, 0);
  EXPECT_EQ(slurp(path("a/params_rep0.bin")), slurp(path("b/params_rep0.bin")));
  EXPECT_EQ(slurp(path("a/metrics_rep0.csv")), slurp(path("b/metrics_rep0.csv")));
  EXPECT_NE(slurp(path("a/params_rep0.bin")), slurp(path("c/params_rep0.bin")));
}

TEST_F(CliTest, TrainFromStoredEvents) {
  ASSERT_EQ(run({"label", "--qtype", "which_one", "--I", "2", "--K", "4", "--per-class", "20",
                 "--out", path("o")})
                .code,
            0);
  const auto ok = run({"train", "--qtype", "which_one", "--I", "2", "--K", "4", "--per-class",
                       "20", "--epochs", "2", "--repetitions", "1", "--hidden", "4", "--events",
                       path("o/events.jsonl"), "--out", path("t")});
  EXPECT_EQ(ok.code, 0) << ok.err;
  const auto mismatch = run({"train", "--qtype", "is_in", "--I", "2", "--K", "4", "--per-class",
                             "20", "--epochs", "2", "--repetitions", "1", "--events",
                             path("o/events.jsonl"), "--out", path("t")});
  EXPECT_EQ(mismatch.code, 2);
}

TEST_F(CliTest, EvalZeroInitialisedParameters) {
  const auto r = run({"eval", "--K", "10", "--per-class", "3", "--hidden", "4"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("mae=1.8 "), std::string::npos) << r.out;
}

TEST_F(CliTest, EvalSavedParameters) {
  ASSERT_EQ(run({"train", "--qtype", "ordinary", "--K", "3", "--per-class", "30", "--epochs",
                 "20", "--repetitions", "1", "--hidden", "8", "--batch-size", "30",
                 "--test-per-class", "30", "--out", path("o")})
                .code,
            0);
  const auto p = load_params(path("o/params_rep0.bin"));
  EXPECT_EQ(p.k, 3);
  const auto r = run({"eval", "--K", "3", "--per-class", "30", "--params",
                      path("o/params_rep0.bin")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("n=90"), std::string::npos);
  EXPECT_EQ(run({"eval", "--K", "4", "--params", path("o/params_rep0.bin")}).code, 2);
  EXPECT_EQ(run({"eval", "--K", "3", "--params", path("nothing.bin")}).code, 1);
}

TEST_F(CliTest, ConfigFileAndOverrides) {
  std::ofstream(path("cfg.json")) << R"({"qtype": "is_in", "I": 2, "K": 5, "per_class": 4,
                                        "seed": 3, "out": ")"
                                  << path("fromfile") << R"("})";
  const auto r = run({"label", "--config", path("cfg.json"), "--I", "3"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto events = read_events(path("fromfile/events.jsonl"));
  ASSERT_EQ(events.size(), 20u);
  EXPECT_EQ(events[0].event.qtype, QuestionType::is_in);
  EXPECT_EQ(events[0].event.items, 3);

  std::ofstream(path("unknown.json")) << R"({"epochs": 3})";
  EXPECT_EQ(run({"label", "--config", path("unknown.json")}).code, 2);
  std::ofstream(path("typed.json")) << R"({"I": "two"})";
  EXPECT_EQ(run({"label", "--config", path("typed.json")}).code, 2);
  std::ofstream(path("broken.json")) << "{";
  EXPECT_EQ(run({"label", "--config", path("broken.json")}).code, 2);
  EXPECT_EQ(run({"label", "--config", path("absent.json")}).code, 2);
}

#ifdef QALABEL_CLI_PATH
int exit_code_of(const std::string& args) {
  const std::string cmd = std::string(QALABEL_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST_F(CliTest, BinaryExitCodes) {
  EXPECT_EQ(exit_code_of("bounds --K 10 --out " + path("o")), 0);
  EXPECT_EQ(exit_code_of("label --I 0"), 2);
  EXPECT_EQ(exit_code_of("verify --K 30"), 1);
  EXPECT_EQ(exit_code_of("verify --perturb-coefficient 0.01 --posteriors 2"), 1);
}
#endif

}  // namespace
}  // namespace qalabel
