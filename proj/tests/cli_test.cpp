#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "alignkit/inference.hpp"
#include "e2e_fixture.hpp"
#include "test_support.hpp"

namespace alignkit {
namespace {

using testing::ScratchDir;
using testing::WriteEndToEndFixture;
namespace fs = std::filesystem;

struct RunResult {
  int exit_code;
  std::string out;
};

RunResult RunCli(const fs::path& dir, const std::string& args) {
  const auto out = dir / "stdout.txt";
  const std::string cmd = std::string("\"") + ALIGNKIT_CLI_PATH + "\" " + args + " > \"" + out.string() +
                          "\" 2> \"" + (dir / "stderr.txt").string() + "\"";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, ReadTextFile(out)};
}

std::size_t CountLines(const fs::path& path) {
  std::ifstream in(path);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) n += !line.empty();
  return n;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = ScratchDir(::testing::UnitTest::GetInstance()->current_test_info()->name());
    fx_ = WriteEndToEndFixture(dir_ / "data", 10, 3);
  }
  std::string Base(const std::string& out = "out") const {
    return "--config \"" + fx_.config.string() + "\" --output-dir \"" + (dir_ / out).string() + "\"";
  }
  fs::path dir_;
  testing::EndToEndFixture fx_;
};

TEST_F(Cli, ValidateGoodAndBad) {
  auto r = RunCli(dir_, "validate " + Base());
  EXPECT_EQ(r.exit_code, 0) << r.out;
  EXPECT_NE(r.out.find("records: 30"), std::string::npos) << r.out;

  WriteTextFile(dir_ / "bad.jsonl", "{\"sample_id\": \"a\"}\n");
  r = RunCli(dir_, "validate --dataset \"" + (dir_ / "bad.jsonl").string() + "\"");
  EXPECT_EQ(r.exit_code, 1);
}

TEST_F(Cli, ExitCodes) {
  EXPECT_EQ(RunCli(dir_, "validate --dataset \"" + (dir_ / "absent.jsonl").string() + "\"").exit_code, 2);
  EXPECT_EQ(RunCli(dir_, "predict --task total --tau 9 " + Base()).exit_code, 1);
  EXPECT_EQ(RunCli(dir_, "frobnicate").exit_code, 1);

  WriteTextFile(dir_ / "lonely.jsonl", "{\"sample_id\": \"nobody\", \"task\": \"total\", \"logits\": {\"a\": 0}}\n");
  EXPECT_EQ(RunCli(dir_, "predict --task total " + Base() + " --mock-table \"" + (dir_ / "lonely.jsonl").string() + "\"")
                .exit_code,
            3);
}

TEST_F(Cli, BuildCorpusIsDeterministic) {
  ASSERT_EQ(RunCli(dir_, "build-corpus --task element --epsilon 1 " + Base("a")).exit_code, 0);
  ASSERT_EQ(RunCli(dir_, "build-corpus --task element --epsilon 1 " + Base("b")).exit_code, 0);
  EXPECT_EQ(CountLines(dir_ / "a/corpus_element.jsonl"), 30u);
  EXPECT_EQ(ReadTextFile(dir_ / "a/corpus_element.jsonl"), ReadTextFile(dir_ / "b/corpus_element.jsonl"));
  ASSERT_EQ(RunCli(dir_, "build-corpus --task total --include-elements " + Base("a")).exit_code, 0);
  EXPECT_EQ(CountLines(dir_ / "a/corpus_total.jsonl"), 10u);
}

TEST_F(Cli, PseudoLabelMerges) {
  ASSERT_EQ(RunCli(dir_, "pseudo-label --with-elements " + Base()).exit_code, 0);
  EXPECT_EQ(CountLines(dir_ / "out/pseudo_labels.jsonl"), 10u);
  const auto merged = dataset::LoadDataset(dir_ / "out/dataset_merged.jsonl", true).split;
  EXPECT_EQ(merged.train.size(), 20u);
  EXPECT_TRUE(merged.validation.empty());
}

TEST_F(Cli, AugmentImages) {
  const auto split = dataset::LoadDataset(fx_.dataset, true).split;
  for (const auto& s : split.train) image::WritePng(testing::Gradient(24, 24), fx_.dataset.parent_path() / s.image_ref);
  ASSERT_EQ(RunCli(dir_, "augment-images --fraction 0.2 " + Base()).exit_code, 0);
  const auto out = dataset::LoadDataset(dir_ / "out/dataset_augmented.jsonl", true).split;
  EXPECT_EQ(out.train.size(), 12u);
  EXPECT_EQ(RunCli(dir_, "augment-images --fraction 0 " + Base()).exit_code, 1);
}

TEST_F(Cli, TwoStageEvaluateAndEnsemble) {
  ASSERT_EQ(RunCli(dir_, "two-stage " + Base()).exit_code, 0);
  EXPECT_EQ(CountLines(dir_ / "out/predictions_total.jsonl"), 10u);
  EXPECT_EQ(CountLines(dir_ / "out/predictions_element.jsonl"), 30u);

  const auto total = (dir_ / "out/predictions_total.jsonl").string();
  const auto element = (dir_ / "out/predictions_element.jsonl").string();
  auto r = RunCli(dir_, "evaluate --search-threshold " + Base() + " --total-predictions \"" + total +
                         "\" --element-predictions \"" + element + "\"");
  ASSERT_EQ(r.exit_code, 0);
  EXPECT_NE(r.out.find("Main Score"), std::string::npos) << r.out;
  const auto report = Json::parse(ReadTextFile(dir_ / "out/report.json"));
  EXPECT_EQ(report["n_samples"], 10);

  WriteTextFile(dir_ / "spec.json", Json{{"total_runs", {total}}, {"element_runs", {element}}}.dump());
  ASSERT_EQ(RunCli(dir_, "ensemble --spec \"" + (dir_ / "spec.json").string() + "\" " + Base()).exit_code, 0);
  EXPECT_EQ(inference::ReadPredictions(dir_ / "out/ensemble_total.jsonl"), inference::ReadPredictions(total));
}

TEST_F(Cli, PerfectPredictionsScoreOne) {
  const auto split = dataset::LoadDataset(fx_.dataset, true).split;
  std::vector<inference::Prediction> totals, elements;
  for (const auto& s : split.test) {
    inference::Prediction p;
    p.sample_id = s.sample_id;
    p.continuous_score = *s.total_score;
    p.distribution.probabilities.assign(15, 1.0 / 15);
    totals.push_back(p);
    for (const auto& e : s.elements) {
      inference::Prediction q;
      q.sample_id = s.sample_id;
      q.task = instruction::Task::kElement;
      q.element_name = e.name;
      q.argmax_label = codec::EncodeElementScore(*e.score).label();
      q.continuous_score = codec::EncodeElementScore(*e.score).digit();
      q.distribution.probabilities.assign(7, 1.0 / 7);
      elements.push_back(q);
    }
  }
  inference::WritePredictions(dir_ / "t.jsonl", totals);
  inference::WritePredictions(dir_ / "e.jsonl", elements);
  ASSERT_EQ(RunCli(dir_, "evaluate " + Base() + " --total-predictions \"" + (dir_ / "t.jsonl").string() +
                          "\" --element-predictions \"" + (dir_ / "e.jsonl").string() + "\"")
                .exit_code,
            0);
  const auto report = Json::parse(ReadTextFile(dir_ / "out/report.json"));
  EXPECT_DOUBLE_EQ(report["main_score"].get<double>(), 1.0);
}

}  // namespace
}  // namespace alignkit
