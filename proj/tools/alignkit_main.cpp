// alignkit: corpus building, calibrated scoring and evaluation for
// image-text alignment.
//
// Exit codes: 0 success, 1 validation or metric-domain failure, 2 I/O,
// 3 backend failure.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <unordered_map>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "alignkit/config.hpp"
#include "alignkit/dataset.hpp"
#include "alignkit/error.hpp"
#include "alignkit/image_augment.hpp"
#include "alignkit/inference.hpp"
#include "alignkit/instruction.hpp"
#include "alignkit/metrics.hpp"
#include "alignkit/pipeline.hpp"

namespace fs = std::filesystem;
using namespace alignkit;

namespace {

void Progress(const std::string& message) { fmt::print(stderr, "[alignkit] {}\n", message); }

struct Overrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output_dir;
  std::optional<std::string> backend;
  std::optional<int> concurrency;
  std::optional<int> tau;
  std::optional<std::string> dataset;
  std::optional<std::string> image_root;
  std::optional<std::string> split;
  std::optional<std::string> mock_table;
  std::optional<std::string> element_mock_table;
  std::optional<std::string> endpoint;
  std::optional<std::string> model;
  std::optional<int> epsilon;
  std::optional<double> fraction;
  std::optional<std::string> ensemble_spec;
  bool include_elements = false;
  bool include_confidences = false;
  bool include_prompt_type = false;
};

config::RunConfig Resolve(const Overrides& o) {
  config::RunConfig cfg;
  if (!o.config_path.empty()) {
    config::RequireExists(o.config_path, "config file");
    cfg = config::LoadConfig(o.config_path);
  }
  if (o.seed) cfg.seed = *o.seed;
  if (o.output_dir) cfg.output_dir = *o.output_dir;
  if (o.backend) cfg.backend.kind = *o.backend;
  if (o.concurrency) cfg.concurrency = *o.concurrency;
  if (o.tau) cfg.tau = *o.tau;
  if (o.dataset) cfg.dataset_path = *o.dataset;
  if (o.image_root) cfg.image_root = *o.image_root;
  if (o.split) cfg.split = *o.split;
  if (o.mock_table) cfg.backend.mock_table = *o.mock_table;
  if (o.element_mock_table) cfg.element_backend.mock_table = *o.element_mock_table;
  if (o.endpoint) cfg.backend.endpoint = *o.endpoint;
  if (o.model) cfg.backend.model = *o.model;
  if (o.epsilon) cfg.build.perturbation_epsilon = *o.epsilon;
  if (o.fraction) cfg.fraction = *o.fraction;
  if (o.ensemble_spec) cfg.ensemble_spec = *o.ensemble_spec;
  if (o.include_elements) cfg.build.include_elements = true;
  if (o.include_confidences) cfg.build.include_confidences = true;
  if (o.include_prompt_type) cfg.build.include_prompt_type = true;
  if (cfg.image_root.empty() && !cfg.dataset_path.empty()) {
    cfg.image_root = cfg.dataset_path.parent_path();
  }
  return cfg;
}

dataset::DatasetSplit LoadStrict(const config::RunConfig& cfg) {
  config::RequireExists(cfg.dataset_path, "dataset");
  auto loaded = dataset::LoadDataset(cfg.dataset_path, /*strict=*/true);
  Progress(fmt::format("loaded {} samples from {}", loaded.split.size(), cfg.dataset_path.string()));
  return std::move(loaded.split);
}

int RunValidate(const config::RunConfig& cfg) {
  config::RequireExists(cfg.dataset_path, "dataset");
  const auto loaded = dataset::LoadDataset(cfg.dataset_path, /*strict=*/false);
  const auto& r = loaded.report;
  for (const auto& v : r.violations) fmt::print("{}\n", v);
  fmt::print("records: {}  valid: {}  violations: {}  (train {}, validation {}, test {})\n",
             r.records_read, r.records_read - r.records_dropped, r.violations.size(),
             loaded.split.train.size(), loaded.split.validation.size(), loaded.split.test.size());
  return r.violations.empty() ? 0 : 1;
}

int RunBuildCorpus(const config::RunConfig& cfg, const std::string& task_name) {
  const auto task = instruction::ParseTask(task_name);
  const auto split = LoadStrict(cfg);
  const auto opts = config::ToRunOptions(cfg);
  const auto out = cfg.output_dir / fmt::format("corpus_{}.jsonl", task_name);
  const auto summary = instruction::BuildTrainingCorpus(split, task, opts.build, out);
  Progress(fmt::format("wrote {} (skipped {} unlabeled)", out.string(), summary.skipped_unlabeled));
  fmt::print("{}\n", summary.written);
  return 0;
}

int RunAugment(const config::RunConfig& cfg) {
  auto split = LoadStrict(cfg);
  const auto result = augment::AugmentSubset(split, cfg.fraction, cfg.seed, cfg.image_root,
                                             std::max(cfg.concurrency, 1));
  Progress(fmt::format("augmented {} of {} train samples", result.augmented.size(), split.train.size()));
  split.train = result.final_train;
  const auto out = cfg.output_dir / "dataset_augmented.jsonl";
  dataset::ExportDataset(split, out);
  fmt::print("{} augmented, {} in final train set -> {}\n", result.augmented.size(),
             result.final_train.size(), out.string());
  return 0;
}

int RunPseudoLabel(const config::RunConfig& cfg, bool with_elements) {
  const auto split = LoadStrict(cfg);
  const auto opts = config::ToRunOptions(cfg);
  auto total_backend = config::MakeBackend(cfg);
  std::unique_ptr<inference::Backend> element_backend;
  if (with_elements || opts.build.include_elements) element_backend = config::MakeElementBackend(cfg);
  Progress(fmt::format("pseudo-labeling {} validation samples", split.validation.size()));
  const auto pseudo =
      pipeline::PseudoLabelValidation(*total_backend, element_backend.get(), split, opts);

  dataset::DatasetSplit pseudo_only;
  pseudo_only.validation = pseudo.records;
  dataset::ExportDataset(pseudo_only, cfg.output_dir / "pseudo_labels.jsonl");

  auto merged = pipeline::MergeTrainingSets(split.train, pseudo);
  merged.test = split.test;
  const auto out = cfg.output_dir / "dataset_merged.jsonl";
  dataset::ExportDataset(merged, out);
  fmt::print("{} pseudo-labeled, {} in merged train set -> {}\n", pseudo.records.size(),
             merged.train.size(), out.string());
  return 0;
}

const std::vector<dataset::SamplePair>& SelectSplit(const dataset::DatasetSplit& split,
                                                    const std::string& name) {
  return split.Of(dataset::ParseSplit(name));
}

int RunPredict(const config::RunConfig& cfg, const std::string& task_name) {
  const auto task = instruction::ParseTask(task_name);
  const auto split = LoadStrict(cfg);
  const auto opts = config::ToRunOptions(cfg);
  const auto& samples = SelectSplit(split, cfg.split);
  std::vector<inference::Prediction> preds;
  if (task == instruction::Task::kTotal) {
    auto backend = config::MakeBackend(cfg);
    std::vector<instruction::ElementScores> scores;
    if (opts.build.include_elements) {
      for (const auto& s : samples) scores.push_back(instruction::GroundTruthCategories(s));
    }
    preds = pipeline::PredictTotals(*backend, samples, scores, opts);
  } else {
    auto backend = config::MakeElementBackend(cfg);
    preds = pipeline::PredictElements(*backend, samples, opts);
  }
  const auto out = cfg.output_dir / fmt::format("predictions_{}.jsonl", task_name);
  inference::WritePredictions(out, preds);
  fmt::print("{} predictions -> {}\n", preds.size(), out.string());
  return 0;
}

int RunTwoStage(const config::RunConfig& cfg) {
  const auto split = LoadStrict(cfg);
  const auto opts = config::ToRunOptions(cfg);
  const auto& samples = SelectSplit(split, cfg.split);
  auto element_backend = config::MakeElementBackend(cfg);
  auto total_backend = config::MakeBackend(cfg);
  Progress(fmt::format("two-stage prediction over {} samples", samples.size()));
  const auto result = pipeline::TwoStagePredict(*element_backend, *total_backend, samples, opts);
  inference::WritePredictions(cfg.output_dir / "predictions_element.jsonl", result.element_predictions);
  inference::WritePredictions(cfg.output_dir / "predictions_total.jsonl", result.total_predictions);
  fmt::print("{} element and {} total predictions -> {}\n", result.element_predictions.size(),
             result.total_predictions.size(), cfg.output_dir.string());
  return 0;
}

int RunEnsemble(const config::RunConfig& cfg) {
  config::RequireExists(cfg.ensemble_spec, "ensemble spec");
  const auto spec = pipeline::LoadEnsembleSpec(cfg.ensemble_spec);
  for (const auto& p : spec.total_runs) config::RequireExists(p, "prediction file");
  for (const auto& p : spec.element_runs) config::RequireExists(p, "prediction file");
  const auto totals = pipeline::EnsembleTotal(spec);
  const auto elements = pipeline::EnsembleElements(spec, cfg.tau);
  inference::WritePredictions(cfg.output_dir / "ensemble_total.jsonl", totals);
  inference::WritePredictions(cfg.output_dir / "ensemble_element.jsonl", elements);
  fmt::print("ensembled {} total runs over {} samples and {} element runs over {} elements\n",
             spec.total_runs.size(), totals.size(), spec.element_runs.size(), elements.size());
  return 0;
}

int RunEvaluate(const config::RunConfig& cfg, const std::string& total_path,
                const std::string& element_path, bool search_threshold) {
  const auto split = LoadStrict(cfg);
  config::RequireExists(total_path, "total prediction file");
  config::RequireExists(element_path, "element prediction file");
  const auto totals = inference::ReadPredictions(total_path);
  const auto elements = inference::ReadPredictions(element_path);
  const auto report = metrics::Evaluate(split, totals, elements, cfg.tau, cfg.hit_mode);
  WriteTextFile(cfg.output_dir / "report.json", metrics::ReportToJson(report).dump(2) + "\n");
  fmt::print("{}", metrics::FormatReportTable(report));

  if (search_threshold) {
    std::vector<double> scores;
    std::vector<int> hits;
    std::unordered_map<std::string, const dataset::SamplePair*> by_id;
    for (const auto* list : {&split.train, &split.validation, &split.test}) {
      for (const auto& s : *list) by_id.emplace(s.sample_id, &s);
    }
    for (const auto& p : elements) {
      const auto* e = by_id.at(p.sample_id)->FindElement(*p.element_name);
      scores.push_back(p.continuous_score);
      hits.push_back(*dataset::ElementHit(*e, cfg.tau) ? 1 : 0);
    }
    const auto best = metrics::OptimalThresholdSearch(scores, hits);
    fmt::print("{:<12}{:>10.4f}\n{:<12}{:>10.4f}\n", "best thresh", best.threshold, "best ACC",
               best.accuracy);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Instruction corpora, calibrated scoring and evaluation for image-text alignment"};
  app.require_subcommand(1);
  app.fallthrough();

  Overrides o;
  app.add_option("--config", o.config_path, "Key-value run configuration file");
  app.add_option("--seed", o.seed, "Seed for every random draw");
  app.add_option("--output-dir", o.output_dir, "Directory for output files");
  app.add_option("--backend", o.backend, "Backend kind: mock | http");
  app.add_option("--concurrency", o.concurrency, "Maximum in-flight backend requests");
  app.add_option("--tau", o.tau, "Element hit threshold (hit iff category > tau)");
  app.add_option("--dataset", o.dataset, "Annotation file (JSON lines)");
  app.add_option("--image-root", o.image_root, "Directory image_ref paths are relative to");
  app.add_option("--split", o.split, "Split to run on: train | validation | test");
  app.add_option("--mock-table", o.mock_table, "Recorded responses for the mock backend");
  app.add_option("--element-mock-table", o.element_mock_table, "Recorded responses for the element backend");
  app.add_option("--endpoint", o.endpoint, "Chat completions base URL");
  app.add_option("--model", o.model, "Model name sent to the HTTP backend");

  auto* validate = app.add_subcommand("validate", "Check a dataset file against the schema and invariants");

  std::string corpus_task = "total";
  auto* build = app.add_subcommand("build-corpus", "Write a fine-tuning corpus");
  build->add_option("--task", corpus_task, "total | element")->check(CLI::IsMember({"total", "element"}));
  build->add_flag("--include-elements", o.include_elements, "Inject element ratings into total queries");
  build->add_flag("--include-confidences", o.include_confidences, "Inject confidence lines");
  build->add_flag("--include-prompt-type", o.include_prompt_type, "Inject the prompt type");
  build->add_option("--epsilon", o.epsilon, "Element label perturbation (0 disables)");

  auto* aug = app.add_subcommand("augment-images", "Augment a random subset of train images");
  aug->add_option("--fraction", o.fraction, "Fraction of the train split to augment");

  bool pseudo_elements = false;
  auto* pseudo = app.add_subcommand("pseudo-label", "Pseudo-label the validation split and merge it into train");
  pseudo->add_flag("--with-elements", pseudo_elements, "Pseudo-label element scores as well");

  std::string predict_task = "total";
  auto* predict = app.add_subcommand("predict", "Score a split with one backend");
  predict->add_option("--task", predict_task, "total | element")->check(CLI::IsMember({"total", "element"}));
  predict->add_flag("--include-elements", o.include_elements, "Inject ground-truth element ratings");
  predict->add_flag("--include-prompt-type", o.include_prompt_type, "Inject the prompt type");
  predict->add_flag("--include-confidences", o.include_confidences, "Inject confidence lines");

  auto* two_stage = app.add_subcommand("two-stage", "Element predictions feeding total predictions");
  two_stage->add_flag("--include-prompt-type", o.include_prompt_type, "Inject the prompt type");
  two_stage->add_flag("--include-confidences", o.include_confidences, "Inject confidence lines");

  auto* ensemble = app.add_subcommand("ensemble", "Average prediction runs");
  ensemble->add_option("--spec", o.ensemble_spec, "Ensemble spec (JSON)");

  std::string total_predictions, element_predictions;
  bool search_threshold = false;
  auto* evaluate = app.add_subcommand("evaluate", "SRCC, PLCC, ACC and Main Score");
  evaluate->add_option("--total-predictions", total_predictions)->required();
  evaluate->add_option("--element-predictions", element_predictions)->required();
  evaluate->add_flag("--search-threshold", search_threshold,
                     "Also report the best fixed-step threshold on element expectations");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    const auto cfg = Resolve(o);
    if (validate->parsed()) return RunValidate(cfg);
    if (build->parsed()) return RunBuildCorpus(cfg, corpus_task);
    if (aug->parsed()) return RunAugment(cfg);
    if (pseudo->parsed()) return RunPseudoLabel(cfg, pseudo_elements);
    if (predict->parsed()) return RunPredict(cfg, predict_task);
    if (two_stage->parsed()) return RunTwoStage(cfg);
    if (ensemble->parsed()) return RunEnsemble(cfg);
    if (evaluate->parsed()) return RunEvaluate(cfg, total_predictions, element_predictions, search_threshold);
  } catch (const Error& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return e.exit_code();
  } catch (const fs::filesystem_error& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
  return 1;
}
