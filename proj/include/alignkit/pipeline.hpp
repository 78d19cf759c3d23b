#pragma once

// Multi-stage workflows: validation-set pseudo-labeling, element-then-total
// two-stage prediction, and run ensembling.

#include <filesystem>
#include <string_view>
#include <vector>

#include "alignkit/dataset.hpp"
#include "alignkit/inference.hpp"
#include "alignkit/instruction.hpp"

namespace alignkit::pipeline {

using inference::Backend;
using inference::HitMode;
using inference::Prediction;

enum class Provenance { kGroundTruth, kPseudo };
std::string_view ToString(Provenance provenance);

inline constexpr std::string_view kProvenanceKey = "provenance";

struct PseudoLabeledSet {
  std::vector<dataset::SamplePair> records;
  std::vector<Provenance> provenance;  // parallel to records
};

struct RunOptions {
  instruction::BuildOptions build;
  int tau = codec::kDefaultHitThreshold;
  HitMode hit_mode = HitMode::kArgmax;
  int concurrency = 1;
};

// Labels every validation sample with the backend's predicted total score.
// With an element backend, element scores are pseudo-labeled too and, if
// build.include_elements is set, injected into the total query. Any backend
// failure aborts the whole run.
PseudoLabeledSet PseudoLabelValidation(Backend& total_backend, Backend* element_backend,
                                       const dataset::DatasetSplit& split,
                                       const RunOptions& opts);

// train followed by the pseudo records (moved to the train split), with
// provenance recorded in each record's extra fields. Throws ValidationError
// naming the first colliding sample_id.
dataset::DatasetSplit MergeTrainingSets(const std::vector<dataset::SamplePair>& train,
                                        const PseudoLabeledSet& pseudo);

struct TwoStageResult {
  std::vector<Prediction> element_predictions;  // sample order, names sorted
  std::vector<Prediction> total_predictions;    // sample order
};

// Stage 1 predicts element categories; stage 2 renders them into the total
// query (element augmentation forced on) and predicts the total score.
TwoStageResult TwoStagePredict(Backend& element_backend, Backend& total_backend,
                               const std::vector<dataset::SamplePair>& samples,
                               const RunOptions& opts);

// Total predictions for every sample, optionally with element scores per
// sample (parallel vector, may be empty).
std::vector<Prediction> PredictTotals(Backend& backend,
                                      const std::vector<dataset::SamplePair>& samples,
                                      const std::vector<instruction::ElementScores>& element_scores,
                                      const RunOptions& opts);

std::vector<Prediction> PredictElements(Backend& backend,
                                        const std::vector<dataset::SamplePair>& samples,
                                        const RunOptions& opts);

struct EnsembleSpec {
  std::vector<std::filesystem::path> total_runs;
  std::vector<std::filesystem::path> element_runs;
  std::vector<double> total_weights;    // empty = uniform
  std::vector<double> element_weights;  // empty = uniform

  // Throws ValidationError on an empty task or bad weights.
  void Validate() const;
};

// JSON object with keys total_runs, element_runs and optional total_weights,
// element_weights. Relative run paths resolve against the spec's directory.
EnsembleSpec LoadEnsembleSpec(const std::filesystem::path& path);

// Per sample: weighted mean of continuous scores, clamped to the members'
// [min,max]; the distribution is the weighted mixture. Output follows the
// first run's order. Throws ValidationError on coverage mismatch.
std::vector<Prediction> EnsembleTotal(const std::vector<std::vector<Prediction>>& runs,
                                      const std::vector<double>& weights);

// Per (sample, element): mean expected category, rounded half away from
// zero, thresholded at tau. argmax_label carries the rounded category and
// hit the decision.
std::vector<Prediction> EnsembleElements(const std::vector<std::vector<Prediction>>& runs,
                                         const std::vector<double>& weights, int tau);

std::vector<Prediction> EnsembleTotal(const EnsembleSpec& spec);
std::vector<Prediction> EnsembleElements(const EnsembleSpec& spec, int tau);

}  // namespace alignkit::pipeline
