#pragma once

// Data model for EvalMuse-style image-text alignment annotations and the
// line-delimited JSON file format that carries them.

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "alignkit/jsonl.hpp"

namespace alignkit::dataset {

enum class PromptType { kReal, kSynthetic };
enum class Split { kTrain, kValidation, kTest };

std::string_view ToString(PromptType type);
std::string_view ToString(Split split);
PromptType ParsePromptType(std::string_view text);
Split ParseSplit(std::string_view text);

struct ElementAnnotation {
  std::string name;
  std::string category;
  std::optional<double> score;  // [0,1]; absent when unlabeled
  Json extra = Json::object();  // unknown keys, re-emitted verbatim

  friend bool operator==(const ElementAnnotation&, const ElementAnnotation&) = default;
};

// Hit flag derived from score through the element codec; nullopt when the
// element is unlabeled.
std::optional<bool> ElementHit(const ElementAnnotation& element, int tau);

struct SamplePair {
  std::string sample_id;
  std::string prompt_id;
  std::string prompt;
  PromptType prompt_type = PromptType::kReal;
  std::string image_ref;
  Split split = Split::kTrain;
  std::optional<double> total_score;  // [1,5]; absent for unlabeled samples
  std::vector<ElementAnnotation> elements;
  double meaninglessness = 0.0;
  double split_confidence = 0.0;
  double attribute_confidence = 0.0;
  Json extra = Json::object();

  const ElementAnnotation* FindElement(std::string_view name) const;

  friend bool operator==(const SamplePair&, const SamplePair&) = default;
};

struct DatasetSplit {
  std::vector<SamplePair> train;
  std::vector<SamplePair> validation;
  std::vector<SamplePair> test;

  std::vector<SamplePair>& Of(Split split);
  const std::vector<SamplePair>& Of(Split split) const;
  std::size_t size() const { return train.size() + validation.size() + test.size(); }

  friend bool operator==(const DatasetSplit&, const DatasetSplit&) = default;
};

struct LoadReport {
  std::size_t records_read = 0;
  std::size_t records_dropped = 0;
  // "line N: <description>" for every malformed or violating record.
  std::vector<std::string> violations;
};

struct LoadResult {
  DatasetSplit split;
  LoadReport report;
};

// Strict mode throws ValidationError on the first malformed line, invariant
// violation or duplicate sample_id. Lenient mode drops such records and
// lists them in the report.
LoadResult LoadDataset(const std::filesystem::path& path, bool strict);

// One entry per violated invariant; empty iff the sample is valid.
std::vector<std::string> ValidateSample(const SamplePair& sample);

// Checks split disjointness and split-field consistency.
std::vector<std::string> ValidateSplit(const DatasetSplit& split);

// Writes train, validation and test records in order; returns the count.
std::size_t ExportDataset(const DatasetSplit& split, const std::filesystem::path& path);

// Throws ValidationError with a field description on schema mismatch.
SamplePair SampleFromJson(const Json& record);
Json SampleToJson(const SamplePair& sample);

}  // namespace alignkit::dataset
