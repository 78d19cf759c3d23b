#include "alignkit/dataset.hpp"

#include <cmath>
#include <set>
#include <unordered_set>

#include <fmt/format.h>

#include "alignkit/error.hpp"
#include "alignkit/score_codec.hpp"

namespace alignkit::dataset {

namespace fs = std::filesystem;

std::string_view ToString(PromptType type) {
  return type == PromptType::kReal ? "real" : "synthetic";
}

std::string_view ToString(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kValidation: return "validation";
    case Split::kTest: return "test";
  }
  return "train";
}

PromptType ParsePromptType(std::string_view text) {
  if (text == "real") return PromptType::kReal;
  if (text == "synthetic") return PromptType::kSynthetic;
  throw ValidationError(fmt::format("prompt_type must be real|synthetic, got '{}'", text));
}

Split ParseSplit(std::string_view text) {
  if (text == "train") return Split::kTrain;
  if (text == "validation") return Split::kValidation;
  if (text == "test") return Split::kTest;
  throw ValidationError(fmt::format("split must be train|validation|test, got '{}'", text));
}

std::optional<bool> ElementHit(const ElementAnnotation& element, int tau) {
  if (!element.score) return std::nullopt;
  return codec::CategoryToHit(codec::EncodeElementScore(*element.score), tau);
}

const ElementAnnotation* SamplePair::FindElement(std::string_view name) const {
  for (const auto& e : elements) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

std::vector<SamplePair>& DatasetSplit::Of(Split split) {
  switch (split) {
    case Split::kTrain: return train;
    case Split::kValidation: return validation;
    case Split::kTest: return test;
  }
  return train;
}

const std::vector<SamplePair>& DatasetSplit::Of(Split split) const {
  return const_cast<DatasetSplit*>(this)->Of(split);
}

namespace {

bool InUnit(double v) { return v >= 0.0 && v <= 1.0; }

void CheckUnit(std::vector<std::string>& out, const char* field, double v) {
  if (!InUnit(v)) out.push_back(fmt::format("{} = {} outside [0,1]", field, v));
}

const Json& Require(const Json& record, const char* key) {
  auto it = record.find(key);
  if (it == record.end()) throw ValidationError(fmt::format("missing field '{}'", key));
  return *it;
}

std::string RequireString(const Json& record, const char* key) {
  const Json& v = Require(record, key);
  if (!v.is_string()) throw ValidationError(fmt::format("field '{}' must be a string", key));
  return v.get<std::string>();
}

double RequireNumber(const Json& record, const char* key) {
  const Json& v = Require(record, key);
  if (!v.is_number()) throw ValidationError(fmt::format("field '{}' must be a number", key));
  return v.get<double>();
}

std::optional<double> OptionalNumber(const Json& record, const char* key) {
  auto it = record.find(key);
  if (it == record.end() || it->is_null()) return std::nullopt;
  if (!it->is_number()) throw ValidationError(fmt::format("field '{}' must be a number", key));
  return it->get<double>();
}

Json ExtraFields(const Json& record, std::initializer_list<std::string_view> known) {
  Json extra = Json::object();
  for (auto it = record.begin(); it != record.end(); ++it) {
    bool is_known = false;
    for (auto k : known) is_known = is_known || it.key() == k;
    if (!is_known) extra[it.key()] = it.value();
  }
  return extra;
}

ElementAnnotation ElementFromJson(const Json& record) {
  if (!record.is_object()) throw ValidationError("element entries must be objects");
  ElementAnnotation e;
  e.name = RequireString(record, "name");
  e.category = RequireString(record, "category");
  e.score = OptionalNumber(record, "score");
  e.extra = ExtraFields(record, {"name", "category", "score"});
  return e;
}

Json ElementToJson(const ElementAnnotation& e) {
  Json out = Json::object();
  out["name"] = e.name;
  out["category"] = e.category;
  if (e.score) out["score"] = *e.score;
  for (auto it = e.extra.begin(); it != e.extra.end(); ++it) out[it.key()] = it.value();
  return out;
}

}  // namespace

SamplePair SampleFromJson(const Json& record) {
  if (!record.is_object()) throw ValidationError("record is not a JSON object");
  SamplePair s;
  s.sample_id = RequireString(record, "sample_id");
  s.prompt_id = RequireString(record, "prompt_id");
  s.prompt = RequireString(record, "prompt");
  s.prompt_type = ParsePromptType(RequireString(record, "prompt_type"));
  s.image_ref = RequireString(record, "image_ref");
  s.split = ParseSplit(RequireString(record, "split"));
  s.total_score = OptionalNumber(record, "total_score");
  const Json& elements = Require(record, "elements");
  if (!elements.is_array()) throw ValidationError("field 'elements' must be an array");
  for (const auto& e : elements) s.elements.push_back(ElementFromJson(e));
  s.meaninglessness = RequireNumber(record, "meaninglessness");
  s.split_confidence = RequireNumber(record, "split_confidence");
  s.attribute_confidence = RequireNumber(record, "attribute_confidence");
  s.extra = ExtraFields(record, {"sample_id", "prompt_id", "prompt", "prompt_type",
                                 "image_ref", "split", "total_score", "elements",
                                 "meaninglessness", "split_confidence",
                                 "attribute_confidence"});
  return s;
}

Json SampleToJson(const SamplePair& s) {
  Json out = Json::object();
  out["sample_id"] = s.sample_id;
  out["prompt_id"] = s.prompt_id;
  out["prompt"] = s.prompt;
  out["prompt_type"] = ToString(s.prompt_type);
  out["image_ref"] = s.image_ref;
  out["split"] = ToString(s.split);
  if (s.total_score) out["total_score"] = *s.total_score;
  Json elements = Json::array();
  for (const auto& e : s.elements) elements.push_back(ElementToJson(e));
  out["elements"] = std::move(elements);
  out["meaninglessness"] = s.meaninglessness;
  out["split_confidence"] = s.split_confidence;
  out["attribute_confidence"] = s.attribute_confidence;
  for (auto it = s.extra.begin(); it != s.extra.end(); ++it) out[it.key()] = it.value();
  return out;
}

std::vector<std::string> ValidateSample(const SamplePair& s) {
  std::vector<std::string> out;
  if (s.sample_id.empty()) out.emplace_back("sample_id is empty");
  if (s.prompt.empty()) out.emplace_back("prompt is empty");
  if (s.image_ref.empty()) out.emplace_back("image_ref is empty");
  if (s.total_score && !(*s.total_score >= 1.0 && *s.total_score <= 5.0)) {
    out.push_back(fmt::format("total_score = {} outside [1,5]", *s.total_score));
  }
  CheckUnit(out, "meaninglessness", s.meaninglessness);
  CheckUnit(out, "split_confidence", s.split_confidence);
  CheckUnit(out, "attribute_confidence", s.attribute_confidence);
  std::set<std::string> names;
  for (const auto& e : s.elements) {
    if (e.name.empty()) out.emplace_back("element with empty name");
    if (!names.insert(e.name).second) {
      out.push_back(fmt::format("duplicate element name '{}'", e.name));
    }
    if (e.score && !InUnit(*e.score)) {
      out.push_back(fmt::format("element '{}' score = {} outside [0,1]", e.name, *e.score));
    }
  }
  return out;
}

std::vector<std::string> ValidateSplit(const DatasetSplit& split) {
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  for (Split which : {Split::kTrain, Split::kValidation, Split::kTest}) {
    for (const auto& s : split.Of(which)) {
      if (s.split != which) {
        out.push_back(fmt::format("sample '{}' has split '{}' but sits in '{}'",
                                  s.sample_id, ToString(s.split), ToString(which)));
      }
      if (!seen.insert(s.sample_id).second) {
        out.push_back(fmt::format("duplicate sample_id '{}'", s.sample_id));
      }
    }
  }
  return out;
}

LoadResult LoadDataset(const fs::path& path, bool strict) {
  LoadResult result;
  std::unordered_set<std::string> seen;
  auto reject = [&](std::size_t line, const std::string& why) {
    std::string message = fmt::format("line {}: {}", line, why);
    if (strict) throw ValidationError(fmt::format("{}: {}", path.string(), message));
    result.report.violations.push_back(std::move(message));
    ++result.report.records_dropped;
  };

  ForEachLine(path, [&](std::size_t line, const std::string& text) {
    ++result.report.records_read;
    SamplePair sample;
    try {
      sample = SampleFromJson(Json::parse(text));
    } catch (const Json::exception& e) {
      reject(line, fmt::format("malformed record: {}", e.what()));
      return;
    } catch (const Error& e) {
      if (strict) throw ValidationError(fmt::format("{}: line {}: {}", path.string(), line, e.what()));
      reject(line, e.what());
      return;
    }
    auto violations = ValidateSample(sample);
    if (!violations.empty()) {
      std::string joined = fmt::format("sample '{}': {}", sample.sample_id, violations.front());
      for (std::size_t i = 1; i < violations.size(); ++i) joined += "; " + violations[i];
      reject(line, joined);
      return;
    }
    if (!seen.insert(sample.sample_id).second) {
      reject(line, fmt::format("duplicate sample_id '{}'", sample.sample_id));
      return;
    }
    result.split.Of(sample.split).push_back(std::move(sample));
  });
  return result;
}

std::size_t ExportDataset(const DatasetSplit& split, const fs::path& path) {
  std::vector<Json> records;
  records.reserve(split.size());
  for (Split which : {Split::kTrain, Split::kValidation, Split::kTest}) {
    for (const auto& s : split.Of(which)) records.push_back(SampleToJson(s));
  }
  WriteJsonLines(path, records);
  return records.size();
}

}  // namespace alignkit::dataset
