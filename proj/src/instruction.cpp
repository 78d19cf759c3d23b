#include "alignkit/instruction.hpp"

#include <algorithm>
#include <vector>

#include <fmt/format.h>

#include "alignkit/error.hpp"

namespace alignkit::instruction {

using dataset::ElementAnnotation;
using dataset::SamplePair;

const std::string_view kSystemText =
    "You are an expert judge of how well generated images match their text prompts.";

namespace {

constexpr std::string_view kPreamble =
    "You are given an image and the prompt used to generate it.\n";
constexpr std::string_view kElementHeader = "Element ratings (1=absent … 7=perfect):\n";
constexpr std::string_view kTotalQuestion =
    "Rate the overall image-text alignment by choosing one letter from a (worst) to o "
    "(best). Answer with a single letter.";
constexpr std::string_view kElementQuestion =
    "Rate how well this element is represented in the image, from 1 (absent) to 7 "
    "(perfect). Answer with a single digit from 1 to 7.";

void AppendConfidences(std::string& out, const SamplePair& s) {
  out += fmt::format("Meaninglessness: {:.2f}; Split confidence: {:.2f}; Attribute confidence: {:.2f}\n",
                     s.meaninglessness, s.split_confidence, s.attribute_confidence);
}

std::string ElementSeedKey(const SamplePair& sample, const ElementAnnotation& element) {
  return sample.sample_id + '\x1f' + element.name;
}

}  // namespace

std::string_view ToString(Task task) { return task == Task::kTotal ? "total" : "element"; }

Task ParseTask(std::string_view text) {
  if (text == "total") return Task::kTotal;
  if (text == "element") return Task::kElement;
  throw ValidationError(fmt::format("task must be total|element, got '{}'", text));
}

std::string_view AlphabetOf(Task task) {
  return task == Task::kTotal ? codec::kRatingAlphabet : codec::kElementAlphabet;
}

void CheckOptions(const BuildOptions& opts) {
  if (opts.perturbation_epsilon < 0 || opts.perturbation_epsilon > kMaxPerturbation) {
    throw ValidationError(
        fmt::format("perturbation_epsilon {} outside 0..6", opts.perturbation_epsilon));
  }
}

std::string ElementLabel(std::string_view name, std::string_view category) {
  if (category.empty()) return std::string(name);
  const std::string suffix = fmt::format(" ({})", category);
  if (name.size() >= suffix.size() && name.substr(name.size() - suffix.size()) == suffix) {
    return std::string(name);
  }
  return std::string(name) + suffix;
}

ElementScores GroundTruthCategories(const SamplePair& sample) {
  ElementScores out;
  for (const auto& e : sample.elements) {
    if (e.score) out.emplace(e.name, codec::EncodeElementScore(*e.score));
  }
  return out;
}

InstructionRecord BuildTotalInstruction(const SamplePair& sample,
                                        const std::optional<ElementScores>& element_scores,
                                        const BuildOptions& opts) {
  CheckOptions(opts);
  if (opts.include_elements && !element_scores) {
    throw ValidationError(fmt::format(
        "sample '{}': element augmentation requested without element scores",
        sample.sample_id));
  }

  std::string user(kPreamble);
  user += fmt::format("Prompt: {}\n", sample.prompt);
  if (opts.include_prompt_type) {
    user += fmt::format("Prompt type: {}\n", dataset::ToString(sample.prompt_type));
  }
  if (opts.include_confidences) AppendConfidences(user, sample);
  // std::map iterates in byte order of the name.
  if (opts.include_elements && !element_scores->empty()) {
    user += kElementHeader;
    for (const auto& [name, category] : *element_scores) {
      const ElementAnnotation* known = sample.FindElement(name);
      const std::string label = known ? ElementLabel(name, known->category) : name;
      user += fmt::format("{}: {}\n", label, category.digit());
    }
  }
  user += kTotalQuestion;

  InstructionRecord record;
  record.system_text = std::string(kSystemText);
  record.user_text = std::move(user);
  record.image_ref = sample.image_ref;
  record.task = Task::kTotal;
  record.sample_id = sample.sample_id;
  if (sample.total_score) {
    record.target_label = codec::EncodeTotalScore(*sample.total_score).letter();
  }
  return record;
}

InstructionRecord BuildElementInstruction(const SamplePair& sample,
                                          const ElementAnnotation& element,
                                          const BuildOptions& opts) {
  CheckOptions(opts);
  if (sample.FindElement(element.name) == nullptr) {
    throw ValidationError(fmt::format("element '{}' not found in sample '{}'", element.name,
                                      sample.sample_id));
  }

  std::string user(kPreamble);
  user += fmt::format("Prompt: {}\n", sample.prompt);
  if (opts.include_prompt_type) {
    user += fmt::format("Note the prompt type: {}.\n", dataset::ToString(sample.prompt_type));
  }
  if (opts.include_confidences) AppendConfidences(user, sample);
  user += fmt::format("Element: {}\n", ElementLabel(element.name, element.category));
  user += kElementQuestion;

  InstructionRecord record;
  record.system_text = std::string(kSystemText);
  record.user_text = std::move(user);
  record.image_ref = sample.image_ref;
  record.task = Task::kElement;
  record.sample_id = sample.sample_id;
  record.element_name = element.name;
  if (element.score) {
    auto category = codec::EncodeElementScore(*element.score);
    if (opts.perturbation_epsilon > 0) {
      Rng rng(DeriveSeed(opts.seed, ElementSeedKey(sample, element)));
      category = PerturbElementLabel(category, opts.perturbation_epsilon, rng);
    }
    record.target_label = category.label();
  }
  return record;
}

codec::ElementCategory PerturbElementLabel(codec::ElementCategory category, int epsilon,
                                           Rng& rng) {
  if (epsilon < 0) throw ValidationError("perturbation epsilon must be nonnegative");
  if (epsilon == 0) return category;
  const int delta = rng.Coin() ? epsilon : -epsilon;
  return codec::ElementCategory::FromDigit(
      std::clamp(category.digit() + delta, 1, codec::kElementCategories));
}

Json ToCorpusJson(const InstructionRecord& record) {
  Json messages = Json::array();
  messages.push_back({{"role", "system"}, {"content", record.system_text}});
  messages.push_back({{"role", "user"}, {"content", record.user_text}});
  if (record.target_label) {
    messages.push_back({{"role", "assistant"}, {"content", std::string(1, *record.target_label)}});
  }
  Json out = Json::object();
  out["messages"] = std::move(messages);
  out["images"] = Json::array({record.image_ref});
  out["sample_id"] = record.sample_id;
  out["task"] = ToString(record.task);
  if (record.element_name) out["element_name"] = *record.element_name;
  return out;
}

CorpusSummary BuildTrainingCorpus(const dataset::DatasetSplit& split, Task task,
                                  const BuildOptions& opts,
                                  const std::filesystem::path& out) {
  CheckOptions(opts);
  if (split.train.empty()) throw ValidationError("training corpus requested from an empty train split");

  CorpusSummary summary;
  std::vector<Json> records;
  for (const auto& sample : split.train) {
    if (task == Task::kTotal) {
      if (!sample.total_score) {
        ++summary.skipped_unlabeled;
        continue;
      }
      std::optional<ElementScores> scores;
      if (opts.include_elements) scores = GroundTruthCategories(sample);
      records.push_back(ToCorpusJson(BuildTotalInstruction(sample, scores, opts)));
    } else {
      for (const auto& element : sample.elements) {
        if (!element.score) {
          ++summary.skipped_unlabeled;
          continue;
        }
        records.push_back(ToCorpusJson(BuildElementInstruction(sample, element, opts)));
      }
    }
  }
  WriteJsonLines(out, records);
  summary.written = records.size();
  return summary;
}

}  // namespace alignkit::instruction
