#pragma once

// Rendering of training and inference conversations for the two scoring
// tasks: overall image-text alignment (letters a..o) and per-element
// alignment (digits 1..7).

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "alignkit/dataset.hpp"
#include "alignkit/jsonl.hpp"
#include "alignkit/random.hpp"
#include "alignkit/score_codec.hpp"

namespace alignkit::instruction {

enum class Task { kTotal, kElement };

std::string_view ToString(Task task);
Task ParseTask(std::string_view text);
std::string_view AlphabetOf(Task task);

inline constexpr int kMaxPerturbation = 6;

struct BuildOptions {
  bool include_elements = false;
  bool include_confidences = false;
  bool include_prompt_type = false;
  int perturbation_epsilon = 0;
  std::uint64_t seed = 0;
};

// Throws ValidationError if epsilon is outside 0..6.
void CheckOptions(const BuildOptions& opts);

struct InstructionRecord {
  std::string system_text;
  std::string user_text;
  std::string image_ref;
  std::optional<char> target_label;
  Task task = Task::kTotal;
  std::string sample_id;
  std::optional<std::string> element_name;

  friend bool operator==(const InstructionRecord&, const InstructionRecord&) = default;
};

// Keyed by element name; the value is the category shown next to it.
using ElementScores = std::map<std::string, codec::ElementCategory>;

extern const std::string_view kSystemText;

// "name (category)" unless the name already carries the category suffix.
std::string ElementLabel(std::string_view name, std::string_view category);

// Ground-truth categories of every scored element of a sample.
ElementScores GroundTruthCategories(const dataset::SamplePair& sample);

// Throws ValidationError when include_elements is set but element_scores is
// absent.
InstructionRecord BuildTotalInstruction(const dataset::SamplePair& sample,
                                        const std::optional<ElementScores>& element_scores,
                                        const BuildOptions& opts);

// Throws ValidationError when the element does not belong to the sample.
InstructionRecord BuildElementInstruction(const dataset::SamplePair& sample,
                                          const dataset::ElementAnnotation& element,
                                          const BuildOptions& opts);

// digit + delta, delta drawn uniformly from {-epsilon, +epsilon}, clamped to
// [1,7]. epsilon == 0 returns the input without consuming randomness.
codec::ElementCategory PerturbElementLabel(codec::ElementCategory category, int epsilon,
                                           Rng& rng);

// Conversation record for the fine-tuning corpus file.
Json ToCorpusJson(const InstructionRecord& record);

struct CorpusSummary {
  std::size_t written = 0;
  std::size_t skipped_unlabeled = 0;
};

// One record per labeled train sample (total task) or per labeled
// (train sample, element) pair (element task), in input order.
CorpusSummary BuildTrainingCorpus(const dataset::DatasetSplit& split, Task task,
                                  const BuildOptions& opts,
                                  const std::filesystem::path& out);

}  // namespace alignkit::instruction
