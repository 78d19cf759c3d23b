#pragma once

// Backends that expose a model's next-token scores over a closed label
// alphabet, and the predictions built on top of them.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "alignkit/dataset.hpp"
#include "alignkit/instruction.hpp"
#include "alignkit/jsonl.hpp"
#include "alignkit/score_codec.hpp"

namespace alignkit::inference {

using instruction::Task;

struct BackendRequest {
  std::string system_text;
  std::string user_text;
  std::string image_ref;
  std::string alphabet;  // one character per label, unique

  // Routing metadata for table-driven backends. Not part of the request hash
  // and never sent over the wire.
  std::string sample_id;
  Task task = Task::kTotal;
  std::optional<std::string> element_name;
};

BackendRequest MakeRequest(const instruction::InstructionRecord& record);

// SHA-256 hex digest of the rendered request (texts, image, alphabet).
std::string RequestHash(const BackendRequest& req);

// Scores a backend reported for the candidate labels it could resolve.
struct LabelScores {
  std::map<char, double> labels;
  // Smallest score among everything the backend reported (labels or not).
  double min_reported = 0.0;
};

class Backend {
 public:
  virtual ~Backend() = default;
  // Must be safe to call concurrently.
  virtual LabelScores Query(const BackendRequest& req) = 0;
};

inline constexpr double kMissingLabelPenalty = 10.0;

// One finite logit per alphabet label; labels the backend did not report get
// min_reported - 10. Throws ValidationError on a bad alphabet and
// BackendError when no label could be resolved.
std::vector<double> QueryClosedSetLogits(Backend& backend, const BackendRequest& req);

// Table of recorded responses, one JSON object per line:
//   {"request_hash": "<sha256>", "logits": {"a": 0.1, ...}}
//   {"sample_id": "...", "task": "element", "element_name": "...", "logits": {...}}
//   {"request_hash": "*", "logits": {...}}      (fallback row)
// Lookup order is hash, then (sample_id, task, element_name), then fallback.
class MockBackend final : public Backend {
 public:
  struct Row {
    std::map<char, double> logits;
  };

  MockBackend() = default;
  static MockBackend FromFile(const std::filesystem::path& path);

  void AddByHash(std::string hash, Row row);
  void AddBySample(std::string sample_id, Task task, std::optional<std::string> element_name,
                   Row row);
  void SetFallback(Row row);

  LabelScores Query(const BackendRequest& req) override;

 private:
  static std::string SampleKey(std::string_view sample_id, Task task,
                               const std::optional<std::string>& element_name);

  std::unordered_map<std::string, Row> by_hash_;
  std::unordered_map<std::string, Row> by_sample_;
  std::optional<Row> fallback_;
};

struct HttpBackendConfig {
  std::string base_url;  // e.g. http://localhost:8000/v1
  std::string model;
  std::string api_key;
  int timeout_ms = 60000;
  int attempts = 3;
  int retry_backoff_ms = 200;
  int top_k = 20;
  // "base64" embeds the file as a data URL; "url" sends image_url_prefix + image_ref.
  std::string image_mode = "base64";
  std::string image_url_prefix;
  std::filesystem::path image_root;
};

// OpenAI-style chat completions client requesting top-k log-probabilities of
// the first generated token.
class HttpBackend final : public Backend {
 public:
  explicit HttpBackend(HttpBackendConfig config);
  LabelScores Query(const BackendRequest& req) override;

  Json BuildRequestBody(const BackendRequest& req) const;

 private:
  HttpBackendConfig config_;
  std::string scheme_host_port_;
  std::string path_prefix_;
};

// Pulls the position-0 top log-probabilities out of a chat completion
// (logprobs.content[0].top_logprobs) or legacy completion
// (logprobs.top_logprobs[0]) response. Throws BackendError when malformed.
LabelScores ParseTopLogprobs(const Json& response, std::string_view alphabet);

enum class HitMode { kArgmax, kExpected };
HitMode ParseHitMode(std::string_view text);

struct Prediction {
  std::string sample_id;
  Task task = Task::kTotal;
  std::optional<std::string> element_name;
  double continuous_score = 0.0;  // [1,5] total, [1,7] element
  char argmax_label = 'a';
  codec::Distribution distribution;
  std::optional<bool> hit;  // element predictions only; not serialized

  friend bool operator==(const Prediction& a, const Prediction& b) {
    return a.sample_id == b.sample_id && a.task == b.task && a.element_name == b.element_name &&
           a.continuous_score == b.continuous_score && a.argmax_label == b.argmax_label &&
           a.distribution.probabilities == b.distribution.probabilities;
  }
};

// Element predictions: hit from the argmax digit or from the expectation.
bool PredictionHit(const Prediction& p, int tau, HitMode mode);
// Predicted category of an element prediction under the given mode.
codec::ElementCategory PredictedCategory(const Prediction& p, HitMode mode);

Prediction PredictTotalScore(Backend& backend, const dataset::SamplePair& sample,
                             const std::optional<instruction::ElementScores>& element_scores,
                             const instruction::BuildOptions& opts);

// One prediction per element, ordered by element name.
std::vector<Prediction> PredictElementScores(Backend& backend, const dataset::SamplePair& sample,
                                             int tau, const instruction::BuildOptions& opts,
                                             HitMode mode = HitMode::kArgmax);

Json PredictionToJson(const Prediction& p);
Prediction PredictionFromJson(const Json& record);
void WritePredictions(const std::filesystem::path& path, const std::vector<Prediction>& preds);
std::vector<Prediction> ReadPredictions(const std::filesystem::path& path);

}  // namespace alignkit::inference
