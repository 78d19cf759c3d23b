#include "alignkit/inference.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <set>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>
#include <openssl/evp.h>

#include "alignkit/error.hpp"

namespace alignkit::inference {

namespace fs = std::filesystem;

BackendRequest MakeRequest(const instruction::InstructionRecord& record) {
  BackendRequest req;
  req.system_text = record.system_text;
  req.user_text = record.user_text;
  req.image_ref = record.image_ref;
  req.alphabet = std::string(instruction::AlphabetOf(record.task));
  req.sample_id = record.sample_id;
  req.task = record.task;
  req.element_name = record.element_name;
  return req;
}

namespace {

std::string Sha256Hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 digest failed");
  }
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) out += fmt::format("{:02x}", digest[i]);
  return out;
}

std::string Base64(std::string_view bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(bytes.data()),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

void CheckAlphabet(const BackendRequest& req) {
  const std::string_view expected = instruction::AlphabetOf(req.task);
  if (req.alphabet.size() != expected.size()) {
    throw ValidationError(fmt::format("alphabet of size {} does not match the {} task ({})",
                                      req.alphabet.size(), instruction::ToString(req.task),
                                      expected.size()));
  }
  std::set<char> seen(req.alphabet.begin(), req.alphabet.end());
  if (seen.size() != req.alphabet.size()) throw ValidationError("alphabet labels must be unique");
}

std::map<char, double> ParseLogitRow(const Json& logits) {
  if (!logits.is_object()) throw ValidationError("'logits' must be an object");
  std::map<char, double> row;
  for (auto it = logits.begin(); it != logits.end(); ++it) {
    if (it.key().size() != 1) {
      throw ValidationError(fmt::format("label '{}' is not a single character", it.key()));
    }
    if (!it.value().is_number()) throw ValidationError("logit values must be numbers");
    const double v = it.value().get<double>();
    if (!std::isfinite(v)) throw ValidationError("logit values must be finite");
    row[it.key()[0]] = v;
  }
  if (row.empty()) throw ValidationError("empty logit row");
  return row;
}

std::string_view Trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\n\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\n\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::string RequestHash(const BackendRequest& req) {
  Json canonical = Json::object();
  canonical["system"] = req.system_text;
  canonical["user"] = req.user_text;
  canonical["image"] = req.image_ref;
  canonical["alphabet"] = req.alphabet;
  return Sha256Hex(canonical.dump());
}

std::vector<double> QueryClosedSetLogits(Backend& backend, const BackendRequest& req) {
  CheckAlphabet(req);
  LabelScores scores = backend.Query(req);
  bool any = false;
  for (char label : req.alphabet) any = any || scores.labels.count(label) > 0;
  if (!any) {
    throw BackendError(fmt::format("sample '{}': none of the labels '{}' resolved to a reported token",
                                   req.sample_id, req.alphabet));
  }
  double floor = scores.min_reported;
  for (const auto& [label, v] : scores.labels) floor = std::min(floor, v);
  floor -= kMissingLabelPenalty;

  std::vector<double> logits;
  logits.reserve(req.alphabet.size());
  for (char label : req.alphabet) {
    auto it = scores.labels.find(label);
    const double v = it == scores.labels.end() ? floor : it->second;
    if (!std::isfinite(v)) throw BackendError("backend reported a non-finite score");
    logits.push_back(v);
  }
  return logits;
}

// ---- mock backend ----

std::string MockBackend::SampleKey(std::string_view sample_id, Task task,
                                   const std::optional<std::string>& element_name) {
  return fmt::format("{}\x1f{}\x1f{}", sample_id, instruction::ToString(task),
                     element_name.value_or(""));
}

void MockBackend::AddByHash(std::string hash, Row row) { by_hash_[std::move(hash)] = std::move(row); }

void MockBackend::AddBySample(std::string sample_id, Task task,
                              std::optional<std::string> element_name, Row row) {
  by_sample_[SampleKey(sample_id, task, element_name)] = std::move(row);
}

void MockBackend::SetFallback(Row row) { fallback_ = std::move(row); }

MockBackend MockBackend::FromFile(const fs::path& path) {
  MockBackend backend;
  ForEachLine(path, [&](std::size_t line, const std::string& text) {
    try {
      const Json record = Json::parse(text);
      if (!record.is_object() || !record.contains("logits")) {
        throw ValidationError("record needs a 'logits' object");
      }
      Row row{ParseLogitRow(record.at("logits"))};
      if (record.contains("request_hash")) {
        const auto hash = record.at("request_hash").get<std::string>();
        if (hash == "*") {
          backend.SetFallback(std::move(row));
        } else {
          backend.AddByHash(hash, std::move(row));
        }
      } else if (record.contains("sample_id")) {
        const Task task = instruction::ParseTask(record.value("task", std::string("total")));
        std::optional<std::string> element;
        if (record.contains("element_name")) element = record.at("element_name").get<std::string>();
        backend.AddBySample(record.at("sample_id").get<std::string>(), task, element,
                            std::move(row));
      } else {
        throw ValidationError("record needs 'request_hash' or 'sample_id'");
      }
    } catch (const Json::exception& e) {
      throw ValidationError(fmt::format("{}: line {}: {}", path.string(), line, e.what()));
    } catch (const Error& e) {
      throw ValidationError(fmt::format("{}: line {}: {}", path.string(), line, e.what()));
    }
  });
  return backend;
}

LabelScores MockBackend::Query(const BackendRequest& req) {
  const Row* row = nullptr;
  if (auto it = by_hash_.find(RequestHash(req)); it != by_hash_.end()) {
    row = &it->second;
  } else if (auto it2 = by_sample_.find(SampleKey(req.sample_id, req.task, req.element_name));
             it2 != by_sample_.end()) {
    row = &it2->second;
  } else if (fallback_) {
    row = &*fallback_;
  }
  if (row == nullptr) {
    throw BackendError(fmt::format("no recorded response for sample '{}'{}", req.sample_id,
                                   req.element_name ? " element '" + *req.element_name + "'" : ""));
  }
  LabelScores out;
  out.min_reported = std::numeric_limits<double>::infinity();
  for (const auto& [label, v] : row->logits) {
    out.min_reported = std::min(out.min_reported, v);
    if (req.alphabet.find(label) != std::string::npos) out.labels[label] = v;
  }
  return out;
}

// ---- HTTP backend ----

HttpBackend::HttpBackend(HttpBackendConfig config) : config_(std::move(config)) {
  const auto scheme_end = config_.base_url.find("://");
  if (scheme_end == std::string::npos) {
    throw ValidationError("base_url must include a scheme, e.g. http://host:port/v1");
  }
  const auto path_start = config_.base_url.find('/', scheme_end + 3);
  scheme_host_port_ = config_.base_url.substr(0, path_start);
  if (path_start != std::string::npos) path_prefix_ = config_.base_url.substr(path_start);
  while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
  if (config_.attempts < 1) config_.attempts = 1;
}

Json HttpBackend::BuildRequestBody(const BackendRequest& req) const {
  std::string url;
  if (config_.image_mode == "url") {
    url = config_.image_url_prefix + req.image_ref;
  } else {
    const auto path = config_.image_root / req.image_ref;
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    const char* mime = (ext == ".jpg" || ext == ".jpeg") ? "image/jpeg" : "image/png";
    url = fmt::format("data:{};base64,{}", mime, Base64(ReadTextFile(path)));
  }

  Json user_content = Json::array();
  user_content.push_back({{"type", "image_url"}, {"image_url", {{"url", url}}}});
  user_content.push_back({{"type", "text"}, {"text", req.user_text}});

  Json body = Json::object();
  body["model"] = config_.model;
  body["messages"] = Json::array({
      Json{{"role", "system"}, {"content", req.system_text}},
      Json{{"role", "user"}, {"content", std::move(user_content)}},
  });
  body["max_tokens"] = 1;
  body["temperature"] = 0;
  body["logprobs"] = true;
  body["top_logprobs"] = config_.top_k;
  return body;
}

LabelScores ParseTopLogprobs(const Json& response, std::string_view alphabet) {
  std::vector<std::pair<std::string, double>> entries;
  try {
    const Json& logprobs = response.at("choices").at(0).at("logprobs");
    if (logprobs.contains("content")) {
      for (const auto& e : logprobs.at("content").at(0).at("top_logprobs")) {
        entries.emplace_back(e.at("token").get<std::string>(), e.at("logprob").get<double>());
      }
    } else {
      const Json& first = logprobs.at("top_logprobs").at(0);
      for (auto it = first.begin(); it != first.end(); ++it) {
        entries.emplace_back(it.key(), it.value().get<double>());
      }
    }
  } catch (const Json::exception& e) {
    throw BackendError(fmt::format("malformed completion response: {}", e.what()));
  }
  if (entries.empty()) throw BackendError("completion response carries no top log-probabilities");

  LabelScores out;
  out.min_reported = std::numeric_limits<double>::infinity();
  for (const auto& [token, logprob] : entries) {
    if (!std::isfinite(logprob)) continue;
    out.min_reported = std::min(out.min_reported, logprob);
    const auto trimmed = Trim(token);
    if (trimmed.size() != 1 || alphabet.find(trimmed[0]) == std::string_view::npos) continue;
    auto [it, inserted] = out.labels.emplace(trimmed[0], logprob);
    if (!inserted) it->second = std::max(it->second, logprob);
  }
  if (!std::isfinite(out.min_reported)) throw BackendError("all reported log-probabilities are non-finite");
  return out;
}

LabelScores HttpBackend::Query(const BackendRequest& req) {
  const std::string body = BuildRequestBody(req).dump();
  const std::string path = path_prefix_ + "/chat/completions";
  std::string last_error;
  for (int attempt = 1; attempt <= config_.attempts; ++attempt) {
    httplib::Client client(scheme_host_port_);
    const auto timeout = std::chrono::milliseconds(config_.timeout_ms);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    httplib::Headers headers;
    if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

    auto res = client.Post(path, headers, body, "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
    } else if (res->status == 429 || res->status >= 500) {
      last_error = fmt::format("HTTP {}", res->status);
    } else if (res->status != 200) {
      throw BackendError(fmt::format("backend rejected request with HTTP {}: {}", res->status,
                                     res->body.substr(0, 200)));
    } else {
      Json parsed;
      try {
        parsed = Json::parse(res->body);
      } catch (const Json::exception& e) {
        throw BackendError(fmt::format("malformed backend response: {}", e.what()));
      }
      return ParseTopLogprobs(parsed, req.alphabet);
    }
    if (attempt < config_.attempts) {
      std::this_thread::sleep_for(std::chrono::milliseconds(config_.retry_backoff_ms * attempt));
    }
  }
  throw BackendError(fmt::format("backend {} unavailable after {} attempts: {}", config_.base_url,
                                 config_.attempts, last_error),
                     /*retryable=*/true);
}

// ---- predictions ----

HitMode ParseHitMode(std::string_view text) {
  if (text == "argmax") return HitMode::kArgmax;
  if (text == "expected") return HitMode::kExpected;
  throw ValidationError(fmt::format("hit mode must be argmax|expected, got '{}'", text));
}

codec::ElementCategory PredictedCategory(const Prediction& p, HitMode mode) {
  if (mode == HitMode::kArgmax) return codec::ElementCategory::FromLabel(p.argmax_label);
  return codec::ElementCategory::FromDigit(static_cast<int>(codec::RoundHalfAway(p.continuous_score)));
}

bool PredictionHit(const Prediction& p, int tau, HitMode mode) {
  if (mode == HitMode::kArgmax) {
    return codec::CategoryToHit(codec::ElementCategory::FromLabel(p.argmax_label), tau);
  }
  return p.continuous_score > tau;
}

namespace {

Prediction FromLogits(const BackendRequest& req, const std::vector<double>& logits) {
  Prediction p;
  p.sample_id = req.sample_id;
  p.task = req.task;
  p.element_name = req.element_name;
  p.distribution = codec::ClosedSetSoftmax(logits);
  p.continuous_score = req.task == Task::kTotal ? codec::ExpectedTotalScore(logits)
                                                : codec::ExpectedElementCategory(logits);
  p.argmax_label = req.alphabet[p.distribution.ArgMax()];
  return p;
}

}  // namespace

Prediction PredictTotalScore(Backend& backend, const dataset::SamplePair& sample,
                             const std::optional<instruction::ElementScores>& element_scores,
                             const instruction::BuildOptions& opts) {
  const auto req = MakeRequest(instruction::BuildTotalInstruction(sample, element_scores, opts));
  return FromLogits(req, QueryClosedSetLogits(backend, req));
}

std::vector<Prediction> PredictElementScores(Backend& backend, const dataset::SamplePair& sample,
                                             int tau, const instruction::BuildOptions& opts,
                                             HitMode mode) {
  if (sample.elements.empty()) {
    throw ValidationError(fmt::format("sample '{}' has no elements", sample.sample_id));
  }
  std::vector<const dataset::ElementAnnotation*> ordered;
  for (const auto& e : sample.elements) ordered.push_back(&e);
  std::sort(ordered.begin(), ordered.end(),
            [](const auto* a, const auto* b) { return a->name < b->name; });

  std::vector<Prediction> out;
  out.reserve(ordered.size());
  for (const auto* element : ordered) {
    const auto req = MakeRequest(instruction::BuildElementInstruction(sample, *element, opts));
    Prediction p = FromLogits(req, QueryClosedSetLogits(backend, req));
    p.hit = PredictionHit(p, tau, mode);
    out.push_back(std::move(p));
  }
  return out;
}

Json PredictionToJson(const Prediction& p) {
  Json out = Json::object();
  out["sample_id"] = p.sample_id;
  out["task"] = instruction::ToString(p.task);
  if (p.element_name) out["element_name"] = *p.element_name;
  out["continuous_score"] = p.continuous_score;
  out["argmax_label"] = std::string(1, p.argmax_label);
  out["probabilities"] = p.distribution.probabilities;
  return out;
}

Prediction PredictionFromJson(const Json& record) {
  Prediction p;
  try {
    p.sample_id = record.at("sample_id").get<std::string>();
    p.task = instruction::ParseTask(record.at("task").get<std::string>());
    if (record.contains("element_name")) p.element_name = record.at("element_name").get<std::string>();
    p.continuous_score = record.at("continuous_score").get<double>();
    const auto label = record.at("argmax_label").get<std::string>();
    if (label.size() != 1) throw ValidationError("argmax_label must be one character");
    p.argmax_label = label[0];
    p.distribution.probabilities = record.at("probabilities").get<std::vector<double>>();
  } catch (const Json::exception& e) {
    throw ValidationError(fmt::format("malformed prediction record: {}", e.what()));
  }
  const auto alphabet = instruction::AlphabetOf(p.task);
  if (alphabet.find(p.argmax_label) == std::string_view::npos) {
    throw ValidationError(fmt::format("argmax_label '{}' not in the {} alphabet", p.argmax_label,
                                      instruction::ToString(p.task)));
  }
  if (p.distribution.probabilities.size() != alphabet.size()) {
    throw ValidationError("probabilities length does not match the task alphabet");
  }
  if (p.task == Task::kElement && !p.element_name) {
    throw ValidationError(fmt::format("element prediction for '{}' lacks element_name", p.sample_id));
  }
  return p;
}

void WritePredictions(const fs::path& path, const std::vector<Prediction>& preds) {
  std::vector<Json> records;
  records.reserve(preds.size());
  for (const auto& p : preds) records.push_back(PredictionToJson(p));
  WriteJsonLines(path, records);
}

std::vector<Prediction> ReadPredictions(const fs::path& path) {
  std::vector<Prediction> out;
  ForEachLine(path, [&](std::size_t line, const std::string& text) {
    try {
      out.push_back(PredictionFromJson(Json::parse(text)));
    } catch (const Json::exception& e) {
      throw ValidationError(fmt::format("{}: line {}: {}", path.string(), line, e.what()));
    } catch (const Error& e) {
      throw ValidationError(fmt::format("{}: line {}: {}", path.string(), line, e.what()));
    }
  });
  return out;
}

}  // namespace alignkit::inference
