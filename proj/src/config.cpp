#include "alignkit/config.hpp"

#include <charconv>
#include <cstdlib>
#include <functional>

#include <fmt/format.h>

#include "alignkit/error.hpp"
#include "alignkit/jsonl.hpp"

namespace alignkit::config {

namespace fs = std::filesystem;

namespace {

std::string Trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T ParseNumber(const std::string& key, const std::string& text) {
  T value{};
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw ValidationError(fmt::format("config key '{}': cannot parse '{}'", key, text));
  }
  return value;
}

bool ParseBool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ValidationError(fmt::format("config key '{}': expected true/false, got '{}'", key, text));
}

}  // namespace

std::map<std::string, std::string> ParseKeyValues(const std::string& text) {
  std::map<std::string, std::string> out;
  std::size_t line_no = 0, pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string line = text.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
    pos = nl == std::string::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = Trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ValidationError(fmt::format("config line {}: expected key = value", line_no));
    }
    std::string key = Trim(line.substr(0, eq));
    std::string value = Trim(line.substr(eq + 1));
    if (key.empty()) throw ValidationError(fmt::format("config line {}: empty key", line_no));
    if (!out.emplace(key, value).second) {
      throw ValidationError(fmt::format("config line {}: key '{}' repeated", line_no, key));
    }
  }
  return out;
}

void Apply(const std::map<std::string, std::string>& values, RunConfig& cfg) {
  using Setter = std::function<void(const std::string&, const std::string&)>;
  const std::map<std::string, Setter> setters = {
      {"dataset", [&](auto&, auto& v) { cfg.dataset_path = v; }},
      {"output_dir", [&](auto&, auto& v) { cfg.output_dir = v; }},
      {"image_root", [&](auto&, auto& v) { cfg.image_root = v; }},
      {"ensemble_spec", [&](auto&, auto& v) { cfg.ensemble_spec = v; }},
      {"backend", [&](auto&, auto& v) { cfg.backend.kind = v; }},
      {"endpoint", [&](auto&, auto& v) { cfg.backend.endpoint = v; }},
      {"model", [&](auto&, auto& v) { cfg.backend.model = v; }},
      {"mock_table", [&](auto&, auto& v) { cfg.backend.mock_table = v; }},
      {"element_backend", [&](auto&, auto& v) { cfg.element_backend.kind = v; }},
      {"element_endpoint", [&](auto&, auto& v) { cfg.element_backend.endpoint = v; }},
      {"element_model", [&](auto&, auto& v) { cfg.element_backend.model = v; }},
      {"element_mock_table", [&](auto&, auto& v) { cfg.element_backend.mock_table = v; }},
      {"api_key_env", [&](auto&, auto& v) { cfg.api_key_env = v; }},
      {"timeout_ms", [&](auto& k, auto& v) { cfg.timeout_ms = ParseNumber<int>(k, v); }},
      {"attempts", [&](auto& k, auto& v) { cfg.attempts = ParseNumber<int>(k, v); }},
      {"top_k", [&](auto& k, auto& v) { cfg.top_k = ParseNumber<int>(k, v); }},
      {"image_mode", [&](auto&, auto& v) { cfg.image_mode = v; }},
      {"image_url_prefix", [&](auto&, auto& v) { cfg.image_url_prefix = v; }},
      {"seed", [&](auto& k, auto& v) { cfg.seed = ParseNumber<std::uint64_t>(k, v); }},
      {"include_elements", [&](auto& k, auto& v) { cfg.build.include_elements = ParseBool(k, v); }},
      {"include_confidences", [&](auto& k, auto& v) { cfg.build.include_confidences = ParseBool(k, v); }},
      {"include_prompt_type", [&](auto& k, auto& v) { cfg.build.include_prompt_type = ParseBool(k, v); }},
      {"perturbation_epsilon", [&](auto& k, auto& v) { cfg.build.perturbation_epsilon = ParseNumber<int>(k, v); }},
      {"tau", [&](auto& k, auto& v) { cfg.tau = ParseNumber<int>(k, v); }},
      {"hit_mode", [&](auto&, auto& v) { cfg.hit_mode = inference::ParseHitMode(v); }},
      {"concurrency", [&](auto& k, auto& v) { cfg.concurrency = ParseNumber<int>(k, v); }},
      {"fraction", [&](auto& k, auto& v) { cfg.fraction = ParseNumber<double>(k, v); }},
      {"split", [&](auto&, auto& v) { cfg.split = v; }},
  };
  for (const auto& [key, value] : values) {
    auto it = setters.find(key);
    if (it == setters.end()) throw ValidationError(fmt::format("unknown config key '{}'", key));
    it->second(key, value);
  }
}

RunConfig LoadConfig(const fs::path& path) {
  RunConfig cfg;
  Apply(ParseKeyValues(ReadTextFile(path)), cfg);
  return cfg;
}

pipeline::RunOptions ToRunOptions(const RunConfig& cfg) {
  if (cfg.tau < 1 || cfg.tau > codec::kElementCategories) {
    throw ValidationError(fmt::format("tau {} outside 1..7", cfg.tau));
  }
  if (cfg.concurrency < 1) throw ValidationError("concurrency must be at least 1");
  pipeline::RunOptions opts;
  opts.build = cfg.build;
  opts.build.seed = cfg.seed;
  opts.tau = cfg.tau;
  opts.hit_mode = cfg.hit_mode;
  opts.concurrency = cfg.concurrency;
  instruction::CheckOptions(opts.build);
  return opts;
}

void RequireExists(const fs::path& path, const char* what) {
  if (path.empty()) throw IoError(fmt::format("no {} configured", what));
  if (!fs::exists(path)) throw IoError(fmt::format("{} '{}' does not exist", what, path.string()));
}

namespace {

std::unique_ptr<inference::Backend> Build(const RunConfig& cfg, const BackendSettings& s) {
  if (s.kind == "mock") {
    RequireExists(s.mock_table, "mock table");
    return std::make_unique<inference::MockBackend>(inference::MockBackend::FromFile(s.mock_table));
  }
  if (s.kind == "http") {
    inference::HttpBackendConfig http;
    http.base_url = s.endpoint;
    http.model = s.model;
    if (!cfg.api_key_env.empty()) {
      if (const char* key = std::getenv(cfg.api_key_env.c_str())) http.api_key = key;
    }
    http.timeout_ms = cfg.timeout_ms;
    http.attempts = cfg.attempts;
    http.top_k = cfg.top_k;
    http.image_mode = cfg.image_mode;
    http.image_url_prefix = cfg.image_url_prefix;
    http.image_root = cfg.image_root;
    return std::make_unique<inference::HttpBackend>(std::move(http));
  }
  throw ValidationError(fmt::format("backend must be mock|http, got '{}'", s.kind));
}

}  // namespace

std::unique_ptr<inference::Backend> MakeBackend(const RunConfig& cfg) { return Build(cfg, cfg.backend); }

std::unique_ptr<inference::Backend> MakeElementBackend(const RunConfig& cfg) {
  BackendSettings s = cfg.element_backend;
  if (s.kind.empty()) s.kind = cfg.backend.kind;
  if (s.endpoint.empty()) s.endpoint = cfg.backend.endpoint;
  if (s.model.empty()) s.model = cfg.backend.model;
  if (s.mock_table.empty()) s.mock_table = cfg.backend.mock_table;
  return Build(cfg, s);
}

}  // namespace alignkit::config
