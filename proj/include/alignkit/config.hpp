#pragma once

// Run configuration: a flat "key = value" file, overridable from the
// command line.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "alignkit/inference.hpp"
#include "alignkit/instruction.hpp"
#include "alignkit/pipeline.hpp"

namespace alignkit::config {

struct BackendSettings {
  std::string kind = "mock";  // mock | http
  std::string endpoint;
  std::string model;
  std::filesystem::path mock_table;
};

struct RunConfig {
  std::filesystem::path dataset_path;
  std::filesystem::path output_dir = "out";
  std::filesystem::path image_root;  // defaults to the dataset's directory
  std::filesystem::path ensemble_spec;

  BackendSettings backend;
  BackendSettings element_backend = {"", "", "", {}};  // unset fields inherit from backend
  std::string api_key_env;
  int timeout_ms = 60000;
  int attempts = 3;
  int top_k = 20;
  std::string image_mode = "base64";
  std::string image_url_prefix;

  std::uint64_t seed = 0;
  instruction::BuildOptions build;
  int tau = codec::kDefaultHitThreshold;
  inference::HitMode hit_mode = inference::HitMode::kArgmax;
  int concurrency = 1;
  double fraction = 0.10;
  std::string split = "test";
};

// Parses "key = value" lines; '#' starts a comment. Throws ValidationError
// with the line number on syntax errors or repeated keys.
std::map<std::string, std::string> ParseKeyValues(const std::string& text);

// Applies key/value pairs onto cfg. Throws ValidationError on unknown keys
// or unparsable values.
void Apply(const std::map<std::string, std::string>& values, RunConfig& cfg);

RunConfig LoadConfig(const std::filesystem::path& path);

pipeline::RunOptions ToRunOptions(const RunConfig& cfg);

// Creates the configured backend. The element variant falls back to the
// main backend's settings for fields it leaves empty.
std::unique_ptr<inference::Backend> MakeBackend(const RunConfig& cfg);
std::unique_ptr<inference::Backend> MakeElementBackend(const RunConfig& cfg);

// Throws IoError naming the first missing path.
void RequireExists(const std::filesystem::path& path, const char* what);

}  // namespace alignkit::config
