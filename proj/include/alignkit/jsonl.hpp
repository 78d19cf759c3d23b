#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace alignkit {

using Json = nlohmann::ordered_json;

// Calls fn(line_number, text) for every non-blank line. Throws IoError when
// the file cannot be opened.
void ForEachLine(const std::filesystem::path& path,
                 const std::function<void(std::size_t, const std::string&)>& fn);

// Writes one compact JSON document per line, creating parent directories.
void WriteJsonLines(const std::filesystem::path& path, const std::vector<Json>& records);

void WriteTextFile(const std::filesystem::path& path, const std::string& text);
std::string ReadTextFile(const std::filesystem::path& path);

}  // namespace alignkit
