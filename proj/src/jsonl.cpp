#include "alignkit/jsonl.hpp"

#include <fstream>
#include <sstream>

#include "alignkit/error.hpp"

namespace alignkit {

namespace fs = std::filesystem;

void ForEachLine(const fs::path& path,
                 const std::function<void(std::size_t, const std::string&)>& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    fn(number, line);
  }
  if (in.bad()) throw IoError("read failure on " + path.string());
}

namespace {

std::ofstream OpenForWrite(const fs::path& path) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

}  // namespace

void WriteJsonLines(const fs::path& path, const std::vector<Json>& records) {
  auto out = OpenForWrite(path);
  for (const auto& record : records) out << record.dump() << '\n';
  out.flush();
  if (!out) throw IoError("write failure on " + path.string());
}

void WriteTextFile(const fs::path& path, const std::string& text) {
  auto out = OpenForWrite(path);
  out << text;
  out.flush();
  if (!out) throw IoError("write failure on " + path.string());
}

std::string ReadTextFile(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

}  // namespace alignkit
