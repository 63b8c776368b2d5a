#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <string>

#include <json.hpp>

#include "veilprobe/errors.hpp"

namespace veilprobe {

using json = nlohmann::json;

// Streams a JSONL file line by line. The callback receives the 1-based line
// number and the parsed object. Parse failures report line number and the
// byte offset where the offending line starts.
inline void for_each_jsonl(const std::filesystem::path& path,
                           const std::function<void(long, const json&)>& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open file: " + path.string());
  std::string line;
  long line_no = 0;
  long byte_offset = 0;
  while (std::getline(in, line)) {
    ++line_no;
    long line_start = byte_offset;
    byte_offset += static_cast<long>(line.size()) + 1;
    if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json obj = json::parse(line, nullptr, false);
    if (obj.is_discarded()) {
      throw ParseError(path.string() + ": malformed JSON at line " + std::to_string(line_no) +
                           " (byte offset " + std::to_string(line_start) + ")",
                       line_no, line_start);
    }
    fn(line_no, obj);
  }
}

inline void write_jsonl(const std::filesystem::path& path, const std::vector<json>& rows) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write file: " + path.string());
  for (const auto& row : rows) out << row.dump() << "\n";
}

}  // namespace veilprobe
