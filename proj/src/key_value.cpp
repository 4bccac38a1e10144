#include "slap/key_value.hpp"

#include <fstream>

#include "slap/error.hpp"

namespace slap {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

KeyValues parse_key_values(std::istream& in, const std::string& source_name) {
  KeyValues out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw DataError(source_name + ":" + std::to_string(line_no) + ": expected key=value");
    }
    std::string key = trim(t.substr(0, eq));
    if (key.empty()) {
      throw DataError(source_name + ":" + std::to_string(line_no) + ": empty key");
    }
    if (!out.emplace(key, trim(t.substr(eq + 1))).second) {
      throw DataError(source_name + ":" + std::to_string(line_no) + ": duplicate key '" + key + "'");
    }
  }
  return out;
}

KeyValues read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return parse_key_values(in, path.string());
}

}  // namespace slap
