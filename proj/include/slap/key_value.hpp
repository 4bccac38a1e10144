#pragma once

#include <filesystem>
#include <istream>
#include <map>
#include <string>

namespace slap {

// Flat `key=value` text, one pair per line. Blank lines and lines starting
// with '#' are skipped; whitespace around keys and values is trimmed.
using KeyValues = std::map<std::string, std::string>;

// Throws DataError on a line without '=' or a repeated key.
KeyValues parse_key_values(std::istream& in, const std::string& source_name);
KeyValues read_key_values(const std::filesystem::path& path);

std::string trim(const std::string& s);

}  // namespace slap
