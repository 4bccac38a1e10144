#pragma once

// Little-endian fixed-width encoding for the model and cache files.

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>

#include "slap/error.hpp"

namespace slap::binary {

inline void write_u64(std::ostream& out, std::uint64_t v) {
  char bytes[8];
  for (char& b : bytes) {
    b = static_cast<char>(v & 0xffu);
    v >>= 8;
  }
  out.write(bytes, 8);
}

inline void write_f64(std::ostream& out, double v) { write_u64(out, std::bit_cast<std::uint64_t>(v)); }

inline std::uint64_t read_u64(std::istream& in) {
  unsigned char bytes[8];
  if (!in.read(reinterpret_cast<char*>(bytes), 8)) throw DataError("truncated binary file");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | bytes[i];
  return v;
}

inline double read_f64(std::istream& in) { return std::bit_cast<double>(read_u64(in)); }

// Reads a count and rejects values that cannot be a real size.
inline std::uint64_t read_count(std::istream& in, std::uint64_t limit = (1ull << 32)) {
  const std::uint64_t v = read_u64(in);
  if (v > limit) throw DataError("implausible count in binary file");
  return v;
}

inline void expect_header(std::istream& in, const std::string& header) {
  std::string line;
  if (!std::getline(in, line) || line + "\n" != header) {
    throw DataError("unexpected file header '" + line + "', expected '" +
                    header.substr(0, header.size() - 1) + "'");
  }
}

}  // namespace slap::binary
