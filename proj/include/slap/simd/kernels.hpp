#pragma once

// Data-parallel inner loops shared by the solver, the graph builders and the
// classifier. Every kernel has a scalar reference implementation; vector
// variants (AVX2+FMA on x86-64, NEON on aarch64) are chosen once at runtime.
//
// Reductions in the vector variants accumulate in a different order than the
// scalar loop, so results agree to rounding, not bit-for-bit. Element-wise
// kernels (scale, clamp, max_abs) are exact across levels.

#include <cstddef>
#include <string_view>

namespace slap::simd {

enum class Level { kScalar, kAvx2, kNeon };

std::string_view to_string(Level level);

// Best level supported by both the build and the running CPU.
Level detect();

// Level currently used by the dispatching entry points below. Defaults to
// detect(), or to the level named by SLAP_SIMD (scalar|avx2|neon) if set.
Level active();

// Forces a level; returns false (and changes nothing) when unsupported.
bool set_active(Level level);

bool supported(Level level);

struct KernelTable {
  double (*squared_distance)(const double* a, const double* b, std::size_t n);
  double (*dot)(const double* a, const double* b, std::size_t n);
  double (*max_abs)(const double* a, std::size_t n);
  void (*scale)(double* a, double factor, std::size_t n);
  void (*clamp_nonnegative)(double* a, std::size_t n);
};

// Table for a specific level; nullptr when that level is not compiled in.
const KernelTable* table(Level level);

inline double squared_distance(const double* a, const double* b, std::size_t n);
inline double dot(const double* a, const double* b, std::size_t n);
inline double max_abs(const double* a, std::size_t n);
inline void scale(double* a, double factor, std::size_t n);
inline void clamp_nonnegative(double* a, std::size_t n);

namespace detail {
const KernelTable& active_table();
}  // namespace detail

namespace scalar {
double squared_distance(const double* a, const double* b, std::size_t n);
double dot(const double* a, const double* b, std::size_t n);
double max_abs(const double* a, std::size_t n);
void scale(double* a, double factor, std::size_t n);
void clamp_nonnegative(double* a, std::size_t n);
}  // namespace scalar

inline double squared_distance(const double* a, const double* b, std::size_t n) {
  return detail::active_table().squared_distance(a, b, n);
}
inline double dot(const double* a, const double* b, std::size_t n) {
  return detail::active_table().dot(a, b, n);
}
inline double max_abs(const double* a, std::size_t n) {
  return detail::active_table().max_abs(a, n);
}
inline void scale(double* a, double factor, std::size_t n) {
  detail::active_table().scale(a, factor, n);
}
inline void clamp_nonnegative(double* a, std::size_t n) {
  detail::active_table().clamp_nonnegative(a, n);
}

}  // namespace slap::simd
