#include <atomic>
#include <cstdlib>
#include <string>

#include "slap/simd/kernels.hpp"

#if defined(SLAP_HAVE_AVX2)
namespace slap::simd::avx2 {
double squared_distance(const double* a, const double* b, std::size_t n);
double dot(const double* a, const double* b, std::size_t n);
double max_abs(const double* a, std::size_t n);
void scale(double* a, double factor, std::size_t n);
void clamp_nonnegative(double* a, std::size_t n);
}  // namespace slap::simd::avx2
#endif

#if defined(SLAP_HAVE_NEON)
namespace slap::simd::neon {
double squared_distance(const double* a, const double* b, std::size_t n);
double dot(const double* a, const double* b, std::size_t n);
double max_abs(const double* a, std::size_t n);
void scale(double* a, double factor, std::size_t n);
void clamp_nonnegative(double* a, std::size_t n);
}  // namespace slap::simd::neon
#endif

namespace slap::simd {

namespace {

constexpr KernelTable kScalarTable{scalar::squared_distance, scalar::dot, scalar::max_abs,
                                   scalar::scale, scalar::clamp_nonnegative};
#if defined(SLAP_HAVE_AVX2)
constexpr KernelTable kAvx2Table{avx2::squared_distance, avx2::dot, avx2::max_abs, avx2::scale,
                                 avx2::clamp_nonnegative};
#endif
#if defined(SLAP_HAVE_NEON)
constexpr KernelTable kNeonTable{neon::squared_distance, neon::dot, neon::max_abs, neon::scale,
                                 neon::clamp_nonnegative};
#endif

bool cpu_has(Level level) {
  switch (level) {
    case Level::kScalar:
      return true;
    case Level::kAvx2:
#if defined(SLAP_HAVE_AVX2)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Level::kNeon:
#if defined(SLAP_HAVE_NEON)
      return true;
#else
      return false;
#endif
  }
  return false;
}

Level initial_level() {
  if (const char* env = std::getenv("SLAP_SIMD")) {
    const std::string want(env);
    for (Level l : {Level::kScalar, Level::kAvx2, Level::kNeon}) {
      if (want == to_string(l) && cpu_has(l)) return l;
    }
  }
  return detect();
}

std::atomic<const KernelTable*>& active_slot() {
  static std::atomic<const KernelTable*> slot{table(initial_level())};
  return slot;
}

}  // namespace

std::string_view to_string(Level level) {
  switch (level) {
    case Level::kScalar:
      return "scalar";
    case Level::kAvx2:
      return "avx2";
    case Level::kNeon:
      return "neon";
  }
  return "unknown";
}

bool supported(Level level) { return cpu_has(level); }

Level detect() {
  if (cpu_has(Level::kAvx2)) return Level::kAvx2;
  if (cpu_has(Level::kNeon)) return Level::kNeon;
  return Level::kScalar;
}

const KernelTable* table(Level level) {
  switch (level) {
    case Level::kScalar:
      return &kScalarTable;
    case Level::kAvx2:
#if defined(SLAP_HAVE_AVX2)
      return &kAvx2Table;
#else
      return nullptr;
#endif
    case Level::kNeon:
#if defined(SLAP_HAVE_NEON)
      return &kNeonTable;
#else
      return nullptr;
#endif
  }
  return nullptr;
}

Level active() {
  const KernelTable* t = active_slot().load();
  for (Level l : {Level::kAvx2, Level::kNeon}) {
    if (t == table(l)) return l;
  }
  return Level::kScalar;
}

bool set_active(Level level) {
  if (!cpu_has(level)) return false;
  active_slot().store(table(level));
  return true;
}

const KernelTable& detail::active_table() { return *active_slot().load(std::memory_order_relaxed); }

}  // namespace slap::simd
