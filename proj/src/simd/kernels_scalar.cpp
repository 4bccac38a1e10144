#include "slap/simd/kernels.hpp"

#include <cmath>

namespace slap::simd::scalar {

double squared_distance(const double* a, const double* b, std::size_t n) {
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i];
    sum += d * d;
  }
  return sum;
}

double dot(const double* a, const double* b, std::size_t n) {
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += a[i] * b[i];
  return sum;
}

double max_abs(const double* a, std::size_t n) {
  double m = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = std::fabs(a[i]);
    if (v > m) m = v;
  }
  return m;
}

void scale(double* a, double factor, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) a[i] *= factor;
}

void clamp_nonnegative(double* a, std::size_t n) {
  // Written as a select so -0.0 and NaN map the same way as the vector paths.
  for (std::size_t i = 0; i < n; ++i) a[i] = a[i] > 0.0 ? a[i] : 0.0;
}

}  // namespace slap::simd::scalar
