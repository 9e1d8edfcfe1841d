#include "chd/kernels.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

#if defined(CHD_HAVE_AVX2_TU)
#include <immintrin.h>
#endif

namespace chd::kernels::avx2 {

#if defined(CHD_HAVE_AVX2_TU)

namespace {

void check_sizes(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw std::invalid_argument(std::string("kernels: size mismatch in ") + what);
}

inline __m256d ipow(__m256d x, int k) {
  __m256d r = _mm256_set1_pd(1.0);
  for (int i = 0; i < k; ++i) r = _mm256_mul_pd(r, x);
  return r;
}

/// Lane-wise M(v) and M'(v); mirrors the scalar operation order exactly.
inline void mobility_lanes(const MobilityCoeffs& c, __m256d x, __m256d& m, __m256d& dm) {
  const __m256d zero = _mm256_setzero_pd();
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d k = _mm256_set1_pd(c.K);
  const __m256d y = _mm256_sub_pd(one, x);
  const __m256d open = _mm256_and_pd(_mm256_cmp_pd(x, zero, _CMP_GT_OQ), _mm256_cmp_pd(x, one, _CMP_LT_OQ));
  const __m256d closed =
      _mm256_and_pd(_mm256_cmp_pd(x, zero, _CMP_GE_OQ), _mm256_cmp_pd(x, one, _CMP_LE_OQ));
  const __m256d val = _mm256_mul_pd(_mm256_mul_pd(k, ipow(x, c.p)), ipow(y, c.q));
  const __m256d slope = _mm256_sub_pd(_mm256_mul_pd(_mm256_set1_pd(c.p), y),
                                      _mm256_mul_pd(_mm256_set1_pd(c.q), x));
  const __m256d der =
      _mm256_mul_pd(_mm256_mul_pd(_mm256_mul_pd(k, ipow(x, c.p - 1)), ipow(y, c.q - 1)), slope);
  m = _mm256_and_pd(open, val);
  dm = _mm256_and_pd(closed, der);
}

inline double hsum(__m256d v) {
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, v);
  return (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
}

}  // namespace

bool compiled() { return true; }

void mobility_values(const MobilityCoeffs& c, std::span<const double> v, std::span<double> m,
                     std::span<double> dm) {
  check_sizes(v.size(), m.size(), "mobility_values");
  check_sizes(v.size(), dm.size(), "mobility_values");
  const std::size_t n = v.size();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d mv, dv;
    mobility_lanes(c, _mm256_loadu_pd(v.data() + i), mv, dv);
    _mm256_storeu_pd(m.data() + i, mv);
    _mm256_storeu_pd(dm.data() + i, dv);
  }
  if (i < n) scalar::mobility_values(c, v.subspan(i), m.subspan(i), dm.subspan(i));
}

void mobility_split(const MobilityCoeffs& c, std::span<const double> v, const SplitOut& out) {
  check_sizes(v.size(), out.up.size(), "mobility_split");
  check_sizes(v.size(), out.down.size(), "mobility_split");
  check_sizes(v.size(), out.dup.size(), "mobility_split");
  check_sizes(v.size(), out.ddown.size(), "mobility_split");
  const __m256d w_star = _mm256_set1_pd(c.w_star);
  const __m256d m_star = _mm256_set1_pd(c.m_star);
  const std::size_t n = v.size();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d x = _mm256_loadu_pd(v.data() + i);
    __m256d mv, dv;
    mobility_lanes(c, x, mv, dv);
    const __m256d below = _mm256_cmp_pd(x, w_star, _CMP_LE_OQ);
    _mm256_storeu_pd(out.up.data() + i, _mm256_blendv_pd(m_star, mv, below));
    _mm256_storeu_pd(out.dup.data() + i, _mm256_and_pd(below, dv));
    _mm256_storeu_pd(out.down.data() + i, _mm256_andnot_pd(below, _mm256_sub_pd(mv, m_star)));
    _mm256_storeu_pd(out.ddown.data() + i, _mm256_andnot_pd(below, dv));
  }
  if (i < n)
    scalar::mobility_split(c, v.subspan(i),
                           {out.up.subspan(i), out.down.subspan(i), out.dup.subspan(i),
                            out.ddown.subspan(i)});
}

void double_well(std::span<const double> a, std::span<double> out) {
  check_sizes(a.size(), out.size(), "double_well");
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d quarter = _mm256_set1_pd(0.25);
  const std::size_t n = a.size();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d x = _mm256_loadu_pd(a.data() + i);
    const __m256d y = _mm256_sub_pd(one, x);
    const __m256d r = _mm256_mul_pd(quarter, _mm256_mul_pd(_mm256_mul_pd(x, x), _mm256_mul_pd(y, y)));
    _mm256_storeu_pd(out.data() + i, r);
  }
  if (i < n) scalar::double_well(a.subspan(i), out.subspan(i));
}

void convex_split_explicit(std::span<const double> b, std::span<double> out) {
  check_sizes(b.size(), out.size(), "convex_split_explicit");
  const __m256d four = _mm256_set1_pd(4.0);
  const __m256d six = _mm256_set1_pd(6.0);
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d quarter = _mm256_set1_pd(0.25);
  const std::size_t n = b.size();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d x = _mm256_loadu_pd(b.data() + i);
    __m256d r = _mm256_sub_pd(_mm256_mul_pd(four, x), six);
    r = _mm256_sub_pd(_mm256_mul_pd(r, x), one);
    r = _mm256_mul_pd(quarter, _mm256_mul_pd(r, x));
    _mm256_storeu_pd(out.data() + i, r);
  }
  if (i < n) scalar::convex_split_explicit(b.subspan(i), out.subspan(i));
}

double dot(std::span<const double> a, std::span<const double> b) {
  check_sizes(a.size(), b.size(), "dot");
  __m256d acc = _mm256_setzero_pd();
  const std::size_t n = a.size();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    acc = _mm256_fmadd_pd(_mm256_loadu_pd(a.data() + i), _mm256_loadu_pd(b.data() + i), acc);
  double s = hsum(acc);
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

double weighted_sum_squares(std::span<const double> w, std::span<const double> a) {
  check_sizes(w.size(), a.size(), "weighted_sum_squares");
  __m256d acc = _mm256_setzero_pd();
  const std::size_t n = a.size();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d x = _mm256_loadu_pd(a.data() + i);
    acc = _mm256_fmadd_pd(_mm256_mul_pd(_mm256_loadu_pd(w.data() + i), x), x, acc);
  }
  double s = hsum(acc);
  for (; i < n; ++i) s += w[i] * a[i] * a[i];
  return s;
}

double max_abs(std::span<const double> a) {
  const __m256d sign = _mm256_set1_pd(-0.0);
  __m256d acc = _mm256_setzero_pd();
  const std::size_t n = a.size();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_max_pd(acc, _mm256_andnot_pd(sign, _mm256_loadu_pd(a.data() + i)));
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, acc);
  double m = std::max(std::max(lanes[0], lanes[1]), std::max(lanes[2], lanes[3]));
  return std::max(m, scalar::max_abs(a.subspan(i)));
}

#else

namespace {
[[noreturn]] void unavailable() { throw std::runtime_error("kernels: avx2 variant not compiled"); }
}  // namespace

bool compiled() { return false; }
void mobility_values(const MobilityCoeffs&, std::span<const double>, std::span<double>, std::span<double>) { unavailable(); }
void mobility_split(const MobilityCoeffs&, std::span<const double>, const SplitOut&) { unavailable(); }
void double_well(std::span<const double>, std::span<double>) { unavailable(); }
void convex_split_explicit(std::span<const double>, std::span<double>) { unavailable(); }
double dot(std::span<const double>, std::span<const double>) { unavailable(); }
double weighted_sum_squares(std::span<const double>, std::span<const double>) { unavailable(); }
double max_abs(std::span<const double>) { unavailable(); }

#endif

}  // namespace chd::kernels::avx2
