#include "chd/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>
#include <string>

namespace chd::kernels {

namespace {

double ipow(double x, int k) {
  double r = 1.0;
  for (int i = 0; i < k; ++i) r *= x;
  return r;
}

void check_sizes(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw std::invalid_argument(std::string("kernels: size mismatch in ") + what);
}

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(_M_X64)
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa detect() { return (avx2::compiled() && cpu_has_avx2()) ? Isa::avx2 : Isa::scalar; }

std::atomic<Isa>& active() {
  static std::atomic<Isa> isa{detect()};
  return isa;
}

}  // namespace

std::string_view isa_name(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

Isa detected_isa() {
  static const Isa isa = detect();
  return isa;
}

Isa active_isa() { return active().load(std::memory_order_relaxed); }

void force_isa(Isa isa) {
  if (isa == Isa::avx2 && detected_isa() != Isa::avx2)
    throw std::runtime_error("kernels: avx2 variant not available on this host");
  active().store(isa, std::memory_order_relaxed);
}

void reset_isa() { active().store(detected_isa(), std::memory_order_relaxed); }

namespace scalar {

void mobility_values(const MobilityCoeffs& c, std::span<const double> v, std::span<double> m,
                     std::span<double> dm) {
  check_sizes(v.size(), m.size(), "mobility_values");
  check_sizes(v.size(), dm.size(), "mobility_values");
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double x = v[i];
    const double y = 1.0 - x;
    m[i] = (x > 0.0 && x < 1.0) ? c.K * ipow(x, c.p) * ipow(y, c.q) : 0.0;
    dm[i] = (x >= 0.0 && x <= 1.0)
                ? c.K * ipow(x, c.p - 1) * ipow(y, c.q - 1) * (c.p * y - c.q * x)
                : 0.0;
  }
}

void mobility_split(const MobilityCoeffs& c, std::span<const double> v, const SplitOut& out) {
  check_sizes(v.size(), out.up.size(), "mobility_split");
  check_sizes(v.size(), out.down.size(), "mobility_split");
  check_sizes(v.size(), out.dup.size(), "mobility_split");
  check_sizes(v.size(), out.ddown.size(), "mobility_split");
  scalar::mobility_values(c, v, out.up, out.dup);
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] <= c.w_star) {
      out.down[i] = 0.0;
      out.ddown[i] = 0.0;
    } else {
      out.down[i] = out.up[i] - c.m_star;
      out.ddown[i] = out.dup[i];
      out.up[i] = c.m_star;
      out.dup[i] = 0.0;
    }
  }
}

void double_well(std::span<const double> a, std::span<double> out) {
  check_sizes(a.size(), out.size(), "double_well");
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a[i];
    const double y = 1.0 - x;
    out[i] = 0.25 * ((x * x) * (y * y));
  }
}

void convex_split_explicit(std::span<const double> b, std::span<double> out) {
  check_sizes(b.size(), out.size(), "convex_split_explicit");
  for (std::size_t i = 0; i < b.size(); ++i) {
    const double x = b[i];
    out[i] = 0.25 * (((4.0 * x - 6.0) * x - 1.0) * x);
  }
}

double dot(std::span<const double> a, std::span<const double> b) {
  check_sizes(a.size(), b.size(), "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double weighted_sum_squares(std::span<const double> w, std::span<const double> a) {
  check_sizes(w.size(), a.size(), "weighted_sum_squares");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += w[i] * a[i] * a[i];
  return s;
}

double max_abs(std::span<const double> a) {
  double m = 0.0;
  for (double x : a) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace scalar

void mobility_values(const MobilityCoeffs& c, std::span<const double> v, std::span<double> m,
                     std::span<double> dm) {
  if (active_isa() == Isa::avx2) return avx2::mobility_values(c, v, m, dm);
  scalar::mobility_values(c, v, m, dm);
}

void mobility_split(const MobilityCoeffs& c, std::span<const double> v, const SplitOut& out) {
  if (active_isa() == Isa::avx2) return avx2::mobility_split(c, v, out);
  scalar::mobility_split(c, v, out);
}

void double_well(std::span<const double> a, std::span<double> out) {
  if (active_isa() == Isa::avx2) return avx2::double_well(a, out);
  scalar::double_well(a, out);
}

void convex_split_explicit(std::span<const double> b, std::span<double> out) {
  if (active_isa() == Isa::avx2) return avx2::convex_split_explicit(b, out);
  scalar::convex_split_explicit(b, out);
}

double dot(std::span<const double> a, std::span<const double> b) {
  return active_isa() == Isa::avx2 ? avx2::dot(a, b) : scalar::dot(a, b);
}

double weighted_sum_squares(std::span<const double> w, std::span<const double> a) {
  return active_isa() == Isa::avx2 ? avx2::weighted_sum_squares(w, a)
                                   : scalar::weighted_sum_squares(w, a);
}

double max_abs(std::span<const double> a) {
  return active_isa() == Isa::avx2 ? avx2::max_abs(a) : scalar::max_abs(a);
}

}  // namespace chd::kernels
