/// @file kernels.hpp
/// @brief Elementwise batch kernels used inside assembly: mobility values and
/// their monotone split, the double-well potential and the explicit
/// convex-split term at quadrature points, and a few reductions.
///
/// Each kernel has a scalar reference implementation and, on x86-64 hosts
/// with AVX2+FMA, a vectorized variant. The dispatching entry points pick the
/// variant at runtime; `force_isa` pins one for equivalence testing.
#pragma once

#include <cstddef>
#include <span>
#include <string_view>

namespace chd::kernels {

enum class Isa { scalar, avx2 };

std::string_view isa_name(Isa isa);
/// Best variant the running CPU supports (and the build provides).
Isa detected_isa();
/// Variant currently used by the dispatching entry points.
Isa active_isa();
/// Pins the active variant. Throws std::runtime_error if `isa` is unavailable.
void force_isa(Isa isa);
/// Restores the detected variant.
void reset_isa();

/// Mobility parameters in batch form. `m_star` is M(w*), the value the
/// increasing branch saturates at.
struct MobilityCoeffs {
  int p = 1;
  int q = 1;
  double K = 4.0;
  double w_star = 0.5;
  double m_star = 1.0;
};

/// Per-entry mobility split and its one-sided derivatives:
/// up/down as in the monotone decomposition, dup/ddown their slopes.
struct SplitOut {
  std::span<double> up;
  std::span<double> down;
  std::span<double> dup;
  std::span<double> ddown;
};

/// M(v) and M'(v) for every entry. M is zero outside (0,1); M' uses the
/// polynomial formula on [0,1] and is zero outside.
void mobility_values(const MobilityCoeffs& c, std::span<const double> v, std::span<double> m,
                     std::span<double> dm);
void mobility_split(const MobilityCoeffs& c, std::span<const double> v, const SplitOut& out);
/// F(a) = a^2 (1-a)^2 / 4.
void double_well(std::span<const double> a, std::span<double> out);
/// (4b^3 - 6b^2 - b) / 4.
void convex_split_explicit(std::span<const double> b, std::span<double> out);
double dot(std::span<const double> a, std::span<const double> b);
/// sum_i w_i a_i^2.
double weighted_sum_squares(std::span<const double> w, std::span<const double> a);
/// max_i |a_i| (0 for an empty span).
double max_abs(std::span<const double> a);

namespace scalar {
void mobility_values(const MobilityCoeffs& c, std::span<const double> v, std::span<double> m,
                     std::span<double> dm);
void mobility_split(const MobilityCoeffs& c, std::span<const double> v, const SplitOut& out);
void double_well(std::span<const double> a, std::span<double> out);
void convex_split_explicit(std::span<const double> b, std::span<double> out);
double dot(std::span<const double> a, std::span<const double> b);
double weighted_sum_squares(std::span<const double> w, std::span<const double> a);
double max_abs(std::span<const double> a);
}  // namespace scalar

namespace avx2 {
/// True when this build contains the AVX2 variant.
bool compiled();
void mobility_values(const MobilityCoeffs& c, std::span<const double> v, std::span<double> m,
                     std::span<double> dm);
void mobility_split(const MobilityCoeffs& c, std::span<const double> v, const SplitOut& out);
void double_well(std::span<const double> a, std::span<double> out);
void convex_split_explicit(std::span<const double> b, std::span<double> out);
double dot(std::span<const double> a, std::span<const double> b);
double weighted_sum_squares(std::span<const double> w, std::span<const double> a);
double max_abs(std::span<const double> a);
}  // namespace avx2

}  // namespace chd::kernels
