#include <doctest.h>

#include <cmath>
#include <vector>

#include "chd/kernels.hpp"
#include "chd/physics.hpp"
#include "support.hpp"

using namespace chd;
namespace kn = chd::kernels;
using chd::testing::Rng;
using chd::testing::uniform;

namespace {

std::vector<double> sample(Rng& rng, std::size_t n, double lo, double hi) {
  std::vector<double> v(n);
  for (double& x : v) x = uniform(rng, lo, hi);
  // Exercise the branch points exactly.
  if (n > 3) {
    v[0] = 0.0;
    v[1] = 1.0;
    v[2] = 0.5;
  }
  return v;
}

kn::MobilityCoeffs coeffs(const MobilitySpec& s) {
  return {s.p, s.q, s.K_pq, s.w_star, mobility_eval(s, s.w_star)};
}

bool avx2_available() { return kn::detected_isa() == kn::Isa::avx2; }

}  // namespace

TEST_CASE("scalar kernels agree with the pointwise physics functions") {
  Rng rng(1);
  for (auto [p, q] : {std::pair{1, 1}, std::pair{5, 1}, std::pair{1, 3}}) {
    const MobilitySpec s = MobilitySpec::make(p, q);
    const auto v = sample(rng, 101, -0.3, 1.3);
    std::vector<double> m(v.size()), dm(v.size()), up(v.size()), down(v.size()), dup(v.size()),
        ddown(v.size());
    kn::scalar::mobility_values(coeffs(s), v, m, dm);
    kn::scalar::mobility_split(coeffs(s), v, {up, down, dup, ddown});
    for (std::size_t i = 0; i < v.size(); ++i) {
      CHECK(m[i] == doctest::Approx(mobility_eval(s, v[i])).epsilon(1e-14).scale(1.0));
      const MobilitySplit ms = mobility_split(s, v[i]);
      const MobilitySplit md = mobility_split_derivative(s, v[i]);
      CHECK(up[i] == doctest::Approx(ms.up).epsilon(1e-14).scale(1.0));
      CHECK(down[i] == doctest::Approx(ms.down).epsilon(1e-14).scale(1.0));
      CHECK(dup[i] == doctest::Approx(md.up).epsilon(1e-13).scale(1.0));
      CHECK(ddown[i] == doctest::Approx(md.down).epsilon(1e-13).scale(1.0));
    }
  }
  const auto a = sample(rng, 50, -0.5, 1.5);
  std::vector<double> F(a.size()), E(a.size());
  kn::scalar::double_well(a, F);
  kn::scalar::convex_split_explicit(a, E);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(F[i] == doctest::Approx(potential_F(a[i])).epsilon(1e-15).scale(1.0));
    CHECK(E[i] == doctest::Approx(convex_split_explicit(a[i])).epsilon(1e-15).scale(1.0));
  }
}

TEST_CASE("avx2 kernels match the scalar reference") {
  if (!avx2_available()) {
    MESSAGE("avx2 variant not available on this host; equivalence not exercised");
    return;
  }
  Rng rng(2);
  for (std::size_t n = 0; n <= 37; ++n) {
    for (auto [p, q] : {std::pair{1, 1}, std::pair{5, 1}, std::pair{1, 3}, std::pair{3, 2}}) {
      const auto c = coeffs(MobilitySpec::make(p, q));
      const auto v = sample(rng, n, -0.3, 1.3);
      std::vector<double> m0(n), d0(n), m1(n), d1(n);
      kn::scalar::mobility_values(c, v, m0, d0);
      kn::avx2::mobility_values(c, v, m1, d1);
      for (std::size_t i = 0; i < n; ++i) {
        CHECK(m1[i] == doctest::Approx(m0[i]).epsilon(1e-15).scale(1e-300));
        CHECK(d1[i] == doctest::Approx(d0[i]).epsilon(1e-15).scale(1e-300));
      }
      std::vector<double> a0(n), b0(n), c0(n), e0(n), a1(n), b1(n), c1(n), e1(n);
      kn::scalar::mobility_split(c, v, {a0, b0, c0, e0});
      kn::avx2::mobility_split(c, v, {a1, b1, c1, e1});
      for (std::size_t i = 0; i < n; ++i) {
        CHECK(a1[i] == doctest::Approx(a0[i]).epsilon(1e-15).scale(1e-300));
        CHECK(b1[i] == doctest::Approx(b0[i]).epsilon(1e-15).scale(1e-300));
        CHECK(c1[i] == doctest::Approx(c0[i]).epsilon(1e-15).scale(1e-300));
        CHECK(e1[i] == doctest::Approx(e0[i]).epsilon(1e-15).scale(1e-300));
      }
    }
    const auto a = sample(rng, n, -0.5, 1.5);
    const auto b = sample(rng, n, -2.0, 2.0);
    std::vector<double> f0(n), f1(n), g0(n), g1(n);
    kn::scalar::double_well(a, f0);
    kn::avx2::double_well(a, f1);
    kn::scalar::convex_split_explicit(a, g0);
    kn::avx2::convex_split_explicit(a, g1);
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(f1[i] == doctest::Approx(f0[i]).epsilon(1e-15).scale(1e-300));
      CHECK(g1[i] == doctest::Approx(g0[i]).epsilon(1e-15).scale(1e-300));
    }
    // Reductions differ only by summation order.
    double abs_dot = 0.0, w_sum = 0.0;
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i) {
      abs_dot += std::abs(a[i] * b[i]);
      w[i] = uniform(rng, 0.0, 3.0);
      w_sum += w[i] * b[i] * b[i];
    }
    CHECK(std::abs(kn::avx2::dot(a, b) - kn::scalar::dot(a, b)) <= 1e-15 * n * abs_dot);
    CHECK(std::abs(kn::avx2::weighted_sum_squares(w, b) - kn::scalar::weighted_sum_squares(w, b)) <=
          1e-15 * n * w_sum);
    CHECK(kn::avx2::max_abs(b) == kn::scalar::max_abs(b));
  }
}

TEST_CASE("runtime dispatch follows force_isa") {
  Rng rng(3);
  const auto a = sample(rng, 17, -1.0, 1.0);
  kn::force_isa(kn::Isa::scalar);
  CHECK(kn::active_isa() == kn::Isa::scalar);
  CHECK(kn::isa_name(kn::active_isa()) == "scalar");
  CHECK(kn::dot(a, a) == kn::scalar::dot(a, a));
  if (avx2_available()) {
    kn::force_isa(kn::Isa::avx2);
    CHECK(kn::active_isa() == kn::Isa::avx2);
    CHECK(kn::dot(a, a) == kn::avx2::dot(a, a));
  } else {
    CHECK_THROWS_AS(kn::force_isa(kn::Isa::avx2), std::runtime_error);
  }
  kn::reset_isa();
  CHECK(kn::active_isa() == kn::detected_isa());
}

TEST_CASE("kernels reject mismatched spans") {
  std::vector<double> a(4), b(3);
  CHECK_THROWS_AS(kn::scalar::dot(a, b), std::invalid_argument);
  CHECK_THROWS_AS(kn::scalar::double_well(a, b), std::invalid_argument);
  CHECK(kn::scalar::max_abs(std::span<const double>{}) == 0.0);
}
