#include <doctest.h>

#include <cmath>

#include "chd/physics.hpp"
#include "support.hpp"

using namespace chd;
using namespace chd::testing;

TEST_CASE("mobility normalization") {
  for (int p = 1; p <= 5; ++p) {
    for (int q = 1; q <= 5; ++q) {
      const MobilitySpec s = MobilitySpec::make(p, q);
      CHECK(s.w_star == doctest::Approx(double(p) / (p + q)).epsilon(1e-15));
      CHECK(mobility_eval(s, s.w_star) == doctest::Approx(1.0).epsilon(1e-12));
      double best = 0.0, arg = 0.0;
      for (int i = 0; i <= 1000000; ++i) {
        const double v = i * 1e-6;
        const double m = mobility_eval(s, v);
        if (m > best) best = m, arg = v;
      }
      CHECK(best <= 1.0 + 1e-15);
      CHECK(best >= 1.0 - 1e-9);
      CHECK(std::abs(arg - s.w_star) <= 1e-6);
      CHECK(mobility_eval(s, -0.3) == 0.0);
      CHECK(mobility_eval(s, 1.2) == 0.0);
    }
  }
  CHECK(mobility_eval(MobilitySpec::make(1, 1), 0.5) == doctest::Approx(1.0));
  CHECK(mobility_eval(MobilitySpec::make(5, 1), 5.0 / 6.0) == doctest::Approx(1.0));
  CHECK_THROWS_AS(MobilitySpec::make(0, 1), std::invalid_argument);
}

TEST_CASE("mobility derivative matches central differences") {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const MobilitySpec s = MobilitySpec::make(uniform_int(rng, 1, 5), uniform_int(rng, 1, 5));
    const double v = uniform(rng, 0.01, 0.99);
    const double h = 1e-6;
    const double fd = (mobility_eval(s, v + h) - mobility_eval(s, v - h)) / (2 * h);
    CHECK(mobility_derivative(s, v) == doctest::Approx(fd).epsilon(1e-6).scale(1.0));
  }
}

TEST_CASE("mobility split") {
  const MobilitySpec s11 = MobilitySpec::make(1, 1);
  auto a = mobility_split(s11, 0.25);
  CHECK(a.up == doctest::Approx(0.75));
  CHECK(a.down == 0.0);
  auto b = mobility_split(s11, 0.75);
  CHECK(b.up == doctest::Approx(1.0));
  CHECK(b.down == doctest::Approx(-0.25));
  auto c = mobility_split(s11, 0.5);
  CHECK(c.up == doctest::Approx(1.0));
  CHECK(c.down == 0.0);

  for (auto [p, q] : {std::pair{1, 1}, std::pair{5, 1}, std::pair{1, 3}, std::pair{2, 3}}) {
    const MobilitySpec s = MobilitySpec::make(p, q);
    MobilitySplit prev = mobility_split(s, 0.0);
    for (int i = 0; i <= 1000; ++i) {
      const double v = i * 1e-3;
      const MobilitySplit cur = mobility_split(s, v);
      CHECK(cur.up + cur.down == doctest::Approx(mobility_eval(s, v)).epsilon(1e-15).scale(1.0));
      CHECK(cur.up >= prev.up - 1e-15);
      CHECK(cur.down <= prev.down + 1e-15);
      if (v <= s.w_star) {
        CHECK(cur.up == mobility_eval(s, v));
        CHECK(cur.down == 0.0);
      }
      prev = cur;
    }
  }
}

TEST_CASE("double well and convex splitting") {
  CHECK(potential_F(0.0) == 0.0);
  CHECK(potential_F(1.0) == 0.0);
  CHECK(potential_F(0.5) == doctest::Approx(1.0 / 64.0).epsilon(1e-15));
  CHECK(convex_split_f(0.0, 0.0) == 0.0);
  CHECK(convex_split_f(1.0, 1.0) == doctest::Approx(0.0).scale(1.0).epsilon(1e-15));
  CHECK(convex_split_f(0.5, 0.5) == doctest::Approx(0.0).scale(1.0).epsilon(1e-15));
  for (int i = 0; i <= 1000; ++i) {
    const double u = -0.5 + 2e-3 * i;
    CHECK(std::abs(convex_split_f(u, u) - potential_dF(u)) <= 1e-14);
    // Closed form of the splitting.
    const double closed = 0.25 * (3 * u + 4 * u * u * u - 6 * u * u - u);
    CHECK(std::abs(convex_split_f(u, u) - closed) <= 1e-14);
  }
  Rng rng(2);
  int violations = 0;
  for (int i = 0; i < 100000; ++i) {
    const double a = uniform(rng, 0.0, 1.0), b = uniform(rng, 0.0, 1.0);
    if (potential_F(a) - potential_F(b) - convex_split_f(a, b) * (a - b) > 1e-14) ++violations;
  }
  CHECK(violations == 0);
}

TEST_CASE("proliferation") {
  const ProliferationExps e11{1, 1};
  CHECK(proliferation_P(0.0, 0.7, e11) == 0.0);
  CHECK(proliferation_P(1.0, 0.7, e11) == 0.0);
  CHECK(proliferation_P(0.5, 0.5, e11) == doctest::Approx(0.5));
  CHECK(proliferation_P(0.5, -0.2, e11) == 0.0);
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const double u = uniform(rng, -0.5, 1.5), n = uniform(rng, -1.0, 1.0);
    const double P = proliferation_P(u, n, ProliferationExps{1, 3});
    CHECK(P >= 0.0);
    CHECK(P <= pos_part(n) + 1e-15);
  }
}

TEST_CASE("nutrient chemical potential") {
  Rng rng(4);
  const Mesh m = random_crossed_mesh(rng);
  ModelParams prm;
  prm.chi0 = 0.0;
  const P0Field n = random_p0(m, rng, 0.0, 1.0), u = random_p0(m, rng, 0.0, 1.0);
  const P0Field a = mu_n_discrete(m, n, u, prm);
  for (std::size_t k = 0; k < a.size(); ++k) CHECK(a[k] == doctest::Approx(n[k] / prm.delta));

  prm.chi0 = 0.3;
  const double c = 0.4;
  const P0Field z = mu_n_discrete(m, make_p0(m, prm.delta * prm.chi0 * c), make_p0(m, c), prm);
  for (std::size_t k = 0; k < z.size(); ++k) CHECK(std::abs(z[k]) < 1e-13);

  const P0Field b = mu_n_discrete(m, n, u, prm);
  const P0Field sm = pi0_pi1h(m, u);
  for (std::size_t k = 0; k < b.size(); ++k)
    CHECK(b[k] == doctest::Approx(n[k] / prm.delta - prm.chi0 * sm[k]).epsilon(1e-14));
}

TEST_CASE("discrete energy") {
  ModelParams prm;
  const Mesh unit = build_crossed_mesh(1, 1, Rect{0.0, 1.0, 0.0, 1.0});
  CHECK(energy_discrete(unit, make_p0(unit), make_p0(unit), prm) == 0.0);
  CHECK(energy_discrete(unit, make_p0(unit, 1.0), make_p0(unit), prm) == doctest::Approx(0.0).scale(1.0));
  CHECK(energy_discrete(unit, make_p0(unit, 0.5), make_p0(unit), prm) == doctest::Approx(1.0 / 64.0).epsilon(1e-14));

  // Constant fields: value depends only on the domain area.
  const double u = 0.3, n = 0.6;
  const double expect = 4.0 * (potential_F(u) - prm.chi0 * u * n + n * n / (2 * prm.delta));
  for (int cells = 1; cells <= 8; cells *= 2) {
    const Mesh m = build_crossed_mesh(cells, cells, Rect{0.0, 2.0, 0.0, 2.0});
    CHECK(energy_discrete(m, make_p0(m, u), make_p0(m, n), prm) == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("potential integral is exact on P1 data") {
  // Compare against a Duffy-transformed tensor Gauss rule of high order.
  static const double gx[5] = {-0.9061798459386640, -0.5384693101056831, 0.0, 0.5384693101056831, 0.9061798459386640};
  static const double gw[5] = {0.2369268850561891, 0.4786286704993665, 0.5688888888888889, 0.4786286704993665, 0.2369268850561891};
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const Mesh m = random_crossed_mesh(rng, 3);
    const P1Field a = random_p1(m, rng, -0.5, 1.5);
    double oracle = 0.0;
    for (std::size_t k = 0; k < m.num_triangles(); ++k) {
      const auto& t = m.triangles()[k];
      for (int i = 0; i < 5; ++i) {
        for (int j = 0; j < 5; ++j) {
          const double s = 0.5 * (gx[i] + 1), r = 0.5 * (gx[j] + 1);
          const double l1 = s, l2 = (1 - s) * r;
          const double val = (1 - l1 - l2) * a[t[0]] + l1 * a[t[1]] + l2 * a[t[2]];
          oracle += 0.25 * gw[i] * gw[j] * (1 - s) * 2.0 * m.areas()[k] * potential_F(val);
        }
      }
    }
    CHECK(close_rel(potential_integral(m, a), oracle, 1e-12));
  }
}

TEST_CASE("parameter validation") {
  ModelParams prm;
  CHECK_NOTHROW(prm.validate());
  prm.delta = 0.0;
  CHECK_THROWS_WITH_AS(prm.validate(), doctest::Contains("delta"), std::invalid_argument);
  prm = ModelParams{};
  prm.chi0 = -1.0;
  CHECK_THROWS_AS(prm.validate(), std::invalid_argument);
  prm = ModelParams{};
  prm.dt = 0.0;
  CHECK_THROWS_AS(prm.validate(), std::invalid_argument);
}
