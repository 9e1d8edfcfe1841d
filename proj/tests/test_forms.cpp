#include <doctest.h>

#include <cmath>

#include "chd/forms.hpp"
#include "oracles.hpp"

using namespace chd;
using namespace chd::testing;

namespace {

P0Field indicator(const Mesh& m, std::size_t k, double value = 1.0) {
  P0Field f = make_p0(m);
  f[k] = value;
  return f;
}

RT0Field unit_flux(const Mesh& m, std::size_t e) {
  RT0Field f = make_rt0(m);
  f[e] = 1.0;
  return f;
}

}  // namespace

TEST_CASE("normal gradient reconstruction") {
  Rng rng(1);
  const Mesh m = random_crossed_mesh(rng);
  const P0Field mu = random_p0(m, rng, -3.0, 3.0);
  for (const RawEdge& r : raw_interior_edges(m)) {
    const double g = grad_n0(m, mu, r.mesh_id);
    const Edge& e = m.edges()[r.mesh_id];
    CHECK(g == doctest::Approx((mu[e.right] - mu[e.left]) / r.dist).epsilon(1e-13));
  }
  const P0Field flat = make_p0(m, 2.0);
  CHECK(grad_n0(m, flat, 0) == 0.0);
  CHECK_THROWS_AS(grad_n0(m, mu, m.num_interior_edges()), std::invalid_argument);
  CHECK_THROWS_AS(grad_n0(m, mu, m.num_edges() + 3), std::invalid_argument);

  // mu_K = 1, mu_L = 0 with D_e = 0.5 gives -2.
  const double h = 0.5 * std::sqrt(2.0) * 3.0 / 2.0;  // cell size giving D_e = 0.5
  const Mesh c = build_crossed_mesh(1, 1, Rect{0.0, h, 0.0, h});
  const Edge& e0 = c.edges()[0];
  REQUIRE(e0.bary_dist == doctest::Approx(0.5));
  P0Field step = make_p0(c);
  step[e0.left] = 1.0;
  CHECK(grad_n0(c, step, 0) == doctest::Approx(-2.0));
}

TEST_CASE("single-edge primitives") {
  CHECK(upwind_edge(2.0, 3.0, 7.0).value == 6.0);
  CHECK(upwind_edge(-2.0, 3.0, 7.0).value == -14.0);
  const MobilitySpec s = MobilitySpec::make(1, 1);
  const auto at_star = mobility_split(s, s.w_star);
  CHECK(mobility_edge(1.0 / 0.5, 1.0, 0.0, at_star, at_star).value == doctest::Approx(2.0));
  CHECK(mobility_edge(2.0, 1.0, 1.0, at_star, at_star).value == 0.0);
  CHECK(stabilization_weight(1.0, 0.0) == 1.0);
  CHECK(stabilization_weight(0.0, 0.0) == 0.0);
  CHECK(stabilization_weight(-3.0, 0.0) == -1.0);
  CHECK(stabilization_weight(1.0, 1.0) == 0.5);
  for (double x : {-2.0, -0.1, 0.3, 1.7}) {
    const double h = 1e-6;
    const double fd = (stabilization_weight(x + h, 0.2) - stabilization_weight(x - h, 0.2)) / (2 * h);
    CHECK(stabilization_weight_derivative(x, 0.2) == doctest::Approx(fd).epsilon(1e-7));
  }
}

TEST_CASE("forms match the brute-force oracles") {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const Mesh m = random_crossed_mesh(rng, 4);
    const RT0Field v = random_rt0(m, rng, 2.0);
    const RT0Field t = random_rt0(m, rng, 2.0);
    const P0Field phi = random_p0(m, rng, -0.5, 1.5);
    const P0Field mu = random_p0(m, rng, -5.0, 5.0);
    const P0Field test = random_p0(m, rng, -2.0, 2.0);
    const int p = uniform_int(rng, 1, 5), q = uniform_int(rng, 1, 5);
    const double eta = trial % 2 == 0 ? 0.0 : std::pow(10.0, uniform(rng, -8.0, 0.0));
    const double sigma = uniform(rng, 0.0, 1.0);

    CHECK(close_rel(a_upw(m, v, phi, test), oracle_a_upw(m, v, phi, test), 1e-12));
    CHECK(close_rel(b_upw(m, mu, phi, MobilitySpec::make(p, q), test),
                    oracle_b_upw(m, mu, phi, OracleMobility{p, q}, test), 1e-12));
    CHECK(close_rel(c_h(m, phi, mu, v), oracle_c_h(m, phi, mu, v), 1e-12));
    CHECK(close_rel(s_h(m, v, phi, mu, t, eta), oracle_s_h(m, v, phi, mu, t, eta), 1e-12));
    CHECK(close_rel(tau_diag(m, v, phi, mu, sigma, eta), oracle_tau(m, v, phi, mu, sigma, eta), 1e-12));
  }
}

TEST_CASE("dual vectors are the forms against basis functions") {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const Mesh m = random_crossed_mesh(rng, 3);
    const RT0Field v = random_rt0(m, rng);
    const P0Field phi = random_p0(m, rng), mu = random_p0(m, rng, -2.0, 2.0);
    const MobilitySpec spec = MobilitySpec::make(5, 1);
    const auto da = a_upw_dual(m, v, phi);
    const auto db = b_upw_dual(m, mu, phi, spec);
    for (std::size_t k = 0; k < m.num_triangles(); ++k) {
      CHECK(close_rel(da[k], a_upw(m, v, phi, indicator(m, k)), 1e-13));
      CHECK(close_rel(db[k], b_upw(m, mu, phi, spec, indicator(m, k)), 1e-13));
    }
    const auto dc = c_h_dual(m, phi, mu);
    const auto ds = s_h_dual(m, v, phi, mu, 1e-3);
    for (std::size_t e = 0; e < m.num_interior_edges(); ++e) {
      CHECK(close_rel(dc[e], c_h(m, phi, mu, unit_flux(m, e)), 1e-13));
      CHECK(close_rel(ds[e], s_h(m, v, phi, mu, unit_flux(m, e), 1e-3), 1e-13));
    }
  }
}

TEST_CASE("trivial cases of the forms") {
  Rng rng(4);
  const Mesh m = random_crossed_mesh(rng, 4);
  const P0Field phi = random_p0(m, rng), mu = random_p0(m, rng), test = random_p0(m, rng);
  const RT0Field v = random_rt0(m, rng);
  const MobilitySpec spec = MobilitySpec::make(1, 1);
  CHECK(a_upw(m, make_rt0(m), phi, test) == 0.0);
  CHECK(std::abs(a_upw(m, v, phi, make_p0(m, 3.0))) < 1e-14);
  CHECK(b_upw(m, make_p0(m, 1.7), phi, spec, test) == 0.0);
  CHECK(std::abs(b_upw(m, mu, phi, spec, make_p0(m, -2.0))) < 1e-14);
  CHECK(b_upw(m, mu, random_p0(m, rng, 1.1, 2.0), spec, test) == 0.0);
  CHECK(c_h(m, phi, mu, make_rt0(m)) == 0.0);
  const RT0Field w = divergence_free_rt0(m, rng);
  CHECK(std::abs(c_h(m, make_p0(m, 0.4), make_p0(m, 2.0), w)) < 1e-13);
  CHECK(s_h(m, v, make_p0(m, 0.5), mu, w, 0.0) == 0.0);
  CHECK(std::abs(s_h(m, v, phi, mu, w, 1e12)) < 1e-10);
  CHECK(tau_diag(m, v, phi, mu, 1.0, 0.0) == 0.0);

  // Constant phi with divergence-free v leaves only the telescoping sum.
  CHECK(std::abs(a_upw(m, w, make_p0(m, 0.7), test)) < 1e-13);
}

TEST_CASE("b_upw is nonnegative on the diagonal") {
  Rng rng(5);
  double worst = 0.0;
  for (int trial = 0; trial < 10000; ++trial) {
    const Mesh m = random_crossed_mesh(rng, 3);
    const P0Field mu = random_p0(m, rng, -10.0, 10.0);
    const P0Field w = random_p0(m, rng, -0.2, 1.2);
    const MobilitySpec spec = MobilitySpec::make(uniform_int(rng, 1, 5), uniform_int(rng, 1, 5));
    worst = std::min(worst, b_upw(m, mu, w, spec, mu));
  }
  CHECK(worst >= 0.0);
}

TEST_CASE("upwind monotonicity at the minimum element") {
  Rng rng(6);
  for (int trial = 0; trial < 200; ++trial) {
    const Mesh m = random_crossed_mesh(rng, 4);
    const std::size_t k0 = static_cast<std::size_t>(uniform_int(rng, 0, int(m.num_triangles()) - 1));
    const double u_min = uniform(rng, -0.5, -1e-3);
    P0Field u = random_p0(m, rng, u_min, 1.0);
    u[k0] = u_min;
    const P0Field test = indicator(m, k0, minus(u_min));
    const RT0Field v = divergence_free_rt0(m, rng, 3.0);
    const P0Field mu = random_p0(m, rng, -5.0, 5.0);
    const MobilitySpec spec = MobilitySpec::make(uniform_int(rng, 1, 5), uniform_int(rng, 1, 5));
    CHECK(a_upw(m, v, u, test) <= 1e-14);
    CHECK(b_upw(m, mu, u, spec, test) <= 0.0);
  }
}

TEST_CASE("stabilization identity") {
  // a_upw(v, phi, mu) + c_h(phi, mu, v) + sigma s_h(v, phi, mu, v, eta) = tau
  // for divergence-free v, both for (u, pi0 mu_u) and (n, mu_n) pairs.
  Rng rng(7);
  for (int trial = 0; trial < 500; ++trial) {
    const Mesh m = random_crossed_mesh(rng, 4);
    const RT0Field v = divergence_free_rt0(m, rng, uniform(rng, 0.1, 10.0));
    const P0Field phi = random_p0(m, rng, 0.0, 1.0);
    const P0Field mu = trial % 2 == 0 ? pi0(m, random_p1(m, rng, -3.0, 3.0))
                                      : random_p0(m, rng, -100.0, 100.0);
    const double sigma = uniform(rng, 0.0, 1.0);
    const double eta = trial % 4 < 2 ? 0.0 : std::pow(10.0, uniform(rng, -8.0, 1.0));
    const double lhs = a_upw(m, v, phi, mu) + c_h(m, phi, mu, v) + sigma * s_h(m, v, phi, mu, v, eta);
    const double tau = tau_diag(m, v, phi, mu, sigma, eta);
    CHECK(std::abs(lhs - tau) <= 1e-12 * (1.0 + std::abs(tau)));
  }
}
