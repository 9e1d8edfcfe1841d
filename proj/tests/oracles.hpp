/// @file oracles.hpp
/// @brief Brute-force reference implementations of the discrete forms. Every
/// oracle walks the interior edges rebuilt by raw_interior_edges, recomputes
/// edge lengths and barycenter distances from coordinates, and evaluates the
/// mobility from its closed form. Nothing here calls into chd/forms.hpp or
/// chd/physics.hpp.
#pragma once

#include <cmath>

#include "support.hpp"

namespace chd::testing {

inline double plus(double x) { return x > 0.0 ? x : 0.0; }
inline double minus(double x) { return x < 0.0 ? -x : 0.0; }

/// Normalized degenerate mobility K v_+^p (1-v)_+^q with its monotone split.
struct OracleMobility {
  int p = 1;
  int q = 1;

  double w_star() const { return double(p) / double(p + q); }
  double raw(double v) const {
    if (v <= 0.0 || v >= 1.0) return 0.0;
    return std::pow(v, p) * std::pow(1.0 - v, q);
  }
  double operator()(double v) const { return raw(v) / raw(w_star()); }
  double up(double v) const { return v <= w_star() ? (*this)(v) : 1.0; }
  double down(double v) const { return v <= w_star() ? 0.0 : (*this)(v) - 1.0; }
};

inline double oracle_flux(const RawEdge& r, const RT0Field& v) { return r.mesh_sign * v[r.mesh_id]; }

inline double oracle_a_upw(const Mesh& mesh, const RT0Field& v, const P0Field& phi,
                           const P0Field& test) {
  double s = 0.0;
  for (const RawEdge& r : raw_interior_edges(mesh)) {
    const double F = oracle_flux(r, v);
    s += (plus(F) * phi[r.K] - minus(F) * phi[r.L]) * (test[r.K] - test[r.L]);
  }
  return s;
}

inline double oracle_b_upw(const Mesh& mesh, const P0Field& mu, const P0Field& w,
                           const OracleMobility& M, const P0Field& test) {
  double s = 0.0;
  for (const RawEdge& r : raw_interior_edges(mesh)) {
    const double j = mu[r.K] - mu[r.L];
    const double forward = plus(M.up(w[r.K]) + M.down(w[r.L]));
    const double backward = plus(M.up(w[r.L]) + M.down(w[r.K]));
    s += r.length / r.dist * (plus(j) * forward - minus(j) * backward) * (test[r.K] - test[r.L]);
  }
  return s;
}

/// Valid for fields with zero boundary fluxes.
inline double oracle_c_h(const Mesh& mesh, const P0Field& w, const P0Field& mu,
                         const RT0Field& vbar) {
  std::vector<double> net(mesh.num_triangles(), 0.0);
  double edge_part = 0.0;
  for (const RawEdge& r : raw_interior_edges(mesh)) {
    const double F = oracle_flux(r, vbar);
    net[r.K] += F;
    net[r.L] -= F;
    edge_part += F * 0.5 * (w[r.K] + w[r.L]) * (mu[r.K] - mu[r.L]);
  }
  double element_part = 0.0;
  for (std::size_t k = 0; k < net.size(); ++k) element_part += mu[k] * w[k] * net[k];
  return -element_part - edge_part;
}

inline double oracle_weight(double x, double eta) {
  if (eta > 0.0) return x / (std::abs(x) + eta);
  return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
}

inline double oracle_s_h(const Mesh& mesh, const RT0Field& u_vel, const P0Field& phi,
                         const P0Field& mu, const RT0Field& test, double eta) {
  double s = 0.0;
  for (const RawEdge& r : raw_interior_edges(mesh)) {
    const double un = oracle_flux(r, u_vel) / r.length;
    const double tn = oracle_flux(r, test) / r.length;
    s += r.length * tn * oracle_weight(un, eta) * (phi[r.K] - phi[r.L]) * (mu[r.K] - mu[r.L]);
  }
  return -0.5 * s;
}

inline double oracle_tau(const Mesh& mesh, const RT0Field& v, const P0Field& phi,
                         const P0Field& mu, double sigma, double eta) {
  double s = 0.0;
  for (const RawEdge& r : raw_interior_edges(mesh)) {
    const double vn = std::abs(oracle_flux(r, v)) / r.length;
    if (vn == 0.0) continue;
    s += r.length * ((1.0 - sigma) * vn + eta) / (vn + eta) * vn * (phi[r.K] - phi[r.L]) *
         (mu[r.K] - mu[r.L]);
  }
  return 0.5 * s;
}

}  // namespace chd::testing
