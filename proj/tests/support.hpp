/// @file support.hpp
/// @brief Shared fixtures for the unit tests: small random meshes and fields,
/// divergence-free velocity fields, and an independent geometry walker used
/// by the brute-force form oracles.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <random>
#include <utility>
#include <vector>

#include "chd/mesh.hpp"
#include "chd/spaces.hpp"

namespace chd::testing {

using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double a, double b) {
  return std::uniform_real_distribution<double>(a, b)(rng);
}

inline int uniform_int(Rng& rng, int a, int b) {
  return std::uniform_int_distribution<int>(a, b)(rng);
}

/// Crossed mesh with 1..max_cells cells per direction on a random square-cell
/// rectangle.
inline Mesh random_crossed_mesh(Rng& rng, int max_cells = 4) {
  const int nx = uniform_int(rng, 1, max_cells);
  const int ny = uniform_int(rng, 1, max_cells);
  const double h = uniform(rng, 0.2, 2.0);
  const double x0 = uniform(rng, -3.0, 3.0);
  const double y0 = uniform(rng, -3.0, 3.0);
  return build_crossed_mesh(nx, ny, Rect{x0, x0 + nx * h, y0, y0 + ny * h});
}

inline P0Field random_p0(const Mesh& mesh, Rng& rng, double lo = -1.0, double hi = 1.0) {
  P0Field f = make_p0(mesh);
  for (std::size_t k = 0; k < f.size(); ++k) f[k] = uniform(rng, lo, hi);
  return f;
}

inline P1Field random_p1(const Mesh& mesh, Rng& rng, double lo = -1.0, double hi = 1.0) {
  P1Field f = make_p1(mesh);
  for (std::size_t j = 0; j < f.size(); ++j) f[j] = uniform(rng, lo, hi);
  return f;
}

/// Random interior fluxes, zero on the boundary.
inline RT0Field random_rt0(const Mesh& mesh, Rng& rng, double scale = 1.0) {
  RT0Field f = make_rt0(mesh);
  for (std::size_t e = 0; e < mesh.num_interior_edges(); ++e) f[e] = uniform(rng, -scale, scale);
  return f;
}

/// Discrete curl of a P1 stream function psi: the flux through edge (a,b)
/// is psi(b) - psi(a) with (a,b) ordered so that the edge normal is the
/// tangent rotated clockwise. Element sums of such fluxes telescope to zero,
/// and psi vanishing on the boundary gives zero boundary fluxes.
inline RT0Field divergence_free_rt0(const Mesh& mesh, Rng& rng, double scale = 1.0) {
  P1Field psi = make_p1(mesh);
  const auto verts = mesh.vertices();
  std::vector<bool> on_boundary(mesh.num_vertices(), false);
  for (const Edge& e : mesh.boundary_edges()) {
    on_boundary[e.verts[0]] = true;
    on_boundary[e.verts[1]] = true;
  }
  for (std::size_t j = 0; j < psi.size(); ++j)
    psi[j] = on_boundary[j] ? 0.0 : uniform(rng, -scale, scale);
  RT0Field v = make_rt0(mesh);
  const auto edges = mesh.edges();
  for (std::size_t id = 0; id < edges.size(); ++id) {
    const Edge& e = edges[id];
    int a = e.verts[0], b = e.verts[1];
    const Point t = verts[b] - verts[a];
    // n = (t_y, -t_x)/|t| is t rotated clockwise.
    const Point n_cw{t.y, -t.x};
    if (dot(n_cw, e.normal) < 0.0) std::swap(a, b);
    v[id] = psi[b] - psi[a];
  }
  return v;
}

/// Interior edge seen from the raw triangle list, with geometry recomputed
/// from vertex coordinates: K and L are the two triangles, `normal` points
/// from K to L, `dist` is the barycenter distance.
struct RawEdge {
  int K = -1;
  int L = -1;
  std::array<int, 2> verts{};
  double length = 0.0;
  double dist = 0.0;
  Point normal;
  /// Index of this edge in mesh.edges() and the sign relating its stored
  /// normal to `normal`.
  int mesh_id = -1;
  double mesh_sign = 1.0;
};

inline Point raw_barycenter(const Mesh& mesh, int k) {
  const auto& t = mesh.triangles()[k];
  const auto v = mesh.vertices();
  return Point{(v[t[0]].x + v[t[1]].x + v[t[2]].x) / 3.0,
               (v[t[0]].y + v[t[1]].y + v[t[2]].y) / 3.0};
}

inline double raw_area(const Mesh& mesh, int k) {
  const auto& t = mesh.triangles()[k];
  const auto v = mesh.vertices();
  return 0.5 * std::abs(cross(v[t[1]] - v[t[0]], v[t[2]] - v[t[0]]));
}

/// All interior edges, built from vertex pairs without the mesh topology.
inline std::vector<RawEdge> raw_interior_edges(const Mesh& mesh) {
  std::map<std::pair<int, int>, std::vector<int>> owners;
  const auto tris = mesh.triangles();
  for (int k = 0; k < static_cast<int>(tris.size()); ++k) {
    for (int i = 0; i < 3; ++i) {
      int a = tris[k][i], b = tris[k][(i + 1) % 3];
      if (a > b) std::swap(a, b);
      owners[{a, b}].push_back(k);
    }
  }
  std::map<std::pair<int, int>, int> mesh_ids;
  const auto edges = mesh.edges();
  for (int id = 0; id < static_cast<int>(edges.size()); ++id) {
    int a = edges[id].verts[0], b = edges[id].verts[1];
    if (a > b) std::swap(a, b);
    mesh_ids[{a, b}] = id;
  }
  const auto v = mesh.vertices();
  std::vector<RawEdge> out;
  for (const auto& [key, ks] : owners) {
    if (ks.size() != 2) continue;
    RawEdge r;
    r.K = ks[0];
    r.L = ks[1];
    r.verts = {key.first, key.second};
    const Point t = v[key.second] - v[key.first];
    r.length = std::hypot(t.x, t.y);
    Point n{t.y / r.length, -t.x / r.length};
    const Point d = raw_barycenter(mesh, r.L) - raw_barycenter(mesh, r.K);
    if (dot(n, d) < 0.0) n = -1.0 * n;
    r.normal = n;
    r.dist = std::hypot(d.x, d.y);
    r.mesh_id = mesh_ids.at(key);
    r.mesh_sign = dot(n, edges[r.mesh_id].normal) > 0.0 ? 1.0 : -1.0;
    out.push_back(r);
  }
  return out;
}

/// Relative comparison |a - b| <= tol * max(1, |a|, |b|).
inline bool close_rel(double a, double b, double tol) {
  return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace chd::testing
