#include "chd/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace chd {

double norm(Point a) { return std::hypot(a.x, a.y); }

namespace {

struct RawEdge {
  std::array<int, 2> verts;
  int left;
  int right;
  int left_local;  // local index (opposite vertex) inside `left`
  int right_local;
};

}  // namespace

Mesh Mesh::from_triangles(std::vector<Point> vertices, std::vector<std::array<int, 3>> triangles) {
  Mesh m;
  m.vertices_ = std::move(vertices);
  m.triangles_ = std::move(triangles);
  const int nv = static_cast<int>(m.vertices_.size());
  const std::size_t nt = m.triangles_.size();
  if (nt == 0) throw std::invalid_argument("mesh: no triangles");

  m.areas_.resize(nt);
  m.barycenters_.resize(nt);
  for (std::size_t k = 0; k < nt; ++k) {
    auto& tri = m.triangles_[k];
    for (int v : tri) {
      if (v < 0 || v >= nv) throw std::invalid_argument("mesh: triangle vertex index out of range");
    }
    if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2])
      throw std::invalid_argument("mesh: triangle with repeated vertex");
    const Point a = m.vertices_[tri[0]];
    const Point b = m.vertices_[tri[1]];
    const Point c = m.vertices_[tri[2]];
    double twice = cross(b - a, c - a);
    if (twice < 0) {
      std::swap(tri[1], tri[2]);
      twice = -twice;
    }
    const double scale = std::max({norm(b - a), norm(c - a), norm(c - b)});
    if (!(twice > 1e-14 * scale * scale)) throw std::invalid_argument("mesh: degenerate triangle");
    m.areas_[k] = 0.5 * twice;
    m.barycenters_[k] = (1.0 / 3.0) * (m.vertices_[tri[0]] + m.vertices_[tri[1]] + m.vertices_[tri[2]]);
  }

  std::map<std::pair<int, int>, std::size_t> lookup;
  std::vector<RawEdge> raw;
  raw.reserve(3 * nt);
  for (std::size_t k = 0; k < nt; ++k) {
    const auto& tri = m.triangles_[k];
    for (int i = 0; i < 3; ++i) {
      const int a = tri[(i + 1) % 3];
      const int b = tri[(i + 2) % 3];
      const auto key = std::minmax(a, b);
      auto it = lookup.find(key);
      if (it == lookup.end()) {
        lookup.emplace(key, raw.size());
        raw.push_back({{a, b}, static_cast<int>(k), -1, i, -1});
      } else {
        RawEdge& e = raw[it->second];
        if (e.right >= 0) throw std::invalid_argument("mesh: edge shared by more than two triangles");
        e.right = static_cast<int>(k);
        e.right_local = i;
      }
    }
  }

  // Interior edges first, discovery order preserved inside each group.
  std::stable_partition(raw.begin(), raw.end(), [](const RawEdge& e) { return e.right >= 0; });
  m.num_interior_ = static_cast<std::size_t>(
      std::count_if(raw.begin(), raw.end(), [](const RawEdge& e) { return e.right >= 0; }));

  m.edges_.resize(raw.size());
  m.element_edges_.assign(nt, {});
  for (std::size_t id = 0; id < raw.size(); ++id) {
    const RawEdge& r = raw[id];
    Edge& e = m.edges_[id];
    e.verts = r.verts;  // oriented counterclockwise with respect to `left`
    e.left = r.left;
    e.right = r.right;
    const Point d = m.vertices_[r.verts[1]] - m.vertices_[r.verts[0]];
    e.length = norm(d);
    e.normal = {d.y / e.length, -d.x / e.length};
    if (r.right >= 0) {
      e.bary_dist = norm(m.barycenters_[r.right] - m.barycenters_[r.left]);
      m.element_edges_[r.right][r.right_local] = {static_cast<int>(id), -1};
    }
    m.element_edges_[r.left][r.left_local] = {static_cast<int>(id), +1};
  }

  m.support_.assign(nv, 0.0);
  std::vector<int> count(nv, 0);
  for (std::size_t k = 0; k < nt; ++k) {
    for (int v : m.triangles_[k]) {
      m.support_[v] += m.areas_[k] / 3.0;
      ++count[v];
    }
  }
  m.vertex_tri_offsets_.assign(nv + 1, 0);
  for (int v = 0; v < nv; ++v) m.vertex_tri_offsets_[v + 1] = m.vertex_tri_offsets_[v] + count[v];
  m.vertex_tri_list_.resize(m.vertex_tri_offsets_[nv]);
  std::vector<int> fill(m.vertex_tri_offsets_.begin(), m.vertex_tri_offsets_.end() - 1);
  for (std::size_t k = 0; k < nt; ++k) {
    for (int v : m.triangles_[k]) m.vertex_tri_list_[fill[v]++] = static_cast<int>(k);
  }
  for (int v = 0; v < nv; ++v) {
    if (count[v] == 0) throw std::invalid_argument("mesh: vertex not used by any triangle");
  }

  m.domain_area_ = 0.0;
  for (double a : m.areas_) m.domain_area_ += a;
  return m;
}

std::span<const int> Mesh::vertex_triangles(std::size_t j) const {
  const auto b = static_cast<std::size_t>(vertex_tri_offsets_[j]);
  const auto e = static_cast<std::size_t>(vertex_tri_offsets_[j + 1]);
  return std::span<const int>(vertex_tri_list_).subspan(b, e - b);
}

double Mesh::max_edge_length() const {
  double h = 0.0;
  for (const Edge& e : edges_) h = std::max(h, e.length);
  return h;
}

Mesh build_crossed_mesh(int nx, int ny, const Rect& domain) {
  if (nx < 1 || ny < 1) throw std::invalid_argument("build_crossed_mesh: nx and ny must be >= 1");
  const double lx = domain.x1 - domain.x0;
  const double ly = domain.y1 - domain.y0;
  if (!(lx > 0.0) || !(ly > 0.0) || !std::isfinite(lx) || !std::isfinite(ly))
    throw std::invalid_argument("build_crossed_mesh: degenerate rectangle");
  const double hx = lx / nx;
  const double hy = ly / ny;
  if (std::abs(hx - hy) > 1e-12 * std::max(hx, hy))
    throw std::invalid_argument(
        "build_crossed_mesh: cells must be square (domain aspect ratio must equal nx/ny) "
        "for barycenter segments to be orthogonal to the cell diagonals");

  std::vector<Point> verts;
  verts.reserve(static_cast<std::size_t>((nx + 1) * (ny + 1) + nx * ny));
  for (int j = 0; j <= ny; ++j) {
    for (int i = 0; i <= nx; ++i) {
      // Snap the last row/column to the domain edge so the area sums exactly.
      const double x = (i == nx) ? domain.x1 : domain.x0 + i * hx;
      const double y = (j == ny) ? domain.y1 : domain.y0 + j * hy;
      verts.push_back({x, y});
    }
  }
  const int corner_count = (nx + 1) * (ny + 1);
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      verts.push_back({domain.x0 + (i + 0.5) * hx, domain.y0 + (j + 0.5) * hy});
    }
  }
  auto corner = [nx](int i, int j) { return j * (nx + 1) + i; };

  std::vector<std::array<int, 3>> tris;
  tris.reserve(static_cast<std::size_t>(4 * nx * ny));
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const int c = corner_count + j * nx + i;
      const int c00 = corner(i, j), c10 = corner(i + 1, j);
      const int c11 = corner(i + 1, j + 1), c01 = corner(i, j + 1);
      tris.push_back({c00, c10, c});
      tris.push_back({c10, c11, c});
      tris.push_back({c11, c01, c});
      tris.push_back({c01, c00, c});
    }
  }
  return Mesh::from_triangles(std::move(verts), std::move(tris));
}

OrthogonalityCertificate validate_orthogonality(const Mesh& mesh, double tol) {
  OrthogonalityCertificate cert;
  const auto bary = mesh.barycenters();
  const auto verts = mesh.vertices();
  const auto edges = mesh.interior_edges();
  for (std::size_t id = 0; id < edges.size(); ++id) {
    const Edge& e = edges[id];
    const Point seg = bary[e.right] - bary[e.left];
    const Point t = verts[e.verts[1]] - verts[e.verts[0]];
    const double seg_len = norm(seg);
    const double dev = seg_len > 0 ? std::abs(dot(seg, t)) / (seg_len * norm(t)) : 1.0;
    if (dev > cert.worst_deviation || cert.worst_edge < 0) {
      cert.worst_deviation = dev;
      cert.worst_edge = static_cast<int>(id);
    }
    if (!(dev <= tol)) {
      cert.pass = false;
      cert.failing_edges.push_back(static_cast<int>(id));
    }
  }
  return cert;
}

std::vector<std::array<Incidence, 3>> edge_incidence(const Mesh& mesh) {
  std::vector<std::array<Incidence, 3>> out(mesh.num_triangles());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = mesh.element_edges(k);
  return out;
}

Mesh read_mesh(std::istream& in, double orthogonality_tol) {
  std::string kw_v, kw_t;
  long long nv = -1, nt = -1;
  if (!(in >> kw_v >> nv >> kw_t >> nt) || kw_v != "vertices" || kw_t != "triangles" || nv < 3 ||
      nt < 1)
    throw std::runtime_error("mesh file: expected header 'vertices N triangles M'");
  std::vector<Point> verts(static_cast<std::size_t>(nv));
  for (auto& p : verts) {
    if (!(in >> p.x >> p.y)) throw std::runtime_error("mesh file: truncated vertex list");
  }
  std::vector<std::array<int, 3>> tris(static_cast<std::size_t>(nt));
  for (auto& t : tris) {
    if (!(in >> t[0] >> t[1] >> t[2])) throw std::runtime_error("mesh file: truncated triangle list");
  }
  Mesh mesh = Mesh::from_triangles(std::move(verts), std::move(tris));
  const auto cert = validate_orthogonality(mesh, orthogonality_tol);
  if (!cert.pass) {
    std::ostringstream msg;
    msg << "mesh file: " << cert.failing_edges.size()
        << " interior edges violate barycenter orthogonality (worst edge " << cert.worst_edge
        << ", deviation " << cert.worst_deviation << ")";
    throw std::runtime_error(msg.str());
  }
  return mesh;
}

Mesh load_mesh_file(const std::string& path, double orthogonality_tol) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("mesh file: cannot open " + path);
  return read_mesh(in, orthogonality_tol);
}

void write_mesh(std::ostream& out, const Mesh& mesh) {
  const auto old_prec = out.precision(17);
  out << "vertices " << mesh.num_vertices() << " triangles " << mesh.num_triangles() << '\n';
  for (const Point& p : mesh.vertices()) out << p.x << ' ' << p.y << '\n';
  for (const auto& t : mesh.triangles()) out << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
  out.precision(old_prec);
}

}  // namespace chd
