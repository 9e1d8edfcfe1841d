#include "chd/spaces.hpp"

#include <cmath>
#include <cstdlib>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace chd {

P0Field make_p0(const Mesh& mesh, double fill) { return P0Field(mesh.num_triangles(), fill); }
P1Field make_p1(const Mesh& mesh, double fill) { return P1Field(mesh.num_vertices(), fill); }
RT0Field make_rt0(const Mesh& mesh, double fill) { return RT0Field(mesh.num_edges(), fill); }

P0Field pi0(const Mesh& mesh, const P1Field& g) {
  P0Field out = make_p0(mesh);
  const auto tris = mesh.triangles();
  for (std::size_t k = 0; k < tris.size(); ++k) {
    const auto& t = tris[k];
    out[k] = (g[t[0]] + g[t[1]] + g[t[2]]) / 3.0;
  }
  return out;
}

P1Field pi1h(const Mesh& mesh, const P0Field& g) {
  P1Field out = make_p1(mesh);
  const auto areas = mesh.areas();
  const auto tris = mesh.triangles();
  for (std::size_t k = 0; k < tris.size(); ++k) {
    const double w = areas[k] * g[k] / 3.0;
    for (int v : tris[k]) out[v] += w;
  }
  const auto support = mesh.vertex_support_volume();
  for (std::size_t j = 0; j < out.size(); ++j) out[j] /= support[j];
  return out;
}

P0Field pi0_pi1h(const Mesh& mesh, const P0Field& g) { return pi0(mesh, pi1h(mesh, g)); }

double lumped_mass_product(const Mesh& mesh, const P1Field& a, const P1Field& b) {
  const auto w = mesh.vertex_support_volume();
  double s = 0.0;
  for (std::size_t j = 0; j < w.size(); ++j) s += w[j] * a[j] * b[j];
  return s;
}

double l2_product(const Mesh& mesh, const P0Field& a, const P1Field& b) {
  const auto areas = mesh.areas();
  const auto tris = mesh.triangles();
  double s = 0.0;
  for (std::size_t k = 0; k < tris.size(); ++k) {
    const auto& t = tris[k];
    s += areas[k] * a[k] * (b[t[0]] + b[t[1]] + b[t[2]]) / 3.0;
  }
  return s;
}

double l2_product(const Mesh& mesh, const P0Field& a, const P0Field& b) {
  const auto areas = mesh.areas();
  double s = 0.0;
  for (std::size_t k = 0; k < areas.size(); ++k) s += areas[k] * a[k] * b[k];
  return s;
}

double integral(const Mesh& mesh, const P0Field& g) {
  const auto areas = mesh.areas();
  double s = 0.0;
  for (std::size_t k = 0; k < areas.size(); ++k) s += areas[k] * g[k];
  return s;
}

double integral(const Mesh& mesh, const P1Field& g) {
  const auto w = mesh.vertex_support_volume();
  double s = 0.0;
  for (std::size_t j = 0; j < w.size(); ++j) s += w[j] * g[j];
  return s;
}

std::array<std::array<double, 3>, 3> p1_local_stiffness(const Mesh& mesh, std::size_t k) {
  const auto& t = mesh.triangles()[k];
  const auto verts = mesh.vertices();
  const double area = mesh.areas()[k];
  std::array<Point, 3> grad;
  for (int i = 0; i < 3; ++i) {
    const Point d = verts[t[(i + 2) % 3]] - verts[t[(i + 1) % 3]];
    grad[i] = {-d.y / (2.0 * area), d.x / (2.0 * area)};
  }
  std::array<std::array<double, 3>, 3> s{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) s[i][j] = area * dot(grad[i], grad[j]);
  return s;
}

Eigen::SparseMatrix<double> p1_stiffness_matrix(const Mesh& mesh) {
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(9 * mesh.num_triangles());
  const auto tris = mesh.triangles();
  for (std::size_t k = 0; k < tris.size(); ++k) {
    const auto s = p1_local_stiffness(mesh, k);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) trip.emplace_back(tris[k][i], tris[k][j], s[i][j]);
  }
  const auto n = static_cast<Eigen::Index>(mesh.num_vertices());
  Eigen::SparseMatrix<double> m(n, n);
  m.setFromTriplets(trip.begin(), trip.end());
  return m;
}

Eigen::SparseMatrix<double> p1_mass_matrix(const Mesh& mesh) {
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(9 * mesh.num_triangles());
  const auto tris = mesh.triangles();
  const auto areas = mesh.areas();
  for (std::size_t k = 0; k < tris.size(); ++k) {
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        trip.emplace_back(tris[k][i], tris[k][j], areas[k] * (i == j ? 2.0 : 1.0) / 12.0);
  }
  const auto n = static_cast<Eigen::Index>(mesh.num_vertices());
  Eigen::SparseMatrix<double> m(n, n);
  m.setFromTriplets(trip.begin(), trip.end());
  return m;
}

std::vector<double> p1_stiffness_apply(const Mesh& mesh, const P1Field& a) {
  std::vector<double> out(mesh.num_vertices(), 0.0);
  const auto tris = mesh.triangles();
  for (std::size_t k = 0; k < tris.size(); ++k) {
    const auto s = p1_local_stiffness(mesh, k);
    const auto& t = tris[k];
    for (int i = 0; i < 3; ++i)
      out[t[i]] += s[i][0] * a[t[0]] + s[i][1] * a[t[1]] + s[i][2] * a[t[2]];
  }
  return out;
}

Eigen::SparseMatrix<double> pi1h_matrix(const Mesh& mesh) {
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(3 * mesh.num_triangles());
  const auto tris = mesh.triangles();
  const auto areas = mesh.areas();
  const auto support = mesh.vertex_support_volume();
  for (std::size_t k = 0; k < tris.size(); ++k) {
    for (int v : tris[k])
      trip.emplace_back(v, static_cast<int>(k), areas[k] / (3.0 * support[v]));
  }
  Eigen::SparseMatrix<double> m(static_cast<Eigen::Index>(mesh.num_vertices()),
                                static_cast<Eigen::Index>(mesh.num_triangles()));
  m.setFromTriplets(trip.begin(), trip.end());
  return m;
}

P0Field rt0_divergence(const Mesh& mesh, const RT0Field& v) {
  P0Field out = make_p0(mesh);
  const auto areas = mesh.areas();
  for (std::size_t k = 0; k < out.size(); ++k) {
    double s = 0.0;
    for (const Incidence& inc : mesh.element_edges(k)) s += inc.sign * v[inc.edge];
    out[k] = s / areas[k];
  }
  return out;
}

std::array<std::array<double, 3>, 3> rt0_local_mass(const Mesh& mesh, std::size_t k) {
  const auto& t = mesh.triangles()[k];
  const auto verts = mesh.vertices();
  const double area = mesh.areas()[k];
  const auto& inc = mesh.element_edges(k);
  // Edge-midpoint rule is exact for the quadratic integrand.
  std::array<Point, 3> mids;
  for (int i = 0; i < 3; ++i) mids[i] = 0.5 * (verts[t[(i + 1) % 3]] + verts[t[(i + 2) % 3]]);
  std::array<std::array<double, 3>, 3> m{};
  const double scale = 1.0 / (4.0 * area * area) * (area / 3.0);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (const Point& q : mids) s += dot(q - verts[t[i]], q - verts[t[j]]);
      m[i][j] = inc[i].sign * inc[j].sign * scale * s;
    }
  }
  return m;
}

double rt0_l2_product(const Mesh& mesh, const RT0Field& v, const RT0Field& w) {
  double s = 0.0;
  for (std::size_t k = 0; k < mesh.num_triangles(); ++k) {
    const auto m = rt0_local_mass(mesh, k);
    const auto& inc = mesh.element_edges(k);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) s += v[inc[i].edge] * m[i][j] * w[inc[j].edge];
  }
  return s;
}

Point rt0_value(const Mesh& mesh, const RT0Field& v, std::size_t k, Point x) {
  const auto& t = mesh.triangles()[k];
  const auto verts = mesh.vertices();
  const double area = mesh.areas()[k];
  const auto& inc = mesh.element_edges(k);
  Point out{};
  for (int i = 0; i < 3; ++i) {
    const double c = inc[i].sign * v[inc[i].edge] / (2.0 * area);
    out = out + c * (x - verts[t[i]]);
  }
  return out;
}

RT0Field rt0_interpolate_constant(const Mesh& mesh, Point c) {
  RT0Field out = make_rt0(mesh);
  const auto edges = mesh.edges();
  for (std::size_t e = 0; e < edges.size(); ++e) out[e] = edges[e].length * dot(c, edges[e].normal);
  return out;
}

double pressure_mean(const Mesh& mesh, const PressureField& p) {
  const auto areas = mesh.areas();
  double s = 0.0;
  for (std::size_t k = 0; k < areas.size(); ++k) s += areas[k] * p[k];
  return s / mesh.domain_area();
}

double remove_pressure_mean(const Mesh& mesh, PressureField& p) {
  const double mean = pressure_mean(mesh, p);
  for (double& x : p.values) x -= mean;
  return mean;
}

namespace {

/// Full-string decimal parse. Unlike std::stod, subnormal values are accepted.
double parse_number(const std::string& text, const char* context) {
  char* end = nullptr;
  const double x = std::strtod(text.c_str(), &end);
  if (text.empty() || end != text.c_str() + text.size())
    throw std::runtime_error(std::string(context) + ": not a number: '" + text + "'");
  return x;
}

template <typename F>
void write_rows(std::ostream& out, const char* kind, const F& field) {
  for (std::size_t i = 0; i < field.size(); ++i) out << kind << ',' << i << ',' << field[i] << '\n';
}

template <typename F>
void put(F& field, std::size_t index, double value) {
  if (index >= field.size()) field.values.resize(index + 1, 0.0);
  field[index] = value;
}

}  // namespace

void write_snapshot_csv(std::ostream& out, const Snapshot& snap) {
  const auto old = out.precision(17);
  out << "kind,index,value\n";
  write_rows(out, "p0", snap.n);
  write_rows(out, "p1", snap.pi1h_u);
  write_rows(out, "rt0", snap.v);
  write_rows(out, "pressure", snap.p);
  out.precision(old);
}

Snapshot read_snapshot_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "kind,index,value")
    throw std::runtime_error("snapshot: missing header 'kind,index,value'");
  Snapshot snap;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos)
      throw std::runtime_error("snapshot: malformed line " + std::to_string(lineno));
    const std::string kind = line.substr(0, c1);
    const std::size_t index = std::stoul(line.substr(c1 + 1, c2 - c1 - 1));
    const double value = parse_number(line.substr(c2 + 1), "snapshot");
    if (kind == "p0") put(snap.n, index, value);
    else if (kind == "p1") put(snap.pi1h_u, index, value);
    else if (kind == "rt0") put(snap.v, index, value);
    else if (kind == "pressure") put(snap.p, index, value);
    else throw std::runtime_error("snapshot: unknown kind '" + kind + "'");
  }
  return snap;
}

}  // namespace chd
