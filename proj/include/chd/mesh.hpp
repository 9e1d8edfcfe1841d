/// @file mesh.hpp
/// @brief Triangular meshes of rectangles with the edge topology used by the
/// upwind forms and the barycenter-orthogonality certificate.
#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace chd {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

inline Point operator-(Point a, Point b) { return {a.x - b.x, a.y - b.y}; }
inline Point operator+(Point a, Point b) { return {a.x + b.x, a.y + b.y}; }
inline Point operator*(double s, Point a) { return {s * a.x, s * a.y}; }
inline double dot(Point a, Point b) { return a.x * b.x + a.y * b.y; }
inline double cross(Point a, Point b) { return a.x * b.y - a.y * b.x; }
double norm(Point a);

/// Axis-aligned rectangle [x0,x1] x [y0,y1].
struct Rect {
  double x0 = 0.0;
  double x1 = 1.0;
  double y0 = 0.0;
  double y1 = 1.0;

  double area() const { return (x1 - x0) * (y1 - y0); }
};

/// An edge of the triangulation. Interior edges carry both neighbours and the
/// unit normal pointing from `left` (K) into `right` (L); boundary edges have
/// `right == -1` and an outward normal.
struct Edge {
  std::array<int, 2> verts{};
  int left = -1;
  int right = -1;
  Point normal;
  double length = 0.0;
  /// Distance between the barycenters of `left` and `right` (0 on the boundary).
  double bary_dist = 0.0;

  bool interior() const { return right >= 0; }
};

/// One incident edge of an element, with sign +1 when the edge normal points
/// out of the element and -1 otherwise.
struct Incidence {
  int edge = -1;
  int sign = 0;
};

/// Immutable triangulation. Edges are stored interior-first: ids
/// [0, num_interior_edges()) are interior, the rest lie on the boundary.
class Mesh {
 public:
  /// Builds topology and geometry from raw data. Triangles are reoriented
  /// counterclockwise. Throws std::invalid_argument on degenerate triangles,
  /// out-of-range indices, or edges shared by more than two triangles.
  static Mesh from_triangles(std::vector<Point> vertices,
                             std::vector<std::array<int, 3>> triangles);

  std::size_t num_vertices() const { return vertices_.size(); }
  std::size_t num_triangles() const { return triangles_.size(); }
  std::size_t num_edges() const { return edges_.size(); }
  std::size_t num_interior_edges() const { return num_interior_; }
  std::size_t num_boundary_edges() const { return edges_.size() - num_interior_; }

  std::span<const Point> vertices() const { return vertices_; }
  std::span<const std::array<int, 3>> triangles() const { return triangles_; }
  std::span<const double> areas() const { return areas_; }
  std::span<const Point> barycenters() const { return barycenters_; }
  std::span<const Edge> edges() const { return edges_; }
  std::span<const Edge> interior_edges() const {
    return std::span<const Edge>(edges_).first(num_interior_);
  }
  std::span<const Edge> boundary_edges() const {
    return std::span<const Edge>(edges_).subspan(num_interior_);
  }
  /// Lumped P1 weight per vertex: sum over incident triangles of |K|/3.
  std::span<const double> vertex_support_volume() const { return support_; }
  /// Local edge i is the edge opposite local vertex i.
  const std::array<Incidence, 3>& element_edges(std::size_t k) const { return element_edges_[k]; }
  /// Triangles incident to vertex j.
  std::span<const int> vertex_triangles(std::size_t j) const;

  double domain_area() const { return domain_area_; }
  /// Mesh size h, reported as the maximum edge length.
  double max_edge_length() const;

 private:
  std::vector<Point> vertices_;
  std::vector<std::array<int, 3>> triangles_;
  std::vector<double> areas_;
  std::vector<Point> barycenters_;
  std::vector<Edge> edges_;
  std::size_t num_interior_ = 0;
  std::vector<double> support_;
  std::vector<std::array<Incidence, 3>> element_edges_;
  std::vector<int> vertex_tri_offsets_;
  std::vector<int> vertex_tri_list_;
  double domain_area_ = 0.0;
};

/// Uniform mesh of nx*ny cells, each split into four triangles by both
/// diagonals through an added center vertex. Cells must be square for the
/// barycenter segments to be orthogonal to the diagonal edges; other aspect
/// ratios are rejected.
Mesh build_crossed_mesh(int nx, int ny, const Rect& domain);

struct OrthogonalityCertificate {
  bool pass = true;
  int worst_edge = -1;
  /// |sin| of the angle between the barycenter segment and the edge normal.
  double worst_deviation = 0.0;
  std::vector<int> failing_edges;
};

/// Checks |(b_L - b_K) . t_e| <= tol * |b_L - b_K| on every interior edge.
OrthogonalityCertificate validate_orthogonality(const Mesh& mesh, double tol = 1e-10);

/// Per-element incident edges with orientation signs.
std::vector<std::array<Incidence, 3>> edge_incidence(const Mesh& mesh);

/// Plain-text format: `vertices N triangles M`, N lines `x y`, M lines `i j k`.
Mesh read_mesh(std::istream& in, double orthogonality_tol = 1e-10);
Mesh load_mesh_file(const std::string& path, double orthogonality_tol = 1e-10);
void write_mesh(std::ostream& out, const Mesh& mesh);

}  // namespace chd
