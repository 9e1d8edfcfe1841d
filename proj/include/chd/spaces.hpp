/// @file spaces.hpp
/// @brief Discrete function spaces (P0 DG, lumped P1, lowest-order
/// Raviart-Thomas, P0 pressure) and the projection operators between them.
#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/SparseCore>

#include "chd/mesh.hpp"

namespace chd {

/// Coefficient vector tagged with the space it lives in.
template <typename Tag>
struct DiscreteField {
  std::vector<double> values;

  DiscreteField() = default;
  explicit DiscreteField(std::size_t n, double fill = 0.0) : values(n, fill) {}
  explicit DiscreteField(std::vector<double> v) : values(std::move(v)) {}

  std::size_t size() const { return values.size(); }
  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }
  std::span<const double> view() const { return values; }
  std::span<double> view() { return values; }
};

struct P0Tag;
struct P1Tag;
struct RT0Tag;
struct PressureTag;

/// One value per triangle.
using P0Field = DiscreteField<P0Tag>;
/// One value per vertex (continuous piecewise linear).
using P1Field = DiscreteField<P1Tag>;
/// One coefficient per edge: the total flux across the edge in the direction
/// of the edge normal. Velocity fields produced by the solver have zero
/// boundary coefficients; interpolated test fields may not.
using RT0Field = DiscreteField<RT0Tag>;
/// One value per triangle, zero area-weighted mean after post-processing.
using PressureField = DiscreteField<PressureTag>;

P0Field make_p0(const Mesh& mesh, double fill = 0.0);
P1Field make_p1(const Mesh& mesh, double fill = 0.0);
RT0Field make_rt0(const Mesh& mesh, double fill = 0.0);

/// Element averages of a P1 function (mean of the three vertex values).
P0Field pi0(const Mesh& mesh, const P1Field& g);
/// Mass-lumped regularization: support-weighted vertex averages.
P1Field pi1h(const Mesh& mesh, const P0Field& g);
/// pi0(pi1h(g)).
P0Field pi0_pi1h(const Mesh& mesh, const P0Field& g);

double lumped_mass_product(const Mesh& mesh, const P1Field& a, const P1Field& b);
/// Exact L2 product of a P0 and a P1 function.
double l2_product(const Mesh& mesh, const P0Field& a, const P1Field& b);
double l2_product(const Mesh& mesh, const P0Field& a, const P0Field& b);
double integral(const Mesh& mesh, const P0Field& g);
/// Lumped integral sum_j w_j g_j (exact for P1).
double integral(const Mesh& mesh, const P1Field& g);

/// Local P1 stiffness matrix of triangle k, in local vertex order.
std::array<std::array<double, 3>, 3> p1_local_stiffness(const Mesh& mesh, std::size_t k);
Eigen::SparseMatrix<double> p1_stiffness_matrix(const Mesh& mesh);
/// Consistent P1 mass matrix (exact (phi_i, phi_j)).
Eigen::SparseMatrix<double> p1_mass_matrix(const Mesh& mesh);
/// Dual vector (grad a, grad phi_j) for every vertex j.
std::vector<double> p1_stiffness_apply(const Mesh& mesh, const P1Field& a);
/// pi1h as an (#vertices x #triangles) matrix.
Eigen::SparseMatrix<double> pi1h_matrix(const Mesh& mesh);

/// Per-element (sum of signed edge fluxes) / |K|.
P0Field rt0_divergence(const Mesh& mesh, const RT0Field& v);
/// Local RT0 mass matrix of triangle k for its local edges (signs included).
std::array<std::array<double, 3>, 3> rt0_local_mass(const Mesh& mesh, std::size_t k);
/// Exact L2 product of two RT0 fields.
double rt0_l2_product(const Mesh& mesh, const RT0Field& v, const RT0Field& w);
/// Point value of v inside triangle k.
Point rt0_value(const Mesh& mesh, const RT0Field& v, std::size_t k, Point x);
/// RT0 interpolant of a constant vector field (flux = |e| c . n_e on all edges).
RT0Field rt0_interpolate_constant(const Mesh& mesh, Point c);

/// Area-weighted mean of a pressure field.
double pressure_mean(const Mesh& mesh, const PressureField& p);
/// Shifts p in place to zero mean; returns the removed mean.
double remove_pressure_mean(const Mesh& mesh, PressureField& p);

/// Field snapshot: one field per kind. Written as CSV with header
/// `kind,index,value` and 17 significant digits; kind is one of
/// p0 (nutrient n), p1 (regularized tumor fraction pi1h u), rt0 (edge fluxes
/// of v) and pressure.
struct Snapshot {
  P0Field n;
  P1Field pi1h_u;
  RT0Field v;
  PressureField p;
};
void write_snapshot_csv(std::ostream& out, const Snapshot& snap);
Snapshot read_snapshot_csv(std::istream& in);

}  // namespace chd
