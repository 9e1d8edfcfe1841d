/// @file forms.hpp
/// @brief Discrete forms of the scheme on RT0 / P0 data: the classical edge
/// upwind a_upw, the mobility-split barycentric upwind b_upw, the centered
/// force form c_h, the stabilization s_h and the tau remainder.
///
/// Jumps and averages on an interior edge e = K|L follow the edge orientation:
/// [[w]] = w_K - w_L and <w> = (w_K + w_L)/2, with K = `Edge::left`. Every
/// edge integral has a constant integrand, so all forms are evaluated exactly.
///
/// Each form is available as a scalar and as a dual vector indexed by the
/// test space (elements for a_upw/b_upw, interior edges for c_h/s_h). The
/// per-edge primitives with partial derivatives feed the Newton Jacobian.
#pragma once

#include <cstddef>
#include <vector>

#include "chd/mesh.hpp"
#include "chd/physics.hpp"
#include "chd/spaces.hpp"

namespace chd {

/// Two-point normal gradient (mu_L - mu_K) / D_e.
/// Throws std::invalid_argument for a boundary edge or an out-of-range id.
double grad_n0(const Mesh& mesh, const P0Field& mu, std::size_t edge);

/// g(x) = x / (|x| + eta), or sign(x) with sign(0) = 0 when eta = 0.
double stabilization_weight(double x, double eta);
/// dg/dx; zero for eta = 0.
double stabilization_weight_derivative(double x, double eta);

/// Edge contribution F_+ phi_K - F_- phi_L of the classical upwind, where F is
/// the total flux through the edge, with partial derivatives.
struct UpwindEdge {
  double value = 0.0;
  double d_flux = 0.0;
  double d_left = 0.0;
  double d_right = 0.0;
};
UpwindEdge upwind_edge(double flux, double phi_left, double phi_right);

/// Edge contribution (|e|/D_e)(j_+ (Mup_K + Mdown_L)_+ - j_- (Mup_L + Mdown_K)_+)
/// with j = mu_K - mu_L, and its partial derivatives.
struct MobilityEdge {
  double value = 0.0;
  double d_mu_left = 0.0;
  double d_mu_right = 0.0;
  double d_w_left = 0.0;
  double d_w_right = 0.0;
};
MobilityEdge mobility_edge(double len_over_dist, double mu_left, double mu_right,
                           MobilitySplit m_left, MobilitySplit m_right,
                           MobilitySplit dm_left = {}, MobilitySplit dm_right = {});

/// a_upw(v, phi, test).
double a_upw(const Mesh& mesh, const RT0Field& v, const P0Field& phi, const P0Field& test);
/// Dual vector: entry K is a_upw(v, phi, 1_K).
std::vector<double> a_upw_dual(const Mesh& mesh, const RT0Field& v, const P0Field& phi);

/// b_upw(mu, M(w), test) with the truncated split mobility.
double b_upw(const Mesh& mesh, const P0Field& mu, const P0Field& w, const MobilitySpec& spec,
             const P0Field& test);
std::vector<double> b_upw_dual(const Mesh& mesh, const P0Field& mu, const P0Field& w,
                               const MobilitySpec& spec);

/// c_h(w, mu, vbar) = -sum_K mu_K w_K (net flux of vbar out of K)
///                    - sum_e vbar_e <w> [[mu]].
double c_h(const Mesh& mesh, const P0Field& w, const P0Field& mu, const RT0Field& vbar);
/// Dual vector over interior edges: entry e is c_h(w, mu, phi_e).
std::vector<double> c_h_dual(const Mesh& mesh, const P0Field& w, const P0Field& mu);

/// s_h(u_vel, phi, mu, test) for regularization eta >= 0.
double s_h(const Mesh& mesh, const RT0Field& u_vel, const P0Field& phi, const P0Field& mu,
           const RT0Field& test, double eta);
std::vector<double> s_h_dual(const Mesh& mesh, const RT0Field& u_vel, const P0Field& phi,
                             const P0Field& mu, double eta);

/// tau = 1/2 sum_e |e| ((1-sigma)|v_n| + eta)/(|v_n| + eta) |v_n| [[phi]][[mu]].
double tau_diag(const Mesh& mesh, const RT0Field& v, const P0Field& phi, const P0Field& mu,
                double sigma, double eta);

}  // namespace chd
