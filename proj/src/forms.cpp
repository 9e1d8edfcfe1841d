#include "chd/forms.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace chd {

double grad_n0(const Mesh& mesh, const P0Field& mu, std::size_t edge) {
  if (edge >= mesh.num_edges())
    throw std::invalid_argument("grad_n0: edge id " + std::to_string(edge) + " out of range");
  const Edge& e = mesh.edges()[edge];
  if (!e.interior())
    throw std::invalid_argument("grad_n0: edge " + std::to_string(edge) + " lies on the boundary");
  return (mu[e.right] - mu[e.left]) / e.bary_dist;
}

double stabilization_weight(double x, double eta) {
  if (eta == 0.0) return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
  return x / (std::abs(x) + eta);
}

double stabilization_weight_derivative(double x, double eta) {
  if (eta == 0.0) return 0.0;
  const double d = std::abs(x) + eta;
  return eta / (d * d);
}

UpwindEdge upwind_edge(double flux, double phi_left, double phi_right) {
  UpwindEdge out;
  const double fp = pos_part(flux);
  const double fm = neg_part(flux);
  out.value = fp * phi_left - fm * phi_right;
  out.d_flux = (flux > 0.0 ? phi_left : 0.0) + (flux < 0.0 ? phi_right : 0.0);
  out.d_left = fp;
  out.d_right = -fm;
  return out;
}

MobilityEdge mobility_edge(double len_over_dist, double mu_left, double mu_right,
                           MobilitySplit m_left, MobilitySplit m_right, MobilitySplit dm_left,
                           MobilitySplit dm_right) {
  MobilityEdge out;
  const double j = mu_left - mu_right;
  const double jp = pos_part(j);
  const double jm = neg_part(j);
  const double sum_from_left = m_left.up + m_right.down;
  const double sum_from_right = m_right.up + m_left.down;
  const double mob_l = pos_part(sum_from_left);
  const double mob_r = pos_part(sum_from_right);
  out.value = len_over_dist * (jp * mob_l - jm * mob_r);
  const double dj = len_over_dist * ((j > 0.0 ? mob_l : 0.0) + (j < 0.0 ? mob_r : 0.0));
  out.d_mu_left = dj;
  out.d_mu_right = -dj;
  const double act_l = sum_from_left > 0.0 ? 1.0 : 0.0;
  const double act_r = sum_from_right > 0.0 ? 1.0 : 0.0;
  out.d_w_left = len_over_dist * (jp * act_l * dm_left.up - jm * act_r * dm_left.down);
  out.d_w_right = len_over_dist * (jp * act_l * dm_right.down - jm * act_r * dm_right.up);
  return out;
}

std::vector<double> a_upw_dual(const Mesh& mesh, const RT0Field& v, const P0Field& phi) {
  std::vector<double> out(mesh.num_triangles(), 0.0);
  const auto edges = mesh.interior_edges();
  for (std::size_t id = 0; id < edges.size(); ++id) {
    const Edge& e = edges[id];
    const double val = upwind_edge(v[id], phi[e.left], phi[e.right]).value;
    out[e.left] += val;
    out[e.right] -= val;
  }
  return out;
}

double a_upw(const Mesh& mesh, const RT0Field& v, const P0Field& phi, const P0Field& test) {
  const auto dual = a_upw_dual(mesh, v, phi);
  double s = 0.0;
  for (std::size_t k = 0; k < dual.size(); ++k) s += dual[k] * test[k];
  return s;
}

std::vector<double> b_upw_dual(const Mesh& mesh, const P0Field& mu, const P0Field& w,
                               const MobilitySpec& spec) {
  std::vector<double> out(mesh.num_triangles(), 0.0);
  const auto edges = mesh.interior_edges();
  for (const Edge& e : edges) {
    const double val = mobility_edge(e.length / e.bary_dist, mu[e.left], mu[e.right],
                                     mobility_split(spec, w[e.left]),
                                     mobility_split(spec, w[e.right]))
                           .value;
    out[e.left] += val;
    out[e.right] -= val;
  }
  return out;
}

double b_upw(const Mesh& mesh, const P0Field& mu, const P0Field& w, const MobilitySpec& spec,
             const P0Field& test) {
  const auto dual = b_upw_dual(mesh, mu, w, spec);
  double s = 0.0;
  for (std::size_t k = 0; k < dual.size(); ++k) s += dual[k] * test[k];
  return s;
}

double c_h(const Mesh& mesh, const P0Field& w, const P0Field& mu, const RT0Field& vbar) {
  double s = 0.0;
  for (std::size_t k = 0; k < mesh.num_triangles(); ++k) {
    double net = 0.0;
    for (const Incidence& inc : mesh.element_edges(k)) net += inc.sign * vbar[inc.edge];
    s -= mu[k] * w[k] * net;
  }
  const auto edges = mesh.interior_edges();
  for (std::size_t id = 0; id < edges.size(); ++id) {
    const Edge& e = edges[id];
    s -= vbar[id] * 0.5 * (w[e.left] + w[e.right]) * (mu[e.left] - mu[e.right]);
  }
  return s;
}

std::vector<double> c_h_dual(const Mesh& mesh, const P0Field& w, const P0Field& mu) {
  const auto edges = mesh.interior_edges();
  std::vector<double> out(edges.size());
  for (std::size_t id = 0; id < edges.size(); ++id) {
    const Edge& e = edges[id];
    const double wk = w[e.left], wl = w[e.right], mk = mu[e.left], ml = mu[e.right];
    out[id] = -(mk * wk - ml * wl) - 0.5 * (wk + wl) * (mk - ml);
  }
  return out;
}

double s_h(const Mesh& mesh, const RT0Field& u_vel, const P0Field& phi, const P0Field& mu,
           const RT0Field& test, double eta) {
  const auto dual = s_h_dual(mesh, u_vel, phi, mu, eta);
  double s = 0.0;
  for (std::size_t id = 0; id < dual.size(); ++id) s += dual[id] * test[id];
  return s;
}

std::vector<double> s_h_dual(const Mesh& mesh, const RT0Field& u_vel, const P0Field& phi,
                             const P0Field& mu, double eta) {
  const auto edges = mesh.interior_edges();
  std::vector<double> out(edges.size());
  for (std::size_t id = 0; id < edges.size(); ++id) {
    const Edge& e = edges[id];
    const double g = stabilization_weight(u_vel[id] / e.length, eta);
    out[id] = -0.5 * g * (phi[e.left] - phi[e.right]) * (mu[e.left] - mu[e.right]);
  }
  return out;
}

double tau_diag(const Mesh& mesh, const RT0Field& v, const P0Field& phi, const P0Field& mu,
                double sigma, double eta) {
  const auto edges = mesh.interior_edges();
  double s = 0.0;
  for (std::size_t id = 0; id < edges.size(); ++id) {
    const Edge& e = edges[id];
    const double vn = std::abs(v[id]) / e.length;
    if (vn == 0.0) continue;
    const double ratio = ((1.0 - sigma) * vn + eta) / (vn + eta);
    s += e.length * ratio * vn * (phi[e.left] - phi[e.right]) * (mu[e.left] - mu[e.right]);
  }
  return 0.5 * s;
}

}  // namespace chd
