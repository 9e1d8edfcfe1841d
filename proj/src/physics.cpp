#include "chd/physics.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "chd/kernels.hpp"
#include "chd/quadrature.hpp"

namespace chd {

namespace {

double ipow(double x, int k) {
  double r = 1.0;
  for (int i = 0; i < k; ++i) r *= x;
  return r;
}

}  // namespace

MobilitySpec MobilitySpec::make(int p, int q) {
  if (p < 1 || q < 1) throw std::invalid_argument("mobility: exponents must be >= 1");
  MobilitySpec s;
  s.p = p;
  s.q = q;
  s.w_star = static_cast<double>(p) / static_cast<double>(p + q);
  s.K_pq = 1.0 / (ipow(s.w_star, p) * ipow(1.0 - s.w_star, q));
  return s;
}

double mobility_eval(const MobilitySpec& spec, double v) {
  if (!(v > 0.0) || !(v < 1.0)) return 0.0;
  return spec.K_pq * ipow(v, spec.p) * ipow(1.0 - v, spec.q);
}

double mobility_derivative(const MobilitySpec& spec, double v) {
  if (v < 0.0 || v > 1.0) return 0.0;
  return spec.K_pq * ipow(v, spec.p - 1) * ipow(1.0 - v, spec.q - 1) *
         (spec.p * (1.0 - v) - spec.q * v);
}

MobilitySplit mobility_split(const MobilitySpec& spec, double v) {
  const double m = mobility_eval(spec, v);
  if (v <= spec.w_star) return {m, 0.0};
  const double m_star = mobility_eval(spec, spec.w_star);
  return {m_star, m - m_star};
}

MobilitySplit mobility_split_derivative(const MobilitySpec& spec, double v) {
  const double d = mobility_derivative(spec, v);
  if (v <= spec.w_star) return {d, 0.0};
  return {0.0, d};
}

double potential_F(double u) { return 0.25 * u * u * (1.0 - u) * (1.0 - u); }

double potential_dF(double u) { return 0.5 * u * (1.0 - u) * (1.0 - 2.0 * u); }

double convex_split_explicit(double b) { return 0.25 * (4.0 * b * b * b - 6.0 * b * b - b); }

double convex_split_f(double a, double b) {
  return kConvexSplitImplicitSlope * a + convex_split_explicit(b);
}

double proliferation_P(double u, double n, const MobilitySpec& h_rs) {
  return mobility_eval(h_rs, u) * pos_part(n);
}

double proliferation_P(double u, double n, ProliferationExps exps) {
  return proliferation_P(u, n, MobilitySpec::make(exps.r, exps.s));
}

void ModelParams::validate() const {
  auto require = [](bool ok, const char* field, const char* reason) {
    if (!ok) throw std::invalid_argument(std::string(field) + ": " + reason);
  };
  require(std::isfinite(eps) && eps >= 0.0, "eps", "must be finite and >= 0");
  require(std::isfinite(delta) && delta > 0.0, "delta", "must be finite and > 0");
  require(std::isfinite(C_u) && C_u > 0.0, "C_u", "must be finite and > 0");
  require(std::isfinite(C_n) && C_n > 0.0, "C_n", "must be finite and > 0");
  require(std::isfinite(K_perm) && K_perm > 0.0, "K_perm", "must be finite and > 0");
  require(std::isfinite(chi0) && chi0 >= 0.0, "chi0", "must be finite and >= 0");
  require(std::isfinite(prolif_rate) && prolif_rate >= 0.0, "prolif_rate", "must be finite and >= 0");
  require(mobility.p >= 1 && mobility.q >= 1, "mobility", "exponents must be >= 1");
  require(prolif_exps.r >= 1 && prolif_exps.s >= 1, "prolif_exps", "exponents must be >= 1");
  require(std::isfinite(sigma_u) && sigma_u >= 0.0, "sigma_u", "must be finite and >= 0");
  require(std::isfinite(sigma_n) && sigma_n >= 0.0, "sigma_n", "must be finite and >= 0");
  require(std::isfinite(eta) && eta >= 0.0, "eta", "must be finite and >= 0");
  require(std::isfinite(dt) && dt > 0.0, "dt", "must be finite and > 0");
}

P0Field mu_n_discrete(const Mesh& mesh, const P0Field& n_next, const P0Field& u_prev,
                      const ModelParams& params) {
  const P0Field smooth = pi0_pi1h(mesh, u_prev);
  P0Field out = make_p0(mesh);
  for (std::size_t k = 0; k < out.size(); ++k)
    out[k] = n_next[k] / params.delta - params.chi0 * smooth[k];
  return out;
}

double potential_integral(const Mesh& mesh, const P1Field& a) {
  const TriangleRule& rule = triangle_rule_degree4();
  const std::size_t nq = rule.weights.size();
  const auto tris = mesh.triangles();
  std::vector<double> pts(tris.size() * nq);
  for (std::size_t k = 0; k < tris.size(); ++k) {
    const auto& t = tris[k];
    for (std::size_t q = 0; q < nq; ++q) {
      const auto& b = rule.nodes[q];
      pts[k * nq + q] = b[0] * a[t[0]] + b[1] * a[t[1]] + b[2] * a[t[2]];
    }
  }
  std::vector<double> vals(pts.size());
  kernels::double_well(pts, vals);
  const auto areas = mesh.areas();
  double s = 0.0;
  for (std::size_t k = 0; k < tris.size(); ++k) {
    double local = 0.0;
    for (std::size_t q = 0; q < nq; ++q) local += rule.weights[q] * vals[k * nq + q];
    s += areas[k] * local;
  }
  return s;
}

EnergyParts energy_parts(const Mesh& mesh, const P0Field& u, const P0Field& n,
                         const ModelParams& params) {
  const P1Field a = pi1h(mesh, u);
  EnergyParts e;
  const auto sa = p1_stiffness_apply(mesh, a);
  double grad2 = 0.0;
  for (std::size_t j = 0; j < sa.size(); ++j) grad2 += sa[j] * a[j];
  e.gradient = 0.5 * params.eps * params.eps * grad2;
  e.potential = potential_integral(mesh, a);
  e.cross = -params.chi0 * l2_product(mesh, n, a);
  e.nutrient = l2_product(mesh, n, n) / (2.0 * params.delta);
  return e;
}

double energy_discrete(const Mesh& mesh, const P0Field& u, const P0Field& n,
                       const ModelParams& params) {
  return energy_parts(mesh, u, n, params).total();
}

}  // namespace chd
