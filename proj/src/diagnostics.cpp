#include "chd/diagnostics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "chd/forms.hpp"
#include "chd/kernels.hpp"
#include "chd/quadrature.hpp"

namespace chd {

namespace {

/// Full-string decimal parse. Unlike std::stod, subnormal values are accepted.
double parse_number(const std::string& text, const char* context) {
  char* end = nullptr;
  const double x = std::strtod(text.c_str(), &end);
  if (text.empty() || end != text.c_str() + text.size())
    throw std::runtime_error(std::string(context) + ": not a number: '" + text + "'");
  return x;
}

std::pair<double, double> extrema(std::span<const double> a) {
  if (a.empty()) return {0.0, 0.0};
  const auto [lo, hi] = std::minmax_element(a.begin(), a.end());
  return {*lo, *hi};
}

/// (f(a, b), a - b) over the mesh with the degree-4 rule (exact for P1 a, b).
double split_pairing(const Mesh& mesh, const P1Field& a, const P1Field& b) {
  const TriangleRule& rule = triangle_rule_degree4();
  const auto tris = mesh.triangles();
  const auto areas = mesh.areas();
  double s = 0.0;
  for (std::size_t k = 0; k < tris.size(); ++k) {
    const auto& t = tris[k];
    double local = 0.0;
    for (std::size_t q = 0; q < rule.weights.size(); ++q) {
      const auto& l = rule.nodes[q];
      const double aq = l[0] * a[t[0]] + l[1] * a[t[1]] + l[2] * a[t[2]];
      const double bq = l[0] * b[t[0]] + l[1] * b[t[1]] + l[2] * b[t[2]];
      local += rule.weights[q] * convex_split_f(aq, bq) * (aq - bq);
    }
    s += areas[k] * local;
  }
  return s;
}

}  // namespace

bool BoundsCheck::within(double tol) const {
  const double lo = -tol, hi = 1.0 + tol;
  auto ok = [&](double mn, double mx) { return mn >= lo && mx <= hi; };
  return ok(u_min, u_max) && ok(n_min, n_max) && ok(pi1h_u_min, pi1h_u_max) &&
         ok(pi0_pi1h_u_min, pi0_pi1h_u_max);
}

double total_mass(const Mesh& mesh, const State& s) {
  return integral(mesh, s.u) + integral(mesh, s.n);
}

double total_mass_pi1h(const Mesh& mesh, const State& s) {
  return integral(mesh, pi1h(mesh, s.u)) + integral(mesh, s.n);
}

MassCheck check_mass(const Mesh& mesh, const State& prev, const State& next) {
  MassCheck m;
  m.drift = total_mass(mesh, next) - total_mass(mesh, prev);
  m.drift_pi1h = total_mass_pi1h(mesh, next) - total_mass_pi1h(mesh, prev);
  return m;
}

BoundsCheck check_bounds(const Mesh& mesh, const State& s) {
  BoundsCheck b;
  std::tie(b.u_min, b.u_max) = extrema(s.u.view());
  std::tie(b.n_min, b.n_max) = extrema(s.n.view());
  const P1Field a = pi1h(mesh, s.u);
  std::tie(b.pi1h_u_min, b.pi1h_u_max) = extrema(a.view());
  const P0Field a0 = pi0(mesh, a);
  std::tie(b.pi0_pi1h_u_min, b.pi0_pi1h_u_max) = extrema(a0.view());
  return b;
}

DarcyCheck check_darcy(const Mesh& mesh, const State& s) {
  DarcyCheck d;
  const P0Field div = rt0_divergence(mesh, s.v);
  d.div_inf = kernels::max_abs(div.view());
  for (std::size_t k = 0; k < mesh.num_triangles(); ++k) {
    double sum = 0.0;
    for (const Incidence& inc : mesh.element_edges(k)) {
      if (mesh.edges()[inc.edge].interior()) sum += inc.sign * s.v[inc.edge];
    }
    d.incompressibility_inf = std::max(d.incompressibility_inf, std::abs(sum));
  }
  const double scale = std::max(1.0, kernels::max_abs(s.p.view()));
  d.pressure_mean_rel = std::abs(pressure_mean(mesh, s.p)) / scale;
  return d;
}

double superlevel_area(const Mesh& mesh, const P1Field& a, double level) {
  if (a.size() != mesh.num_vertices()) throw std::invalid_argument("superlevel_area: size mismatch");
  const auto tris = mesh.triangles();
  const auto areas = mesh.areas();
  double total = 0.0;
  for (std::size_t k = 0; k < tris.size(); ++k) {
    std::array<double, 3> v{a[tris[k][0]], a[tris[k][1]], a[tris[k][2]]};
    std::sort(v.begin(), v.end());
    double fraction;
    if (level >= v[2]) {
      fraction = 0.0;
    } else if (level <= v[0]) {
      fraction = 1.0;
    } else if (level <= v[1]) {
      // The sublevel part is the corner triangle at the smallest value.
      fraction = 1.0 - (level - v[0]) * (level - v[0]) / ((v[1] - v[0]) * (v[2] - v[0]));
    } else {
      fraction = (v[2] - level) * (v[2] - level) / ((v[2] - v[0]) * (v[2] - v[1]));
    }
    total += fraction * areas[k];
  }
  return total;
}

EnergyLawCheck check_energy_law(const Mesh& mesh, const State& prev, const State& next,
                                const ModelParams& params) {
  EnergyLawCheck out;
  EnergyBreakdown& e = out.terms;
  const double dt = params.dt;
  const EnergyParts parts = energy_parts(mesh, next.u, next.n, params);
  e.E_total = parts.total();
  e.E_gradient = parts.gradient;
  e.E_potential = parts.potential;
  e.E_cross = parts.cross;
  e.E_nutrient = parts.nutrient;
  e.E_prev = energy_discrete(mesh, prev.u, prev.n, params);

  const P0Field mu0 = pi0(mesh, next.mu_u);
  const P0Field mun = mu_n_discrete(mesh, next.n, prev.u, params);
  e.D_u = params.C_u * b_upw(mesh, mu0, next.u, params.mobility, mu0);
  e.D_n = params.C_n * b_upw(mesh, mun, next.n, params.mobility, mun);

  const MobilitySpec h_rs = MobilitySpec::make(params.prolif_exps.r, params.prolif_exps.s);
  const auto areas = mesh.areas();
  double prolif = 0.0;
  for (std::size_t k = 0; k < areas.size(); ++k) {
    const double x = pos_part(mun[k] - mu0[k]);
    prolif += areas[k] * proliferation_P(next.u[k], next.n[k], h_rs) * x * x;
  }
  e.D_prolif = params.delta * params.prolif_rate * prolif;
  e.D_darcy = rt0_l2_product(mesh, next.v, next.v) / params.K_perm;

  const P1Field a = pi1h(mesh, next.u);
  const P1Field a_prev = pi1h(mesh, prev.u);
  P1Field da = make_p1(mesh);
  for (std::size_t j = 0; j < da.size(); ++j) da[j] = (a[j] - a_prev[j]) / dt;
  const auto sda = p1_stiffness_apply(mesh, da);
  e.D_dt_u = 0.5 * dt * params.eps * params.eps * kernels::dot(sda, da.view());
  P0Field dn = make_p0(mesh);
  for (std::size_t k = 0; k < dn.size(); ++k) dn[k] = (next.n[k] - prev.n[k]) / dt;
  e.D_dt_n = 0.5 * dt / params.delta * kernels::weighted_sum_squares(areas, dn.view());

  e.tau_u = tau_diag(mesh, next.v, next.u, mu0, params.sigma_u, params.eta);
  e.tau_n = tau_diag(mesh, next.v, next.n, mun, params.sigma_n, params.eta);

  e.convex_gap = (potential_integral(mesh, a) - potential_integral(mesh, a_prev) -
                  split_pairing(mesh, a, a_prev)) /
                 dt;

  const double dE = (e.E_total - e.E_prev) / dt;
  out.residual = dE + e.dissipation() - e.tau_u - e.tau_n;
  out.identity_residual = dE + e.dissipation() + e.tau_u + e.tau_n - e.convex_gap;
  out.pass = out.residual <= 1e-9 * std::max(1.0, std::abs(e.E_total));
  return out;
}

StepReport initial_report(const Mesh& mesh, const State& s, const ModelParams& params) {
  StepReport r;
  r.step = 0;
  r.time = s.t;
  r.mass_total = total_mass(mesh, s);
  r.bounds = check_bounds(mesh, s);
  const EnergyParts parts = energy_parts(mesh, s.u, s.n, params);
  r.energy.E_total = parts.total();
  r.energy.E_gradient = parts.gradient;
  r.energy.E_potential = parts.potential;
  r.energy.E_cross = parts.cross;
  r.energy.E_nutrient = parts.nutrient;
  r.energy.E_prev = r.energy.E_total;
  r.darcy = check_darcy(mesh, s);
  return r;
}

const std::vector<std::string>& csv_columns() {
  static const std::vector<std::string> cols = {
      "step",  "time",     "newton_iters", "mass",    "u_min",  "u_max",  "n_min",
      "n_max", "E",        "D_u",          "D_n",     "D_prolif", "D_darcy", "D_dt_u",
      "D_dt_n", "tau_u",   "tau_n",        "law_residual", "div_v_inf"};
  return cols;
}

void write_csv_header(std::ostream& out) {
  const auto& cols = csv_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
}

void write_csv_row(std::ostream& out, const StepReport& r) {
  const auto old = out.precision(17);
  const EnergyBreakdown& e = r.energy;
  out << r.step << ',' << r.time << ',' << r.newton_iters << ',' << r.mass_total << ','
      << r.bounds.u_min << ',' << r.bounds.u_max << ',' << r.bounds.n_min << ','
      << r.bounds.n_max << ',' << e.E_total << ',' << e.D_u << ',' << e.D_n << ','
      << e.D_prolif << ',' << e.D_darcy << ',' << e.D_dt_u << ',' << e.D_dt_n << ','
      << e.tau_u << ',' << e.tau_n << ',' << r.law_residual << ',' << r.darcy.div_inf << '\n';
  out.precision(old);
}

void emit_csv(std::span<const StepReport> reports, std::ostream& out) {
  write_csv_header(out);
  for (const StepReport& r : reports) write_csv_row(out, r);
}

double CsvTable::at(std::size_t row, const std::string& column) const {
  const auto it = std::find(header.begin(), header.end(), column);
  if (it == header.end()) throw std::out_of_range("csv: no column '" + column + "'");
  return rows.at(row).at(static_cast<std::size_t>(it - header.begin()));
}

CsvTable read_csv(std::istream& in) {
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("csv: empty input");
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) t.header.push_back(cell);
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(parse_number(cell, "csv"));
    if (row.size() != t.header.size())
      throw std::runtime_error("csv: row " + std::to_string(t.rows.size() + 1) +
                               " has the wrong number of columns");
    t.rows.push_back(std::move(row));
  }
  return t;
}

void write_vtk(std::ostream& out, const Mesh& mesh, const State& s) {
  const auto old = out.precision(17);
  const auto verts = mesh.vertices();
  const auto tris = mesh.triangles();
  out << "# vtk DataFile Version 3.0\n";
  out << "chd snapshot t=" << s.t << "\n";
  out << "ASCII\nDATASET UNSTRUCTURED_GRID\n";
  out << "POINTS " << verts.size() << " double\n";
  for (const Point& p : verts) out << p.x << ' ' << p.y << " 0\n";
  out << "CELLS " << tris.size() << ' ' << 4 * tris.size() << '\n';
  for (const auto& t : tris) out << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
  out << "CELL_TYPES " << tris.size() << '\n';
  for (std::size_t k = 0; k < tris.size(); ++k) out << "5\n";

  auto scalars = [&out](const char* name, std::span<const double> values) {
    out << "SCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
    for (double x : values) out << x << '\n';
  };
  out << "CELL_DATA " << tris.size() << '\n';
  scalars("u", s.u.view());
  scalars("n", s.n.view());
  if (s.mu_n.size() == tris.size()) scalars("mu_n", s.mu_n.view());
  scalars("pressure", s.p.view());
  out << "VECTORS velocity double\n";
  const auto bary = mesh.barycenters();
  for (std::size_t k = 0; k < tris.size(); ++k) {
    const Point v = rt0_value(mesh, s.v, k, bary[k]);
    out << v.x << ' ' << v.y << " 0\n";
  }
  out << "POINT_DATA " << verts.size() << '\n';
  const P1Field a = pi1h(mesh, s.u);
  scalars("pi1h_u", a.view());
  scalars("mu_u", s.mu_u.view());
  out.precision(old);
}

}  // namespace chd
