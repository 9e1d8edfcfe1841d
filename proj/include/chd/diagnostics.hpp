/// @file diagnostics.hpp
/// @brief Structure checks on consecutive states (mass, bounds, energy law,
/// Darcy constraints), the per-step report, and CSV / VTK writers.
#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "chd/mesh.hpp"
#include "chd/physics.hpp"
#include "chd/state.hpp"

namespace chd {

/// Energy of the new level and every term of the discrete energy law.
struct EnergyBreakdown {
  double E_total = 0.0;
  double E_gradient = 0.0;
  double E_potential = 0.0;
  double E_cross = 0.0;
  double E_nutrient = 0.0;
  /// Energy of the previous level.
  double E_prev = 0.0;
  double D_u = 0.0;
  double D_n = 0.0;
  double D_prolif = 0.0;
  double D_darcy = 0.0;
  double D_dt_u = 0.0;
  double D_dt_n = 0.0;
  double tau_u = 0.0;
  double tau_n = 0.0;
  /// int delta_t F(pi1h u) - (f(pi1h u, pi1h u_prev), delta_t pi1h u); <= 0.
  double convex_gap = 0.0;

  double dissipation() const { return D_u + D_n + D_prolif + D_darcy + D_dt_u + D_dt_n; }
};

struct EnergyLawCheck {
  EnergyBreakdown terms;
  /// delta_t E + sum D - tau_u - tau_n.
  double residual = 0.0;
  /// delta_t E + sum D + tau_u + tau_n - convex_gap; zero for exact solutions.
  double identity_residual = 0.0;
  /// residual <= 1e-9 max(1, |E|).
  bool pass = false;
};

struct MassCheck {
  /// sum |K| (u + n), new minus previous level.
  double drift = 0.0;
  /// Same with pi1h u integrated by the lumped rule.
  double drift_pi1h = 0.0;
};

struct BoundsCheck {
  double u_min = 0.0, u_max = 0.0;
  double n_min = 0.0, n_max = 0.0;
  double pi1h_u_min = 0.0, pi1h_u_max = 0.0;
  double pi0_pi1h_u_min = 0.0, pi0_pi1h_u_max = 0.0;

  /// All extrema inside [-tol, 1 + tol].
  bool within(double tol) const;
};

struct DarcyCheck {
  /// max_K |div v|.
  double div_inf = 0.0;
  /// max_K |sum_e F_e [[1_K]]|, the local incompressibility sums.
  double incompressibility_inf = 0.0;
  /// |mean p| / max(1, max |p|).
  double pressure_mean_rel = 0.0;
};

double total_mass(const Mesh& mesh, const State& s);
double total_mass_pi1h(const Mesh& mesh, const State& s);
MassCheck check_mass(const Mesh& mesh, const State& prev, const State& next);
BoundsCheck check_bounds(const Mesh& mesh, const State& s);
DarcyCheck check_darcy(const Mesh& mesh, const State& s);
/// Exact area of {x : a(x) > level} for a P1 field (piecewise linear
/// interpolation of the vertex values).
double superlevel_area(const Mesh& mesh, const P1Field& a, double level);
/// Evaluates the energy law for the step prev -> next of length params.dt.
/// `next.mu_n` is recomputed from next.n and prev.u.
EnergyLawCheck check_energy_law(const Mesh& mesh, const State& prev, const State& next,
                                const ModelParams& params);

/// One time step as seen by the diagnostics stream.
struct StepReport {
  int step = 0;
  double time = 0.0;
  int newton_iters = 0;
  double final_residual = 0.0;
  /// Number of sub-steps the step was split into (1 without halving).
  int substeps = 1;
  /// True when the step was re-solved with full stabilization.
  bool stabilized = false;
  double mass_total = 0.0;
  double mass_drift = 0.0;
  double mass_drift_pi1h = 0.0;
  BoundsCheck bounds;
  EnergyBreakdown energy;
  double law_residual = 0.0;
  double identity_residual = 0.0;
  DarcyCheck darcy;
};

/// Report row for the initial level (step 0): no dissipation terms.
StepReport initial_report(const Mesh& mesh, const State& s, const ModelParams& params);

/// Column names of the diagnostics CSV, in order.
const std::vector<std::string>& csv_columns();
void write_csv_header(std::ostream& out);
void write_csv_row(std::ostream& out, const StepReport& r);
/// Header plus one row per report; 17 significant digits.
void emit_csv(std::span<const StepReport> reports, std::ostream& out);

/// Parsed diagnostics row: column name -> value, in header order.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
  double at(std::size_t row, const std::string& column) const;
};
CsvTable read_csv(std::istream& in);

/// Legacy ASCII VTK unstructured grid: u, n, mu_n, p as cell data, the
/// cell-averaged velocity as a cell vector, pi1h u and mu_u as point data.
void write_vtk(std::ostream& out, const Mesh& mesh, const State& s);

}  // namespace chd
