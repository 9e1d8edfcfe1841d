/// Command-line driver: resolves a preset or config file, runs the time
/// loop and writes diag.csv, field snapshots and the resolved config.
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "chd/config.hpp"
#include "chd/diagnostics.hpp"
#include "chd/stepper.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;
constexpr int kExitCheck = 3;

std::string snapshot_name(const char* ext, int step) {
  std::ostringstream s;
  s << "snap_" << std::setw(6) << std::setfill('0') << step << ext;
  return s.str();
}

void write_snapshot(const fs::path& dir, const chd::Mesh& mesh, const chd::State& s, int step) {
  std::ofstream vtk(dir / snapshot_name(".vtk", step));
  chd::write_vtk(vtk, mesh, s);
  std::ofstream csv(dir / snapshot_name(".csv", step));
  chd::write_snapshot_csv(csv, {s.n, chd::pi1h(mesh, s.u), s.v, s.p});
  if (!vtk || !csv) throw std::runtime_error("cannot write snapshot files in " + dir.string());
}

/// Invariant violation found in --check mode.
struct CheckFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void check_step(const chd::StepReport& r, double mass0, double area, double band) {
  std::ostringstream msg;
  msg.precision(17);
  if (std::abs(r.mass_total - mass0) > 1e-10 * area) {
    msg << "step " << r.step << ": mass drift " << r.mass_total - mass0;
    throw CheckFailure(msg.str());
  }
  if (!r.bounds.within(band)) {
    msg << "step " << r.step << ": bounds violated (u in [" << r.bounds.u_min << ", "
        << r.bounds.u_max << "], n in [" << r.bounds.n_min << ", " << r.bounds.n_max << "])";
    throw CheckFailure(msg.str());
  }
  if (r.step > 0 && r.law_residual > 1e-9 * std::max(1.0, std::abs(r.energy.E_total))) {
    msg << "step " << r.step << ": energy law residual " << r.law_residual;
    throw CheckFailure(msg.str());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cahn-Hilliard-Darcy tumor growth solver"};
  std::string preset_name, config_path, out_dir, mesh_file;
  int steps = -1, snapshot_every = -1;
  std::vector<int> mesh_size;
  long long seed = -1;
  bool check = false, enforce_energy = false, list = false;
  auto* opt_preset = app.add_option("--preset", preset_name, "Named experiment preset");
  auto* opt_config = app.add_option("--config", config_path, "Config file (key = value)");
  opt_preset->excludes(opt_config);
  app.add_option("--steps", steps, "Number of time steps");
  app.add_option("--mesh", mesh_size, "Crossed mesh cells NX NY")->expected(2);
  app.add_option("--out", out_dir, "Output directory");
  app.add_option("--snapshot-every", snapshot_every, "Snapshot interval in steps");
  app.add_flag("--check", check, "Fail on any mass, bounds or energy-law violation");
  app.add_flag("--enforce-energy", enforce_energy, "Re-solve energy-increasing steps with stabilization");
  app.add_option("--mesh-file", mesh_file, "Mesh file overriding the generator");
  app.add_option("--seed", seed, "Seed for randomized presets");
  app.add_flag("--list-presets", list, "Print preset names and exit");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error: arguments: " << e.what() << '\n';
    return kExitConfig;
  }
  if (list) {
    for (const auto& n : chd::preset_names()) std::cout << n << '\n';
    return 0;
  }

  chd::RunConfig cfg;
  try {
    if (!preset_name.empty()) cfg = chd::preset(preset_name);
    else if (!config_path.empty()) cfg = chd::parse_config_file(config_path);
    else throw chd::ConfigError("preset", "one of --preset or --config is required");
    if (steps >= 0) cfg.steps = steps;
    if (!mesh_size.empty()) {
      cfg.nx = mesh_size[0];
      cfg.ny = mesh_size[1];
    }
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (snapshot_every >= 0) cfg.snapshot_every = snapshot_every;
    if (enforce_energy) cfg.enforce_energy = true;
    if (!mesh_file.empty()) cfg.mesh_file = mesh_file;
    if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
    cfg.validate();
  } catch (const chd::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }

  try {
    const chd::Mesh mesh = chd::build_mesh(cfg);
    const fs::path dir(cfg.out_dir);
    fs::create_directories(dir);
    {
      std::ofstream resolved(dir / "config.resolved");
      resolved << chd::serialize_config(cfg);
    }
    const auto [u0, n0] = chd::initial_conditions(mesh, cfg);
    const chd::State initial = chd::make_initial_state(mesh, u0, n0, cfg.model);
    std::ofstream diag(dir / "diag.csv");
    chd::write_csv_header(diag);
    const chd::StepReport first = chd::initial_report(mesh, initial, cfg.model);
    chd::write_csv_row(diag, first);
    write_snapshot(dir, mesh, initial, 0);
    const double mass0 = first.mass_total;
    const double area = mesh.domain_area();
    if (check) check_step(first, mass0, area, cfg.solver.bounds_band);

    chd::RunOptions opts;
    opts.enforce_energy = cfg.enforce_energy;
    opts.on_step = [&](const chd::State& s, const chd::StepReport& r) {
      chd::write_csv_row(diag, r);
      diag.flush();
      if (r.step % cfg.snapshot_every == 0 || r.step == cfg.steps) write_snapshot(dir, mesh, s, r.step);
      std::cout << "step " << r.step << " t=" << r.time << " newton=" << r.newton_iters
                << " E=" << std::setprecision(10) << r.energy.E_total << '\n';
      if (check) check_step(r, mass0, area, cfg.solver.bounds_band);
    };
    chd::run(mesh, initial, cfg.model, cfg.solver, cfg.steps, opts);
  } catch (const CheckFailure& e) {
    std::cerr << "error: check: " << e.what() << '\n';
    return kExitCheck;
  } catch (const std::exception& e) {
    std::cerr << "error: run: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
