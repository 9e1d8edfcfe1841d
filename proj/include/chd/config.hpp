/// @file config.hpp
/// @brief Run configuration: the key=value text format, experiment presets
/// and initial data.
///
/// Format: `[section]` headers (mesh, model, solver, output), `key = value`
/// lines, `#` comments. Unknown sections or keys are errors.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "chd/mesh.hpp"
#include "chd/physics.hpp"
#include "chd/spaces.hpp"
#include "chd/state.hpp"

namespace chd {

/// Invalid configuration; `what()` reads "<field>: <reason>".
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, std::string reason)
      : std::runtime_error(field + ": " + reason), field_(std::move(field)), reason_(std::move(reason)) {}
  const std::string& field() const { return field_; }
  const std::string& reason() const { return reason_; }

 private:
  std::string field_;
  std::string reason_;
};

/// Initial data families.
enum class InitialKind {
  tumor,     ///< one radial tumor and three nutrient bumps on [-10,10]^2
  constant,  ///< u = u_const, n = n_const
  random,    ///< constants plus seeded uniform noise of amplitude `noise`
};

struct RunConfig {
  // [mesh]
  int nx = 36;
  int ny = 36;
  Rect domain{-10.0, 10.0, -10.0, 10.0};
  std::string mesh_file;
  // [model]
  ModelParams model;
  InitialKind initial = InitialKind::tumor;
  double u_const = 0.5;
  double n_const = 0.5;
  double noise = 0.05;
  // [solver]
  NewtonConfig solver;
  int steps = 50;
  bool enforce_energy = false;
  std::uint64_t seed = 1;
  // [output]
  std::string out_dir = "out";
  int snapshot_every = 10;
  std::string preset;
  bool desk_scale = false;
  /// Times at which the corresponding figures show snapshots.
  std::vector<double> snapshot_times;

  /// Throws ConfigError for the first invalid field.
  void validate() const;
};

RunConfig parse_config(std::istream& in);
RunConfig parse_config_file(const std::string& path);
std::string serialize_config(const RunConfig& cfg);

std::vector<std::string> preset_names();
/// Throws ConfigError("preset", ...) for an unknown name.
RunConfig preset(const std::string& name);

/// Mesh from the file, if given, else the crossed mesh of the domain.
Mesh build_mesh(const RunConfig& cfg);

/// Tumor fraction and nutrient profiles of the tumor preset.
double initial_u(Point x, double eps);
double initial_n(Point x, double eps);

/// Element values at barycenters, clamped to [0,1].
std::pair<P0Field, P0Field> initial_conditions(const Mesh& mesh, const RunConfig& cfg);

}  // namespace chd
