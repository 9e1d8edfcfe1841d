/// @file stepper.hpp
/// @brief Assembly of the coupled nonlinear system for one time step and its
/// semismooth Newton solution.
///
/// The discrete equations are stated on the unknowns [v interior edges |
/// p elements | u elements | mu_u vertices | n elements | multiplier], the
/// multiplier bordering the zero-mean pressure constraint. The Newton solver
/// eliminates v, p and the multiplier: fluxes are written as the discrete
/// curl of a stream function, which satisfies every divergence row exactly,
/// and the pressure is recovered from the Darcy rows after convergence.
#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/SparseCore>

#include "chd/diagnostics.hpp"
#include "chd/mesh.hpp"
#include "chd/physics.hpp"
#include "chd/state.hpp"

namespace chd {

/// Offsets of each block inside the global unknown vector.
struct DofLayout {
  std::size_t n_edges = 0;  ///< interior edges
  std::size_t n_tris = 0;
  std::size_t n_verts = 0;

  explicit DofLayout(const Mesh& mesh);
  std::size_t v(std::size_t e) const { return e; }
  std::size_t p(std::size_t k) const { return n_edges + k; }
  std::size_t u(std::size_t k) const { return n_edges + n_tris + k; }
  std::size_t mu(std::size_t j) const { return n_edges + 2 * n_tris + j; }
  std::size_t n(std::size_t k) const { return n_edges + 2 * n_tris + n_verts + k; }
  std::size_t lambda() const { return n_edges + 3 * n_tris + n_verts; }
  std::size_t size() const { return lambda() + 1; }
};

/// Packs (v, p, u, mu_u, n) of a state and the multiplier into one vector.
Eigen::VectorXd pack_state(const Mesh& mesh, const State& s, double lambda = 0.0);
/// Inverse of pack_state; mu_n is left empty and t is left at 0.
State unpack_state(const Mesh& mesh, const Eigen::VectorXd& x);

/// Residual of the discrete equations at `trial` (multiplier 0), one entry
/// per unknown. Rows are unscaled: the u, n, p rows carry the element area,
/// the mu_u rows the lumped vertex weight. Throws std::invalid_argument on
/// non-finite input.
Eigen::VectorXd assemble_residual(const Mesh& mesh, const State& trial, const State& prev,
                                  const ModelParams& params);
/// Semismooth Jacobian of assemble_residual at `trial`.
Eigen::SparseMatrix<double> assemble_jacobian(const Mesh& mesh, const State& trial,
                                              const State& prev, const ModelParams& params);

struct StepResult {
  State state;
  StepReport report;
};

/// Reusable solver for one mesh. The sparsity pattern of the Jacobian is the
/// same for every state and parameter set, so the symbolic factorization is
/// computed once. Throws std::invalid_argument if the mesh is not connected
/// or its domain has holes.
class Stepper {
 public:
  Stepper(const Mesh& mesh, NewtonConfig cfg = {});
  ~Stepper();
  Stepper(const Stepper&) = delete;
  Stepper& operator=(const Stepper&) = delete;

  /// Residual and Jacobian of the full system at the packed point x for the
  /// step from `prev`.
  Eigen::VectorXd residual(const Eigen::VectorXd& x, const State& prev,
                           const ModelParams& params);
  Eigen::SparseMatrix<double> jacobian(const Eigen::VectorXd& x, const State& prev,
                                       const ModelParams& params);
  /// Row scaling that turns residual rows into intensive quantities.
  const Eigen::VectorXd& row_scale() const;

  /// One Newton solve of length params.dt. Throws NewtonDiverged,
  /// SingularLinearSystem or BoundsViolation.
  StepResult solve(const State& prev, const ModelParams& params);

  const NewtonConfig& config() const { return cfg_; }
  const Mesh& mesh() const { return mesh_; }

 private:
  struct Impl;
  const Mesh& mesh_;
  NewtonConfig cfg_;
  std::unique_ptr<Impl> impl_;
};

/// Convenience wrapper building a Stepper for a single step.
StepResult solve_timestep(const Mesh& mesh, const State& prev, const ModelParams& params,
                          const NewtonConfig& cfg = {});

/// Initial level from element data: v = 0, p = 0 and mu_u solving its
/// (diagonal, lumped) equation with u_prev = u.
State make_initial_state(const Mesh& mesh, const P0Field& u0, const P0Field& n0,
                         const ModelParams& params);

struct RunOptions {
  /// Re-solve a step with sigma_u = sigma_n = 1, eta = 1e-8 when the energy
  /// increases.
  bool enforce_energy = false;
  /// Called after every completed step.
  std::function<void(const State&, const StepReport&)> on_step;
};

/// A step of `run` failed; `what()` names the step and the underlying error.
class StepError : public std::runtime_error {
 public:
  StepError(int step, const std::string& what)
      : std::runtime_error("step " + std::to_string(step) + ": " + what), step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

struct RunResult {
  State final_state;
  /// Row 0 describes the initial level.
  std::vector<StepReport> reports;
};

/// Time loop. A step whose Newton solve diverges is retried as 2, 4, ...
/// sub-steps up to NewtonConfig::max_halvings times; the step report then
/// averages the sub-step rates over the full step. Errors are rethrown as
/// StepError.
RunResult run(const Mesh& mesh, const State& initial, const ModelParams& params,
              const NewtonConfig& cfg, int n_steps, const RunOptions& options = {});

}  // namespace chd
