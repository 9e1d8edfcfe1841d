/// @file state.hpp
/// @brief One time level of the discrete solution and the Newton settings.
#pragma once

#include <stdexcept>
#include <string>

#include "chd/mesh.hpp"
#include "chd/spaces.hpp"

namespace chd {

/// Discrete unknowns at one time level. `v` holds one flux per mesh edge
/// (boundary fluxes are zero); `mu_n` is derived from `n` and the previous
/// level's u and is stored for diagnostics.
struct State {
  RT0Field v;
  PressureField p;
  P0Field u;
  P1Field mu_u;
  P0Field n;
  P0Field mu_n;
  double t = 0.0;
};

/// A state with every field sized for `mesh` and set to zero.
State make_state(const Mesh& mesh);

struct NewtonConfig {
  /// Absolute tolerance on the max norm of the scaled residual.
  double residual_tol = 1e-9;
  int max_iters = 30;
  /// Backtracking factor of the Armijo line search.
  double shrink = 0.5;
  /// Smallest step length tried before accepting the step as is.
  double relaxation_floor = 1.0 / 1024.0;
  /// Extra Newton iterations after convergence, stopped early once the
  /// residual stalls. Keeps the discrete identities at roundoff level.
  int polish_iters = 2;
  /// Automatic halvings of a step whose Newton solve diverged.
  int max_halvings = 3;
  /// Post-solve tolerance band for u, n outside [0,1] before clamping.
  double bounds_band = 1e-9;

  /// Throws std::invalid_argument("<field>: <reason>").
  void validate() const;
};

/// Newton did not reach the residual tolerance.
class NewtonDiverged : public std::runtime_error {
 public:
  NewtonDiverged(const std::string& what, int iters, double residual)
      : std::runtime_error(what), iters_(iters), residual_(residual) {}
  int iters() const { return iters_; }
  double residual() const { return residual_; }

 private:
  int iters_;
  double residual_;
};

/// The sparse LU factorization failed.
class SingularLinearSystem : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A converged solution left the admissible band around [0,1].
class BoundsViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace chd
