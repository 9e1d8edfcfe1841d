/// @file physics.hpp
/// @brief Constitutive functions: normalized degenerate mobilities and their
/// monotone split, the double-well potential with its convex splitting,
/// proliferation, the nutrient chemical potential and the discrete energy.
#pragma once

#include "chd/mesh.hpp"
#include "chd/spaces.hpp"

namespace chd {

inline double pos_part(double x) { return x > 0.0 ? x : 0.0; }
inline double neg_part(double x) { return x < 0.0 ? -x : 0.0; }

/// h_{p,q}(v) = K_pq v_+^p (1-v)_+^q normalized so that max h = 1 at w*.
struct MobilitySpec {
  int p = 1;
  int q = 1;
  double K_pq = 4.0;
  double w_star = 0.5;

  /// Builds a normalized spec; throws std::invalid_argument for p or q < 1.
  static MobilitySpec make(int p, int q);
};

struct MobilitySplit {
  double up = 0.0;
  double down = 0.0;
};

double mobility_eval(const MobilitySpec& spec, double v);
double mobility_derivative(const MobilitySpec& spec, double v);
/// Nondecreasing / nonincreasing parts about w*; up + down = M on [0,1].
MobilitySplit mobility_split(const MobilitySpec& spec, double v);
/// One-sided derivatives of the split (left branch at w*).
MobilitySplit mobility_split_derivative(const MobilitySpec& spec, double v);

/// Ginzburg-Landau double well F(u) = u^2 (1-u)^2 / 4.
double potential_F(double u);
double potential_dF(double u);
/// Convex-split derivative: implicit 3a/4 plus the explicit part in b.
double convex_split_f(double a, double b);
/// Explicit (concave) contribution (4b^3 - 6b^2 - b)/4.
double convex_split_explicit(double b);
inline constexpr double kConvexSplitImplicitSlope = 0.75;

struct ProliferationExps {
  int r = 1;
  int s = 1;
};

/// P(u,n) = h_{r,s}(u) n_+.
double proliferation_P(double u, double n, const MobilitySpec& h_rs);
double proliferation_P(double u, double n, ProliferationExps exps);

/// Physical and numerical constants of the model.
struct ModelParams {
  double eps = 0.1;
  double delta = 0.01;
  double C_u = 2.8;
  double C_n = 2.8e-4;
  double K_perm = 1.0;
  double chi0 = 0.1;
  double prolif_rate = 0.5;
  MobilitySpec mobility = MobilitySpec::make(1, 1);
  ProliferationExps prolif_exps{1, 1};
  double sigma_u = 0.0;
  double sigma_n = 0.0;
  double eta = 1e-8;
  double dt = 0.1;

  /// Throws std::invalid_argument("<field>: <reason>") on a sign violation.
  void validate() const;
};

/// mu_n = n_next / delta - chi0 * pi0(pi1h(u_prev)).
P0Field mu_n_discrete(const Mesh& mesh, const P0Field& n_next, const P0Field& u_prev,
                      const ModelParams& params);

struct EnergyParts {
  double gradient = 0.0;   ///< eps^2/2 |grad pi1h u|^2
  double potential = 0.0;  ///< F(pi1h u), degree-4 quadrature
  double cross = 0.0;      ///< -chi0 (pi1h u) n
  double nutrient = 0.0;   ///< n^2 / (2 delta)
  double total() const { return gradient + potential + cross + nutrient; }
};

/// Energy evaluated at (pi1h u, n) with exact quadratures.
EnergyParts energy_parts(const Mesh& mesh, const P0Field& u, const P0Field& n,
                         const ModelParams& params);
double energy_discrete(const Mesh& mesh, const P0Field& u, const P0Field& n,
                       const ModelParams& params);
/// Integral of F over a P1 function with the degree-4 rule (exact).
double potential_integral(const Mesh& mesh, const P1Field& a);

}  // namespace chd
