#include "chd/stepper.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/SparseCholesky>
#include <Eigen/UmfPackSupport>

#include "chd/forms.hpp"
#include "chd/kernels.hpp"
#include "chd/quadrature.hpp"

namespace chd {

using Triplet = Eigen::Triplet<double>;

/// Largest 2-norm ratio of consecutive residuals accepted from a step with
/// reused Jacobian factors.
constexpr double kChordContraction = 0.5;

State make_state(const Mesh& mesh) {
  State s;
  s.v = make_rt0(mesh);
  s.p = PressureField(mesh.num_triangles());
  s.u = make_p0(mesh);
  s.mu_u = make_p1(mesh);
  s.n = make_p0(mesh);
  s.mu_n = make_p0(mesh);
  return s;
}

void NewtonConfig::validate() const {
  auto require = [](bool ok, const char* field, const char* reason) {
    if (!ok) throw std::invalid_argument(std::string(field) + ": " + reason);
  };
  require(std::isfinite(residual_tol) && residual_tol > 0.0, "residual_tol", "must be > 0");
  require(max_iters >= 1, "max_iters", "must be >= 1");
  require(shrink > 0.0 && shrink < 1.0, "shrink", "must lie in (0,1)");
  require(relaxation_floor > 0.0 && relaxation_floor <= 1.0, "relaxation_floor",
          "must lie in (0,1]");
  require(polish_iters >= 0, "polish_iters", "must be >= 0");
  require(max_halvings >= 0, "max_halvings", "must be >= 0");
  require(std::isfinite(bounds_band) && bounds_band >= 0.0, "bounds_band", "must be >= 0");
}

DofLayout::DofLayout(const Mesh& mesh)
    : n_edges(mesh.num_interior_edges()),
      n_tris(mesh.num_triangles()),
      n_verts(mesh.num_vertices()) {}

Eigen::VectorXd pack_state(const Mesh& mesh, const State& s, double lambda) {
  const DofLayout lay(mesh);
  Eigen::VectorXd x(static_cast<Eigen::Index>(lay.size()));
  for (std::size_t e = 0; e < lay.n_edges; ++e) x[lay.v(e)] = s.v[e];
  for (std::size_t k = 0; k < lay.n_tris; ++k) {
    x[lay.p(k)] = s.p[k];
    x[lay.u(k)] = s.u[k];
    x[lay.n(k)] = s.n[k];
  }
  for (std::size_t j = 0; j < lay.n_verts; ++j) x[lay.mu(j)] = s.mu_u[j];
  x[lay.lambda()] = lambda;
  return x;
}

State unpack_state(const Mesh& mesh, const Eigen::VectorXd& x) {
  const DofLayout lay(mesh);
  if (static_cast<std::size_t>(x.size()) != lay.size())
    throw std::invalid_argument("unpack_state: vector size does not match the mesh");
  State s = make_state(mesh);
  s.mu_n = P0Field();
  for (std::size_t e = 0; e < lay.n_edges; ++e) s.v[e] = x[lay.v(e)];
  for (std::size_t k = 0; k < lay.n_tris; ++k) {
    s.p[k] = x[lay.p(k)];
    s.u[k] = x[lay.u(k)];
    s.n[k] = x[lay.n(k)];
  }
  for (std::size_t j = 0; j < lay.n_verts; ++j) s.mu_u[j] = x[lay.mu(j)];
  return s;
}

namespace {

/// Quantities fixed for the duration of one step.
struct StepContext {
  ModelParams params;
  kernels::MobilityCoeffs mob;
  MobilitySpec h_rs;
  /// (F_e'(pi1h u_prev), phi_j) for every vertex.
  std::vector<double> explicit_rhs;
  /// chi0 * pi0(pi1h(u_prev)) per element.
  std::vector<double> mu_n_shift;
  P0Field u_prev;
  P0Field n_prev;
};

kernels::MobilityCoeffs coeffs_of(const MobilitySpec& s) {
  kernels::MobilityCoeffs c;
  c.p = s.p;
  c.q = s.q;
  c.K = s.K_pq;
  c.w_star = s.w_star;
  c.m_star = mobility_eval(s, s.w_star);
  return c;
}

void require_finite(std::span<const double> a, const char* what) {
  for (double x : a) {
    if (!std::isfinite(x)) throw std::invalid_argument(std::string(what) + ": non-finite value");
  }
}

}  // namespace

struct Stepper::Impl {
  const Mesh& mesh;
  DofLayout lay;
  /// Velocity mass matrix on interior edges.
  Eigen::SparseMatrix<double> mass_v;
  /// Stiffness times pi1h and consistent mass times pi1h.
  Eigen::SparseMatrix<double> stiff_pi;
  Eigen::SparseMatrix<double> mass_pi;
  Eigen::VectorXd scale;

  // The Newton iteration works on the reduced unknowns [psi | u | mu_u | n]:
  // interior fluxes are the discrete curl of a P1 stream function psi that
  // vanishes on the boundary, which spans exactly the fluxes with zero
  // divergence in every element. Pressure and multiplier drop out and the
  // pressure is recovered afterwards from the Darcy rows.
  std::size_t n_psi = 0;
  /// Interior-edge fluxes from psi (#interior edges x n_psi).
  Eigen::SparseMatrix<double> curl;
  /// Full unknowns from reduced ones (p = 0, multiplier = 0).
  Eigen::SparseMatrix<double> expand;
  /// Reduced equations from full ones: curl^T on the Darcy rows, identity on
  /// the transport and potential rows, divergence and border rows dropped.
  Eigen::SparseMatrix<double> restrict_rows;
  Eigen::VectorXd red_scale;
  /// curl^T curl, to lift a given flux field to a stream function.
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> curl_gram;
  /// Element-to-interior-edge incidence (signs) and the factored dual graph
  /// Laplacian with element 0 pinned, for the pressure recovery.
  Eigen::SparseMatrix<double> incidence;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> dual_laplacian;

  /// Scaled reduced Jacobian; the factorization refers to its storage.
  Eigen::SparseMatrix<double> J;
  Eigen::UmfPackLU<Eigen::SparseMatrix<double>> lu;
  bool analyzed = false;
  bool factored = false;

  explicit Impl(const Mesh& m) : mesh(m), lay(m) {
    lu.umfpackControl()(UMFPACK_STRATEGY) = UMFPACK_STRATEGY_SYMMETRIC;
    lu.umfpackControl()(UMFPACK_ORDERING) = UMFPACK_ORDERING_METIS;
    lu.umfpackControl()(UMFPACK_IRSTEP) = 0;
    const std::size_t ne = lay.n_edges;
    std::vector<Triplet> trip;
    for (std::size_t k = 0; k < mesh.num_triangles(); ++k) {
      const auto loc = rt0_local_mass(mesh, k);
      const auto& inc = mesh.element_edges(k);
      for (int i = 0; i < 3; ++i) {
        if (static_cast<std::size_t>(inc[i].edge) >= ne) continue;
        for (int j = 0; j < 3; ++j) {
          if (static_cast<std::size_t>(inc[j].edge) >= ne) continue;
          trip.emplace_back(inc[i].edge, inc[j].edge, loc[i][j]);
        }
      }
    }
    mass_v.resize(static_cast<Eigen::Index>(ne), static_cast<Eigen::Index>(ne));
    mass_v.setFromTriplets(trip.begin(), trip.end());

    const Eigen::SparseMatrix<double> pi = pi1h_matrix(mesh);
    stiff_pi = p1_stiffness_matrix(mesh) * pi;
    mass_pi = p1_mass_matrix(mesh) * pi;

    scale.resize(static_cast<Eigen::Index>(lay.size()));
    const auto areas = mesh.areas();
    const auto omega = mesh.vertex_support_volume();
    for (std::size_t e = 0; e < ne; ++e) scale[lay.v(e)] = 1.0;
    for (std::size_t k = 0; k < lay.n_tris; ++k) {
      scale[lay.p(k)] = 1.0 / areas[k];
      scale[lay.u(k)] = 1.0 / areas[k];
      scale[lay.n(k)] = 1.0 / areas[k];
    }
    for (std::size_t j = 0; j < lay.n_verts; ++j) scale[lay.mu(j)] = 1.0 / omega[j];
    scale[lay.lambda()] = 1.0 / mesh.domain_area();
    build_reduction();
  }

  void build_reduction() {
    const std::size_t ne = lay.n_edges, nt = lay.n_tris, nv = lay.n_verts;
    std::vector<int> psi_id(nv, -1);
    std::vector<bool> on_boundary(nv, false);
    for (const Edge& e : mesh.boundary_edges()) {
      on_boundary[e.verts[0]] = true;
      on_boundary[e.verts[1]] = true;
    }
    for (std::size_t j = 0; j < nv; ++j)
      if (!on_boundary[j]) psi_id[j] = static_cast<int>(n_psi++);
    // Zero-divergence fluxes with zero boundary flux form a space of
    // dimension #interior edges - #elements + 1 on a connected mesh; psi
    // spans it only if the domain has no holes.
    if (n_psi + nt != ne + 1 || !dual_graph_connected())
      throw std::invalid_argument("mesh: the domain must be connected and simply connected");

    const auto verts = mesh.vertices();
    const auto edges = mesh.interior_edges();
    std::vector<Triplet> trip;
    for (std::size_t id = 0; id < ne; ++id) {
      const Edge& e = edges[id];
      int a = e.verts[0], b = e.verts[1];
      const Point t = verts[b] - verts[a];
      // The flux of curl psi through (a,b) is psi_b - psi_a when the edge
      // normal is the tangent rotated clockwise.
      if (dot(Point{t.y, -t.x}, e.normal) < 0.0) std::swap(a, b);
      if (psi_id[b] >= 0) trip.emplace_back(static_cast<int>(id), psi_id[b], 1.0);
      if (psi_id[a] >= 0) trip.emplace_back(static_cast<int>(id), psi_id[a], -1.0);
    }
    curl.resize(static_cast<Eigen::Index>(ne), static_cast<Eigen::Index>(n_psi));
    curl.setFromTriplets(trip.begin(), trip.end());
    const Eigen::SparseMatrix<double> gram = curl.transpose() * curl;
    curl_gram.compute(gram);

    const auto n_full = static_cast<Eigen::Index>(lay.size());
    const auto n_red = static_cast<Eigen::Index>(n_psi + 2 * nt + nv);
    trip.clear();
    for (Eigen::Index col = 0; col < curl.outerSize(); ++col)
      for (Eigen::SparseMatrix<double>::InnerIterator it(curl, col); it; ++it)
        trip.emplace_back(static_cast<int>(lay.v(it.row())), static_cast<int>(col), it.value());
    red_scale.setOnes(n_red);
    for (std::size_t k = 0; k < nt; ++k) {
      trip.emplace_back(static_cast<int>(lay.u(k)), static_cast<int>(red_u(k)), 1.0);
      trip.emplace_back(static_cast<int>(lay.n(k)), static_cast<int>(red_n(k)), 1.0);
      red_scale[static_cast<Eigen::Index>(red_u(k))] = scale[lay.u(k)];
      red_scale[static_cast<Eigen::Index>(red_n(k))] = scale[lay.n(k)];
    }
    for (std::size_t j = 0; j < nv; ++j) {
      trip.emplace_back(static_cast<int>(lay.mu(j)), static_cast<int>(red_mu(j)), 1.0);
      red_scale[static_cast<Eigen::Index>(red_mu(j))] = scale[lay.mu(j)];
    }
    expand.resize(n_full, n_red);
    expand.setFromTriplets(trip.begin(), trip.end());
    restrict_rows = expand.transpose();

    trip.clear();
    for (std::size_t id = 0; id < ne; ++id) {
      trip.emplace_back(edges[id].left, static_cast<int>(id), 1.0);
      trip.emplace_back(edges[id].right, static_cast<int>(id), -1.0);
    }
    incidence.resize(static_cast<Eigen::Index>(nt), static_cast<Eigen::Index>(ne));
    incidence.setFromTriplets(trip.begin(), trip.end());
    const Eigen::SparseMatrix<double> lap = incidence * incidence.transpose();
    const auto m = static_cast<Eigen::Index>(nt) - 1;
    dual_laplacian.compute(lap.bottomRightCorner(m, m));
    if (curl_gram.info() != Eigen::Success || dual_laplacian.info() != Eigen::Success)
      throw SingularLinearSystem("stream function or pressure operator is singular");
  }

  bool dual_graph_connected() const {
    const std::size_t nt = lay.n_tris;
    std::vector<std::vector<int>> adj(nt);
    for (const Edge& e : mesh.interior_edges()) {
      adj[e.left].push_back(e.right);
      adj[e.right].push_back(e.left);
    }
    std::vector<bool> seen(nt, false);
    std::vector<int> stack{0};
    seen[0] = true;
    std::size_t count = 1;
    while (!stack.empty()) {
      const int k = stack.back();
      stack.pop_back();
      for (int l : adj[k]) {
        if (seen[l]) continue;
        seen[l] = true;
        ++count;
        stack.push_back(l);
      }
    }
    return count == nt;
  }

  std::size_t red_u(std::size_t k) const { return n_psi + k; }
  std::size_t red_mu(std::size_t j) const { return n_psi + lay.n_tris + j; }
  std::size_t red_n(std::size_t k) const { return n_psi + lay.n_tris + lay.n_verts + k; }

  /// Reduced unknowns of a state; fluxes are projected onto curl(psi).
  Eigen::VectorXd reduce(const State& s) const {
    Eigen::VectorXd y(restrict_rows.rows());
    Eigen::VectorXd f(static_cast<Eigen::Index>(lay.n_edges));
    for (std::size_t e = 0; e < lay.n_edges; ++e) f[static_cast<Eigen::Index>(e)] = s.v[e];
    y.head(static_cast<Eigen::Index>(n_psi)) = curl_gram.solve(curl.transpose() * f);
    for (std::size_t k = 0; k < lay.n_tris; ++k) {
      y[static_cast<Eigen::Index>(red_u(k))] = s.u[k];
      y[static_cast<Eigen::Index>(red_n(k))] = s.n[k];
    }
    for (std::size_t j = 0; j < lay.n_verts; ++j) y[static_cast<Eigen::Index>(red_mu(j))] = s.mu_u[j];
    return y;
  }

  /// Pressure with p_K - p_L equal to the non-pressure part of every Darcy
  /// row, in the least-squares sense, with p_0 = 0.
  void recover_pressure(const Eigen::VectorXd& R_full, Eigen::VectorXd& x) const {
    const auto ne = static_cast<Eigen::Index>(lay.n_edges);
    const Eigen::VectorXd rhs = incidence * R_full.head(ne);
    const Eigen::Index m = rhs.size() - 1;
    const Eigen::VectorXd tail = dual_laplacian.solve(rhs.tail(m));
    x[static_cast<Eigen::Index>(lay.p(0))] = 0.0;
    for (Eigen::Index k = 0; k < m; ++k) x[static_cast<Eigen::Index>(lay.p(k + 1))] = tail[k];
  }

  StepContext context(const State& prev, const ModelParams& params) const {
    params.validate();
    require_finite(prev.u.view(), "previous u");
    require_finite(prev.n.view(), "previous n");
    StepContext c;
    c.params = params;
    c.mob = coeffs_of(params.mobility);
    c.h_rs = MobilitySpec::make(params.prolif_exps.r, params.prolif_exps.s);
    c.u_prev = prev.u;
    c.n_prev = prev.n;

    const P1Field a_prev = pi1h(mesh, prev.u);
    const P0Field smooth = pi0(mesh, a_prev);
    c.mu_n_shift.resize(lay.n_tris);
    for (std::size_t k = 0; k < lay.n_tris; ++k) c.mu_n_shift[k] = params.chi0 * smooth[k];

    const TriangleRule& rule = triangle_rule_degree4();
    const std::size_t nq = rule.weights.size();
    const auto tris = mesh.triangles();
    std::vector<double> pts(tris.size() * nq), vals(tris.size() * nq);
    for (std::size_t k = 0; k < tris.size(); ++k) {
      const auto& t = tris[k];
      for (std::size_t q = 0; q < nq; ++q) {
        const auto& l = rule.nodes[q];
        pts[k * nq + q] = l[0] * a_prev[t[0]] + l[1] * a_prev[t[1]] + l[2] * a_prev[t[2]];
      }
    }
    kernels::convex_split_explicit(pts, vals);
    c.explicit_rhs.assign(lay.n_verts, 0.0);
    const auto areas = mesh.areas();
    for (std::size_t k = 0; k < tris.size(); ++k) {
      const auto& t = tris[k];
      for (std::size_t q = 0; q < nq; ++q) {
        const double w = areas[k] * rule.weights[q] * vals[k * nq + q];
        for (int i = 0; i < 3; ++i) c.explicit_rhs[t[i]] += w * rule.nodes[q][i];
      }
    }
    return c;
  }

  /// Residual (if R) and Jacobian triplets (if T) at x. The triplet list has
  /// the same length and order for every x and every parameter set.
  void evaluate(const StepContext& c, const Eigen::VectorXd& x, Eigen::VectorXd* R,
                std::vector<Triplet>* T) const {
    const ModelParams& prm = c.params;
    const std::size_t ne = lay.n_edges, nt = lay.n_tris, nv = lay.n_verts;
    const auto tris = mesh.triangles();
    const auto areas = mesh.areas();
    const auto omega = mesh.vertex_support_volume();
    const auto edges = mesh.interior_edges();
    const double* F = x.data();
    const double* p = x.data() + lay.p(0);
    const double* u = x.data() + lay.u(0);
    const double* m = x.data() + lay.mu(0);
    const double* n = x.data() + lay.n(0);
    const double lam = x[static_cast<Eigen::Index>(lay.lambda())];
    const double inv_delta = 1.0 / prm.delta;

    std::vector<double> mu0(nt), mun(nt);
    for (std::size_t k = 0; k < nt; ++k) {
      const auto& t = tris[k];
      mu0[k] = (m[t[0]] + m[t[1]] + m[t[2]]) / 3.0;
      mun[k] = n[k] * inv_delta - c.mu_n_shift[k];
    }
    std::vector<double> su(4 * nt), sn(4 * nt);
    auto split_view = [nt](std::vector<double>& b) {
      std::span<double> s(b);
      return kernels::SplitOut{s.subspan(0, nt), s.subspan(nt, nt), s.subspan(2 * nt, nt),
                               s.subspan(3 * nt, nt)};
    };
    const kernels::SplitOut ou = split_view(su), on = split_view(sn);
    kernels::mobility_split(c.mob, std::span<const double>(u, nt), ou);
    kernels::mobility_split(c.mob, std::span<const double>(n, nt), on);
    auto split_at = [](const kernels::SplitOut& o, std::size_t k) {
      return MobilitySplit{o.up[k], o.down[k]};
    };
    auto dsplit_at = [](const kernels::SplitOut& o, std::size_t k) {
      return MobilitySplit{o.dup[k], o.ddown[k]};
    };

    if (R) R->setZero(static_cast<Eigen::Index>(lay.size()));
    auto res = [R](std::size_t row) -> double& { return (*R)[static_cast<Eigen::Index>(row)]; };
    auto add = [T](std::size_t row, std::size_t col, double val) {
      T->emplace_back(static_cast<int>(row), static_cast<int>(col), val);
    };
    auto add_mu0 = [&](std::size_t row, std::size_t k, double d) {
      for (int vtx : tris[k]) add(row, lay.mu(vtx), d / 3.0);
    };

    // Darcy rows: (1/K) mass, pressure, force and stabilization terms.
    const double inv_k = 1.0 / prm.K_perm;
    for (Eigen::Index col = 0; col < mass_v.outerSize(); ++col) {
      for (Eigen::SparseMatrix<double>::InnerIterator it(mass_v, col); it; ++it) {
        const double val = it.value() * inv_k;
        if (R) res(lay.v(it.row())) += val * F[col];
        if (T) add(lay.v(it.row()), lay.v(col), val);
      }
    }
    for (std::size_t id = 0; id < ne; ++id) {
      const Edge& e = edges[id];
      const std::size_t K = e.left, L = e.right;
      const std::size_t row = lay.v(id);
      const double uK = u[K], uL = u[L], nK = n[K], nL = n[L];
      const double aK = mu0[K], aL = mu0[L], bK = mun[K], bL = mun[L];
      const double x_vn = F[id] / e.length;
      const double g = stabilization_weight(x_vn, prm.eta);
      const double dg = stabilization_weight_derivative(x_vn, prm.eta) / e.length;
      const double ju = uK - uL, jn = nK - nL, ja = aK - aL, jb = bK - bL;
      if (R) {
        res(row) += -(p[K] - p[L]);
        res(row) += -(aK * uK - aL * uL) - 0.5 * (uK + uL) * ja;
        res(row) += -(bK * nK - bL * nL) - 0.5 * (nK + nL) * jb;
        res(row) += prm.sigma_u * (-0.5 * g * ju * ja);
        res(row) += prm.sigma_n * (-0.5 * g * jn * jb);
      }
      if (T) {
        add(row, lay.p(K), -1.0);
        add(row, lay.p(L), 1.0);
        const double su_ = prm.sigma_u, sn_ = prm.sigma_n;
        add(row, lay.v(id), -0.5 * dg * (su_ * ju * ja + sn_ * jn * jb));
        add(row, lay.u(K), -aK - 0.5 * ja - 0.5 * su_ * g * ja);
        add(row, lay.u(L), aL - 0.5 * ja + 0.5 * su_ * g * ja);
        add_mu0(row, K, -uK - 0.5 * (uK + uL) - 0.5 * su_ * g * ju);
        add_mu0(row, L, uL + 0.5 * (uK + uL) + 0.5 * su_ * g * ju);
        const double dnK = -bK - 0.5 * jb + inv_delta * (-nK - 0.5 * (nK + nL));
        const double dnL = bL - 0.5 * jb + inv_delta * (nL + 0.5 * (nK + nL));
        const double stab_n = -0.5 * sn_ * g * (jb + jn * inv_delta);
        add(row, lay.n(K), dnK + stab_n);
        add(row, lay.n(L), dnL - stab_n);
      }
    }

    // Divergence rows and the mean-pressure border.
    for (std::size_t k = 0; k < nt; ++k) {
      const std::size_t row = lay.p(k);
      for (const Incidence& inc : mesh.element_edges(k)) {
        if (static_cast<std::size_t>(inc.edge) >= ne) continue;
        if (R) res(row) += inc.sign * F[inc.edge];
        if (T) add(row, lay.v(inc.edge), inc.sign);
      }
      if (R) {
        res(row) += areas[k] * lam;
        res(lay.lambda()) += areas[k] * p[k];
      }
      if (T) {
        add(row, lay.lambda(), areas[k]);
        add(lay.lambda(), lay.p(k), areas[k]);
      }
    }

    // Transport rows: time derivative, upwind and mobility fluxes.
    const double inv_dt = 1.0 / prm.dt;
    for (std::size_t k = 0; k < nt; ++k) {
      if (R) {
        res(lay.u(k)) += areas[k] * (u[k] - c.u_prev[k]) * inv_dt;
        res(lay.n(k)) += areas[k] * (n[k] - c.n_prev[k]) * inv_dt;
      }
      if (T) {
        add(lay.u(k), lay.u(k), areas[k] * inv_dt);
        add(lay.n(k), lay.n(k), areas[k] * inv_dt);
      }
    }
    for (std::size_t id = 0; id < ne; ++id) {
      const Edge& e = edges[id];
      const std::size_t K = e.left, L = e.right;
      const double ratio = e.length / e.bary_dist;
      const UpwindEdge au = upwind_edge(F[id], u[K], u[L]);
      const UpwindEdge an = upwind_edge(F[id], n[K], n[L]);
      const MobilityEdge bu = mobility_edge(ratio, mu0[K], mu0[L], split_at(ou, K),
                                            split_at(ou, L), dsplit_at(ou, K), dsplit_at(ou, L));
      const MobilityEdge bn = mobility_edge(ratio, mun[K], mun[L], split_at(on, K),
                                            split_at(on, L), dsplit_at(on, K), dsplit_at(on, L));
      if (R) {
        const double fu = au.value + prm.C_u * bu.value;
        const double fn = an.value + prm.C_n * bn.value;
        res(lay.u(K)) += fu;
        res(lay.u(L)) -= fu;
        res(lay.n(K)) += fn;
        res(lay.n(L)) -= fn;
      }
      if (T) {
        for (int side = 0; side < 2; ++side) {
          const double sgn = side == 0 ? 1.0 : -1.0;
          const std::size_t ru = lay.u(side == 0 ? K : L);
          const std::size_t rn = lay.n(side == 0 ? K : L);
          add(ru, lay.v(id), sgn * au.d_flux);
          add(ru, lay.u(K), sgn * (au.d_left + prm.C_u * bu.d_w_left));
          add(ru, lay.u(L), sgn * (au.d_right + prm.C_u * bu.d_w_right));
          add_mu0(ru, K, sgn * prm.C_u * bu.d_mu_left);
          add_mu0(ru, L, sgn * prm.C_u * bu.d_mu_right);
          add(rn, lay.v(id), sgn * an.d_flux);
          add(rn, lay.n(K),
              sgn * (an.d_left + prm.C_n * (bn.d_w_left + bn.d_mu_left * inv_delta)));
          add(rn, lay.n(L),
              sgn * (an.d_right + prm.C_n * (bn.d_w_right + bn.d_mu_right * inv_delta)));
        }
      }
    }

    // Proliferation exchange: -Q in the u rows, +Q in the n rows.
    const double rate = prm.delta * prm.prolif_rate;
    for (std::size_t k = 0; k < nt; ++k) {
      const double h = mobility_eval(c.h_rs, u[k]);
      const double dh = mobility_derivative(c.h_rs, u[k]);
      const double np = pos_part(n[k]);
      const double diff = mun[k] - mu0[k];
      const double xp = pos_part(diff);
      const double act = diff > 0.0 ? 1.0 : 0.0;
      const double w = rate * areas[k];
      if (R) {
        const double q = w * h * np * xp;
        res(lay.u(k)) -= q;
        res(lay.n(k)) += q;
      }
      if (T) {
        const double dq_du = w * dh * np * xp;
        const double dq_dn = w * h * ((n[k] > 0.0 ? 1.0 : 0.0) * xp + np * act * inv_delta);
        const double dq_dmu0 = -w * h * np * act;
        add(lay.u(k), lay.u(k), -dq_du);
        add(lay.u(k), lay.n(k), -dq_dn);
        add_mu0(lay.u(k), k, -dq_dmu0);
        add(lay.n(k), lay.u(k), dq_du);
        add(lay.n(k), lay.n(k), dq_dn);
        add_mu0(lay.n(k), k, dq_dmu0);
      }
    }

    // Chemical potential rows (lumped mass, linear in u, n and mu_u).
    const double eps2 = prm.eps * prm.eps;
    for (std::size_t j = 0; j < nv; ++j) {
      if (R) res(lay.mu(j)) += omega[j] * m[j] - c.explicit_rhs[j];
      if (T) add(lay.mu(j), lay.mu(j), omega[j]);
    }
    auto apply_block = [&](const Eigen::SparseMatrix<double>& mat, double coef) {
      for (Eigen::Index col = 0; col < mat.outerSize(); ++col) {
        for (Eigen::SparseMatrix<double>::InnerIterator it(mat, col); it; ++it) {
          const double val = coef * it.value();
          if (R) res(lay.mu(it.row())) += val * u[col];
          if (T) add(lay.mu(it.row()), lay.u(col), val);
        }
      }
    };
    apply_block(stiff_pi, -eps2);
    apply_block(mass_pi, -kConvexSplitImplicitSlope);
    for (std::size_t k = 0; k < nt; ++k) {
      const double w = prm.chi0 * areas[k] / 3.0;
      for (int vtx : tris[k]) {
        if (R) res(lay.mu(vtx)) += w * n[k];
        if (T) add(lay.mu(vtx), lay.n(k), w);
      }
    }
  }

  Eigen::SparseMatrix<double> build_jacobian(const StepContext& c, const Eigen::VectorXd& x) const {
    std::vector<Triplet> trip;
    trip.reserve(64 * lay.size());
    evaluate(c, x, nullptr, &trip);
    const auto n = static_cast<Eigen::Index>(lay.size());
    Eigen::SparseMatrix<double> J(n, n);
    J.setFromTriplets(trip.begin(), trip.end());
    return J;
  }

  Eigen::VectorXd build_residual(const StepContext& c, const Eigen::VectorXd& x) const {
    Eigen::VectorXd R;
    evaluate(c, x, &R, nullptr);
    return R;
  }

  double scaled_max(const Eigen::VectorXd& R) const {
    const Eigen::VectorXd s = scale.cwiseProduct(R);
    if (!s.allFinite()) return std::numeric_limits<double>::infinity();
    return s.cwiseAbs().maxCoeff();
  }

  double scaled_norm2(const Eigen::VectorXd& R) const {
    const double v = scale.cwiseProduct(R).norm();
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  }

  Eigen::VectorXd reduced_residual(const StepContext& c, const Eigen::VectorXd& y) const {
    return restrict_rows * build_residual(c, expand * y);
  }

  double reduced_max(const Eigen::VectorXd& R) const {
    const Eigen::VectorXd s = red_scale.cwiseProduct(R);
    if (!s.allFinite()) return std::numeric_limits<double>::infinity();
    return s.cwiseAbs().maxCoeff();
  }

  double reduced_norm2(const Eigen::VectorXd& R) const {
    const double v = red_scale.cwiseProduct(R).norm();
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  }

  /// Factorizes the scaled reduced Jacobian at y; the factors stay valid for
  /// later chord steps until the next call.
  void factor(const StepContext& c, const Eigen::VectorXd& y) {
    factored = false;
    J = red_scale.asDiagonal() * (restrict_rows * build_jacobian(c, expand * y) * expand);
    J.makeCompressed();
    if (!analyzed) {
      lu.analyzePattern(J);
      analyzed = true;
    }
    lu.factorize(J);
    if (lu.info() != Eigen::Success) throw SingularLinearSystem("sparse LU factorization failed");
    factored = true;
  }

  /// Update -J^{-1} R with the current factors.
  Eigen::VectorXd direction(const Eigen::VectorXd& R) {
    const Eigen::VectorXd rhs = -red_scale.cwiseProduct(R);
    Eigen::VectorXd dy = lu.solve(rhs);
    if (lu.info() != Eigen::Success || !dy.allFinite())
      throw SingularLinearSystem("sparse LU solve produced a non-finite update");
    return dy;
  }
};

Stepper::Stepper(const Mesh& mesh, NewtonConfig cfg)
    : mesh_(mesh), cfg_(cfg), impl_(std::make_unique<Impl>(mesh)) {
  cfg_.validate();
}

Stepper::~Stepper() = default;

Eigen::VectorXd Stepper::residual(const Eigen::VectorXd& x, const State& prev,
                                  const ModelParams& params) {
  return impl_->build_residual(impl_->context(prev, params), x);
}

Eigen::SparseMatrix<double> Stepper::jacobian(const Eigen::VectorXd& x, const State& prev,
                                              const ModelParams& params) {
  return impl_->build_jacobian(impl_->context(prev, params), x);
}

const Eigen::VectorXd& Stepper::row_scale() const { return impl_->scale; }

StepResult Stepper::solve(const State& prev, const ModelParams& params) {
  Impl& im = *impl_;
  const DofLayout& lay = im.lay;
  const StepContext ctx = im.context(prev, params);

  Eigen::VectorXd y = im.reduce(prev);
  Eigen::VectorXd R = im.reduced_residual(ctx, y);
  // The mu_u rows are diagonal in mu_u: start from their exact solution.
  const auto omega = mesh_.vertex_support_volume();
  for (std::size_t j = 0; j < lay.n_verts; ++j) {
    const auto row = static_cast<Eigen::Index>(im.red_mu(j));
    y[row] -= R[row] / omega[j];
  }
  R = im.reduced_residual(ctx, y);
  double r = im.reduced_max(R);

  // Newton with lagged Jacobians: the factors of the last Jacobian (possibly
  // from the previous time step) are reused while they contract the residual
  // fast enough, otherwise the Jacobian is rebuilt and a damped step taken.
  // The second half of the iteration budget always uses fresh Jacobians.
  int iters = 0;
  bool converged = r <= cfg_.residual_tol;
  while (!converged && iters < cfg_.max_iters) {
    const double merit = im.reduced_norm2(R);
    if (im.factored && 2 * iters < cfg_.max_iters) {
      ++iters;
      Eigen::VectorXd yt = y + im.direction(R);
      Eigen::VectorXd Rt = im.reduced_residual(ctx, yt);
      if (im.reduced_norm2(Rt) <= kChordContraction * merit) {
        y = std::move(yt);
        R = std::move(Rt);
        r = im.reduced_max(R);
        converged = r <= cfg_.residual_tol;
        continue;
      }
      if (iters >= cfg_.max_iters) break;
    }
    im.factor(ctx, y);
    const Eigen::VectorXd dy = im.direction(R);
    ++iters;
    double alpha = 1.0;
    Eigen::VectorXd yt, Rt;
    for (;;) {
      yt = y + alpha * dy;
      Rt = im.reduced_residual(ctx, yt);
      if (im.reduced_norm2(Rt) <= (1.0 - 1e-4 * alpha) * merit) break;
      if (alpha * cfg_.shrink < cfg_.relaxation_floor) break;
      alpha *= cfg_.shrink;
    }
    y = std::move(yt);
    R = std::move(Rt);
    r = im.reduced_max(R);
    converged = r <= cfg_.residual_tol;
  }
  if (!converged) {
    std::ostringstream msg;
    msg << "Newton did not converge in " << iters << " iterations (scaled residual " << r << ")";
    throw NewtonDiverged(msg.str(), iters, r);
  }
  for (int k = 0; im.factored && k < cfg_.polish_iters && r > 1e-13; ++k) {
    Eigen::VectorXd yt = y + im.direction(R);
    Eigen::VectorXd Rt = im.reduced_residual(ctx, yt);
    const double rt = im.reduced_max(Rt);
    if (!(rt < r)) break;
    ++iters;
    y = std::move(yt);
    R = std::move(Rt);
    r = rt;
  }

  // Back to the full unknowns: fluxes from psi, then the pressure that
  // balances the Darcy rows, shifted to zero mean.
  Eigen::VectorXd x = im.expand * y;
  im.recover_pressure(im.build_residual(ctx, x), x);
  PressureField p_full(lay.n_tris);
  for (std::size_t k = 0; k < lay.n_tris; ++k) p_full[k] = x[static_cast<Eigen::Index>(lay.p(k))];
  remove_pressure_mean(mesh_, p_full);
  for (std::size_t k = 0; k < lay.n_tris; ++k) x[static_cast<Eigen::Index>(lay.p(k))] = p_full[k];
  const double full_residual = im.scaled_max(im.build_residual(ctx, x));

  StepResult out;
  State& s = out.state;
  s = unpack_state(mesh_, x);
  const double band = cfg_.bounds_band;
  auto clamp_field = [band](P0Field& f, const char* name) {
    for (std::size_t k = 0; k < f.size(); ++k) {
      if (f[k] < -band || f[k] > 1.0 + band) {
        std::ostringstream msg;
        msg.precision(17);
        msg << name << " = " << f[k] << " at element " << k << " leaves [0,1] by more than "
            << band;
        throw BoundsViolation(msg.str());
      }
      f[k] = std::clamp(f[k], 0.0, 1.0);
    }
  };
  clamp_field(s.u, "u");
  clamp_field(s.n, "n");
  s.mu_n = mu_n_discrete(mesh_, s.n, prev.u, params);
  s.t = prev.t + params.dt;

  StepReport& rep = out.report;
  rep.time = s.t;
  rep.newton_iters = iters;
  rep.final_residual = full_residual;
  rep.mass_total = total_mass(mesh_, s);
  const MassCheck mass = check_mass(mesh_, prev, s);
  rep.mass_drift = mass.drift;
  rep.mass_drift_pi1h = mass.drift_pi1h;
  rep.bounds = check_bounds(mesh_, s);
  const EnergyLawCheck law = check_energy_law(mesh_, prev, s, params);
  rep.energy = law.terms;
  rep.law_residual = law.residual;
  rep.identity_residual = law.identity_residual;
  rep.darcy = check_darcy(mesh_, s);
  return out;
}

Eigen::VectorXd assemble_residual(const Mesh& mesh, const State& trial, const State& prev,
                                  const ModelParams& params) {
  require_finite(trial.v.view(), "trial v");
  require_finite(trial.p.view(), "trial p");
  require_finite(trial.u.view(), "trial u");
  require_finite(trial.mu_u.view(), "trial mu_u");
  require_finite(trial.n.view(), "trial n");
  Stepper st(mesh);
  return st.residual(pack_state(mesh, trial), prev, params);
}

Eigen::SparseMatrix<double> assemble_jacobian(const Mesh& mesh, const State& trial,
                                              const State& prev, const ModelParams& params) {
  Stepper st(mesh);
  return st.jacobian(pack_state(mesh, trial), prev, params);
}

StepResult solve_timestep(const Mesh& mesh, const State& prev, const ModelParams& params,
                          const NewtonConfig& cfg) {
  Stepper st(mesh, cfg);
  return st.solve(prev, params);
}

State make_initial_state(const Mesh& mesh, const P0Field& u0, const P0Field& n0,
                         const ModelParams& params) {
  if (u0.size() != mesh.num_triangles() || n0.size() != mesh.num_triangles())
    throw std::invalid_argument("initial state: field sizes do not match the mesh");
  State s = make_state(mesh);
  s.u = u0;
  s.n = n0;
  Stepper st(mesh);
  const DofLayout lay(mesh);
  const Eigen::VectorXd R = st.residual(pack_state(mesh, s), s, params);
  const auto omega = mesh.vertex_support_volume();
  for (std::size_t j = 0; j < lay.n_verts; ++j)
    s.mu_u[j] = -R[static_cast<Eigen::Index>(lay.mu(j))] / omega[j];
  s.mu_n = mu_n_discrete(mesh, s.n, s.u, params);
  return s;
}

namespace {

/// Solves one step, optionally re-solving it with full stabilization when
/// the energy went up.
StepResult solve_once(Stepper& st, const State& prev, const ModelParams& params,
                      bool enforce_energy) {
  StepResult r = st.solve(prev, params);
  if (enforce_energy && r.report.energy.E_total > r.report.energy.E_prev) {
    ModelParams stab = params;
    stab.sigma_u = 1.0;
    stab.sigma_n = 1.0;
    stab.eta = 1e-8;
    r = st.solve(prev, stab);
    r.report.stabilized = true;
  }
  return r;
}

/// Combines sub-step reports into one report over the full step.
StepReport merge_substeps(const Mesh& mesh, const State& start, const State& end,
                          const std::vector<StepReport>& parts) {
  StepReport out = parts.back();
  const double w = 1.0 / static_cast<double>(parts.size());
  out.substeps = static_cast<int>(parts.size());
  out.newton_iters = 0;
  out.final_residual = 0.0;
  out.stabilized = false;
  EnergyBreakdown& e = out.energy;
  e.E_prev = parts.front().energy.E_prev;
  e.D_u = e.D_n = e.D_prolif = e.D_darcy = e.D_dt_u = e.D_dt_n = 0.0;
  e.tau_u = e.tau_n = e.convex_gap = 0.0;
  out.law_residual = out.identity_residual = 0.0;
  for (const StepReport& p : parts) {
    out.newton_iters += p.newton_iters;
    out.final_residual = std::max(out.final_residual, p.final_residual);
    out.stabilized = out.stabilized || p.stabilized;
    e.D_u += w * p.energy.D_u;
    e.D_n += w * p.energy.D_n;
    e.D_prolif += w * p.energy.D_prolif;
    e.D_darcy += w * p.energy.D_darcy;
    e.D_dt_u += w * p.energy.D_dt_u;
    e.D_dt_n += w * p.energy.D_dt_n;
    e.tau_u += w * p.energy.tau_u;
    e.tau_n += w * p.energy.tau_n;
    e.convex_gap += w * p.energy.convex_gap;
    out.law_residual += w * p.law_residual;
    out.identity_residual += w * p.identity_residual;
    out.darcy.div_inf = std::max(out.darcy.div_inf, p.darcy.div_inf);
    out.darcy.incompressibility_inf =
        std::max(out.darcy.incompressibility_inf, p.darcy.incompressibility_inf);
  }
  const MassCheck mass = check_mass(mesh, start, end);
  out.mass_drift = mass.drift;
  out.mass_drift_pi1h = mass.drift_pi1h;
  return out;
}

}  // namespace

RunResult run(const Mesh& mesh, const State& initial, const ModelParams& params,
              const NewtonConfig& cfg, int n_steps, const RunOptions& options) {
  if (n_steps < 0) throw std::invalid_argument("run: n_steps must be >= 0");
  params.validate();
  RunResult out;
  out.final_state = initial;
  out.reports.push_back(initial_report(mesh, initial, params));
  Stepper st(mesh, cfg);
  for (int step = 1; step <= n_steps; ++step) {
    const State& prev = out.final_state;
    StepResult result;
    for (int halving = 0;; ++halving) {
      try {
        if (halving == 0) {
          result = solve_once(st, prev, params, options.enforce_energy);
        } else {
          const int subs = 1 << halving;
          ModelParams sub = params;
          sub.dt = params.dt / subs;
          State cur = prev;
          std::vector<StepReport> parts;
          for (int s = 0; s < subs; ++s) {
            StepResult r = solve_once(st, cur, sub, options.enforce_energy);
            parts.push_back(r.report);
            cur = std::move(r.state);
          }
          result.report = merge_substeps(mesh, prev, cur, parts);
          result.state = std::move(cur);
        }
        break;
      } catch (const NewtonDiverged& e) {
        if (halving >= cfg.max_halvings) throw StepError(step, e.what());
      } catch (const SingularLinearSystem& e) {
        if (halving >= cfg.max_halvings) throw StepError(step, e.what());
      } catch (const std::exception& e) {
        throw StepError(step, e.what());
      }
    }
    result.state.t = initial.t + step * params.dt;
    result.report.step = step;
    result.report.time = result.state.t;
    out.final_state = std::move(result.state);
    out.reports.push_back(result.report);
    if (options.on_step) options.on_step(out.final_state, out.reports.back());
  }
  return out;
}

}  // namespace chd
