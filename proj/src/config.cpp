#include "chd/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <random>
#include <sstream>

namespace chd {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

double to_double(const std::string& field, const std::string& text) {
  double x = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), x);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size() || !std::isfinite(x))
    throw ConfigError(field, "expected a finite number, got '" + text + "'");
  return x;
}

long long to_int(const std::string& field, const std::string& text) {
  long long x = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), x);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size())
    throw ConfigError(field, "expected an integer, got '" + text + "'");
  return x;
}

bool to_bool(const std::string& field, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError(field, "expected true or false, got '" + text + "'");
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

std::pair<int, int> to_pair(const std::string& field, const std::string& text) {
  const auto items = split_list(text);
  if (items.size() != 2) throw ConfigError(field, "expected two integers 'a,b', got '" + text + "'");
  const long long a = to_int(field, items[0]);
  const long long b = to_int(field, items[1]);
  if (a < 1 || b < 1) throw ConfigError(field, "exponents must be >= 1");
  return {static_cast<int>(a), static_cast<int>(b)};
}

const char* initial_name(InitialKind k) {
  switch (k) {
    case InitialKind::tumor: return "tumor";
    case InitialKind::constant: return "constant";
    case InitialKind::random: return "random";
  }
  return "tumor";
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"mesh.nx", [](RunConfig& c, const std::string& f, const std::string& v) { c.nx = static_cast<int>(to_int(f, v)); }},
      {"mesh.ny", [](RunConfig& c, const std::string& f, const std::string& v) { c.ny = static_cast<int>(to_int(f, v)); }},
      {"mesh.x0", [](RunConfig& c, const std::string& f, const std::string& v) { c.domain.x0 = to_double(f, v); }},
      {"mesh.x1", [](RunConfig& c, const std::string& f, const std::string& v) { c.domain.x1 = to_double(f, v); }},
      {"mesh.y0", [](RunConfig& c, const std::string& f, const std::string& v) { c.domain.y0 = to_double(f, v); }},
      {"mesh.y1", [](RunConfig& c, const std::string& f, const std::string& v) { c.domain.y1 = to_double(f, v); }},
      {"mesh.file", [](RunConfig& c, const std::string&, const std::string& v) { c.mesh_file = v; }},
      {"model.eps", [](RunConfig& c, const std::string& f, const std::string& v) { c.model.eps = to_double(f, v); }},
      {"model.delta", [](RunConfig& c, const std::string& f, const std::string& v) { c.model.delta = to_double(f, v); }},
      {"model.C_u", [](RunConfig& c, const std::string& f, const std::string& v) { c.model.C_u = to_double(f, v); }},
      {"model.C_n", [](RunConfig& c, const std::string& f, const std::string& v) { c.model.C_n = to_double(f, v); }},
      {"model.K_perm", [](RunConfig& c, const std::string& f, const std::string& v) { c.model.K_perm = to_double(f, v); }},
      {"model.chi0", [](RunConfig& c, const std::string& f, const std::string& v) { c.model.chi0 = to_double(f, v); }},
      {"model.prolif_rate", [](RunConfig& c, const std::string& f, const std::string& v) { c.model.prolif_rate = to_double(f, v); }},
      {"model.mobility", [](RunConfig& c, const std::string& f, const std::string& v) {
         const auto [p, q] = to_pair(f, v);
         c.model.mobility = MobilitySpec::make(p, q);
       }},
      {"model.prolif_exps", [](RunConfig& c, const std::string& f, const std::string& v) {
         const auto [r, s] = to_pair(f, v);
         c.model.prolif_exps = {r, s};
       }},
      {"model.sigma_u", [](RunConfig& c, const std::string& f, const std::string& v) { c.model.sigma_u = to_double(f, v); }},
      {"model.sigma_n", [](RunConfig& c, const std::string& f, const std::string& v) { c.model.sigma_n = to_double(f, v); }},
      {"model.eta", [](RunConfig& c, const std::string& f, const std::string& v) { c.model.eta = to_double(f, v); }},
      {"model.dt", [](RunConfig& c, const std::string& f, const std::string& v) { c.model.dt = to_double(f, v); }},
      {"model.initial", [](RunConfig& c, const std::string& f, const std::string& v) {
         if (v == "tumor") c.initial = InitialKind::tumor;
         else if (v == "constant") c.initial = InitialKind::constant;
         else if (v == "random") c.initial = InitialKind::random;
         else throw ConfigError(f, "expected tumor, constant or random, got '" + v + "'");
       }},
      {"model.u_const", [](RunConfig& c, const std::string& f, const std::string& v) { c.u_const = to_double(f, v); }},
      {"model.n_const", [](RunConfig& c, const std::string& f, const std::string& v) { c.n_const = to_double(f, v); }},
      {"model.noise", [](RunConfig& c, const std::string& f, const std::string& v) { c.noise = to_double(f, v); }},
      {"solver.residual_tol", [](RunConfig& c, const std::string& f, const std::string& v) { c.solver.residual_tol = to_double(f, v); }},
      {"solver.max_iters", [](RunConfig& c, const std::string& f, const std::string& v) { c.solver.max_iters = static_cast<int>(to_int(f, v)); }},
      {"solver.shrink", [](RunConfig& c, const std::string& f, const std::string& v) { c.solver.shrink = to_double(f, v); }},
      {"solver.relaxation_floor", [](RunConfig& c, const std::string& f, const std::string& v) { c.solver.relaxation_floor = to_double(f, v); }},
      {"solver.polish_iters", [](RunConfig& c, const std::string& f, const std::string& v) { c.solver.polish_iters = static_cast<int>(to_int(f, v)); }},
      {"solver.max_halvings", [](RunConfig& c, const std::string& f, const std::string& v) { c.solver.max_halvings = static_cast<int>(to_int(f, v)); }},
      {"solver.bounds_band", [](RunConfig& c, const std::string& f, const std::string& v) { c.solver.bounds_band = to_double(f, v); }},
      {"solver.steps", [](RunConfig& c, const std::string& f, const std::string& v) { c.steps = static_cast<int>(to_int(f, v)); }},
      {"solver.enforce_energy", [](RunConfig& c, const std::string& f, const std::string& v) { c.enforce_energy = to_bool(f, v); }},
      {"solver.seed", [](RunConfig& c, const std::string& f, const std::string& v) {
         std::uint64_t s = 0;
         const auto res = std::from_chars(v.data(), v.data() + v.size(), s);
         if (res.ec != std::errc() || res.ptr != v.data() + v.size())
           throw ConfigError(f, "expected an integer in [0, 2^64), got '" + v + "'");
         c.seed = s;
       }},
      {"output.dir", [](RunConfig& c, const std::string&, const std::string& v) { c.out_dir = v; }},
      {"output.snapshot_every", [](RunConfig& c, const std::string& f, const std::string& v) { c.snapshot_every = static_cast<int>(to_int(f, v)); }},
      {"output.preset", [](RunConfig& c, const std::string&, const std::string& v) { c.preset = v; }},
      {"output.desk_scale", [](RunConfig& c, const std::string& f, const std::string& v) { c.desk_scale = to_bool(f, v); }},
      {"output.snapshot_times", [](RunConfig& c, const std::string& f, const std::string& v) {
         c.snapshot_times.clear();
         if (v.empty()) return;
         for (const auto& item : split_list(v)) c.snapshot_times.push_back(to_double(f, item));
       }},
  };
  return table;
}

/// Rethrows a "<field>: <reason>" invalid_argument as a ConfigError.
[[noreturn]] void rethrow_as_config(const std::invalid_argument& e) {
  const std::string what = e.what();
  const auto colon = what.find(": ");
  if (colon == std::string::npos) throw ConfigError("config", what);
  throw ConfigError(what.substr(0, colon), what.substr(colon + 2));
}

}  // namespace

void RunConfig::validate() const {
  try {
    model.validate();
    solver.validate();
  } catch (const std::invalid_argument& e) {
    rethrow_as_config(e);
  }
  if (mesh_file.empty()) {
    if (nx < 1) throw ConfigError("nx", "must be >= 1");
    if (ny < 1) throw ConfigError("ny", "must be >= 1");
    if (!(domain.x1 > domain.x0) || !(domain.y1 > domain.y0))
      throw ConfigError("domain", "must be a non-degenerate rectangle");
    const double hx = (domain.x1 - domain.x0) / nx;
    const double hy = (domain.y1 - domain.y0) / ny;
    if (std::abs(hx - hy) > 1e-12 * std::max(hx, hy))
      throw ConfigError("nx", "cells must be square: (x1-x0)/nx must equal (y1-y0)/ny");
  }
  if (steps < 0) throw ConfigError("steps", "must be >= 0");
  if (snapshot_every < 1) throw ConfigError("snapshot_every", "must be >= 1");
  if (!(u_const >= 0.0 && u_const <= 1.0)) throw ConfigError("u_const", "must lie in [0,1]");
  if (!(n_const >= 0.0 && n_const <= 1.0)) throw ConfigError("n_const", "must lie in [0,1]");
  if (!(noise >= 0.0)) throw ConfigError("noise", "must be >= 0");
}

RunConfig parse_config(std::istream& in) {
  RunConfig cfg;
  std::string section;
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("line " + std::to_string(lineno), "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section != "mesh" && section != "model" && section != "solver" && section != "output")
        throw ConfigError(section, "unknown section");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno), "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (section.empty()) throw ConfigError(key, "key outside of a section");
    const auto it = setters().find(section + "." + key);
    if (it == setters().end()) throw ConfigError(key, "unknown key in section [" + section + "]");
    it->second(cfg, key, value);
  }
  return cfg;
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open '" + path + "'");
  return parse_config(in);
}

std::string serialize_config(const RunConfig& c) {
  std::ostringstream out;
  const ModelParams& m = c.model;
  out << "[mesh]\n"
      << "nx = " << c.nx << "\nny = " << c.ny << '\n'
      << "x0 = " << fmt(c.domain.x0) << "\nx1 = " << fmt(c.domain.x1) << '\n'
      << "y0 = " << fmt(c.domain.y0) << "\ny1 = " << fmt(c.domain.y1) << '\n'
      << "file = " << c.mesh_file << "\n\n";
  out << "[model]\n"
      << "eps = " << fmt(m.eps) << "\ndelta = " << fmt(m.delta) << '\n'
      << "C_u = " << fmt(m.C_u) << "\nC_n = " << fmt(m.C_n) << '\n'
      << "K_perm = " << fmt(m.K_perm) << "\nchi0 = " << fmt(m.chi0) << '\n'
      << "prolif_rate = " << fmt(m.prolif_rate) << '\n'
      << "mobility = " << m.mobility.p << ',' << m.mobility.q << '\n'
      << "prolif_exps = " << m.prolif_exps.r << ',' << m.prolif_exps.s << '\n'
      << "sigma_u = " << fmt(m.sigma_u) << "\nsigma_n = " << fmt(m.sigma_n) << '\n'
      << "eta = " << fmt(m.eta) << "\ndt = " << fmt(m.dt) << '\n'
      << "initial = " << initial_name(c.initial) << '\n'
      << "u_const = " << fmt(c.u_const) << "\nn_const = " << fmt(c.n_const) << '\n'
      << "noise = " << fmt(c.noise) << "\n\n";
  const NewtonConfig& s = c.solver;
  out << "[solver]\n"
      << "residual_tol = " << fmt(s.residual_tol) << "\nmax_iters = " << s.max_iters << '\n'
      << "shrink = " << fmt(s.shrink) << "\nrelaxation_floor = " << fmt(s.relaxation_floor) << '\n'
      << "polish_iters = " << s.polish_iters << "\nmax_halvings = " << s.max_halvings << '\n'
      << "bounds_band = " << fmt(s.bounds_band) << '\n'
      << "steps = " << c.steps << "\nenforce_energy = " << (c.enforce_energy ? "true" : "false") << '\n'
      << "seed = " << c.seed << "\n\n";
  out << "[output]\n"
      << "dir = " << c.out_dir << "\nsnapshot_every = " << c.snapshot_every << '\n'
      << "preset = " << c.preset << "\ndesk_scale = " << (c.desk_scale ? "true" : "false") << '\n'
      << "snapshot_times = ";
  for (std::size_t i = 0; i < c.snapshot_times.size(); ++i)
    out << (i ? "," : "") << fmt(c.snapshot_times[i]);
  out << '\n';
  return out.str();
}

namespace {

struct Family {
  const char* name;
  double prolif_rate;
  double chi0;
  double dt;
  std::vector<double> times;
};

const std::vector<Family>& families() {
  static const std::vector<Family> f = {
      {"reference", 0.5, 0.1, 0.1, {10.0, 20.0, 50.0}},
      {"P0-0.001", 0.001, 0.1, 0.1, {30.0, 50.0, 100.0}},
      {"P0-0.05", 0.05, 0.1, 0.1, {50.0, 80.0, 200.0}},
      {"P0-2", 2.0, 0.1, 0.025, {1.25, 6.25, 12.5}},
      {"chi0-0.01", 0.5, 0.01, 0.1, {10.0, 20.0, 50.0}},
      {"chi0-0.5", 0.5, 0.5, 0.01, {3.0, 10.0, 17.0}},
      {"chi0-1", 0.5, 1.0, 0.01, {2.5, 5.0, 10.0}},
  };
  return f;
}

const std::vector<std::pair<const char*, double>>& permeabilities() {
  static const std::vector<std::pair<const char*, double>> k = {{"K0.1", 0.1}, {"K1", 1.0}, {"K10", 10.0}};
  return k;
}

}  // namespace

std::vector<std::string> preset_names() {
  std::vector<std::string> names;
  for (const Family& f : families())
    for (const char* sym : {"sym", "nonsym"})
      for (const auto& [kname, k] : permeabilities())
        names.push_back(std::string(f.name) + "-" + sym + "-" + kname);
  names.push_back("constant-sanity");
  names.push_back("random-sanity");
  return names;
}

RunConfig preset(const std::string& name) {
  RunConfig c;
  c.preset = name;
  if (name == "constant-sanity" || name == "random-sanity") {
    c.nx = c.ny = 8;
    c.domain = {0.0, 1.0, 0.0, 1.0};
    c.model.prolif_rate = 0.0;
    c.model.chi0 = 0.0;
    c.initial = name == "constant-sanity" ? InitialKind::constant : InitialKind::random;
    c.u_const = 0.5;
    c.n_const = 0.5;
    c.steps = 10;
    c.snapshot_every = 5;
    return c;
  }
  for (const Family& f : families()) {
    for (const char* sym : {"sym", "nonsym"}) {
      for (const auto& [kname, k] : permeabilities()) {
        if (name != std::string(f.name) + "-" + sym + "-" + kname) continue;
        c.model.prolif_rate = f.prolif_rate;
        c.model.chi0 = f.chi0;
        c.model.dt = f.dt;
        c.model.K_perm = k;
        if (std::string(sym) == "sym") {
          c.model.mobility = MobilitySpec::make(1, 1);
          c.model.prolif_exps = {1, 1};
        } else {
          c.model.mobility = MobilitySpec::make(5, 1);
          c.model.prolif_exps = {1, 3};
        }
        c.snapshot_times = f.times;
        c.desk_scale = true;
        c.nx = c.ny = 36;
        c.steps = 50;
        c.snapshot_every = 10;
        return c;
      }
    }
  }
  throw ConfigError("preset", "unknown preset '" + name + "'");
}

Mesh build_mesh(const RunConfig& cfg) {
  if (!cfg.mesh_file.empty()) return load_mesh_file(cfg.mesh_file);
  return build_crossed_mesh(cfg.nx, cfg.ny, cfg.domain);
}

double initial_u(Point x, double eps) {
  const double s = std::sqrt(2.0) * eps;
  return 0.5 * (std::tanh((1.75 - norm(x)) / s) + 1.0);
}

double initial_n(Point x, double eps) {
  const double s = std::sqrt(2.0) * eps;
  const double bumps = std::tanh((1.0 - norm(x - Point{2.45, 1.45})) / s) +
                       std::tanh((1.75 - norm(x - Point{-3.75, 1.0})) / s) +
                       std::tanh((2.5 - norm(x - Point{0.0, -5.0})) / s) + 3.0;
  return 0.5 * (1.0 - initial_u(x, eps)) + 0.25 * bumps;
}

std::pair<P0Field, P0Field> initial_conditions(const Mesh& mesh, const RunConfig& cfg) {
  P0Field u = make_p0(mesh), n = make_p0(mesh);
  const auto bary = mesh.barycenters();
  switch (cfg.initial) {
    case InitialKind::tumor:
      for (std::size_t k = 0; k < bary.size(); ++k) {
        u[k] = initial_u(bary[k], cfg.model.eps);
        n[k] = initial_n(bary[k], cfg.model.eps);
      }
      break;
    case InitialKind::constant:
      for (std::size_t k = 0; k < bary.size(); ++k) {
        u[k] = cfg.u_const;
        n[k] = cfg.n_const;
      }
      break;
    case InitialKind::random: {
      std::mt19937_64 rng(cfg.seed);
      std::uniform_real_distribution<double> dist(-cfg.noise, cfg.noise);
      for (std::size_t k = 0; k < bary.size(); ++k) {
        u[k] = cfg.u_const + dist(rng);
        n[k] = cfg.n_const + dist(rng);
      }
      break;
    }
  }
  for (std::size_t k = 0; k < bary.size(); ++k) {
    u[k] = std::clamp(u[k], 0.0, 1.0);
    n[k] = std::clamp(n[k], 0.0, 1.0);
  }
  return {std::move(u), std::move(n)};
}

}  // namespace chd
