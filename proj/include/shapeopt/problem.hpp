#pragma once

#include "shapeopt/mesh_generator.hpp"
#include "shapeopt/stress.hpp"
#include "shapeopt/text.hpp"

#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace shapeopt {

/// Everything that defines one optimization run.
struct ProblemConfig {
  std::string name = "custom";
  TaggedPolygon geometry;
  Vec2 traction = Vec2::Zero();
  double youngs_modulus = 1.0;
  double poisson_ratio = 0.3;
  double volume_target = 0.0;
  double delta = 0.0;
  double gamma1 = 1.0;
  double gamma2 = 1.0;
  double p = 2.0;
  double rho_low = 1.0;
  double radius = 1.0;  ///< adjoint ball radius r
  double h = 1.0;       ///< initial meshsize
  int order = 2;              ///< polynomial order of the state
  int deformation_order = 1;  ///< order of the descent fields; 1 matches vertex motion
  CostMode mode = CostMode::MaxNorm;
  double c_step = 0.3;
  double max_step = std::numeric_limits<double>::infinity();
  int iterations = 100;  ///< N_max
  double rel_tol = 1e-3;
  int snapshot_every = 10;
  double remesh_quality = 0.2;
  int max_halvings = 10;
  int sampling_degree = 0;
  bool normalize_stress_gradients = true;  ///< scale each stress gradient to unit H-norm before combining

  MaterialParams material() const { return lame_from_engineering(youngs_modulus, poisson_ratio); }
  Loads loads() const { return Loads::constant_traction(traction); }

  CostConfig cost_config() const {
    CostConfig c;
    c.gamma1 = gamma1;
    c.gamma2 = gamma2;
    c.volume_target = volume_target;
    c.delta = delta;
    c.p = p;
    c.mode = mode;
    c.sampling_degree = sampling_degree;
    return c;
  }

  /// Throws ConfigError when an invariant is violated.
  void validate() const {
    auto fail = [](const std::string& m) { throw ConfigError(m); };
    if (!(gamma1 > 0.0) || !(gamma2 > 0.0)) fail("gamma1 and gamma2 must be positive");
    if (!(volume_target > 0.0)) fail("volume_target must be positive");
    if (!(delta >= 0.0)) fail("delta must be nonnegative");
    if (!(p >= 2.0)) fail("p must be at least 2");
    if (!(radius > 0.0)) fail("radius must be positive");
    if (!(rho_low > 0.0)) fail("rho_low must be positive");
    if (!(h > 0.0)) fail("h must be positive");
    if (order < 1 || order > 3) fail("order must be 1, 2 or 3");
    if (deformation_order < 1 || deformation_order > 3) fail("deformation_order must be 1, 2 or 3");
    if (!(c_step > 0.0)) fail("c_step must be positive");
    if (!(max_step > 0.0)) fail("max_step must be positive");
    if (iterations < 0) fail("iterations must be nonnegative");
    if (!(rel_tol >= 0.0 && rel_tol < 1.0)) fail("rel_tol must lie in [0, 1)");
    if (snapshot_every < 0) fail("snapshot_every must be nonnegative");
    if (!(remesh_quality > 0.0 && remesh_quality < 0.5)) fail("remesh_quality must lie in (0, 0.5)");
    if (max_halvings < 0) fail("max_halvings must be nonnegative");
    material();
    bool has_dirichlet = false;
    for (auto t : geometry.outer.tags) has_dirichlet |= t == BoundaryTag::Dirichlet;
    for (const auto& hl : geometry.holes)
      for (auto t : hl.tags) has_dirichlet |= t == BoundaryTag::Dirichlet;
    if (!has_dirichlet) fail("geometry needs at least one DIRICHLET edge");
  }
};

inline bool operator==(const TaggedLoop& a, const TaggedLoop& b) {
  return a.vertices == b.vertices && a.tags == b.tags;
}

inline bool operator==(const ProblemConfig& a, const ProblemConfig& b) {
  return a.name == b.name && a.geometry.outer == b.geometry.outer && a.geometry.holes == b.geometry.holes &&
         a.traction == b.traction && a.youngs_modulus == b.youngs_modulus && a.poisson_ratio == b.poisson_ratio &&
         a.volume_target == b.volume_target && a.delta == b.delta && a.gamma1 == b.gamma1 &&
         a.gamma2 == b.gamma2 && a.p == b.p && a.rho_low == b.rho_low && a.radius == b.radius && a.h == b.h &&
         a.order == b.order && a.deformation_order == b.deformation_order && a.mode == b.mode &&
         a.c_step == b.c_step && a.max_step == b.max_step &&
         a.iterations == b.iterations && a.rel_tol == b.rel_tol && a.snapshot_every == b.snapshot_every &&
         a.remesh_quality == b.remesh_quality && a.max_halvings == b.max_halvings &&
         a.sampling_degree == b.sampling_degree && a.normalize_stress_gradients == b.normalize_stress_gradients;
}

inline const std::vector<std::string>& builtin_names() {
  static const std::vector<std::string> names{"l_bracket", "bridge"};
  return names;
}

/// Benchmark configurations at their published parameters.
inline ProblemConfig builtin_problem(std::string_view name) {
  using T = BoundaryTag;
  ProblemConfig c;
  if (name == "l_bracket") {
    c.name = "l_bracket";
    c.geometry.outer.vertices = {{0, 0},   {100, 0}, {100, 35}, {100, 40},
                                 {95, 40}, {40, 40}, {40, 100}, {0, 100}};
    c.geometry.outer.tags = {T::Free, T::Free, T::Neumann, T::Neumann, T::Free, T::Free, T::Dirichlet, T::Free};
    c.traction = {0.0, -3.0};
    c.volume_target = 4480.0;
    c.p = 6.0;
    c.gamma1 = 1e-4;
    c.gamma2 = 1.0;
    c.rho_low = 1e-2;
    c.radius = 100.0;
    c.h = 5.0;
    c.order = 3;
    return c;
  }
  if (name == "bridge") {
    c.name = "bridge";
    c.geometry.outer.vertices = {{0, 0}, {1, 0}, {1, 2}, {4, 2}, {4, 0},
                                 {5, 0}, {5, 5}, {3, 5}, {2, 5}, {0, 5}};
    c.geometry.outer.tags = {T::Dirichlet, T::Free, T::Free,    T::Free, T::Dirichlet,
                             T::Free,      T::Free, T::Neumann, T::Free, T::Free};
    c.traction = {0.0, -3.0};
    c.volume_target = 13.3;
    c.p = 2.0;
    c.gamma1 = 1e-2;
    c.gamma2 = 1.0;
    c.rho_low = 10.0;
    c.radius = 7.5;
    c.h = 0.5;
    c.order = 3;
    return c;
  }
  std::string valid;
  for (const auto& n : builtin_names()) valid += (valid.empty() ? "" : ", ") + n;
  throw ConfigError("unknown problem '" + std::string(name) + "'; valid names: " + valid);
}

/// Parses the key = value format documented in docs/config_format.md.
inline ProblemConfig parse_config(std::istream& in, const std::string& source = "<config>") {
  ProblemConfig c;
  c.name = "custom";
  std::vector<std::string> seen;
  int lineno = 0;
  std::string raw;
  auto fail = [&](const std::string& m) -> void {
    throw ConfigError(source + ":" + std::to_string(lineno) + ": " + m);
  };
  auto number = [&](const std::string& key, const std::string& v) {
    const auto d = detail::parse_double(v);
    if (!d) fail("value of '" + key + "' is not a number: '" + v + "'");
    return *d;
  };
  auto integer = [&](const std::string& key, const std::string& v) {
    int i = 0;
    const auto r = std::from_chars(v.data(), v.data() + v.size(), i);
    if (r.ec != std::errc() || r.ptr != v.data() + v.size()) fail("value of '" + key + "' is not an integer");
    return i;
  };
  bool have_outer = false;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string line = detail::trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    if (line.rfind("geometry", 0) == 0) {
      const auto words = detail::split_ws(line);
      if (words.size() != 2 || (words[1] != "outer" && words[1] != "hole"))
        fail("expected 'geometry outer' or 'geometry hole'");
      const bool outer = words[1] == "outer";
      if (outer && have_outer) fail("second 'geometry outer' block");
      const int start = lineno;
      TaggedLoop loop;
      bool closed = false;
      while (std::getline(in, raw)) {
        ++lineno;
        std::string l = detail::trim(raw.substr(0, raw.find('#')));
        if (l.empty()) continue;
        if (l == "end") {
          closed = true;
          break;
        }
        const auto w = detail::split_ws(l);
        if (w.size() != 3) fail("geometry line must read 'x y TAG'");
        const auto x = detail::parse_double(w[0]);
        const auto y = detail::parse_double(w[1]);
        const auto tag = parse_tag(w[2]);
        if (!x || !y) fail("geometry coordinate is not a number");
        if (!tag) fail("unknown boundary tag '" + w[2] + "' (use DIRICHLET, NEUMANN or FREE)");
        loop.vertices.emplace_back(*x, *y);
        loop.tags.push_back(*tag);
      }
      if (!closed) {
        lineno = start;
        fail("geometry block is not terminated by 'end'");
      }
      try {
        detail::validate_loop(loop, outer ? "outer" : "hole");
      } catch (const GeometryError& e) {
        const int end_line = lineno;
        lineno = start;
        fail(std::string(e.what()) + " (block ends at line " + std::to_string(end_line) + ")");
      }
      if (outer) {
        c.geometry.outer = std::move(loop);
        have_outer = true;
      } else {
        c.geometry.holes.push_back(std::move(loop));
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail("expected 'key = value'");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string val = detail::trim(line.substr(eq + 1));
    if (std::find(seen.begin(), seen.end(), key) != seen.end()) fail("duplicate key '" + key + "'");
    seen.push_back(key);
    if (key == "name") c.name = val;
    else if (key == "mode") {
      if (val == "MAX_NORM") c.mode = CostMode::MaxNorm;
      else if (val == "P_NORM") c.mode = CostMode::PNorm;
      else fail("mode must be MAX_NORM or P_NORM");
    } else if (key == "traction") {
      const auto w = detail::split_ws(val);
      if (w.size() != 2) fail("traction needs two components");
      c.traction = {number(key, w[0]), number(key, w[1])};
    } else if (key == "youngs_modulus") c.youngs_modulus = number(key, val);
    else if (key == "poisson_ratio") c.poisson_ratio = number(key, val);
    else if (key == "volume_target") c.volume_target = number(key, val);
    else if (key == "delta") c.delta = number(key, val);
    else if (key == "gamma1") c.gamma1 = number(key, val);
    else if (key == "gamma2") c.gamma2 = number(key, val);
    else if (key == "p") c.p = number(key, val);
    else if (key == "rho_low") c.rho_low = number(key, val);
    else if (key == "radius") c.radius = number(key, val);
    else if (key == "h") c.h = number(key, val);
    else if (key == "order") c.order = integer(key, val);
    else if (key == "deformation_order") c.deformation_order = integer(key, val);
    else if (key == "c_step") c.c_step = number(key, val);
    else if (key == "max_step") c.max_step = number(key, val);
    else if (key == "iterations") c.iterations = integer(key, val);
    else if (key == "rel_tol") c.rel_tol = number(key, val);
    else if (key == "snapshot_every") c.snapshot_every = integer(key, val);
    else if (key == "remesh_quality") c.remesh_quality = number(key, val);
    else if (key == "max_halvings") c.max_halvings = integer(key, val);
    else if (key == "sampling_degree") c.sampling_degree = integer(key, val);
    else if (key == "normalize_stress_gradients") {
      if (val == "true") c.normalize_stress_gradients = true;
      else if (val == "false") c.normalize_stress_gradients = false;
      else fail("normalize_stress_gradients must be true or false");
    }
    else fail("unknown key '" + key + "'");
  }
  lineno = 0;
  if (!have_outer) fail("missing mandatory 'geometry outer' block");
  for (const char* k : {"volume_target", "traction", "gamma1", "gamma2", "p", "rho_low", "radius", "h", "order"})
    if (std::find(seen.begin(), seen.end(), k) == seen.end()) fail(std::string("missing mandatory key '") + k + "'");
  try {
    c.validate();
  } catch (const ConfigError& e) {
    fail(e.what());
  }
  return c;
}

inline ProblemConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return parse_config(in, path);
}

inline std::string format_config(const ProblemConfig& c) {
  using detail::format_double;
  std::ostringstream o;
  o << "name = " << c.name << "\n";
  o << "mode = " << to_string(c.mode) << "\n";
  o << "youngs_modulus = " << format_double(c.youngs_modulus) << "\n";
  o << "poisson_ratio = " << format_double(c.poisson_ratio) << "\n";
  o << "traction = " << format_double(c.traction.x()) << " " << format_double(c.traction.y()) << "\n";
  o << "volume_target = " << format_double(c.volume_target) << "\n";
  o << "delta = " << format_double(c.delta) << "\n";
  o << "gamma1 = " << format_double(c.gamma1) << "\n";
  o << "gamma2 = " << format_double(c.gamma2) << "\n";
  o << "p = " << format_double(c.p) << "\n";
  o << "rho_low = " << format_double(c.rho_low) << "\n";
  o << "radius = " << format_double(c.radius) << "\n";
  o << "h = " << format_double(c.h) << "\n";
  o << "order = " << c.order << "\n";
  o << "deformation_order = " << c.deformation_order << "\n";
  o << "c_step = " << format_double(c.c_step) << "\n";
  o << "max_step = " << format_double(c.max_step) << "\n";
  o << "iterations = " << c.iterations << "\n";
  o << "rel_tol = " << format_double(c.rel_tol) << "\n";
  o << "snapshot_every = " << c.snapshot_every << "\n";
  o << "remesh_quality = " << format_double(c.remesh_quality) << "\n";
  o << "max_halvings = " << c.max_halvings << "\n";
  o << "sampling_degree = " << c.sampling_degree << "\n";
  o << "normalize_stress_gradients = " << (c.normalize_stress_gradients ? "true" : "false") << "\n";
  auto loop = [&](const char* kind, const TaggedLoop& l) {
    o << "geometry " << kind << "\n";
    for (std::size_t i = 0; i < l.vertices.size(); ++i)
      o << "  " << format_double(l.vertices[i].x()) << " " << format_double(l.vertices[i].y()) << " "
        << to_string(l.tags[i]) << "\n";
    o << "end\n";
  };
  loop("outer", c.geometry.outer);
  for (const auto& hl : c.geometry.holes) loop("hole", hl);
  return o.str();
}

inline void save_config(const ProblemConfig& c, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write config file '" + path + "'");
  out << format_config(c);
}

}  // namespace shapeopt
