#pragma once

// Plain-text mesh snapshots.
//
//   shapeopt-mesh 1
//   h_target <h>
//   vertices <n>
//   <index> <x> <y>
//   triangles <m>
//   <index> <a> <b> <c>
//   boundary <k>
//   <index> <a> <b> <TAG>
//   end
//
// Coordinates are written with 17 significant digits so a round trip is exact.

#include "shapeopt/mesh.hpp"
#include "shapeopt/text.hpp"

#include <fstream>
#include <istream>
#include <ostream>

namespace shapeopt {

inline constexpr int mesh_format_version = 1;

inline void write_mesh(std::ostream& out, const TriMesh& mesh) {
  using detail::format_double;
  out << "shapeopt-mesh " << mesh_format_version << "\n";
  out << "h_target " << format_double(mesh.h_target()) << "\n";
  out << "vertices " << mesh.num_vertices() << "\n";
  for (int v = 0; v < mesh.num_vertices(); ++v)
    out << v << " " << format_double(mesh.vertex(v).x()) << " " << format_double(mesh.vertex(v).y()) << "\n";
  out << "triangles " << mesh.num_triangles() << "\n";
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto& tr = mesh.triangle(t);
    out << t << " " << tr[0] << " " << tr[1] << " " << tr[2] << "\n";
  }
  const auto& bnd = mesh.boundary_edges();
  out << "boundary " << bnd.size() << "\n";
  for (std::size_t i = 0; i < bnd.size(); ++i)
    out << i << " " << bnd[i].a << " " << bnd[i].b << " " << to_string(bnd[i].tag) << "\n";
  out << "end\n";
}

/// Reads a snapshot written by write_mesh. Format problems raise ConfigError
/// with the offending line; an invalid triangulation raises GeometryError.
inline TriMesh read_mesh(std::istream& in, const std::string& source = "<mesh>") {
  int line_no = 0;
  std::string line;
  auto fail = [&](const std::string& msg) -> void {
    throw ConfigError(source + ":" + std::to_string(line_no) + ": " + msg);
  };
  auto next = [&]() -> std::vector<std::string> {
    while (std::getline(in, line)) {
      ++line_no;
      auto w = detail::split_ws(line);
      if (!w.empty() && w[0][0] != '#') return w;
    }
    ++line_no;
    fail("unexpected end of file");
    return {};
  };
  auto to_int = [&](const std::string& s) {
    int v = 0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size()) fail("expected an integer, got '" + s + "'");
    return v;
  };
  auto to_double = [&](const std::string& s) {
    const auto d = detail::parse_double(s);
    if (!d) fail("expected a number, got '" + s + "'");
    return *d;
  };
  auto header = [&](const char* key) {
    const auto w = next();
    if (w.size() != 2 || w[0] != key) fail(std::string("expected '") + key + " <value>'");
    return w[1];
  };
  auto count = [&](const char* key) {
    const int n = to_int(header(key));
    if (n < 0) fail("negative count");
    return n;
  };

  if (to_int(header("shapeopt-mesh")) != mesh_format_version) fail("unsupported format version");
  const double h = to_double(header("h_target"));
  const int nv = count("vertices");
  std::vector<Vec2> vertices(static_cast<std::size_t>(nv));
  for (int i = 0; i < nv; ++i) {
    const auto w = next();
    if (w.size() != 3 || to_int(w[0]) != i) fail("expected '" + std::to_string(i) + " x y'");
    vertices[static_cast<std::size_t>(i)] = Vec2(to_double(w[1]), to_double(w[2]));
  }
  const int nt = count("triangles");
  std::vector<std::array<int, 3>> tris(static_cast<std::size_t>(nt));
  for (int i = 0; i < nt; ++i) {
    const auto w = next();
    if (w.size() != 4 || to_int(w[0]) != i) fail("expected '" + std::to_string(i) + " a b c'");
    for (int k = 0; k < 3; ++k) {
      const int v = to_int(w[static_cast<std::size_t>(k) + 1]);
      if (v < 0 || v >= nv) fail("vertex index out of range");
      tris[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] = v;
    }
  }
  const int nb = count("boundary");
  std::vector<BoundaryEdge> bnd(static_cast<std::size_t>(nb));
  for (int i = 0; i < nb; ++i) {
    const auto w = next();
    if (w.size() != 4 || to_int(w[0]) != i) fail("expected '" + std::to_string(i) + " a b TAG'");
    const int a = to_int(w[1]), b = to_int(w[2]);
    if (a < 0 || a >= nv || b < 0 || b >= nv) fail("vertex index out of range");
    const auto tag = parse_tag(w[3]);
    if (!tag) fail("unknown boundary tag '" + w[3] + "'");
    bnd[static_cast<std::size_t>(i)] = {a, b, *tag};
  }
  const auto w = next();
  if (w.size() != 1 || w[0] != "end") fail("expected 'end'");
  return TriMesh(std::move(vertices), std::move(tris), std::move(bnd), h);
}

inline void save_mesh(const std::string& path, const TriMesh& mesh) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  write_mesh(out, mesh);
  if (!out) throw Error("write failed for " + path);
}

inline TriMesh load_mesh(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  return read_mesh(in, path);
}

}  // namespace shapeopt
