#pragma once

#include "shapeopt/geometry.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace shapeopt {

enum class BoundaryTag { Dirichlet, Neumann, Free };

inline std::string_view to_string(BoundaryTag tag) {
  switch (tag) {
    case BoundaryTag::Dirichlet: return "DIRICHLET";
    case BoundaryTag::Neumann: return "NEUMANN";
    case BoundaryTag::Free: return "FREE";
  }
  return "FREE";
}

inline std::optional<BoundaryTag> parse_tag(std::string_view s) {
  if (s == "DIRICHLET" || s == "D") return BoundaryTag::Dirichlet;
  if (s == "NEUMANN" || s == "N") return BoundaryTag::Neumann;
  if (s == "FREE" || s == "F") return BoundaryTag::Free;
  return std::nullopt;
}

/// Boundary edge oriented so that the domain lies on its left.
struct BoundaryEdge {
  int a = 0;
  int b = 0;
  BoundaryTag tag = BoundaryTag::Free;
};

namespace detail {
inline std::uint64_t edge_key(int a, int b) {
  if (a > b) std::swap(a, b);
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
         static_cast<std::uint32_t>(b);
}
}  // namespace detail

/// Conforming triangulation of a polygonal domain with tagged boundary.
///
/// Immutable after construction. The constructor checks orientation of every
/// triangle and that the tagged edges cover exactly the topological boundary.
class TriMesh {
 public:
  TriMesh() = default;

  TriMesh(std::vector<Vec2> vertices, std::vector<std::array<int, 3>> triangles,
          std::vector<BoundaryEdge> boundary, double h_target)
      : vertices_(std::move(vertices)),
        triangles_(std::move(triangles)),
        boundary_(std::move(boundary)),
        h_target_(h_target) {
    build_topology();
  }

  const std::vector<Vec2>& vertices() const { return vertices_; }
  const std::vector<std::array<int, 3>>& triangles() const { return triangles_; }
  const std::vector<BoundaryEdge>& boundary_edges() const { return boundary_; }
  double h_target() const { return h_target_; }

  int num_vertices() const { return static_cast<int>(vertices_.size()); }
  int num_triangles() const { return static_cast<int>(triangles_.size()); }
  int num_edges() const { return static_cast<int>(edges_.size()); }

  const Vec2& vertex(int i) const { return vertices_[i]; }
  const std::array<int, 3>& triangle(int t) const { return triangles_[t]; }

  /// Edge as (low, high) vertex pair.
  const std::array<int, 2>& edge(int e) const { return edges_[e]; }
  /// Global edge ids of local edges (v0,v1), (v1,v2), (v2,v0).
  const std::array<int, 3>& triangle_edges(int t) const { return tri_edges_[t]; }
  /// Adjacent triangles of an edge; second entry is -1 on the boundary.
  const std::array<int, 2>& edge_triangles(int e) const { return edge_tris_[e]; }
  std::span<const int> vertex_triangles(int v) const {
    return {vtx_tris_.data() + vtx_tri_offset_[v],
            static_cast<std::size_t>(vtx_tri_offset_[v + 1] - vtx_tri_offset_[v])};
  }
  int edge_id(int a, int b) const {
    auto it = edge_index_.find(detail::edge_key(a, b));
    return it == edge_index_.end() ? -1 : it->second;
  }
  /// Triangle owning boundary edge i together with the local edge index.
  std::pair<int, int> boundary_edge_owner(int i) const { return bnd_owner_[i]; }

  double triangle_area(int t) const {
    const auto& tr = triangles_[t];
    return geom::triangle_area(vertices_[tr[0]], vertices_[tr[1]], vertices_[tr[2]]);
  }

  double area() const {
    double a = 0.0;
    for (int t = 0; t < num_triangles(); ++t) a += triangle_area(t);
    return a;
  }

  /// Longest edge of a triangle.
  double diameter(int t) const {
    const auto& tr = triangles_[t];
    const Vec2& a = vertices_[tr[0]];
    const Vec2& b = vertices_[tr[1]];
    const Vec2& c = vertices_[tr[2]];
    return std::max({(a - b).norm(), (b - c).norm(), (c - a).norm()});
  }

  Vec2 centroid(int t) const {
    const auto& tr = triangles_[t];
    return (vertices_[tr[0]] + vertices_[tr[1]] + vertices_[tr[2]]) / 3.0;
  }

  /// Piecewise constant outward unit normal of boundary edge i.
  Vec2 outward_normal(int i) const {
    const Vec2 d = vertices_[boundary_[i].b] - vertices_[boundary_[i].a];
    return Vec2(d.y(), -d.x()).normalized();
  }

  double min_edge_length() const {
    double m = std::numeric_limits<double>::infinity();
    for (const auto& e : edges_) m = std::min(m, (vertices_[e[0]] - vertices_[e[1]]).norm());
    return m;
  }

  double max_edge_length() const {
    double m = 0.0;
    for (const auto& e : edges_) m = std::max(m, (vertices_[e[0]] - vertices_[e[1]]).norm());
    return m;
  }

  /// Smallest element diameter; the "minimal meshsize" of the mesh.
  double min_element_size() const {
    double m = std::numeric_limits<double>::infinity();
    for (int t = 0; t < num_triangles(); ++t) m = std::min(m, diameter(t));
    return m;
  }

  /// Vertices touching an edge whose tag is in `tags`.
  std::vector<bool> vertices_with_tags(std::initializer_list<BoundaryTag> tags) const {
    std::vector<bool> on(vertices_.size(), false);
    for (const auto& be : boundary_)
      for (auto tg : tags)
        if (be.tag == tg) on[be.a] = on[be.b] = true;
    return on;
  }

 private:
  void build_topology();

  std::vector<Vec2> vertices_;
  std::vector<std::array<int, 3>> triangles_;
  std::vector<BoundaryEdge> boundary_;
  double h_target_ = 1.0;

  std::vector<std::array<int, 2>> edges_;
  std::vector<std::array<int, 3>> tri_edges_;
  std::vector<std::array<int, 2>> edge_tris_;
  std::unordered_map<std::uint64_t, int> edge_index_;
  std::vector<int> vtx_tri_offset_;
  std::vector<int> vtx_tris_;
  std::vector<std::pair<int, int>> bnd_owner_;
};

inline void TriMesh::build_topology() {
  if (!(h_target_ > 0.0)) throw GeometryError("mesh: h_target must be positive");
  const int nv = num_vertices();
  for (int t = 0; t < num_triangles(); ++t) {
    const auto& tr = triangles_[t];
    for (int v : tr)
      if (v < 0 || v >= nv) throw GeometryError("mesh: triangle references missing vertex");
    if (!(triangle_area(t) > 0.0))
      throw GeometryError("mesh: triangle " + std::to_string(t) + " has non-positive area");
  }

  edges_.clear();
  tri_edges_.assign(triangles_.size(), {-1, -1, -1});
  edge_tris_.clear();
  edge_index_.clear();
  edge_index_.reserve(triangles_.size() * 2);
  std::unordered_map<std::uint64_t, int> directed;  // a->b half-edge -> triangle
  directed.reserve(triangles_.size() * 3);
  for (int t = 0; t < num_triangles(); ++t) {
    const auto& tr = triangles_[t];
    for (int i = 0; i < 3; ++i) {
      const int a = tr[i], b = tr[(i + 1) % 3];
      const auto dkey = (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
                        static_cast<std::uint32_t>(b);
      if (!directed.emplace(dkey, t).second)
        throw GeometryError("mesh: non-manifold or inconsistently oriented edge");
      const auto key = detail::edge_key(a, b);
      auto [it, inserted] = edge_index_.emplace(key, static_cast<int>(edges_.size()));
      if (inserted) {
        edges_.push_back({std::min(a, b), std::max(a, b)});
        edge_tris_.push_back({t, -1});
      } else {
        auto& et = edge_tris_[it->second];
        if (et[1] != -1) throw GeometryError("mesh: edge shared by more than two triangles");
        et[1] = t;
      }
      tri_edges_[t][i] = it->second;
    }
  }

  std::vector<int> count(nv + 1, 0);
  for (const auto& tr : triangles_)
    for (int v : tr) ++count[v + 1];
  vtx_tri_offset_.assign(nv + 1, 0);
  for (int v = 0; v < nv; ++v) vtx_tri_offset_[v + 1] = vtx_tri_offset_[v] + count[v + 1];
  vtx_tris_.assign(vtx_tri_offset_[nv], 0);
  std::vector<int> fill(vtx_tri_offset_.begin(), vtx_tri_offset_.end() - 1);
  for (int t = 0; t < num_triangles(); ++t)
    for (int v : triangles_[t]) vtx_tris_[fill[v]++] = t;

  int n_topo_boundary = 0;
  for (const auto& et : edge_tris_)
    if (et[1] == -1) ++n_topo_boundary;
  if (n_topo_boundary != static_cast<int>(boundary_.size()))
    throw GeometryError("mesh: tagged boundary does not match topological boundary (" +
                        std::to_string(boundary_.size()) + " tagged vs " +
                        std::to_string(n_topo_boundary) + ")");
  bnd_owner_.clear();
  for (const auto& be : boundary_) {
    const int e = edge_id(be.a, be.b);
    if (e < 0 || edge_tris_[e][1] != -1)
      throw GeometryError("mesh: tagged edge is not a boundary edge");
    const int t = edge_tris_[e][0];
    const auto& tr = triangles_[t];
    int local = -1;
    for (int i = 0; i < 3; ++i)
      if (tr[i] == be.a && tr[(i + 1) % 3] == be.b) local = i;
    if (local < 0) throw GeometryError("mesh: boundary edge orientation does not match domain");
    bnd_owner_.emplace_back(t, local);
  }
}

/// Element quality r_i / r_o per triangle.
struct QualityReport {
  std::vector<double> ratio;
  double min_ratio = 0.0;
  std::vector<int> worst;       ///< up to ten lowest-ratio elements, ascending ratio
  std::vector<int> degenerate;  ///< zero-area elements (ratio reported as 0)
};

inline QualityReport mesh_quality(const TriMesh& mesh) {
  QualityReport rep;
  const int nt = mesh.num_triangles();
  rep.ratio.resize(nt);
  for (int t = 0; t < nt; ++t) {
    const auto& tr = mesh.triangle(t);
    rep.ratio[t] = geom::radius_ratio(mesh.vertex(tr[0]), mesh.vertex(tr[1]), mesh.vertex(tr[2]));
    if (rep.ratio[t] <= 0.0) rep.degenerate.push_back(t);
  }
  std::vector<int> order(nt);
  for (int t = 0; t < nt; ++t) order[t] = t;
  const auto k = std::min<std::size_t>(10, order.size());
  std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](int a, int b) {
    return rep.ratio[a] < rep.ratio[b] || (rep.ratio[a] == rep.ratio[b] && a < b);
  });
  rep.worst.assign(order.begin(), order.begin() + k);
  rep.min_ratio = nt > 0 ? rep.ratio[rep.worst.front()] : 0.0;
  return rep;
}

/// Moves every vertex to v + s * d(v). Returns nullopt if any triangle would invert.
inline std::optional<TriMesh> deform_vertices(const TriMesh& mesh, std::span<const Vec2> displacement,
                                              double s) {
  if (static_cast<int>(displacement.size()) != mesh.num_vertices())
    throw GeometryError("deform: displacement size does not match vertex count");
  std::vector<Vec2> moved(mesh.vertices());
  if (s != 0.0)
    for (std::size_t i = 0; i < moved.size(); ++i) moved[i] = moved[i] + s * displacement[i];
  for (const auto& tr : mesh.triangles())
    if (!(geom::triangle_area(moved[tr[0]], moved[tr[1]], moved[tr[2]]) > 0.0)) return std::nullopt;
  return TriMesh(std::move(moved), mesh.triangles(), mesh.boundary_edges(), mesh.h_target());
}

/// A closed boundary loop: vertex coordinates plus the tag of edge i -> i+1.
struct TaggedLoop {
  std::vector<Vec2> vertices;
  std::vector<BoundaryTag> tags;
};

/// Outer loop (counter-clockwise) with optional holes (clockwise).
struct TaggedPolygon {
  TaggedLoop outer;
  std::vector<TaggedLoop> holes;

  double area() const {
    double a = std::abs(geom::polygon_area(outer.vertices));
    for (const auto& h : holes) a -= std::abs(geom::polygon_area(h.vertices));
    return a;
  }
};

/// Boundary loops of a mesh as vertex index chains (domain on the left of each loop).
inline std::vector<std::vector<int>> boundary_loop_indices(const TriMesh& mesh) {
  std::unordered_map<int, int> next_edge;  // start vertex -> boundary edge index
  const auto& be = mesh.boundary_edges();
  for (int i = 0; i < static_cast<int>(be.size()); ++i)
    if (!next_edge.emplace(be[i].a, i).second)
      throw GeometryError("mesh: boundary vertex with two outgoing edges (pinched boundary)");
  std::vector<bool> used(be.size(), false);
  std::vector<std::vector<int>> loops;
  for (int i = 0; i < static_cast<int>(be.size()); ++i) {
    if (used[i]) continue;
    std::vector<int> loop;
    int e = i;
    while (!used[e]) {
      used[e] = true;
      loop.push_back(e);
      auto it = next_edge.find(be[e].b);
      if (it == next_edge.end()) throw GeometryError("mesh: open boundary chain");
      e = it->second;
    }
    if (e != i) throw GeometryError("mesh: boundary chain does not close");
    loops.push_back(std::move(loop));
  }
  return loops;  // edge indices
}

/// Boundary of a mesh as a tagged polygon; vertex coordinates are copied bitwise.
inline TaggedPolygon boundary_polygon(const TriMesh& mesh) {
  const auto loops = boundary_loop_indices(mesh);
  const auto& be = mesh.boundary_edges();
  TaggedPolygon poly;
  double best = -1.0;
  std::vector<TaggedLoop> all;
  int outer = -1;
  for (const auto& l : loops) {
    TaggedLoop tl;
    for (int e : l) {
      tl.vertices.push_back(mesh.vertex(be[e].a));
      tl.tags.push_back(be[e].tag);
    }
    const double a = geom::polygon_area(tl.vertices);
    if (a > best) {
      best = a;
      outer = static_cast<int>(all.size());
    }
    all.push_back(std::move(tl));
  }
  for (int i = 0; i < static_cast<int>(all.size()); ++i) {
    if (i == outer)
      poly.outer = std::move(all[i]);
    else
      poly.holes.push_back(std::move(all[i]));
  }
  return poly;
}

/// Structured nx-by-ny rectangle mesh, each cell split along alternating diagonals.
/// `tag_of` maps a boundary edge midpoint to its tag (default: all free).
inline TriMesh structured_rectangle(double x0, double y0, double x1, double y1, int nx, int ny,
                                    const std::function<BoundaryTag(const Vec2&)>& tag_of = {},
                                    bool criss_cross = false) {
  std::vector<Vec2> v;
  for (int j = 0; j <= ny; ++j)
    for (int i = 0; i <= nx; ++i)
      v.emplace_back(x0 + (x1 - x0) * i / nx, y0 + (y1 - y0) * j / ny);
  auto id = [&](int i, int j) { return j * (nx + 1) + i; };
  std::vector<std::array<int, 3>> tris;
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      const int a = id(i, j), b = id(i + 1, j), c = id(i + 1, j + 1), d = id(i, j + 1);
      if (criss_cross) {
        const int m = static_cast<int>(v.size());
        v.push_back(0.25 * (v[a] + v[b] + v[c] + v[d]));
        tris.push_back({a, b, m});
        tris.push_back({b, c, m});
        tris.push_back({c, d, m});
        tris.push_back({d, a, m});
      } else if ((i + j) % 2 == 0) {
        tris.push_back({a, b, c});
        tris.push_back({a, c, d});
      } else {
        tris.push_back({a, b, d});
        tris.push_back({b, c, d});
      }
    }
  std::vector<BoundaryEdge> bnd;
  auto add = [&](int a, int b) {
    const Vec2 mid = 0.5 * (v[a] + v[b]);
    bnd.push_back({a, b, tag_of ? tag_of(mid) : BoundaryTag::Free});
  };
  for (int i = 0; i < nx; ++i) add(id(i, 0), id(i + 1, 0));
  for (int j = 0; j < ny; ++j) add(id(nx, j), id(nx, j + 1));
  for (int i = nx; i > 0; --i) add(id(i, ny), id(i - 1, ny));
  for (int j = ny; j > 0; --j) add(id(0, j), id(0, j - 1));
  const double h = std::max((x1 - x0) / nx, (y1 - y0) / ny);
  return TriMesh(std::move(v), std::move(tris), std::move(bnd), h);
}

/// Red refinement: every triangle split into four via edge midpoints.
inline TriMesh refine_uniform(const TriMesh& mesh) {
  std::vector<Vec2> v(mesh.vertices());
  const int nv = mesh.num_vertices();
  for (int e = 0; e < mesh.num_edges(); ++e) {
    const auto& ed = mesh.edge(e);
    v.push_back(0.5 * (mesh.vertex(ed[0]) + mesh.vertex(ed[1])));
  }
  std::vector<std::array<int, 3>> tris;
  tris.reserve(4 * mesh.num_triangles());
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto& tr = mesh.triangle(t);
    const auto& te = mesh.triangle_edges(t);
    const int m01 = nv + te[0], m12 = nv + te[1], m20 = nv + te[2];
    tris.push_back({tr[0], m01, m20});
    tris.push_back({m01, tr[1], m12});
    tris.push_back({m20, m12, tr[2]});
    tris.push_back({m01, m12, m20});
  }
  std::vector<BoundaryEdge> bnd;
  for (const auto& be : mesh.boundary_edges()) {
    const int m = nv + mesh.edge_id(be.a, be.b);
    bnd.push_back({be.a, m, be.tag});
    bnd.push_back({m, be.b, be.tag});
  }
  return TriMesh(std::move(v), std::move(tris), std::move(bnd), 0.5 * mesh.h_target());
}

}  // namespace shapeopt
