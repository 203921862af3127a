#pragma once

// Constrained Delaunay triangulation of tagged polygons with Delaunay
// refinement (circumcenter insertion) and quality-guarded Laplacian smoothing.

#include "shapeopt/mesh.hpp"

#include <cmath>
#include <deque>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

namespace shapeopt {

struct MeshingOptions {
  /// Triangles with circumradius above size_factor * h are split.
  double size_factor = 0.68;
  /// Triangles with circumradius / shortest edge above this are split (1.0 ~ 30 degrees).
  double max_radius_edge_ratio = 1.0;
  /// Quality refinement stops below this shortest-edge length (fraction of h).
  double min_feature_fraction = 0.08;
  int smoothing_passes = 6;
  int max_insertions = 2'000'000;
};

namespace detail {

inline std::uint64_t half_key(int a, int b) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
         static_cast<std::uint32_t>(b);
}

class Cdt {
 public:
  struct Tri {
    std::array<int, 3> v;
    bool alive = true;
  };

  std::vector<Vec2> pts;
  std::vector<Tri> tris;
  std::vector<char> fixed;  // vertex lies on the boundary
  std::unordered_map<std::uint64_t, int> half;
  std::unordered_map<std::uint64_t, BoundaryTag> constrained;
  double h = 1.0;
  int last = 0;

  int add_tri(int a, int b, int c) {
    const int t = static_cast<int>(tris.size());
    tris.push_back({{a, b, c}, true});
    half[half_key(a, b)] = t;
    half[half_key(b, c)] = t;
    half[half_key(c, a)] = t;
    last = t;
    return t;
  }

  void kill(int t) {
    auto& tr = tris[t];
    for (int i = 0; i < 3; ++i) {
      auto it = half.find(half_key(tr.v[i], tr.v[(i + 1) % 3]));
      if (it != half.end() && it->second == t) half.erase(it);
    }
    tr.alive = false;
  }

  int owner(int a, int b) const {
    auto it = half.find(half_key(a, b));
    return it == half.end() ? -1 : it->second;
  }

  bool is_constrained(int a, int b) const { return constrained.count(edge_key(a, b)) != 0; }

  bool contains(int t, const Vec2& p, bool closed) const {
    const auto& v = tris[t].v;
    for (int i = 0; i < 3; ++i) {
      const Vec2& a = pts[v[i]];
      const Vec2& b = pts[v[(i + 1) % 3]];
      const double o = geom::orient(a, b, p);
      const double bound = geom::orient_bound(a, b, p);
      if (closed ? o < -bound : o <= bound) return false;
    }
    return true;
  }

  /// Triangle containing p (closed), or -1 if p is outside the triangulated domain.
  int locate(const Vec2& p, int start) const {
    int t = (start >= 0 && start < static_cast<int>(tris.size()) && tris[start].alive) ? start : -1;
    if (t < 0)
      for (int i = static_cast<int>(tris.size()) - 1; i >= 0; --i)
        if (tris[i].alive) {
          t = i;
          break;
        }
    const int max_steps = static_cast<int>(tris.size()) + 8;
    for (int step = 0; t >= 0 && step < max_steps; ++step) {
      const auto& v = tris[t].v;
      int next = -2;
      for (int i = 0; i < 3; ++i) {
        const Vec2& a = pts[v[i]];
        const Vec2& b = pts[v[(i + 1) % 3]];
        if (geom::orient(a, b, p) < -geom::orient_bound(a, b, p)) {
          next = owner(v[(i + 1) % 3], v[i]);
          break;
        }
      }
      if (next == -2) return t;
      if (next < 0) break;  // walked into the boundary; fall back
      t = next;
    }
    for (int i = 0; i < static_cast<int>(tris.size()); ++i)
      if (tris[i].alive && contains(i, p, true)) return i;
    return -1;
  }

  void flip_to_delaunay() {
    std::vector<std::array<int, 2>> stack;
    for (int t = 0; t < static_cast<int>(tris.size()); ++t)
      if (tris[t].alive)
        for (int i = 0; i < 3; ++i) stack.push_back({tris[t].v[i], tris[t].v[(i + 1) % 3]});
    std::size_t guard = 0;
    const std::size_t max_flips = 50 * stack.size() + 1000;
    while (!stack.empty() && guard < max_flips) {
      auto [a, b] = stack.back();
      stack.pop_back();
      if (is_constrained(a, b)) continue;
      const int t1 = owner(a, b);
      const int t2 = owner(b, a);
      if (t1 < 0 || t2 < 0) continue;
      const int c = third(t1, a, b);
      const int d = third(t2, b, a);
      const double ic = geom::incircle(pts[a], pts[b], pts[c], pts[d]);
      if (!(ic > geom::incircle_bound(pts[a], pts[b], pts[c], pts[d]))) continue;
      if (geom::orient(pts[a], pts[d], pts[c]) <= geom::orient_bound(pts[a], pts[d], pts[c]) ||
          geom::orient(pts[d], pts[b], pts[c]) <= geom::orient_bound(pts[d], pts[b], pts[c]))
        continue;
      kill(t1);
      kill(t2);
      add_tri(a, d, c);
      add_tri(d, b, c);
      ++guard;
      stack.push_back({a, d});
      stack.push_back({d, b});
      stack.push_back({b, c});
      stack.push_back({c, a});
    }
  }

  int third(int t, int a, int b) const {
    for (int v : tris[t].v)
      if (v != a && v != b) return v;
    return -1;
  }

  /// Bowyer-Watson insertion restricted by constrained edges. If split_a/split_b
  /// name a constrained edge, p is inserted on it and the edge is divided.
  /// Returns the new vertex index or -1 when the point is rejected.
  int insert(const Vec2& p, int seed, int split_a = -1, int split_b = -1) {
    const bool splitting = split_a >= 0;
    std::unordered_set<int> excluded;
    std::vector<int> cavity;
    struct Bnd {
      int a, b, t;
    };
    std::vector<Bnd> bnd;
    for (int attempt = 0; attempt < 64; ++attempt) {
      cavity.clear();
      bnd.clear();
      std::unordered_set<int> in{seed};
      std::deque<int> queue{seed};
      while (!queue.empty()) {
        const int t = queue.front();
        queue.pop_front();
        cavity.push_back(t);
        const auto v = tris[t].v;
        for (int i = 0; i < 3; ++i) {
          const int a = v[i], b = v[(i + 1) % 3];
          if (is_constrained(a, b)) continue;
          const int n = owner(b, a);
          if (n < 0 || in.count(n) || excluded.count(n)) continue;
          const auto& nv = tris[n].v;
          const Vec2 &pa = pts[nv[0]], &pb = pts[nv[1]], &pc = pts[nv[2]];
          if (geom::incircle(pa, pb, pc, p) > geom::incircle_bound(pa, pb, pc, p)) {
            in.insert(n);
            queue.push_back(n);
          }
        }
      }
      bool ok = true;
      for (int t : cavity) {
        const auto v = tris[t].v;
        for (int i = 0; i < 3; ++i) {
          const int a = v[i], b = v[(i + 1) % 3];
          const int n = owner(b, a);
          if (n >= 0 && in.count(n) && !is_constrained(a, b)) continue;
          if (splitting && ((a == split_a && b == split_b) || (a == split_b && b == split_a)))
            continue;
          if (geom::orient(pts[a], pts[b], p) <= 4.0 * geom::orient_bound(pts[a], pts[b], p)) {
            if (t == seed) return -1;
            excluded.insert(t);
            ok = false;
            break;
          }
          bnd.push_back({a, b, t});
        }
        if (!ok) break;
      }
      if (ok) {
        const int ip = static_cast<int>(pts.size());
        pts.push_back(p);
        fixed.push_back(splitting ? 1 : 0);
        for (int t : cavity) kill(t);
        for (const auto& e : bnd) add_tri(e.a, e.b, ip);
        if (splitting) {
          const auto key = edge_key(split_a, split_b);
          const BoundaryTag tag = constrained.at(key);
          constrained.erase(key);
          constrained[edge_key(split_a, ip)] = tag;
          constrained[edge_key(ip, split_b)] = tag;
        }
        return ip;
      }
    }
    return -1;
  }

  /// Constrained segment whose diametral circle contains p (closest such), or nullopt.
  std::optional<std::array<int, 2>> encroached_segment(const Vec2& p) const {
    std::optional<std::array<int, 2>> best;
    double best_d = std::numeric_limits<double>::infinity();
    for (const auto& [key, tag] : constrained) {
      const int a = static_cast<int>(key >> 32);
      const int b = static_cast<int>(key & 0xffffffffu);
      const Vec2 mid = 0.5 * (pts[a] + pts[b]);
      const double r2 = 0.25 * (pts[a] - pts[b]).squaredNorm();
      const double d2 = (p - mid).squaredNorm();
      if (d2 < r2 * (1.0 - 1e-9) && d2 < best_d) {
        best_d = d2;
        best = std::array<int, 2>{a, b};
      }
    }
    return best;
  }

  /// First constrained segment crossed when travelling from q to p.
  std::optional<std::array<int, 2>> crossed_segment(const Vec2& q, const Vec2& p) const {
    std::optional<std::array<int, 2>> best;
    double best_d = std::numeric_limits<double>::infinity();
    for (const auto& [key, tag] : constrained) {
      const int a = static_cast<int>(key >> 32);
      const int b = static_cast<int>(key & 0xffffffffu);
      if (!geom::segments_intersect(q, p, pts[a], pts[b])) continue;
      const double d = (0.5 * (pts[a] + pts[b]) - q).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = std::array<int, 2>{a, b};
      }
    }
    return best;
  }

  void smooth(int passes) {
    for (int pass = 0; pass < passes; ++pass) {
      std::vector<std::vector<int>> vt(pts.size());
      for (int t = 0; t < static_cast<int>(tris.size()); ++t)
        if (tris[t].alive)
          for (int v : tris[t].v) vt[v].push_back(t);
      for (int v = 0; v < static_cast<int>(pts.size()); ++v) {
        if (fixed[v] || vt[v].empty()) continue;
        Vec2 avg = Vec2::Zero();
        int cnt = 0;
        double old_q = 1.0;
        for (int t : vt[v]) {
          const auto& tv = tris[t].v;
          old_q = std::min(old_q, geom::radius_ratio(pts[tv[0]], pts[tv[1]], pts[tv[2]]));
          for (int w : tv)
            if (w != v) {
              avg += pts[w];
              ++cnt;
            }
        }
        avg /= cnt;
        const Vec2 old = pts[v];
        pts[v] = avg;
        double new_q = 1.0;
        bool valid = true;
        for (int t : vt[v]) {
          const auto& tv = tris[t].v;
          const Vec2 &a = pts[tv[0]], &b = pts[tv[1]], &c = pts[tv[2]];
          if (geom::orient(a, b, c) <= geom::orient_bound(a, b, c)) {
            valid = false;
            break;
          }
          new_q = std::min(new_q, geom::radius_ratio(a, b, c));
        }
        if (!valid || new_q < old_q) pts[v] = old;
      }
      flip_to_delaunay();
    }
  }
};

inline void validate_loop(const TaggedLoop& loop, const char* what) {
  if (loop.vertices.size() < 3)
    throw GeometryError(std::string("polygon: ") + what + " loop needs at least 3 vertices");
  if (loop.tags.size() != loop.vertices.size())
    throw GeometryError(std::string("polygon: ") + what + " loop needs one tag per edge");
  double scale = 0.0;
  for (const auto& v : loop.vertices) {
    if (!std::isfinite(v.x()) || !std::isfinite(v.y()))
      throw GeometryError("polygon: non-finite vertex coordinate");
    scale = std::max({scale, std::abs(v.x()), std::abs(v.y())});
  }
  const std::size_t n = loop.vertices.size();
  for (std::size_t i = 0; i < n; ++i)
    if ((loop.vertices[i] - loop.vertices[(i + 1) % n]).norm() <= 1e-12 * std::max(scale, 1.0))
      throw GeometryError(std::string("polygon: repeated vertex ") + std::to_string(i) + " in " +
                          what + " loop");
  if (std::abs(geom::polygon_area(loop.vertices)) <= 1e-14 * std::max(scale * scale, 1.0))
    throw GeometryError(std::string("polygon: ") + what + " loop has zero area");
}

inline TaggedLoop oriented(const TaggedLoop& loop, bool ccw) {
  const bool is_ccw = geom::polygon_area(loop.vertices) > 0.0;
  if (is_ccw == ccw) return loop;
  const std::size_t n = loop.vertices.size();
  TaggedLoop r;
  r.vertices.resize(n);
  r.tags.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    r.vertices[j] = loop.vertices[n - 1 - j];
    r.tags[j] = loop.tags[(2 * n - 2 - j) % n];
  }
  return r;
}

inline void check_simple(const std::vector<std::array<Vec2, 2>>& segs,
                         const std::vector<std::array<int, 2>>& ids) {
  const std::size_t m = segs.size();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i + 1; j < m; ++j) {
      const bool adjacent = ids[i][0] == ids[j][0] || ids[i][0] == ids[j][1] ||
                            ids[i][1] == ids[j][0] || ids[i][1] == ids[j][1];
      if (adjacent) {
        // adjacent edges may only share their common vertex: reject folds back
        const auto& s = segs[i];
        const auto& t = segs[j];
        if (std::abs(geom::orient(s[0], s[1], t[0])) <= geom::orient_bound(s[0], s[1], t[0]) &&
            std::abs(geom::orient(s[0], s[1], t[1])) <= geom::orient_bound(s[0], s[1], t[1])) {
          const Vec2 ds = s[1] - s[0];
          const Vec2 dt = t[1] - t[0];
          if (ds.dot(dt) < 0.0)
            throw GeometryError("polygon: boundary folds back on itself (self-intersection)");
        }
        continue;
      }
      if (geom::segments_intersect(segs[i][0], segs[i][1], segs[j][0], segs[j][1]))
        throw GeometryError("polygon: self-intersecting boundary (edges " + std::to_string(i) +
                            " and " + std::to_string(j) + ")");
    }
}

/// Splices holes into the outer index loop through bridge edges.
inline std::vector<int> bridge_holes(const std::vector<Vec2>& pts, std::vector<int> outer,
                                     std::vector<std::vector<int>> holes) {
  std::sort(holes.begin(), holes.end(), [&](const auto& a, const auto& b) {
    auto mx = [&](const std::vector<int>& l) {
      double m = -std::numeric_limits<double>::infinity();
      for (int i : l) m = std::max(m, pts[i].x());
      return m;
    };
    return mx(a) > mx(b);
  });
  for (const auto& hole : holes) {
    std::size_t mi = 0;
    for (std::size_t i = 1; i < hole.size(); ++i)
      if (pts[hole[i]].x() > pts[hole[mi]].x() ||
          (pts[hole[i]].x() == pts[hole[mi]].x() && pts[hole[i]].y() < pts[hole[mi]].y()))
        mi = i;
    const Vec2 m = pts[hole[mi]];
    // nearest intersection of the +x ray with the current loop
    double best_x = std::numeric_limits<double>::infinity();
    std::size_t best_e = outer.size();
    for (std::size_t e = 0; e < outer.size(); ++e) {
      const Vec2& a = pts[outer[e]];
      const Vec2& b = pts[outer[(e + 1) % outer.size()]];
      if ((a.y() > m.y()) == (b.y() > m.y()) && a.y() != m.y() && b.y() != m.y()) continue;
      if (a.y() == b.y()) continue;
      const double t = (m.y() - a.y()) / (b.y() - a.y());
      if (t < 0.0 || t > 1.0) continue;
      const double x = a.x() + t * (b.x() - a.x());
      if (x >= m.x() && x < best_x) {
        best_x = x;
        best_e = e;
      }
    }
    if (best_e == outer.size()) throw GeometryError("polygon: hole is not inside the outer loop");
    const Vec2 ip(best_x, m.y());
    std::size_t pi = pts[outer[best_e]].x() > pts[outer[(best_e + 1) % outer.size()]].x()
                         ? best_e
                         : (best_e + 1) % outer.size();
    // reflex vertices inside (m, ip, p) hide p; take the one with the smallest angle
    // a ray that hits a vertex exactly sees it directly
    const Vec2 p0 = pts[outer[pi]];
    double best_angle = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < outer.size() && p0 != ip; ++k) {
      const Vec2& q = pts[outer[k]];
      if (outer[k] == outer[pi]) continue;
      const Vec2& prev = pts[outer[(k + outer.size() - 1) % outer.size()]];
      const Vec2& next = pts[outer[(k + 1) % outer.size()]];
      if (geom::orient(prev, q, next) >= 0.0) continue;  // convex or straight
      const Vec2 tri_a = m, tri_b = ip, tri_c = p0;
      const double s = geom::orient(tri_a, tri_b, tri_c) >= 0 ? 1.0 : -1.0;
      if (s * geom::orient(tri_a, tri_b, q) < 0 || s * geom::orient(tri_b, tri_c, q) < 0 ||
          s * geom::orient(tri_c, tri_a, q) < 0)
        continue;
      const double ang = std::atan2(std::abs(q.y() - m.y()), q.x() - m.x());
      if (ang < best_angle) {
        best_angle = ang;
        pi = k;
      }
    }
    std::vector<int> merged(outer.begin(), outer.begin() + static_cast<long>(pi) + 1);
    for (std::size_t j = 0; j <= hole.size(); ++j) merged.push_back(hole[(mi + j) % hole.size()]);
    merged.insert(merged.end(), outer.begin() + static_cast<long>(pi), outer.end());
    outer = std::move(merged);
  }
  return outer;
}

inline void ear_clip(Cdt& cdt, std::vector<int> loop) {
  auto inside_closed = [&](const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& p) {
    return geom::orient(a, b, p) >= -geom::orient_bound(a, b, p) &&
           geom::orient(b, c, p) >= -geom::orient_bound(b, c, p) &&
           geom::orient(c, a, p) >= -geom::orient_bound(c, a, p);
  };
  std::size_t start = 0;
  while (loop.size() > 3) {
    const std::size_t n = loop.size();
    bool clipped = false;
    for (std::size_t k = 0; k < n && !clipped; ++k) {
      const std::size_t i = (start + k) % n;
      const int ip = loop[(i + n - 1) % n], ic = loop[i], in = loop[(i + 1) % n];
      const Vec2 &a = cdt.pts[ip], &b = cdt.pts[ic], &c = cdt.pts[in];
      if (geom::orient(a, b, c) <= geom::orient_bound(a, b, c)) continue;
      bool ear = true;
      for (std::size_t j = 0; j < n && ear; ++j) {
        const int w = loop[j];
        if (w == ip || w == ic || w == in) continue;
        if (inside_closed(a, b, c, cdt.pts[w])) ear = false;
      }
      if (!ear) continue;
      cdt.add_tri(ip, ic, in);
      loop.erase(loop.begin() + static_cast<long>(i));
      start = i == 0 ? 0 : i - 1;
      clipped = true;
    }
    if (!clipped) throw GeometryError("polygon: triangulation failed (degenerate boundary)");
  }
  const Vec2 &a = cdt.pts[loop[0]], &b = cdt.pts[loop[1]], &c = cdt.pts[loop[2]];
  if (geom::orient(a, b, c) <= 0.0)
    throw GeometryError("polygon: triangulation failed (degenerate final ear)");
  cdt.add_tri(loop[0], loop[1], loop[2]);
}

/// Core mesher. Boundary vertices are used as given; refinement may split
/// boundary segments only when `allow_split` is set.
inline TriMesh triangulate(const TaggedPolygon& input, double h, bool allow_split,
                           const MeshingOptions& opt) {
  if (!(h > 0.0)) throw GeometryError("mesh: h must be positive");
  validate_loop(input.outer, "outer");
  for (const auto& hl : input.holes) validate_loop(hl, "hole");
  const TaggedLoop outer = oriented(input.outer, true);
  std::vector<TaggedLoop> holes;
  for (const auto& hl : input.holes) holes.push_back(oriented(hl, false));

  Cdt cdt;
  cdt.h = h;
  std::vector<std::vector<int>> loops;
  std::vector<std::array<Vec2, 2>> segs;
  std::vector<std::array<int, 2>> seg_ids;
  auto add_loop = [&](const TaggedLoop& l) {
    std::vector<int> ids;
    const int base = static_cast<int>(cdt.pts.size());
    for (const auto& v : l.vertices) {
      ids.push_back(static_cast<int>(cdt.pts.size()));
      cdt.pts.push_back(v);
      cdt.fixed.push_back(1);
    }
    const int n = static_cast<int>(l.vertices.size());
    for (int i = 0; i < n; ++i) {
      const int a = base + i, b = base + (i + 1) % n;
      cdt.constrained[edge_key(a, b)] = l.tags[i];
      segs.push_back({cdt.pts[a], cdt.pts[b]});
      seg_ids.push_back({a, b});
    }
    loops.push_back(std::move(ids));
  };
  add_loop(outer);
  for (const auto& hl : holes) add_loop(hl);
  check_simple(segs, seg_ids);
  for (std::size_t i = 1; i < loops.size(); ++i)
    if (!geom::point_in_polygon(cdt.pts[loops[i][0]], outer.vertices))
      throw GeometryError("polygon: hole lies outside the outer loop");

  std::vector<std::vector<int>> hole_loops(loops.begin() + 1, loops.end());
  ear_clip(cdt, bridge_holes(cdt.pts, loops[0], hole_loops));
  cdt.flip_to_delaunay();

  // Delaunay refinement
  const double r_max = opt.size_factor * h;
  const double min_feature = opt.min_feature_fraction * h;
  int insertions = 0;
  for (int sweep = 0; sweep < 200; ++sweep) {
    struct Bad {
      double score;
      int t;
      std::array<int, 3> v;
    };
    std::vector<Bad> bad;
    for (int t = 0; t < static_cast<int>(cdt.tris.size()); ++t) {
      if (!cdt.tris[t].alive) continue;
      const auto& v = cdt.tris[t].v;
      const Vec2 &a = cdt.pts[v[0]], &b = cdt.pts[v[1]], &c = cdt.pts[v[2]];
      const double lmin = std::min({(a - b).norm(), (b - c).norm(), (c - a).norm()});
      const double r = (geom::circumcenter(a, b, c) - a).norm();
      const bool too_big = r > r_max;
      const bool skinny = r > opt.max_radius_edge_ratio * lmin && lmin > min_feature;
      if (too_big || skinny) bad.push_back({too_big ? r / r_max : r / lmin, t, v});
    }
    if (bad.empty()) break;
    std::stable_sort(bad.begin(), bad.end(), [](const Bad& x, const Bad& y) { return x.score > y.score; });
    int inserted_this_sweep = 0;
    for (const auto& bt : bad) {
      if (insertions >= opt.max_insertions) break;
      if (!cdt.tris[bt.t].alive || cdt.tris[bt.t].v != bt.v) continue;
      const Vec2 &a = cdt.pts[bt.v[0]], &b = cdt.pts[bt.v[1]], &c = cdt.pts[bt.v[2]];
      const Vec2 cc = geom::circumcenter(a, b, c);
      const Vec2 centroid = (a + b + c) / 3.0;
      auto seg = cdt.encroached_segment(cc);
      int loc = -1;
      if (!seg) {
        loc = cdt.locate(cc, bt.t);
        if (loc < 0) seg = cdt.crossed_segment(centroid, cc);
      }
      if (!seg && loc >= 0) {
        if (cdt.insert(cc, loc) >= 0) {
          ++insertions;
          ++inserted_this_sweep;
        }
        continue;
      }
      if (seg && allow_split) {
        const int sa = (*seg)[0], sb = (*seg)[1];
        const double len = (cdt.pts[sa] - cdt.pts[sb]).norm();
        if (len > 2.0 * h / 3.0) {
          int owner = cdt.owner(sa, sb);
          int ea = sa, eb = sb;
          if (owner < 0) {
            owner = cdt.owner(sb, sa);
            std::swap(ea, eb);
          }
          if (owner >= 0 && cdt.insert(0.5 * (cdt.pts[ea] + cdt.pts[eb]), owner, ea, eb) >= 0) {
            ++insertions;
            ++inserted_this_sweep;
            continue;
          }
        }
      }
      // fixed segment: try an apex over it on the interior side
      if (seg) {
        int ea = (*seg)[0], eb = (*seg)[1];
        if (cdt.owner(ea, eb) < 0) std::swap(ea, eb);
        const int owner = cdt.owner(ea, eb);
        if (owner >= 0) {
          const Vec2 d = cdt.pts[eb] - cdt.pts[ea];
          const double len = d.norm();
          const Vec2 mid = 0.5 * (cdt.pts[ea] + cdt.pts[eb]);
          const Vec2 nrm(-d.y() / len, d.x() / len);
          bool done = false;
          for (double f : {0.866, 0.6, 0.4}) {
            const Vec2 q = mid + f * len * nrm;
            const int l = cdt.locate(q, owner);
            if (l < 0 || cdt.crossed_segment(mid + 1e-6 * len * nrm, q)) continue;
            bool near = false;
            for (int w : cdt.tris[l].v)
              if ((cdt.pts[w] - q).norm() < 0.3 * f * len) near = true;
            if (near) continue;
            if (cdt.insert(q, l) >= 0) {
              ++insertions;
              ++inserted_this_sweep;
              done = true;
              break;
            }
          }
          if (done) continue;
        }
      }
      // fallback: pull the candidate towards the centroid until it is admissible
      for (double s : {0.5, 0.25, 0.0}) {
        const Vec2 q = centroid + s * (cc - centroid);
        if (cdt.encroached_segment(q)) continue;
        const int l = cdt.locate(q, bt.t);
        if (l < 0) continue;
        bool near = false;
        for (int w : cdt.tris[l].v)
          if ((cdt.pts[w] - q).norm() < 0.3 * std::min((a - b).norm(), std::min((b - c).norm(), (c - a).norm())))
            near = true;
        if (near) continue;
        if (cdt.insert(q, l) >= 0) {
          ++insertions;
          ++inserted_this_sweep;
          break;
        }
      }
    }
    if (inserted_this_sweep == 0) break;
  }
  cdt.smooth(opt.smoothing_passes);

  // compact
  std::vector<std::array<int, 3>> tris;
  for (const auto& t : cdt.tris)
    if (t.alive) tris.push_back(t.v);
  std::vector<BoundaryEdge> bnd;
  bnd.reserve(cdt.constrained.size());
  // emit boundary edges loop by loop, starting from the original loop vertices
  std::unordered_map<int, int> next;  // a -> b for oriented constrained edges
  for (const auto& [key, tag] : cdt.constrained) {
    const int a = static_cast<int>(key >> 32);
    const int b = static_cast<int>(key & 0xffffffffu);
    if (cdt.owner(a, b) >= 0)
      next[a] = b;
    else if (cdt.owner(b, a) >= 0)
      next[b] = a;
    else
      throw GeometryError("mesh: lost a boundary segment during triangulation");
  }
  for (const auto& l : loops) {
    int v = l[0];
    do {
      const int w = next.at(v);
      bnd.push_back({v, w, cdt.constrained.at(edge_key(v, w))});
      v = w;
    } while (v != l[0]);
  }
  if (bnd.size() != cdt.constrained.size())
    throw GeometryError("mesh: boundary loops are not closed after triangulation");
  return TriMesh(std::move(cdt.pts), std::move(tris), std::move(bnd), h);
}

}  // namespace detail

/// Subdivides every polygon edge into equal pieces no longer than h.
inline TaggedLoop subdivide_loop(const TaggedLoop& loop, double h) {
  TaggedLoop out;
  const std::size_t n = loop.vertices.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2& a = loop.vertices[i];
    const Vec2& b = loop.vertices[(i + 1) % n];
    const int pieces = std::max(1, static_cast<int>(std::ceil((b - a).norm() / h - 1e-9)));
    for (int k = 0; k < pieces; ++k) {
      out.vertices.push_back(k == 0 ? a : Vec2(a + (b - a) * (static_cast<double>(k) / pieces)));
      out.tags.push_back(loop.tags[i]);
    }
  }
  return out;
}

/// Quality triangulation of a tagged polygon with target size h.
inline TriMesh generate_mesh(const TaggedPolygon& boundary, double h,
                             const MeshingOptions& opt = {}) {
  if (!(h > 0.0)) throw GeometryError("generate_mesh: h must be positive");
  detail::validate_loop(boundary.outer, "outer");
  for (const auto& hl : boundary.holes) detail::validate_loop(hl, "hole");
  TaggedPolygon sub;
  sub.outer = subdivide_loop(boundary.outer, h);
  for (const auto& hl : boundary.holes) sub.holes.push_back(subdivide_loop(hl, h));
  return detail::triangulate(sub, h, true, opt);
}

/// True when boundary edges meet only at their shared vertices.
inline bool boundary_is_simple(const TriMesh& mesh) {
  std::vector<std::array<Vec2, 2>> segs;
  std::vector<std::array<int, 2>> ids;
  for (const auto& e : mesh.boundary_edges()) {
    segs.push_back({mesh.vertex(e.a), mesh.vertex(e.b)});
    ids.push_back({e.a, e.b});
  }
  try {
    detail::check_simple(segs, ids);
  } catch (const GeometryError&) {
    return false;
  }
  return true;
}

/// Retriangulates the interior of a mesh keeping its boundary vertices bitwise.
inline TriMesh remesh(const TriMesh& mesh, const MeshingOptions& opt = {}) {
  return detail::triangulate(boundary_polygon(mesh), mesh.h_target(), false, opt);
}

}  // namespace shapeopt
