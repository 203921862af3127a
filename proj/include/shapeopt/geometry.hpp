#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace shapeopt {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

/// Base class of all library diagnostics.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid or degenerate geometry (polygons, meshes, point location).
class GeometryError : public Error {
 public:
  using Error::Error;
};

/// Linear solver breakdown or an ill-posed discrete problem.
class SolverError : public Error {
 public:
  using Error::Error;
};

/// Malformed configuration input.
class ConfigError : public Error {
 public:
  using Error::Error;
};

namespace geom {

/// Twice the signed area of (a, b, c); positive for counter-clockwise order.
inline double orient(const Vec2& a, const Vec2& b, const Vec2& c) {
  return (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
}

/// Rounding-error bound for orient(); values below it carry no sign.
inline double orient_bound(const Vec2& a, const Vec2& b, const Vec2& c) {
  const double l = std::abs((b.x() - a.x()) * (c.y() - a.y()));
  const double r = std::abs((b.y() - a.y()) * (c.x() - a.x()));
  return 1e-13 * (l + r);
}

/// Positive when d lies strictly inside the circumcircle of the ccw triangle (a, b, c).
inline double incircle(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
  const double adx = a.x() - d.x(), ady = a.y() - d.y();
  const double bdx = b.x() - d.x(), bdy = b.y() - d.y();
  const double cdx = c.x() - d.x(), cdy = c.y() - d.y();
  const double alift = adx * adx + ady * ady;
  const double blift = bdx * bdx + bdy * bdy;
  const double clift = cdx * cdx + cdy * cdy;
  return alift * (bdx * cdy - bdy * cdx) + blift * (cdx * ady - cdy * adx) +
         clift * (adx * bdy - ady * bdx);
}

inline double incircle_bound(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
  const double adx = a.x() - d.x(), ady = a.y() - d.y();
  const double bdx = b.x() - d.x(), bdy = b.y() - d.y();
  const double cdx = c.x() - d.x(), cdy = c.y() - d.y();
  const double alift = adx * adx + ady * ady;
  const double blift = bdx * bdx + bdy * bdy;
  const double clift = cdx * cdx + cdy * cdy;
  const double perm = alift * (std::abs(bdx * cdy) + std::abs(bdy * cdx)) +
                      blift * (std::abs(cdx * ady) + std::abs(cdy * adx)) +
                      clift * (std::abs(adx * bdy) + std::abs(ady * bdx));
  return 1e-12 * perm;
}

inline double triangle_area(const Vec2& a, const Vec2& b, const Vec2& c) {
  return 0.5 * orient(a, b, c);
}

inline Vec2 circumcenter(const Vec2& a, const Vec2& b, const Vec2& c) {
  const Vec2 ab = b - a;
  const Vec2 ac = c - a;
  const double d = 2.0 * (ab.x() * ac.y() - ab.y() * ac.x());
  const double ab2 = ab.squaredNorm();
  const double ac2 = ac.squaredNorm();
  return a + Vec2((ac.y() * ab2 - ab.y() * ac2) / d, (ab.x() * ac2 - ac.x() * ab2) / d);
}

/// Inradius over circumradius; 0.5 for equilateral, 0 for degenerate triangles.
inline double radius_ratio(const Vec2& a, const Vec2& b, const Vec2& c) {
  const double la = (b - c).norm();
  const double lb = (c - a).norm();
  const double lc = (a - b).norm();
  const double area = std::abs(triangle_area(a, b, c));
  if (area <= 0.0 || la * lb * lc <= 0.0) return 0.0;
  const double s = 0.5 * (la + lb + lc);
  const double r_in = area / s;
  const double r_out = la * lb * lc / (4.0 * area);
  return r_in / r_out;
}

/// Signed shoelace area of a closed polyline.
inline double polygon_area(std::span<const Vec2> pts) {
  double a = 0.0;
  const std::size_t n = pts.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2& p = pts[i];
    const Vec2& q = pts[(i + 1) % n];
    a += p.x() * q.y() - q.x() * p.y();
  }
  return 0.5 * a;
}

inline double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 ab = b - a;
  const double l2 = ab.squaredNorm();
  if (l2 == 0.0) return (p - a).norm();
  const double t = std::clamp((p - a).dot(ab) / l2, 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

/// True when segments [a,b] and [c,d] share a point other than a common endpoint.
inline bool segments_intersect(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
  auto on_segment = [](const Vec2& p, const Vec2& q, const Vec2& r) {
    return std::min(p.x(), q.x()) <= r.x() && r.x() <= std::max(p.x(), q.x()) &&
           std::min(p.y(), q.y()) <= r.y() && r.y() <= std::max(p.y(), q.y());
  };
  const double d1 = orient(c, d, a);
  const double d2 = orient(c, d, b);
  const double d3 = orient(a, b, c);
  const double d4 = orient(a, b, d);
  if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0)))
    return true;
  if (d1 == 0 && on_segment(c, d, a)) return true;
  if (d2 == 0 && on_segment(c, d, b)) return true;
  if (d3 == 0 && on_segment(a, b, c)) return true;
  if (d4 == 0 && on_segment(a, b, d)) return true;
  return false;
}

/// Even-odd point-in-polygon test; points on the boundary may go either way.
inline bool point_in_polygon(const Vec2& p, std::span<const Vec2> pts) {
  bool inside = false;
  const std::size_t n = pts.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Vec2& a = pts[i];
    const Vec2& b = pts[j];
    if ((a.y() > p.y()) != (b.y() > p.y())) {
      const double x = a.x() + (p.y() - a.y()) * (b.x() - a.x()) / (b.y() - a.y());
      if (p.x() < x) inside = !inside;
    }
  }
  return inside;
}

/// Barycentric coordinates of p with respect to (a, b, c).
inline Eigen::Vector3d barycentric(const Vec2& p, const Vec2& a, const Vec2& b, const Vec2& c) {
  const double d = orient(a, b, c);
  const double l1 = orient(p, b, c) / d;
  const double l2 = orient(a, p, c) / d;
  return {l1, l2, 1.0 - l1 - l2};
}

}  // namespace geom
}  // namespace shapeopt
