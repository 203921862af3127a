#pragma once

#include "shapeopt/geometry.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <vector>

namespace shapeopt {

/// Points and weights on [0, 1].
struct LineRule {
  std::vector<double> x;
  std::vector<double> w;
};

/// Points (reference coordinates) and weights on the reference triangle
/// {(0,0), (1,0), (0,1)}; weights sum to 1/2.
struct TriangleRule {
  std::vector<Vec2> x;
  std::vector<double> w;
  int degree = 0;
};

/// n-point Gauss-Legendre rule mapped to [0, 1]; exact to degree 2n-1.
inline LineRule gauss_legendre(int n) {
  LineRule r;
  if (n <= 1) {
    r.x = {0.5};
    r.w = {1.0};
    return r;
  }
  r.x.resize(n);
  r.w.resize(n);
  for (int i = 0; i < n; ++i) {
    double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 1.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = z;
      for (int k = 2; k <= n; ++k) {
        const double pk = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = pk;
      }
      dp = n * (z * p1 - p0) / (z * z - 1.0);
      const double dz = p1 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    r.x[n - 1 - i] = 0.5 * (z + 1.0);
    r.w[n - 1 - i] = 1.0 / ((1.0 - z * z) * dp * dp);
  }
  return r;
}

inline LineRule line_rule(int degree) { return gauss_legendre(std::max(1, (degree + 2) / 2)); }

/// Collapsed (Duffy) product rule exact for polynomials of total degree `degree`.
inline TriangleRule make_triangle_rule(int degree) {
  degree = std::max(degree, 0);
  const int n = std::max(1, (degree + 2) / 2);
  const LineRule g = gauss_legendre(n);
  TriangleRule r;
  r.degree = degree;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double u = g.x[i];
      const double v = g.x[j];
      r.x.emplace_back(u, v * (1.0 - u));
      r.w.push_back(g.w[i] * g.w[j] * (1.0 - u));
    }
  return r;
}

/// Cached rule per degree; the returned reference stays valid for the program lifetime.
inline const TriangleRule& triangle_rule(int degree) {
  static std::mutex mtx;
  static std::map<int, TriangleRule> cache;
  std::lock_guard lock(mtx);
  auto it = cache.find(degree);
  if (it == cache.end()) it = cache.emplace(degree, make_triangle_rule(degree)).first;
  return it->second;
}

}  // namespace shapeopt
