#pragma once

#include "shapeopt/elasticity.hpp"

#include <numeric>

namespace shapeopt {

/// B(M) = 6 mu M + (lambda - 2 mu) tr(M) I; sigma_M^2 = B eps(u) : eps(u).
inline Mat2 apply_B(const Mat2& m, const MaterialParams& mat) {
  return 6.0 * mat.mu * m + (mat.lambda - 2.0 * mat.mu) * m.trace() * Mat2::Identity();
}

/// Weights of B eps(U):eps(W) on the gradient vector.
inline GradientWeights mises_weights(const MaterialParams& mat) {
  const Eigen::Vector4d t(1, 0, 0, 1);
  return 6.0 * mat.mu * strain_weights() + (mat.lambda - 2.0 * mat.mu) * t * t.transpose();
}

/// Squared von Mises stress for a displacement gradient.
inline double mises_sq(const Mat2& grad_u, const MaterialParams& mat) {
  const Mat2 e = sym(grad_u);
  return ddot(apply_B(e, mat), e);
}

struct StressSample {
  int element = 0;
  Vec2 xi;     ///< reference coordinates inside the element
  Vec2 x;      ///< physical location
  double value = 0.0;  ///< sigma_M^2
};

using StressSamples = std::vector<StressSample>;

/// Default sampling degree max(2(k-1), 1) for order-k displacements.
inline int default_sampling_degree(int order) { return std::max(2 * (order - 1), 1); }

/// Reference sample points: Lagrange nodes of degree m, then the barycenter.
inline std::vector<Vec2> sample_points(int m) {
  std::vector<Vec2> pts;
  for (int j = 0; j <= m; ++j)
    for (int i = 0; i + j <= m; ++i) pts.emplace_back(static_cast<double>(i) / m, static_cast<double>(j) / m);
  pts.emplace_back(1.0 / 3.0, 1.0 / 3.0);
  return pts;
}

/// sigma_M^2 at the sample points of every element, in element order.
inline StressSamples von_mises_samples(const Field& u, const MaterialParams& mat, int sampling_degree = 0) {
  const auto& space = *u.space;
  const auto& mesh = space.mesh();
  const int m = sampling_degree > 0 ? sampling_degree : default_sampling_degree(space.order());
  const auto pts = sample_points(m);
  std::vector<Eigen::MatrixXd> ref_grads;
  for (const auto& p : pts) ref_grads.push_back(space.basis().gradients(p));
  StressSamples out;
  out.reserve(pts.size() * static_cast<std::size_t>(mesh.num_triangles()));
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto geo = element_geometry(mesh, t);
    const Eigen::MatrixXd c = u.local(t);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const Mat2 du = c.transpose() * geo.physical(ref_grads[i]);
      out.push_back({t, pts[i], geo.map(pts[i]), mises_sq(du, mat)});
    }
  }
  return out;
}

struct ActivePoint {
  int element = 0;
  Vec2 xi;
  Vec2 x;
  double value = 0.0;
};

/// Near-maximizers of sigma_M^2, strongest first.
struct ActiveSet {
  double max_value = 0.0;
  std::vector<ActivePoint> points;
  double rel_tol = 0.0;

  int size() const { return static_cast<int>(points.size()); }
};

/// Samples with value >= (1 - rel_tol) max, merged so that no two members lie
/// closer than the diameter of the retained member's element.
inline ActiveSet active_set(const StressSamples& samples, const TriMesh& mesh, double rel_tol = 1e-3) {
  if (samples.empty()) throw Error("active_set: no samples");
  ActiveSet a;
  a.rel_tol = rel_tol;
  std::vector<int> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int i, int j) { return samples[i].value > samples[j].value; });
  a.max_value = samples[order[0]].value;
  const double threshold = (1.0 - rel_tol) * a.max_value;
  for (int i : order) {
    const auto& s = samples[i];
    if (s.value < threshold) break;
    if (a.max_value <= 0.0 && !a.points.empty()) break;
    bool merged = false;
    for (const auto& p : a.points)
      if ((p.x - s.x).norm() < mesh.diameter(p.element)) {
        merged = true;
        break;
      }
    if (!merged) a.points.push_back({s.element, s.xi, s.x, s.value});
  }
  return a;
}

enum class CostMode { MaxNorm, PNorm };

inline std::string_view to_string(CostMode m) { return m == CostMode::MaxNorm ? "MAX_NORM" : "P_NORM"; }

struct CostConfig {
  double gamma1 = 1.0;
  double gamma2 = 1.0;
  double volume_target = 1.0;
  double delta = 0.0;
  double p = 2.0;
  CostMode mode = CostMode::MaxNorm;
  int sampling_degree = 0;  ///< 0 selects the default
};

struct CostBreakdown {
  double area = 0.0;
  double j_vol = 0.0;
  double j_sigma_max = 0.0;
  double j_p = 0.0;
  double max_sigma_sq = 0.0;
  double total = 0.0;
};

/// Rule degree for integrating (sigma_M^2)^(p/2) times a polynomial of degree `extra`.
inline int pnorm_degree(int order, double p, int extra = 0) {
  const double half = 0.5 * p;
  if (half == std::floor(half)) return (order - 1) * static_cast<int>(p) + extra;
  return 2 * order * static_cast<int>(std::ceil(p)) + extra;
}

/// int sigma_M^p over the mesh.
inline double pnorm_integral(const Field& u, const MaterialParams& mat, double p) {
  const auto& space = *u.space;
  const auto& mesh = space.mesh();
  const auto& rule = triangle_rule(pnorm_degree(space.order(), p));
  const Tabulation tab(space.basis(), rule.x);
  double s = 0.0;
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto geo = element_geometry(mesh, t);
    const Eigen::MatrixXd c = u.local(t);
    double se = 0.0;
    for (std::size_t q = 0; q < rule.w.size(); ++q) {
      const Mat2 du = c.transpose() * geo.physical(tab.dphi[q]);
      se += rule.w[q] * std::pow(std::max(mises_sq(du, mat), 0.0), 0.5 * p);
    }
    s += se * std::abs(geo.det);
  }
  return s;
}

inline CostBreakdown cost(const TriMesh& mesh, const Field& u, const MaterialParams& mat, const CostConfig& cfg,
                          const StressSamples* samples = nullptr) {
  CostBreakdown c;
  c.area = mesh.area();
  c.j_vol = (c.area - cfg.volume_target) * (c.area - cfg.volume_target);
  StressSamples own;
  if (!samples) {
    own = von_mises_samples(u, mat, cfg.sampling_degree);
    samples = &own;
  }
  for (const auto& s : *samples) c.max_sigma_sq = std::max(c.max_sigma_sq, s.value);
  c.j_sigma_max = std::max(c.max_sigma_sq - cfg.delta, 0.0);
  c.j_p = std::pow(pnorm_integral(u, mat, cfg.p), 1.0 / cfg.p);
  c.total = cfg.gamma1 * c.j_vol + cfg.gamma2 * (cfg.mode == CostMode::MaxNorm ? c.j_sigma_max : c.j_p);
  return c;
}

}  // namespace shapeopt
