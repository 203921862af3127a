#pragma once

#include "shapeopt/stress.hpp"

namespace shapeopt {

/// Linear functional X -> l(X) on a deformation space, stored by its DOF coefficients.
struct DualVector {
  std::shared_ptr<const FeSpace> space;
  Eigen::VectorXd coeffs;

  DualVector() = default;
  explicit DualVector(std::shared_ptr<const FeSpace> s)
      : space(std::move(s)), coeffs(Eigen::VectorXd::Zero(space->num_dofs())) {}

  double pair(const Field& x) const {
    if (x.coeffs.size() != coeffs.size()) throw Error("DualVector: field has a different DOF count");
    return coeffs.dot(x.coeffs);
  }

  void apply_constraints() {
    for (int d = 0; d < space->num_dofs(); ++d)
      if (space->constrained(d)) coeffs[d] = 0.0;
  }
};

/// Adjoint state together with the data that defined its right-hand side.
struct AdjointField {
  enum class Kind { Pointwise, PNorm };
  Field q;
  Kind kind = Kind::Pointwise;
  Vec2 x = Vec2::Zero();   ///< ball center (pointwise)
  double r = 0.0;          ///< ball radius (pointwise)
  double ball_area = 0.0;  ///< |B_r(x) intersected with the domain|
  double p = 0.0;          ///< exponent (p-norm)
  double c_omega = 0.0;    ///< (1/p) (int sigma^p)^((1-p)/p)
  double integral = 0.0;   ///< int sigma^p
};

inline double point_triangle_distance(const Vec2& p, const Vec2& a, const Vec2& b, const Vec2& c) {
  const Eigen::Vector3d l = geom::barycentric(p, a, b, c);
  if (l.minCoeff() >= 0.0) return 0.0;
  return std::min({geom::point_segment_distance(p, a, b), geom::point_segment_distance(p, b, c),
                   geom::point_segment_distance(p, c, a)});
}

/// Reference-coordinate quadrature for the part of one element inside the disk B_r(x).
///
/// Sub-triangles inside the disk get the exact rule of `degree`; cut
/// sub-triangles are split four ways until their diameter drops below r/32,
/// after which points outside the disk are discarded.
struct BallCut {
  std::vector<Vec2> x;
  std::vector<double> w;  ///< reference weights (multiply by |det J|)
};

inline BallCut ball_cut_rule(const ElementGeometry& geo, const Vec2& center, double r, int degree,
                             int max_depth = 10) {
  BallCut out;
  const auto& rule = triangle_rule(degree);
  const auto& cut_rule = triangle_rule(std::max(degree, 2));
  struct Sub {
    std::array<Vec2, 3> v;  // reference coordinates
    int depth;
  };
  std::vector<Sub> stack{{{Vec2(0, 0), Vec2(1, 0), Vec2(0, 1)}, 0}};
  while (!stack.empty()) {
    const Sub s = stack.back();
    stack.pop_back();
    std::array<Vec2, 3> p{geo.map(s.v[0]), geo.map(s.v[1]), geo.map(s.v[2])};
    if (point_triangle_distance(center, p[0], p[1], p[2]) >= r) continue;
    const bool inside = (p[0] - center).norm() <= r && (p[1] - center).norm() <= r && (p[2] - center).norm() <= r;
    const double diam = std::max({(p[0] - p[1]).norm(), (p[1] - p[2]).norm(), (p[2] - p[0]).norm()});
    if (inside || diam <= r / 32.0 || s.depth >= max_depth) {
      const Vec2 e1 = s.v[1] - s.v[0], e2 = s.v[2] - s.v[0];
      const double jac = std::abs(e1.x() * e2.y() - e1.y() * e2.x());
      const auto& lr = inside ? rule : cut_rule;
      for (std::size_t q = 0; q < lr.w.size(); ++q) {
        const Vec2 xi = s.v[0] + e1 * lr.x[q].x() + e2 * lr.x[q].y();
        if (!inside && (geo.map(xi) - center).norm() > r) continue;
        out.x.push_back(xi);
        out.w.push_back(lr.w[q] * jac);
      }
      continue;
    }
    const Vec2 m01 = 0.5 * (s.v[0] + s.v[1]), m12 = 0.5 * (s.v[1] + s.v[2]), m20 = 0.5 * (s.v[2] + s.v[0]);
    stack.push_back({{s.v[0], m01, m20}, s.depth + 1});
    stack.push_back({{m01, s.v[1], m12}, s.depth + 1});
    stack.push_back({{m20, m12, s.v[2]}, s.depth + 1});
    stack.push_back({{m01, m12, m20}, s.depth + 1});
  }
  return out;
}

/// q solving  int A eps(phi):eps(q) = (2/|B_r(x) n Omega|) int_{B_r(x) n Omega} B eps(u):eps(phi).
///
/// Elements inside the ball use the exact rule; elements cut by the circle are
/// subdivided adaptively (see ball_cut_rule).
inline AdjointField solve_adjoint_pointwise(const ElasticSystem& sys, const Field& u, const Vec2& x, double r) {
  if (!(r > 0.0)) throw ConfigError("adjoint ball radius must be positive");
  const auto& space = *sys.space;
  const auto& mesh = space.mesh();
  const int degree = 2 * (space.order() - 1);
  const GradientWeights qb = mises_weights(sys.mat);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(space.num_dofs());
  double area = 0.0;
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto& tr = mesh.triangle(t);
    if (point_triangle_distance(x, mesh.vertex(tr[0]), mesh.vertex(tr[1]), mesh.vertex(tr[2])) >= r) continue;
    const auto geo = element_geometry(mesh, t);
    const BallCut cut = ball_cut_rule(geo, x, r, degree);
    if (cut.w.empty()) continue;
    const Eigen::MatrixXd cu = u.local(t);
    Eigen::VectorXd re = Eigen::VectorXd::Zero(2 * space.local_size());
    for (std::size_t p = 0; p < cut.w.size(); ++p) {
      const double w = cut.w[p] * std::abs(geo.det);
      area += w;
      const Eigen::MatrixXd bop = gradient_operator(geo.physical(space.basis().gradients(cut.x[p])));
      const Eigen::Vector4d gu = bop * cu.reshaped<Eigen::RowMajor>();
      re.noalias() += w * bop.transpose() * (qb * gu);
    }
    const auto nodes = space.element_nodes(t);
    for (int i = 0; i < re.size(); ++i) rhs[2 * nodes[i / 2] + i % 2] += re[i];
  }
  if (area < 1e-12 * mesh.area())
    throw ConfigError("adjoint ball radius " + std::to_string(r) + " is too small for the mesh");
  rhs *= 2.0 / area;
  AdjointField out;
  out.q = sys.solve(rhs);
  out.kind = AdjointField::Kind::Pointwise;
  out.x = x;
  out.r = r;
  out.ball_area = area;
  return out;
}

/// q solving  int A eps(phi):eps(q) = c p int (sigma^2)^(p/2-1) B eps(u):eps(phi).
inline AdjointField solve_adjoint_pnorm(const ElasticSystem& sys, const Field& u, double p) {
  if (!(p >= 2.0)) throw ConfigError("p-norm exponent must be at least 2");
  const auto& space = *sys.space;
  const auto& mesh = space.mesh();
  const double integral = pnorm_integral(u, sys.mat, p);
  if (!(integral > 0.0)) throw SolverError("p-norm adjoint undefined: stress integral is zero");
  const double c_omega = std::pow(integral, (1.0 - p) / p) / p;
  const GradientWeights qb = mises_weights(sys.mat);
  const auto& rule = triangle_rule(pnorm_degree(space.order(), p));
  const Tabulation tab(space.basis(), rule.x);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(space.num_dofs());
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto geo = element_geometry(mesh, t);
    const Eigen::MatrixXd cu = u.local(t);
    Eigen::VectorXd re = Eigen::VectorXd::Zero(2 * space.local_size());
    for (std::size_t q = 0; q < rule.w.size(); ++q) {
      const double w = rule.w[q] * std::abs(geo.det);
      const Eigen::MatrixXd bop = gradient_operator(geo.physical(tab.dphi[q]));
      const Eigen::Vector4d gu = bop * cu.reshaped<Eigen::RowMajor>();
      const Eigen::Vector4d bgu = qb * gu;
      const double s2 = std::max(gu.dot(bgu), 0.0);
      re.noalias() += (w * std::pow(s2, 0.5 * p - 1.0)) * bop.transpose() * bgu;
    }
    const auto nodes = space.element_nodes(t);
    for (int i = 0; i < re.size(); ++i) rhs[2 * nodes[i / 2] + i % 2] += re[i];
  }
  rhs *= c_omega * p;
  AdjointField out;
  out.q = sys.solve(rhs);
  out.kind = AdjointField::Kind::PNorm;
  out.p = p;
  out.c_omega = c_omega;
  out.integral = integral;
  return out;
}

/// DJ_vol(X) = 2 (|Omega| - V) int div X.
inline DualVector dj_vol(std::shared_ptr<const FeSpace> def_space, double volume_target) {
  DualVector d(def_space);
  const auto& mesh = def_space->mesh();
  const double factor = 2.0 * (mesh.area() - volume_target);
  const auto& rule = triangle_rule(def_space->order() - 1);
  const Tabulation tab(def_space->basis(), rule.x);
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto geo = element_geometry(mesh, t);
    const auto nodes = def_space->element_nodes(t);
    Eigen::MatrixXd gsum = Eigen::MatrixXd::Zero(def_space->local_size(), 2);
    for (std::size_t q = 0; q < rule.w.size(); ++q)
      gsum += rule.w[q] * std::abs(geo.det) * geo.physical(tab.dphi[q]);
    for (int a = 0; a < def_space->local_size(); ++a)
      for (int c = 0; c < 2; ++c) d.coeffs[2 * nodes[a] + c] += factor * gsum(a, c);
  }
  d.apply_constraints();
  return d;
}

namespace detail {

inline void require_same_mesh(const FeSpace& def_space, const Field& u) {
  if (&def_space.mesh() != &u.space->mesh()) throw Error("shape derivative: state and deformation space differ in mesh");
}

/// Adds  1/2 int A[du dX + ..]:eps(q) - int div X A eps(u):eps(q) + 1/2 int A eps(u):[dq dX + ..]
/// plus volume-force and traction terms, scaled by `scale`.
inline void add_adjoint_terms(DualVector& d, const Field& u, const Field& q, const MaterialParams& mat,
                              const Loads& loads, double scale) {
  const auto& space = *d.space;
  require_same_mesh(space, u);
  const auto& mesh = space.mesh();
  const int k = u.space->order();
  const int m = space.order();
  const int nb = space.local_size();
  const bool has_f = static_cast<bool>(loads.f);
  const auto& rule = triangle_rule(has_f ? 2 * k + m + 2 : 2 * (k - 1) + m - 1);
  const Tabulation tab(space.basis(), rule.x);
  const Tabulation tab_u(u.space->basis(), rule.x);
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto geo = element_geometry(mesh, t);
    const Eigen::MatrixXd cu = u.local(t);
    const Eigen::MatrixXd cq = q.local(t);
    Eigen::MatrixXd contrib = Eigen::MatrixXd::Zero(nb, 2);
    for (std::size_t p = 0; p < rule.w.size(); ++p) {
      const double w = rule.w[p] * std::abs(geo.det);
      const Eigen::MatrixXd g = geo.physical(tab.dphi[p]);
      const Eigen::MatrixXd gu = geo.physical(tab_u.dphi[p]);
      const Mat2 du = cu.transpose() * gu;
      const Mat2 dq = cq.transpose() * gu;
      const Mat2 aeu = apply_A(sym(du), mat);
      const Mat2 aeq = apply_A(sym(dq), mat);
      const double energy = ddot(aeu, sym(dq));
      for (int c = 0; c < 2; ++c) {
        contrib.col(c) += w * (g * (aeq * du.col(c)) - energy * g.col(c) + g * (aeu * dq.col(c)));
      }
      if (has_f) {
        const Vec2 xp = geo.map(rule.x[p]);
        const Vec2 qv = cq.transpose() * tab_u.phi.row(static_cast<Eigen::Index>(p)).transpose();
        const double fq = loads.f(xp).dot(qv);
        const Mat2 df = loads.df ? loads.df(xp) : Mat2::Zero();
        for (int c = 0; c < 2; ++c)
          contrib.col(c) += w * (fq * g.col(c) + df.col(c).dot(qv) * tab.phi.row(static_cast<Eigen::Index>(p)).transpose());
      }
    }
    const auto nodes = space.element_nodes(t);
    for (int a = 0; a < nb; ++a)
      for (int c = 0; c < 2; ++c) d.coeffs[2 * nodes[a] + c] += scale * contrib(a, c);
  }
  if (!loads.g) return;
  const LineRule line = line_rule(k + m + 2);
  for (int bi : boundary_edges_with_tag(mesh, loads.neumann_tag)) {
    const auto [t, e] = mesh.boundary_edge_owner(bi);
    const auto geo = element_geometry(mesh, t);
    const auto& be = mesh.boundary_edges()[bi];
    const double len = (mesh.vertex(be.b) - mesh.vertex(be.a)).norm();
    const Vec2 n = mesh.outward_normal(bi);
    const Eigen::MatrixXd cq = q.local(t);
    Eigen::MatrixXd contrib = Eigen::MatrixXd::Zero(nb, 2);
    for (std::size_t p = 0; p < line.w.size(); ++p) {
      const Vec2 xi = edge_reference_point(e, line.x[p]);
      const Vec2 xp = geo.map(xi);
      const Eigen::VectorXd phi = space.basis().values(xi);
      const Eigen::MatrixXd g = geo.physical(space.basis().gradients(xi));
      const Vec2 qv = cq.transpose() * u.space->basis().values(xi);
      const double gq = loads.g(xp).dot(qv);
      const Mat2 dg = loads.dg ? loads.dg(xp) : Mat2::Zero();
      const Eigen::VectorXd gn = g * n;
      for (int c = 0; c < 2; ++c)
        contrib.col(c) += line.w[p] * len * ((g.col(c) - n[c] * gn) * gq + dg.col(c).dot(qv) * phi);
    }
    const auto nodes = space.element_nodes(t);
    for (int a = 0; a < nb; ++a)
      for (int c = 0; c < 2; ++c) d.coeffs[2 * nodes[a] + c] += scale * contrib(a, c);
  }
}

}  // namespace detail

/// Approximate shape derivative of sigma_M^2 at the point x (reference coordinates
/// xi of element `element`): the pointwise term  -B[du dX + dX^T du^T]:eps(u)(x)
/// evaluated on that element, plus the adjoint-coupled terms with q = q^{x,r}.
inline DualVector dj_sigma_point(std::shared_ptr<const FeSpace> def_space, const MaterialParams& mat,
                                 const Field& u, const AdjointField& q, int element, const Vec2& xi,
                                 const Loads& loads) {
  detail::require_same_mesh(*def_space, u);
  DualVector d(def_space);
  const auto& mesh = def_space->mesh();
  const auto geo = element_geometry(mesh, element);
  const Eigen::MatrixXd g = geo.physical(def_space->basis().gradients(xi));
  const Mat2 du = u.local(element).transpose() * geo.physical(u.space->basis().gradients(xi));
  const Mat2 beu = apply_B(sym(du), mat);
  const auto nodes = def_space->element_nodes(element);
  for (int c = 0; c < 2; ++c) {
    const Eigen::VectorXd v = -2.0 * g * (beu * du.col(c));
    for (int a = 0; a < def_space->local_size(); ++a) d.coeffs[2 * nodes[a] + c] += v[a];
  }
  detail::add_adjoint_terms(d, u, q.q, mat, loads, 1.0);
  d.apply_constraints();
  return d;
}

/// Same as above with the element found by point location.
inline DualVector dj_sigma_point(std::shared_ptr<const FeSpace> def_space, const MaterialParams& mat,
                                 const Field& u, const AdjointField& q, const Vec2& x, const Loads& loads) {
  const auto loc = locate_point(def_space->mesh(), x);
  return dj_sigma_point(std::move(def_space), mat, u, q, loc.element, loc.xi, loads);
}

/// DJ_p(X) = c int div X sigma^p - c (p/2) int (sigma^2)^(p/2-1) B[du dX + ..]:eps(u) + adjoint terms.
inline DualVector dj_p(std::shared_ptr<const FeSpace> def_space, const MaterialParams& mat, const Field& u,
                       const AdjointField& q, const Loads& loads) {
  if (q.kind != AdjointField::Kind::PNorm) throw Error("dj_p needs a p-norm adjoint");
  detail::require_same_mesh(*def_space, u);
  DualVector d(def_space);
  const auto& space = *def_space;
  const auto& mesh = space.mesh();
  const int nb = space.local_size();
  const double p = q.p;
  const auto& rule = triangle_rule(pnorm_degree(u.space->order(), p, space.order() - 1));
  const Tabulation tab(space.basis(), rule.x);
  const Tabulation tab_u(u.space->basis(), rule.x);
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto geo = element_geometry(mesh, t);
    const Eigen::MatrixXd cu = u.local(t);
    Eigen::MatrixXd contrib = Eigen::MatrixXd::Zero(nb, 2);
    for (std::size_t i = 0; i < rule.w.size(); ++i) {
      const double w = rule.w[i] * std::abs(geo.det);
      const Eigen::MatrixXd g = geo.physical(tab.dphi[i]);
      const Mat2 du = cu.transpose() * geo.physical(tab_u.dphi[i]);
      const Mat2 beu = apply_B(sym(du), mat);
      const double s2 = std::max(ddot(beu, sym(du)), 0.0);
      const double sp = std::pow(s2, 0.5 * p);
      const double sp2 = std::pow(s2, 0.5 * p - 1.0);
      for (int c = 0; c < 2; ++c) contrib.col(c) += w * (sp * g.col(c) - p * sp2 * (g * (beu * du.col(c))));
    }
    const auto nodes = space.element_nodes(t);
    for (int a = 0; a < nb; ++a)
      for (int c = 0; c < 2; ++c) d.coeffs[2 * nodes[a] + c] += q.c_omega * contrib(a, c);
  }
  detail::add_adjoint_terms(d, u, q.q, mat, loads, 1.0);
  d.apply_constraints();
  return d;
}

}  // namespace shapeopt
