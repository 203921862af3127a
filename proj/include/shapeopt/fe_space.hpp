#pragma once

#include "shapeopt/mesh.hpp"
#include "shapeopt/quadrature.hpp"

#include <Eigen/Dense>

#include <memory>

namespace shapeopt {

/// Nodal Lagrange basis of order 1..3 on the reference triangle.
///
/// Local node order: the three vertices, then k-1 nodes on each edge
/// (v0,v1), (v1,v2), (v2,v0) running from the first vertex, then interior nodes.
class LagrangeBasis {
 public:
  explicit LagrangeBasis(int order) : order_(order) {
    if (order < 1 || order > 3) throw Error("LagrangeBasis: order must be 1, 2 or 3");
    const int k = order;
    const std::array<Eigen::Vector3d, 3> corner{Eigen::Vector3d(1, 0, 0), Eigen::Vector3d(0, 1, 0),
                                                 Eigen::Vector3d(0, 0, 1)};
    for (int i = 0; i < 3; ++i) nodes_.push_back(corner[i]);
    for (int e = 0; e < 3; ++e)
      for (int j = 1; j < k; ++j) {
        const double s = static_cast<double>(j) / k;
        nodes_.push_back((1.0 - s) * corner[e] + s * corner[(e + 1) % 3]);
      }
    for (int a = 1; a < k; ++a)
      for (int b = 1; a + b < k; ++b)
        nodes_.push_back(Eigen::Vector3d(k - a - b, a, b) / k);
    for (int d = 0; d <= k; ++d)
      for (int a = d; a >= 0; --a) exps_.push_back({a, d - a});
    const int n = size();
    Eigen::MatrixXd vander(n, n);
    for (int i = 0; i < n; ++i)
      for (int m = 0; m < n; ++m)
        vander(i, m) = std::pow(nodes_[i][1], exps_[m][0]) * std::pow(nodes_[i][2], exps_[m][1]);
    coeff_ = vander.inverse();  // column i: monomial coefficients of basis function i
  }

  int order() const { return order_; }
  int size() const { return (order_ + 1) * (order_ + 2) / 2; }
  /// Barycentric coordinates of local nodes (weights of v0, v1, v2).
  const std::vector<Eigen::Vector3d>& nodes() const { return nodes_; }
  static Vec2 ref_point(const Eigen::Vector3d& bary) { return {bary[1], bary[2]}; }

  Eigen::VectorXd values(const Vec2& xi) const {
    Eigen::VectorXd mono(size());
    for (int m = 0; m < size(); ++m) mono[m] = ipow(xi.x(), exps_[m][0]) * ipow(xi.y(), exps_[m][1]);
    return coeff_.transpose() * mono;
  }

  /// Reference gradients, one row per basis function.
  Eigen::MatrixXd gradients(const Vec2& xi) const {
    Eigen::MatrixXd dm(size(), 2);
    for (int m = 0; m < size(); ++m) {
      const int a = exps_[m][0], b = exps_[m][1];
      dm(m, 0) = a == 0 ? 0.0 : a * ipow(xi.x(), a - 1) * ipow(xi.y(), b);
      dm(m, 1) = b == 0 ? 0.0 : b * ipow(xi.x(), a) * ipow(xi.y(), b - 1);
    }
    return coeff_.transpose() * dm;
  }

  static const LagrangeBasis& get(int order) {
    static const LagrangeBasis b1(1), b2(2), b3(3);
    switch (order) {
      case 1: return b1;
      case 2: return b2;
      case 3: return b3;
      default: throw Error("LagrangeBasis: order must be 1, 2 or 3");
    }
  }

 private:
  static double ipow(double x, int e) {
    double r = 1.0;
    for (int i = 0; i < e; ++i) r *= x;
    return r;
  }

  int order_;
  std::vector<Eigen::Vector3d> nodes_;
  std::vector<std::array<int, 2>> exps_;
  Eigen::MatrixXd coeff_;
};

/// Basis values and reference gradients tabulated at the points of a rule.
struct Tabulation {
  Eigen::MatrixXd phi;                ///< nq x nb
  std::vector<Eigen::MatrixXd> dphi;  ///< per point: nb x 2 reference gradients

  Tabulation(const LagrangeBasis& basis, std::span<const Vec2> pts) {
    phi.resize(static_cast<Eigen::Index>(pts.size()), basis.size());
    for (std::size_t q = 0; q < pts.size(); ++q) {
      phi.row(static_cast<Eigen::Index>(q)) = basis.values(pts[q]).transpose();
      dphi.push_back(basis.gradients(pts[q]));
    }
  }
};

/// Affine map from the reference triangle onto a mesh triangle.
struct ElementGeometry {
  Vec2 x0;
  Mat2 jac;      ///< columns x1 - x0, x2 - x0
  Mat2 inv_t;    ///< inverse transpose of jac
  double det = 0.0;

  Vec2 map(const Vec2& xi) const { return x0 + jac * xi; }
  Vec2 pull_back(const Vec2& x) const { return inv_t.transpose() * (x - x0); }
  /// Physical gradients (nb x 2) from reference gradients.
  Eigen::MatrixXd physical(const Eigen::MatrixXd& ref_grad) const { return ref_grad * inv_t.transpose(); }
};

inline ElementGeometry element_geometry(const TriMesh& mesh, int t) {
  const auto& tr = mesh.triangle(t);
  ElementGeometry g;
  g.x0 = mesh.vertex(tr[0]);
  g.jac.col(0) = mesh.vertex(tr[1]) - g.x0;
  g.jac.col(1) = mesh.vertex(tr[2]) - g.x0;
  g.det = g.jac.determinant();
  g.inv_t = g.jac.inverse().transpose();
  return g;
}

/// Vector-valued (d = 2) continuous Lagrange space of order 1..3.
///
/// Scalar node numbering: vertices, then k-1 nodes per mesh edge (ordered from
/// the lower vertex index), then interior nodes per triangle. DOF of node n,
/// component c is 2n + c. DOFs on edges carrying one of the constrained tags
/// are pinned to zero.
class FeSpace {
 public:
  FeSpace(std::shared_ptr<const TriMesh> mesh, int order, std::vector<BoundaryTag> constrained_tags)
      : mesh_(std::move(mesh)), order_(order), tags_(std::move(constrained_tags)) {
    if (!mesh_) throw Error("FeSpace: null mesh");
    const auto& basis = LagrangeBasis::get(order_);
    const int k = order_;
    const int nv = mesh_->num_vertices();
    const int ne = mesh_->num_edges();
    const int nt = mesh_->num_triangles();
    const int n_int = (k - 1) * (k - 2) / 2;
    num_nodes_ = nv + ne * (k - 1) + nt * n_int;
    nloc_ = basis.size();
    l2g_.resize(static_cast<std::size_t>(nt) * nloc_);
    nodes_.resize(num_nodes_);
    for (int v = 0; v < nv; ++v) nodes_[v] = mesh_->vertex(v);
    for (int t = 0; t < nt; ++t) {
      const auto& tr = mesh_->triangle(t);
      const auto& te = mesh_->triangle_edges(t);
      int* loc = l2g_.data() + static_cast<std::size_t>(t) * nloc_;
      for (int i = 0; i < 3; ++i) loc[i] = tr[i];
      for (int e = 0; e < 3; ++e) {
        const bool forward = tr[e] < tr[(e + 1) % 3];
        for (int j = 0; j < k - 1; ++j) {
          const int jj = forward ? j : k - 2 - j;
          loc[3 + e * (k - 1) + j] = nv + te[e] * (k - 1) + jj;
        }
      }
      for (int j = 0; j < n_int; ++j) loc[3 + 3 * (k - 1) + j] = nv + ne * (k - 1) + t * n_int + j;
      const auto geo = element_geometry(*mesh_, t);
      for (int i = 3; i < nloc_; ++i) nodes_[loc[i]] = geo.map(LagrangeBasis::ref_point(basis.nodes()[i]));
    }
    constrained_.assign(2 * static_cast<std::size_t>(num_nodes_), 0);
    for (int bi = 0; bi < static_cast<int>(mesh_->boundary_edges().size()); ++bi) {
      const auto& be = mesh_->boundary_edges()[bi];
      if (std::find(tags_.begin(), tags_.end(), be.tag) == tags_.end()) continue;
      const auto [t, local] = mesh_->boundary_edge_owner(bi);
      for (int n : edge_local_nodes(local)) {
        const int g = element_nodes(t)[n];
        constrained_[2 * g] = constrained_[2 * g + 1] = 1;
      }
    }
  }

  const TriMesh& mesh() const { return *mesh_; }
  const std::shared_ptr<const TriMesh>& mesh_ptr() const { return mesh_; }
  int order() const { return order_; }
  const LagrangeBasis& basis() const { return LagrangeBasis::get(order_); }
  int num_nodes() const { return num_nodes_; }
  int num_dofs() const { return 2 * num_nodes_; }
  int local_size() const { return nloc_; }
  const std::vector<BoundaryTag>& constrained_tags() const { return tags_; }

  std::span<const int> element_nodes(int t) const {
    return {l2g_.data() + static_cast<std::size_t>(t) * nloc_, static_cast<std::size_t>(nloc_)};
  }
  const Vec2& node(int n) const { return nodes_[n]; }
  bool constrained(int dof) const { return constrained_[dof] != 0; }
  const std::vector<char>& constrained_mask() const { return constrained_; }
  int num_constrained() const {
    return static_cast<int>(std::count(constrained_.begin(), constrained_.end(), 1));
  }

  /// Local node indices lying on local edge e (both vertices and the edge nodes).
  std::vector<int> edge_local_nodes(int e) const {
    const int k = order_;
    std::vector<int> r{e, (e + 1) % 3};
    for (int j = 0; j < k - 1; ++j) r.push_back(3 + e * (k - 1) + j);
    return r;
  }

  /// Same mesh, order and constraints.
  bool same_as(const FeSpace& o) const {
    return mesh_.get() == o.mesh_.get() && order_ == o.order_ && tags_ == o.tags_;
  }

 private:
  std::shared_ptr<const TriMesh> mesh_;
  int order_;
  std::vector<BoundaryTag> tags_;
  int num_nodes_ = 0;
  int nloc_ = 0;
  std::vector<int> l2g_;
  std::vector<Vec2> nodes_;
  std::vector<char> constrained_;
};

inline std::shared_ptr<const FeSpace> make_space(std::shared_ptr<const TriMesh> mesh, int order,
                                                 std::vector<BoundaryTag> tags) {
  return std::make_shared<const FeSpace>(std::move(mesh), order, std::move(tags));
}

/// State space: displacement pinned on DIRICHLET edges.
inline std::shared_ptr<const FeSpace> state_space(std::shared_ptr<const TriMesh> mesh, int order) {
  return make_space(std::move(mesh), order, {BoundaryTag::Dirichlet});
}

/// Deformation space: vector fields vanishing on DIRICHLET and NEUMANN edges.
inline std::shared_ptr<const FeSpace> deformation_space(std::shared_ptr<const TriMesh> mesh, int order) {
  return make_space(std::move(mesh), order, {BoundaryTag::Dirichlet, BoundaryTag::Neumann});
}

/// Coefficient vector over a space.
struct Field {
  std::shared_ptr<const FeSpace> space;
  Eigen::VectorXd coeffs;

  Field() = default;
  explicit Field(std::shared_ptr<const FeSpace> s)
      : space(std::move(s)), coeffs(Eigen::VectorXd::Zero(space->num_dofs())) {}
  Field(std::shared_ptr<const FeSpace> s, Eigen::VectorXd c) : space(std::move(s)), coeffs(std::move(c)) {
    if (coeffs.size() != space->num_dofs()) throw Error("Field: coefficient count does not match space");
  }

  /// Local coefficients of element t as an nb x 2 matrix (row = node, column = component).
  Eigen::MatrixXd local(int t) const {
    const auto nodes = space->element_nodes(t);
    Eigen::MatrixXd c(static_cast<Eigen::Index>(nodes.size()), 2);
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      c(static_cast<Eigen::Index>(i), 0) = coeffs[2 * nodes[i]];
      c(static_cast<Eigen::Index>(i), 1) = coeffs[2 * nodes[i] + 1];
    }
    return c;
  }

  Vec2 value_in(int t, const Vec2& xi) const {
    const Eigen::VectorXd phi = space->basis().values(xi);
    return local(t).transpose() * phi;
  }

  /// Jacobian (row = component, column = derivative direction) at reference point xi of element t.
  Mat2 gradient_in(int t, const Vec2& xi) const {
    const auto geo = element_geometry(space->mesh(), t);
    const Eigen::MatrixXd g = geo.physical(space->basis().gradients(xi));
    return local(t).transpose() * g;
  }

  Vec2 vertex_value(int v) const { return {coeffs[2 * v], coeffs[2 * v + 1]}; }
};

/// Nodal interpolation of a vector function; constrained DOFs are set to zero.
template <class Fn>
Field interpolate(std::shared_ptr<const FeSpace> space, Fn&& fn, bool apply_constraints = true) {
  Field f(space);
  for (int n = 0; n < space->num_nodes(); ++n) {
    const Vec2 v = fn(space->node(n));
    f.coeffs[2 * n] = v.x();
    f.coeffs[2 * n + 1] = v.y();
  }
  if (apply_constraints)
    for (int d = 0; d < space->num_dofs(); ++d)
      if (space->constrained(d)) f.coeffs[d] = 0.0;
  return f;
}

/// Embeds a piecewise linear field given by vertex values into the space.
inline Field embed_vertex_field(std::shared_ptr<const FeSpace> space, std::span<const Vec2> vertex_values) {
  const auto& mesh = space->mesh();
  if (static_cast<int>(vertex_values.size()) != mesh.num_vertices())
    throw Error("embed_vertex_field: one value per vertex required");
  Field f(space);
  const auto& basis = space->basis();
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto& tr = mesh.triangle(t);
    const auto nodes = space->element_nodes(t);
    for (int i = 0; i < basis.size(); ++i) {
      const auto& b = basis.nodes()[i];
      const Vec2 v = b[0] * vertex_values[tr[0]] + b[1] * vertex_values[tr[1]] + b[2] * vertex_values[tr[2]];
      f.coeffs[2 * nodes[i]] = v.x();
      f.coeffs[2 * nodes[i] + 1] = v.y();
    }
  }
  return f;
}

/// Element and reference coordinates of a physical point.
struct PointLocation {
  int element = -1;
  Vec2 xi = Vec2::Zero();
};

/// Locates a point by walking from the nearest vertex; among all elements whose
/// closure contains the point, the one with the lowest index is returned.
inline PointLocation locate_point(const TriMesh& mesh, const Vec2& p) {
  auto contains = [&](int t) {
    const auto& tr = mesh.triangle(t);
    const Eigen::Vector3d l = geom::barycentric(p, mesh.vertex(tr[0]), mesh.vertex(tr[1]), mesh.vertex(tr[2]));
    return l.minCoeff() >= -1e-12;
  };
  int nearest = 0;
  double best = std::numeric_limits<double>::infinity();
  for (int v = 0; v < mesh.num_vertices(); ++v) {
    const double d = (mesh.vertex(v) - p).squaredNorm();
    if (d < best) {
      best = d;
      nearest = v;
    }
  }
  int found = -1;
  int t = mesh.vertex_triangles(nearest).empty() ? 0 : mesh.vertex_triangles(nearest)[0];
  for (int step = 0; step <= mesh.num_triangles() && t >= 0; ++step) {
    if (contains(t)) {
      found = t;
      break;
    }
    const auto& tr = mesh.triangle(t);
    const Eigen::Vector3d l = geom::barycentric(p, mesh.vertex(tr[0]), mesh.vertex(tr[1]), mesh.vertex(tr[2]));
    int worst = 0;
    for (int i = 1; i < 3; ++i)
      if (l[i] < l[worst]) worst = i;
    // the edge opposite vertex `worst` is local edge (worst+1)
    const int e = mesh.triangle_edges(t)[(worst + 1) % 3];
    const auto& et = mesh.edge_triangles(e);
    t = et[0] == t ? et[1] : et[0];
  }
  if (found < 0) {
    for (int i = 0; i < mesh.num_triangles(); ++i)
      if (contains(i)) {
        found = i;
        break;
      }
  }
  if (found < 0) {
    int hint = 0;
    double dmin = std::numeric_limits<double>::infinity();
    for (int i = 0; i < mesh.num_triangles(); ++i) {
      const double d = (mesh.centroid(i) - p).norm();
      if (d < dmin) {
        dmin = d;
        hint = i;
      }
    }
    throw GeometryError("point (" + std::to_string(p.x()) + ", " + std::to_string(p.y()) +
                        ") lies outside the mesh; nearest element " + std::to_string(hint));
  }
  // lowest-index element among those sharing a vertex with `found` that contain p
  int lowest = found;
  for (int v : mesh.triangle(found))
    for (int s : mesh.vertex_triangles(v))
      if (s < lowest && contains(s)) lowest = s;
  const auto geo = element_geometry(mesh, lowest);
  return {lowest, geo.pull_back(p)};
}

/// Gradient of an FE field at a physical point.
inline Mat2 evaluate_gradient(const Field& field, const Vec2& point) {
  const auto loc = locate_point(field.space->mesh(), point);
  return field.gradient_in(loc.element, loc.xi);
}

/// Vertex positions moved to v + s X(v); nullopt if an element inverts.
inline std::optional<TriMesh> deform_mesh(const TriMesh& mesh, const Field& x, double s) {
  if (x.space->mesh().num_vertices() != mesh.num_vertices())
    throw GeometryError("deform_mesh: field lives on a different mesh");
  std::vector<Vec2> disp(mesh.num_vertices());
  for (int v = 0; v < mesh.num_vertices(); ++v) disp[v] = x.vertex_value(v);
  return deform_vertices(mesh, disp, s);
}

}  // namespace shapeopt
