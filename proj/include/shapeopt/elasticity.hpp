#pragma once

#include "shapeopt/fe_space.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include <cstdio>
#include <functional>

namespace shapeopt {

using SparseMatrix = Eigen::SparseMatrix<double>;
using VectorFn = std::function<Vec2(const Vec2&)>;
using MatrixFn = std::function<Mat2(const Vec2&)>;

/// Lamé pair of an isotropic material.
struct MaterialParams {
  double lambda = 0.0;
  double mu = 0.0;
};

inline MaterialParams lame_from_engineering(double E, double nu) {
  if (!(E > 0.0)) throw ConfigError("Young modulus must be positive");
  if (!(nu < 0.5)) throw ConfigError("Poisson ratio must be below 0.5 (incompressible limit excluded)");
  MaterialParams m;
  m.lambda = nu * E / ((1.0 + nu) * (1.0 - 2.0 * nu));
  m.mu = E / (2.0 * (1.0 + nu));
  if (!(m.lambda > 0.0) || !(m.mu > 0.0))
    throw ConfigError("Lame coefficients must both be positive (got lambda=" + std::to_string(m.lambda) +
                      ", mu=" + std::to_string(m.mu) + ")");
  return m;
}

/// A(M) = 2 mu M + lambda tr(M) I.
inline Mat2 apply_A(const Mat2& m, const MaterialParams& mat) {
  return 2.0 * mat.mu * m + mat.lambda * m.trace() * Mat2::Identity();
}

inline Mat2 sym(const Mat2& m) { return 0.5 * (m + m.transpose()); }

/// Double contraction M:N.
inline double ddot(const Mat2& m, const Mat2& n) { return (m.array() * n.array()).sum(); }

/// Weight matrix of a constant-coefficient form acting on the gradient vector
/// (d1 V1, d2 V1, d1 V2, d2 V2).
using GradientWeights = Eigen::Matrix4d;

/// Weights of eps(U):eps(W).
inline GradientWeights strain_weights() {
  GradientWeights q = GradientWeights::Zero();
  q(0, 0) = 1.0;
  q(3, 3) = 1.0;
  q(1, 1) = q(1, 2) = q(2, 1) = q(2, 2) = 0.5;
  return q;
}

/// Weights of A eps(U):eps(W).
inline GradientWeights elasticity_weights(const MaterialParams& mat) {
  const Eigen::Vector4d t(1, 0, 0, 1);
  return 2.0 * mat.mu * strain_weights() + mat.lambda * t * t.transpose();
}

/// Maps local nb x 2 physical gradients to the 4 x 2nb gradient-vector operator.
inline Eigen::MatrixXd gradient_operator(const Eigen::MatrixXd& grads) {
  const auto nb = grads.rows();
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(4, 2 * nb);
  for (Eigen::Index a = 0; a < nb; ++a) {
    b(0, 2 * a) = grads(a, 0);
    b(1, 2 * a) = grads(a, 1);
    b(2, 2 * a + 1) = grads(a, 0);
    b(3, 2 * a + 1) = grads(a, 1);
  }
  return b;
}

/// Symmetric matrix of  int grad(V)^T Q grad(W) + rho V.W  over all DOFs (no constraints applied).
inline SparseMatrix assemble_gradient_form(const FeSpace& space, const GradientWeights& q, double rho) {
  const auto& mesh = space.mesh();
  const int k = space.order();
  const auto& rule = triangle_rule(2 * k);
  const Tabulation tab(space.basis(), rule.x);
  const int nb = space.local_size();
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(mesh.num_triangles()) * 4 * nb * nb);
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto geo = element_geometry(mesh, t);
    Eigen::MatrixXd ke = Eigen::MatrixXd::Zero(2 * nb, 2 * nb);
    for (std::size_t p = 0; p < rule.w.size(); ++p) {
      const double w = rule.w[p] * std::abs(geo.det);
      const Eigen::MatrixXd b = gradient_operator(geo.physical(tab.dphi[p]));
      ke.noalias() += w * b.transpose() * q * b;
      if (rho != 0.0)
        for (int a = 0; a < nb; ++a)
          for (int c = 0; c < nb; ++c) {
            const double m = rho * w * tab.phi(static_cast<Eigen::Index>(p), a) * tab.phi(static_cast<Eigen::Index>(p), c);
            ke(2 * a, 2 * c) += m;
            ke(2 * a + 1, 2 * c + 1) += m;
          }
    }
    const auto nodes = space.element_nodes(t);
    for (int i = 0; i < 2 * nb; ++i) {
      const int gi = 2 * nodes[i / 2] + i % 2;
      for (int j = i; j < 2 * nb; ++j) {
        const int gj = 2 * nodes[j / 2] + j % 2;
        trip.emplace_back(gi, gj, ke(i, j));
        if (i != j) trip.emplace_back(gj, gi, ke(i, j));
      }
    }
  }
  SparseMatrix m(space.num_dofs(), space.num_dofs());
  m.setFromTriplets(trip.begin(), trip.end());
  return m;
}

/// Matrix of  int A eps(u):eps(phi)  over all DOFs (constraints are applied by the solver).
inline SparseMatrix assemble_elasticity(const FeSpace& space, const MaterialParams& mat) {
  return assemble_gradient_form(space, elasticity_weights(mat), 0.0);
}

/// Volume force f, traction g on edges tagged `neumann_tag`, and optional Jacobians.
struct Loads {
  VectorFn f;   ///< empty means f = 0
  VectorFn g;   ///< empty means g = 0
  MatrixFn df;  ///< empty means df = 0
  MatrixFn dg;  ///< empty means dg = 0
  BoundaryTag neumann_tag = BoundaryTag::Neumann;

  static Loads constant_traction(const Vec2& g) {
    Loads l;
    if (g.squaredNorm() > 0.0) l.g = [g](const Vec2&) { return g; };
    return l;
  }
};

/// Reference coordinates of parameter s in [0,1] along local edge e.
inline Vec2 edge_reference_point(int e, double s) {
  static const std::array<Vec2, 3> corner{Vec2(0, 0), Vec2(1, 0), Vec2(0, 1)};
  return (1.0 - s) * corner[e] + s * corner[(e + 1) % 3];
}

/// Indices of boundary edges carrying `tag`.
inline std::vector<int> boundary_edges_with_tag(const TriMesh& mesh, BoundaryTag tag) {
  std::vector<int> r;
  for (int i = 0; i < static_cast<int>(mesh.boundary_edges().size()); ++i)
    if (mesh.boundary_edges()[i].tag == tag) r.push_back(i);
  return r;
}

/// Load vector  int f.phi + int_{Gamma_N} g.phi  over all DOFs.
inline Eigen::VectorXd assemble_load(const FeSpace& space, const Loads& loads) {
  const auto& mesh = space.mesh();
  const int k = space.order();
  const int nb = space.local_size();
  Eigen::VectorXd b = Eigen::VectorXd::Zero(space.num_dofs());
  if (loads.f) {
    const auto& rule = triangle_rule(2 * k + 2);
    const Tabulation tab(space.basis(), rule.x);
    for (int t = 0; t < mesh.num_triangles(); ++t) {
      const auto geo = element_geometry(mesh, t);
      const auto nodes = space.element_nodes(t);
      for (std::size_t p = 0; p < rule.w.size(); ++p) {
        const double w = rule.w[p] * std::abs(geo.det);
        const Vec2 f = loads.f(geo.map(rule.x[p]));
        for (int a = 0; a < nb; ++a) {
          const double phi = tab.phi(static_cast<Eigen::Index>(p), a);
          b[2 * nodes[a]] += w * phi * f.x();
          b[2 * nodes[a] + 1] += w * phi * f.y();
        }
      }
    }
  }
  if (loads.g) {
    const auto edges = boundary_edges_with_tag(mesh, loads.neumann_tag);
    if (edges.empty())
      throw ConfigError("traction given but no boundary edge carries tag " +
                        std::string(to_string(loads.neumann_tag)));
    const LineRule line = line_rule(k + 2);
    for (int bi : edges) {
      const auto [t, e] = mesh.boundary_edge_owner(bi);
      const auto geo = element_geometry(mesh, t);
      const auto& be = mesh.boundary_edges()[bi];
      const double len = (mesh.vertex(be.b) - mesh.vertex(be.a)).norm();
      const auto nodes = space.element_nodes(t);
      for (std::size_t p = 0; p < line.w.size(); ++p) {
        const Vec2 xi = edge_reference_point(e, line.x[p]);
        const Vec2 g = loads.g(geo.map(xi));
        const Eigen::VectorXd phi = space.basis().values(xi);
        for (int a = 0; a < nb; ++a) {
          b[2 * nodes[a]] += line.w[p] * len * phi[a] * g.x();
          b[2 * nodes[a] + 1] += line.w[p] * len * phi[a] * g.y();
        }
      }
    }
  }
  return b;
}

/// Solver for a symmetric positive definite form with constrained DOFs eliminated.
///
/// Uses a sparse LDL^T factorization; when that fails or leaves a residual
/// above `tol`, conjugate gradients with relative tolerance 1e-12 take over.
/// A final relative residual above max(tol, 1e-8) raises SolverError.
class ConstrainedSolver {
 public:
  ConstrainedSolver(const SparseMatrix& full, const std::vector<char>& constrained, double tol = 1e-10)
      : full_(full), constrained_(constrained), tol_(tol), accept_tol_(std::max(tol, 1e-8)) {
    const auto n = full.rows();
    reduced_of_.assign(static_cast<std::size_t>(n), -1);
    for (Eigen::Index i = 0; i < n; ++i)
      if (!constrained_[i]) {
        reduced_of_[i] = static_cast<int>(free_.size());
        free_.push_back(static_cast<int>(i));
      }
    if (free_.size() == static_cast<std::size_t>(n))
      throw SolverError("operator has no constrained degrees of freedom; it is singular up to rigid motions");
    const auto nf = static_cast<Eigen::Index>(free_.size());
    std::vector<Eigen::Triplet<double>> trip;
    for (Eigen::Index c = 0; c < full.outerSize(); ++c)
      for (SparseMatrix::InnerIterator it(full, c); it; ++it) {
        const int r = reduced_of_[it.row()], s = reduced_of_[it.col()];
        if (r >= 0 && s >= 0) trip.emplace_back(r, s, it.value());
      }
    reduced_.resize(nf, nf);
    reduced_.setFromTriplets(trip.begin(), trip.end());
    if (nf > 0) {
      ldlt_.compute(reduced_);
      direct_ok_ = ldlt_.info() == Eigen::Success && ldlt_.vectorD().minCoeff() > 0.0;
    }
  }

  const SparseMatrix& matrix() const { return full_; }
  const std::vector<char>& constrained() const { return constrained_; }
  double last_residual() const { return last_residual_; }

  /// Solves K x = b on free DOFs; constrained entries take `prescribed` (zero if empty).
  Eigen::VectorXd solve(const Eigen::VectorXd& rhs, const Eigen::VectorXd& prescribed = {}) const {
    const auto n = full_.rows();
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd b = rhs;
    if (prescribed.size() == n) {
      for (Eigen::Index i = 0; i < n; ++i)
        if (constrained_[i]) x[i] = prescribed[i];
      b -= full_ * x;
    }
    const auto nf = static_cast<Eigen::Index>(free_.size());
    Eigen::VectorXd bf(nf);
    for (Eigen::Index i = 0; i < nf; ++i) bf[i] = b[free_[i]];
    const double bnorm = bf.norm();
    Eigen::VectorXd xf = Eigen::VectorXd::Zero(nf);
    last_residual_ = 0.0;
    if (bnorm > 0.0) {
      if (direct_ok_) {
        xf = ldlt_.solve(bf);
        for (int it = 0; it < 2 && residual(xf, bf) > tol_; ++it) xf += ldlt_.solve(bf - reduced_ * xf);
      }
      if (!direct_ok_ || !(residual(xf, bf) <= tol_)) {
        Eigen::ConjugateGradient<SparseMatrix, Eigen::Lower | Eigen::Upper> cg(reduced_);
        cg.setTolerance(1e-12);
        cg.setMaxIterations(std::max<Eigen::Index>(1000, 20 * nf));
        Eigen::VectorXd xc = cg.solveWithGuess(bf, direct_ok_ ? xf : Eigen::VectorXd::Zero(nf));
        if (!direct_ok_ || residual(xc, bf) < residual(xf, bf)) xf = std::move(xc);
      }
      last_residual_ = residual(xf, bf);
      if (!(last_residual_ <= accept_tol_)) {
        char msg[128];
        std::snprintf(msg, sizeof msg, "linear solve reached relative residual %.3e (limit %.3e)", last_residual_,
                      accept_tol_);
        throw SolverError(msg);
      }
    }
    for (Eigen::Index i = 0; i < nf; ++i) x[free_[i]] = xf[i];
    return x;
  }

 private:
  double residual(const Eigen::VectorXd& xf, const Eigen::VectorXd& bf) const {
    return (reduced_ * xf - bf).norm() / bf.norm();
  }

  SparseMatrix full_;
  std::vector<char> constrained_;
  double tol_;
  double accept_tol_;
  std::vector<int> free_;
  std::vector<int> reduced_of_;
  SparseMatrix reduced_;
  Eigen::SimplicialLDLT<SparseMatrix> ldlt_;
  bool direct_ok_ = false;
  mutable double last_residual_ = 0.0;
};

/// State-space operator and its factorization; reused by the adjoint solves.
struct ElasticSystem {
  std::shared_ptr<const FeSpace> space;
  MaterialParams mat;
  std::shared_ptr<const ConstrainedSolver> solver;

  ElasticSystem(std::shared_ptr<const FeSpace> s, const MaterialParams& m)
      : space(std::move(s)),
        mat(m),
        solver(std::make_shared<ConstrainedSolver>(assemble_elasticity(*space, mat), space->constrained_mask())) {}

  Field solve(const Eigen::VectorXd& rhs, const Eigen::VectorXd& prescribed = {}) const {
    return Field(space, solver->solve(rhs, prescribed));
  }
};

inline Field solve_state(const ElasticSystem& sys, const Loads& loads) {
  return sys.solve(assemble_load(*sys.space, loads));
}

/// Displacement for the given loads with homogeneous Dirichlet data.
inline Field solve_state(std::shared_ptr<const TriMesh> mesh, const MaterialParams& mat, int order,
                         const Loads& loads) {
  if (boundary_edges_with_tag(*mesh, BoundaryTag::Dirichlet).empty())
    throw ConfigError("state problem needs at least one DIRICHLET edge");
  const ElasticSystem sys(state_space(std::move(mesh), order), mat);
  return solve_state(sys, loads);
}

/// Discrete L2 norm of (field - exact) with a degree 2k+4 rule.
inline double l2_error(const Field& u, const VectorFn& exact) {
  const auto& space = *u.space;
  const auto& mesh = space.mesh();
  const auto& rule = triangle_rule(2 * space.order() + 4);
  const Tabulation tab(space.basis(), rule.x);
  double s = 0.0;
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto geo = element_geometry(mesh, t);
    const Eigen::MatrixXd c = u.local(t);
    for (std::size_t p = 0; p < rule.w.size(); ++p) {
      const Vec2 uh = c.transpose() * tab.phi.row(static_cast<Eigen::Index>(p)).transpose();
      s += rule.w[p] * std::abs(geo.det) * (uh - exact(geo.map(rule.x[p]))).squaredNorm();
    }
  }
  return std::sqrt(s);
}

/// Symmetric energy  int A eps(u):eps(v).
inline double energy(const Field& u, const Field& v, const MaterialParams& mat) {
  const auto k = assemble_elasticity(*u.space, mat);
  return u.coeffs.dot(k * v.coeffs);
}

}  // namespace shapeopt
