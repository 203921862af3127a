#pragma once

#include "shapeopt/adjoint.hpp"

#include <bit>

namespace shapeopt {

/// Weights of  eps(V):eps(W) + (BV).(BW)  with B = [[-dx, dy], [dy, dx]].
inline GradientWeights riesz_weights() {
  const Eigen::Vector4d b1(-1, 0, 0, 1);
  const Eigen::Vector4d b2(0, 1, 1, 0);
  return strain_weights() + b1 * b1.transpose() + b2 * b2.transpose();
}

/// Riesz representative in H with its cached norm.
struct GradientField {
  Field field;
  double norm = 0.0;
};

/// Hilbert space H on the deformation space with inner product
///   <V, W>_H = int eps(V):eps(W) + (BV).(BW) + rho_low V.W.
class RieszOperator {
 public:
  RieszOperator(std::shared_ptr<const FeSpace> def_space, double rho_low)
      : space_(std::move(def_space)), rho_(rho_low) {
    if (!(rho_low > 0.0)) throw ConfigError("rho_low must be positive");
    gram_ = assemble_gradient_form(*space_, riesz_weights(), rho_low);
    solver_ = std::make_shared<ConstrainedSolver>(gram_, space_->constrained_mask());
  }

  const std::shared_ptr<const FeSpace>& space() const { return space_; }
  double rho_low() const { return rho_; }
  const SparseMatrix& matrix() const { return gram_; }

  double inner(const Field& a, const Field& b) const { return a.coeffs.dot(gram_ * b.coeffs); }

  /// Coefficients of the representative of a dual coefficient vector.
  Eigen::VectorXd solve(const Eigen::VectorXd& dual) const { return solver_->solve(dual); }

 private:
  std::shared_ptr<const FeSpace> space_;
  double rho_;
  SparseMatrix gram_;
  std::shared_ptr<const ConstrainedSolver> solver_;
};

inline GradientField make_gradient(const RieszOperator& h, Field f) {
  GradientField g{std::move(f), 0.0};
  g.norm = std::sqrt(std::max(h.inner(g.field, g.field), 0.0));
  return g;
}

/// Solves <grad, X>_H = dual(X) for all admissible X.
inline GradientField riesz_project(const RieszOperator& h, const DualVector& dual) {
  if (!dual.space->same_as(*h.space())) throw Error("riesz_project: dual vector lives on another space");
  return make_gradient(h, Field(h.space(), h.solve(dual.coeffs)));
}

/// a * x + b * y.
inline GradientField combine(const RieszOperator& h, double a, const GradientField& x, double b,
                             const GradientField& y) {
  return make_gradient(h, Field(x.field.space, a * x.field.coeffs + b * y.field.coeffs));
}

inline Eigen::MatrixXd gram_matrix(const RieszOperator& h, const std::vector<GradientField>& v) {
  const auto k = static_cast<Eigen::Index>(v.size());
  for (const auto& g : v)
    if (!g.field.space->same_as(*h.space())) throw Error("gram_matrix: gradients live on different spaces");
  Eigen::MatrixXd m(k, k);
  std::vector<Eigen::VectorXd> hv;
  for (const auto& g : v) hv.push_back(h.matrix() * g.field.coeffs);
  for (Eigen::Index i = 0; i < k; ++i)
    for (Eigen::Index j = i; j < k; ++j) m(i, j) = m(j, i) = v[i].field.coeffs.dot(hv[j]);
  return m;
}

/// Euclidean projection onto the probability simplex.
inline Eigen::VectorXd project_simplex(const Eigen::VectorXd& y) {
  Eigen::VectorXd s = y;
  std::sort(s.data(), s.data() + s.size(), std::greater<>());
  double cum = 0.0, theta = 0.0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    cum += s[i];
    const double t = (cum - 1.0) / static_cast<double>(i + 1);
    if (s[i] - t > 0.0) theta = t;
  }
  return (y.array() - theta).max(0.0).matrix();
}

/// Minimizer of a^T A a over the probability simplex.
///
/// For k <= 8 every support set is tried (exact KKT solve, smallest supports
/// first, then lexicographic) and the best feasible point is kept; strictly
/// better objectives are required to replace an earlier support. Larger k use
/// accelerated projected gradients.
inline Eigen::VectorXd min_norm_simplex(const Eigen::MatrixXd& a) {
  const auto k = a.rows();
  if (k < 1 || a.cols() != k) throw Error("min_norm_simplex: need a nonempty square matrix");
  if (k == 1) return Eigen::VectorXd::Ones(1);
  const Eigen::MatrixXd as = 0.5 * (a + a.transpose());
  const double scale = std::max(1.0, as.cwiseAbs().maxCoeff());
  if (k <= 8) {
    std::vector<unsigned> masks;
    for (unsigned m = 1; m < (1u << k); ++m) masks.push_back(m);
    std::stable_sort(masks.begin(), masks.end(), [](unsigned x, unsigned y) {
      const int px = std::popcount(x), py = std::popcount(y);
      if (px != py) return px < py;
      for (unsigned b = 1; b; b <<= 1)
        if ((x & b) != (y & b)) return (x & b) != 0;
      return false;
    });
    Eigen::VectorXd best;
    double best_obj = std::numeric_limits<double>::infinity();
    for (unsigned m : masks) {
      std::vector<Eigen::Index> idx;
      for (Eigen::Index i = 0; i < k; ++i)
        if (m & (1u << i)) idx.push_back(i);
      const auto n = static_cast<Eigen::Index>(idx.size());
      Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(n + 1, n + 1);
      for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) kkt(i, j) = 2.0 * as(idx[i], idx[j]);
        kkt(i, n) = kkt(n, i) = 1.0;
      }
      Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + 1);
      rhs[n] = 1.0;
      const Eigen::VectorXd sol = kkt.completeOrthogonalDecomposition().solve(rhs);
      if ((kkt * sol - rhs).norm() > 1e-9 * (1.0 + kkt.norm())) continue;
      Eigen::VectorXd alpha = Eigen::VectorXd::Zero(k);
      bool feasible = true;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (sol[i] < -1e-12) feasible = false;
        alpha[idx[i]] = std::max(sol[i], 0.0);
      }
      if (!feasible) continue;
      alpha /= alpha.sum();
      const double obj = alpha.dot(as * alpha);
      if (obj < best_obj - 1e-14 * scale) {
        best_obj = obj;
        best = alpha;
      }
    }
    if (best.size() == k) return best;
  }
  // accelerated projected gradient
  const double lip = 2.0 * std::max(as.eigenvalues().real().maxCoeff(), 1e-300);
  Eigen::VectorXd x = Eigen::VectorXd::Constant(k, 1.0 / static_cast<double>(k));
  Eigen::VectorXd y = x;
  double t = 1.0;
  for (int it = 0; it < 200000; ++it) {
    const Eigen::VectorXd xn = project_simplex(y - (2.0 / lip) * (as * y));
    const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    y = xn + ((t - 1.0) / tn) * (xn - x);
    const double step = (xn - x).norm();
    x = xn;
    t = tn;
    if (step < 1e-15) break;
  }
  return x;
}

/// Direction X = -Z / |Z|_H with Z = sum alpha_i v_i.
struct Direction {
  GradientField x;          ///< unit H-norm descent field (zero when stationary)
  Eigen::VectorXd weights;  ///< convex weights alpha
  double z_norm = 0.0;      ///< |Z|_H, the stationarity measure
  bool stationary = false;
};

inline double stationarity(const RieszOperator& h, const std::vector<GradientField>& v,
                           const Eigen::VectorXd& weights) {
  Eigen::VectorXd z = Eigen::VectorXd::Zero(h.space()->num_dofs());
  for (std::size_t i = 0; i < v.size(); ++i) z += weights[static_cast<Eigen::Index>(i)] * v[i].field.coeffs;
  return std::sqrt(std::max(z.dot(h.matrix() * z), 0.0));
}

inline Direction descent_direction(const RieszOperator& h, const std::vector<GradientField>& v,
                                   const Eigen::VectorXd& weights, double threshold) {
  if (v.empty() || static_cast<std::size_t>(weights.size()) != v.size())
    throw Error("descent_direction: weights do not match gradients");
  Eigen::VectorXd z = Eigen::VectorXd::Zero(h.space()->num_dofs());
  for (std::size_t i = 0; i < v.size(); ++i) z += weights[static_cast<Eigen::Index>(i)] * v[i].field.coeffs;
  Direction d;
  d.weights = weights;
  d.z_norm = std::sqrt(std::max(z.dot(h.matrix() * z), 0.0));
  if (d.z_norm <= threshold || d.z_norm == 0.0) {
    d.stationary = true;
    d.x = GradientField{Field(h.space()), 0.0};
    return d;
  }
  d.x = make_gradient(h, Field(h.space(), -z / d.z_norm));
  return d;
}

/// Gram matrix, simplex QP and normalized direction in one call.
inline Direction steepest_descent(const RieszOperator& h, const std::vector<GradientField>& v, double threshold) {
  return descent_direction(h, v, min_norm_simplex(gram_matrix(h, v)), threshold);
}

/// Threshold 1e-8 (1 + gamma1 |grad J_vol|_H) below which |Z|_H counts as zero.
inline double stationarity_threshold(double gamma1, double vol_grad_norm) {
  return 1e-8 * (1.0 + gamma1 * vol_grad_norm);
}

/// Gradient list for the max-norm problem: composites gamma1 gJ_vol + gamma2 gJ_sigma^{x_i},
/// switching to the volume gradient alone below the stress threshold and adding it
/// as an extra member inside the tolerance band around delta.
inline std::vector<GradientField> composite_gradients(const RieszOperator& h, double gamma1, double gamma2,
                                                      const GradientField& vol,
                                                      const std::vector<GradientField>& sigma, double max_sigma_sq,
                                                      double delta, double rel_tol) {
  const GradientField vol_only = make_gradient(h, Field(vol.field.space, gamma1 * vol.field.coeffs));
  if (delta > 0.0) {
    if (max_sigma_sq < delta - rel_tol * delta) return {vol_only};
  }
  std::vector<GradientField> out;
  for (const auto& s : sigma) out.push_back(combine(h, gamma1, vol, gamma2, s));
  if (delta > 0.0 && std::abs(max_sigma_sq - delta) <= rel_tol * delta) out.push_back(vol_only);
  if (out.empty()) out.push_back(vol_only);
  return out;
}

}  // namespace shapeopt
