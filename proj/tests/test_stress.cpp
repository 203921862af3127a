#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace shapeopt;
using namespace shapeopt::testing;

namespace {

StressSample at(double x, double y, double value) { return {0, Vec2(1.0 / 3, 1.0 / 3), Vec2(x, y), value}; }

/// Two-triangle mesh of diameter ~1.4 so merging only joins points closer than that.
const TriMesh& small_mesh() {
  static const TriMesh m = structured_rectangle(0, 0, 1, 1, 1, 1);
  return m;
}

}  // namespace

TEST(Tensors, ApplyAExamples) {
  const auto mat = steel_like();
  EXPECT_LE((apply_A(Mat2::Identity(), mat) - 1.9230769230769231 * Mat2::Identity()).norm(), 1e-14);
  Mat2 dev;
  dev << 0.3, 1.2, -0.4, -0.3;
  EXPECT_LE((apply_A(dev, mat) - 2.0 * mat.mu * dev).norm(), 1e-15);
  EXPECT_EQ(apply_A(Mat2::Zero(), mat).norm(), 0.0);
}

TEST(Tensors, ApplyBExamples) {
  const auto mat = steel_like();
  EXPECT_LE((apply_B(Mat2::Identity(), mat) - 1.9230769230769231 * Mat2::Identity()).norm(), 1e-14);
  const Mat2 m = Eigen::Vector2d(1.0, -1.0).asDiagonal();
  EXPECT_LE((apply_B(m, mat) - 6.0 * mat.mu * m).norm(), 1e-15);
  EXPECT_NEAR(ddot(apply_B(m, mat), m), 4.615384615384615, 1e-14);
  EXPECT_EQ(apply_B(Mat2::Zero(), mat).norm(), 0.0);
}

TEST(Tensors, BIsSelfAdjointAndLinear) {
  const auto mat = steel_like();
  std::mt19937 rng(5);
  for (int i = 0; i < 200; ++i) {
    const Mat2 m = random_matrix(rng), n = random_matrix(rng);
    EXPECT_NEAR(ddot(apply_B(m, mat), n), ddot(m, apply_B(n, mat)), 1e-14);
    EXPECT_LE((apply_B(2.0 * m - n, mat) - (2.0 * apply_B(m, mat) - apply_B(n, mat))).norm(), 1e-14);
  }
}

TEST(Tensors, WeightMatricesMatchTensors) {
  const auto mat = steel_like();
  std::mt19937 rng(9);
  for (int i = 0; i < 50; ++i) {
    const Mat2 a = random_matrix(rng), b = random_matrix(rng);
    const Eigen::Vector4d ga(a(0, 0), a(0, 1), a(1, 0), a(1, 1)), gb(b(0, 0), b(0, 1), b(1, 0), b(1, 1));
    EXPECT_NEAR(ga.dot(mises_weights(mat) * gb), ddot(apply_B(sym(a), mat), sym(b)), 1e-13);
    EXPECT_NEAR(ga.dot(elasticity_weights(mat) * gb), ddot(apply_A(sym(a), mat), sym(b)), 1e-13);
  }
}

TEST(Samples, ZeroAndRigidFieldsHaveZeroStress) {
  auto mesh = std::make_shared<const TriMesh>(generate_mesh(builtin_problem("bridge").geometry, 0.5));
  const auto mat = steel_like();
  for (int k = 1; k <= 3; ++k) {
    const auto space = make_space(mesh, k, {});
    for (const auto& s : von_mises_samples(Field(space), mat)) EXPECT_EQ(s.value, 0.0);
    const Field rot = interpolate(space, [](const Vec2& p) { return Vec2(-p.y(), p.x()); }, false);
    for (const auto& s : von_mises_samples(rot, mat)) EXPECT_LE(s.value, 1e-24);
  }
}

TEST(Samples, UniaxialStrainIsConstant) {
  auto mesh = std::make_shared<const TriMesh>(generate_mesh(unit_square_polygon(), 0.25));
  const auto mat = steel_like();
  const double expected = 4.0 * mat.mu + mat.lambda;
  EXPECT_NEAR(expected, 2.1153846153846154, 1e-14);
  for (int k = 1; k <= 3; ++k) {
    const Field u = interpolate(make_space(mesh, k, {}), [](const Vec2& p) { return Vec2(p.x(), 0.0); }, false);
    for (const auto& s : von_mises_samples(u, mat)) EXPECT_NEAR(s.value, expected, 1e-12);
  }
}

TEST(Samples, CoverEveryElementAtTheExpectedNodes) {
  auto mesh = std::make_shared<const TriMesh>(generate_mesh(builtin_problem("l_bracket").geometry, 10.0));
  for (int k = 1; k <= 3; ++k) {
    const Field u(make_space(mesh, k, {}));
    const auto samples = von_mises_samples(u, steel_like());
    const int m = default_sampling_degree(k);
    const std::size_t per = static_cast<std::size_t>((m + 1) * (m + 2) / 2 + 1);
    ASSERT_EQ(samples.size(), per * static_cast<std::size_t>(mesh->num_triangles()));
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const auto& s = samples[i];
      EXPECT_EQ(s.element, static_cast<int>(i / per));
      const auto& tr = mesh->triangle(s.element);
      const Eigen::Vector3d l =
          geom::barycentric(s.x, mesh->vertex(tr[0]), mesh->vertex(tr[1]), mesh->vertex(tr[2]));
      EXPECT_GE(l.minCoeff(), -1e-12);
    }
  }
  EXPECT_EQ(default_sampling_degree(1), 1);
  EXPECT_EQ(default_sampling_degree(2), 2);
  EXPECT_EQ(default_sampling_degree(3), 4);
}

TEST(Samples, NonNegativeForRandomFields) {
  auto mesh = std::make_shared<const TriMesh>(generate_mesh(unit_square_polygon(), 0.5));
  const auto mat = steel_like();
  std::mt19937 rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto space = make_space(mesh, 1 + trial % 3, {});
    const Field u(space, random_vector(space->num_dofs(), rng));
    for (const auto& s : von_mises_samples(u, mat)) ASSERT_GE(s.value, 0.0);
  }
}

TEST(ActiveSet, ExamplesFromThresholds) {
  const auto& mesh = small_mesh();
  const ActiveSet a = active_set({at(0, 0, 5), at(10, 0, 3), at(20, 0, 1)}, mesh, 1e-3);
  EXPECT_EQ(a.size(), 1);
  EXPECT_EQ(a.max_value, 5.0);
  const ActiveSet b = active_set({at(0, 0, 5), at(10, 0, 5 * (1 - 1e-4)), at(20, 0, 1)}, mesh, 1e-3);
  EXPECT_EQ(b.size(), 2);
}

TEST(ActiveSet, ConstantSamplesMergeToClusters) {
  const auto& mesh = small_mesh();
  StressSamples s;
  for (int i = 0; i < 5; ++i) s.push_back(at(0.1 * i, 0.0, 2.0));      // one cluster
  for (int i = 0; i < 5; ++i) s.push_back(at(50.0 + 0.1 * i, 0.0, 2.0));  // another
  const ActiveSet a = active_set(s, mesh, 1e-3);
  EXPECT_EQ(a.size(), 2);
  EXPECT_EQ(a.max_value, 2.0);
}

TEST(ActiveSet, MaxIsExactAndGrowsWithTolerance) {
  auto mesh = std::make_shared<const TriMesh>(generate_mesh(builtin_problem("l_bracket").geometry, 10.0));
  const ElasticSystem sys(state_space(mesh, 2), steel_like());
  const Field u = solve_state(sys, Loads::constant_traction({0.0, -3.0}));
  const auto samples = von_mises_samples(u, sys.mat);
  double true_max = 0.0;
  for (const auto& s : samples) true_max = std::max(true_max, s.value);
  int prev = 0;
  for (double tol : {0.0, 1e-3, 1e-2, 0.1, 0.3, 0.6}) {
    const ActiveSet a = active_set(samples, *mesh, tol);
    EXPECT_EQ(a.max_value, true_max);
    EXPECT_EQ(a.points.front().value, true_max);
    EXPECT_GE(a.size(), prev) << "tol " << tol;
    for (const auto& p : a.points) EXPECT_GE(p.value, (1.0 - tol) * true_max);
    prev = a.size();
  }
}

TEST(Cost, InitialLBracketVolumeTerm) {
  const auto cfg = builtin_problem("l_bracket");
  auto mesh = std::make_shared<const TriMesh>(generate_mesh(cfg.geometry, 10.0));
  const Field u(state_space(mesh, 1));
  const CostBreakdown c = cost(*mesh, u, cfg.material(), cfg.cost_config());
  EXPECT_NEAR(c.j_vol, 3686400.0, 1e-6);
  EXPECT_NEAR(cfg.gamma1 * c.j_vol, 368.64, 1e-9);
}

TEST(Cost, ZeroDisplacement) {
  auto mesh = cantilever_mesh(4);
  CostConfig cc;
  cc.p = 6.0;
  const CostBreakdown c = cost(*mesh, Field(state_space(mesh, 2)), steel_like(), cc);
  EXPECT_EQ(c.j_sigma_max, 0.0);
  EXPECT_EQ(c.j_p, 0.0);
}

TEST(Cost, TwoNormSquaredIsBEnergy) {
  auto mesh = std::make_shared<const TriMesh>(generate_mesh(builtin_problem("l_bracket").geometry, 10.0));
  const auto mat = steel_like();
  for (int k = 1; k <= 3; ++k) {
    const auto space = state_space(mesh, k);
    const Field u = solve_state(ElasticSystem(space, mat), Loads::constant_traction({0.0, -3.0}));
    CostConfig cc;
    cc.p = 2.0;
    const double jp = cost(*mesh, u, mat, cc).j_p;
    const SparseMatrix bmat = assemble_gradient_form(*space, mises_weights(mat), 0.0);
    const double direct = u.coeffs.dot(bmat * u.coeffs);
    EXPECT_NEAR(jp * jp, direct, 1e-10 * direct) << "order " << k;
  }
}

TEST(Cost, PNormBoundedByScaledMax) {
  auto mesh = std::make_shared<const TriMesh>(generate_mesh(unit_square_polygon(), 0.25));
  const auto mat = steel_like();
  std::mt19937 rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    const int k = 1 + trial % 3;
    const double p = trial % 2 ? 6.0 : 2.0;
    const auto space = make_space(mesh, k, {});
    const Field u(space, random_vector(space->num_dofs(), rng));
    // The maximum of sigma^2 over each element, bounded by dense sampling.
    double max_sq = 0.0;
    for (const auto& s : von_mises_samples(u, mat, 12)) max_sq = std::max(max_sq, s.value);
    const double jp = std::pow(pnorm_integral(u, mat, p), 1.0 / p);
    EXPECT_LE(jp, std::pow(mesh->area(), 1.0 / p) * std::sqrt(max_sq) * (1.0 + 1e-12));
  }
}

TEST(Cost, TotalCombinesTerms) {
  const auto cfg = builtin_problem("bridge");
  auto mesh = std::make_shared<const TriMesh>(generate_mesh(cfg.geometry, 0.5));
  const auto mat = cfg.material();
  const Field u = solve_state(ElasticSystem(state_space(mesh, 2), mat), cfg.loads());
  for (CostMode mode : {CostMode::MaxNorm, CostMode::PNorm}) {
    CostConfig cc = cfg.cost_config();
    cc.mode = mode;
    cc.delta = 0.01;
    const CostBreakdown c = cost(*mesh, u, mat, cc);
    EXPECT_GE(c.j_vol, 0.0);
    EXPECT_GE(c.j_sigma_max, 0.0);
    EXPECT_GE(c.j_p, 0.0);
    EXPECT_EQ(c.j_sigma_max, std::max(c.max_sigma_sq - 0.01, 0.0));
    EXPECT_DOUBLE_EQ(c.total, cc.gamma1 * c.j_vol + cc.gamma2 * (mode == CostMode::MaxNorm ? c.j_sigma_max : c.j_p));
  }
}
