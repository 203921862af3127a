#include "test_util.hpp"

#include <gtest/gtest.h>

#include <map>

using namespace shapeopt;
using namespace shapeopt::testing;

namespace {

struct Setup {
  std::shared_ptr<const TriMesh> mesh = cantilever_mesh(6);
  std::shared_ptr<const FeSpace> space = deformation_space(mesh, 2);
  RieszOperator h{space, 0.5};
};

const Setup& setup() {
  static const Setup s;
  return s;
}

GradientField random_gradient(const RieszOperator& h, std::mt19937& rng) {
  return make_gradient(h, random_field(h.space(), rng));
}

double grid_minimum(const Eigen::MatrixXd& a) {
  const int k = static_cast<int>(a.rows());
  double best = std::numeric_limits<double>::infinity();
  const int n = 100;
  for (int i = 0; i <= n; ++i)
    for (int j = 0; j <= (k >= 2 ? n - i : 0); ++j) {
      if (k == 1 && i != n) continue;
      if (k == 2 && i + j != n) continue;
      Eigen::VectorXd x(k);
      x[0] = i / double(n);
      if (k >= 2) x[1] = j / double(n);
      if (k == 3) x[2] = (n - i - j) / double(n);
      best = std::min(best, x.dot(a * x));
    }
  return best;
}

}  // namespace

TEST(Riesz, ZeroAndScaledDuals) {
  const auto& s = setup();
  EXPECT_EQ(riesz_project(s.h, DualVector(s.space)).field.coeffs.norm(), 0.0);
  std::mt19937 rng(2);
  DualVector d(s.space);
  d.coeffs = random_vector(s.space->num_dofs(), rng);
  d.apply_constraints();
  DualVector d3 = d;
  d3.coeffs *= 3.0;
  const auto g = riesz_project(s.h, d), g3 = riesz_project(s.h, d3);
  EXPECT_LE((g3.field.coeffs - 3.0 * g.field.coeffs).norm(), 1e-12 * g3.field.coeffs.norm());
}

TEST(Riesz, RieszIdentity) {
  const auto& s = setup();
  std::mt19937 rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    DualVector d(s.space);
    d.coeffs = random_vector(s.space->num_dofs(), rng);
    d.apply_constraints();
    const GradientField g = riesz_project(s.h, d);
    EXPECT_NEAR(g.norm * g.norm, d.pair(g.field), 1e-10 * g.norm * g.norm);
    for (int i = 0; i < s.space->num_dofs(); ++i)
      if (s.space->constrained(i)) {
        EXPECT_EQ(g.field.coeffs[i], 0.0);
      }
  }
}

TEST(Riesz, MirrorSymmetry) {
  // Criss-cross square, clamped left and right, is symmetric about x = 1/2.
  auto mesh = std::make_shared<const TriMesh>(structured_rectangle(
      0, 0, 1, 1, 4, 4,
      [](const Vec2& m) { return m.x() < 1e-12 || m.x() > 1 - 1e-12 ? BoundaryTag::Dirichlet : BoundaryTag::Free; },
      true));
  const auto space = deformation_space(mesh, 2);
  const RieszOperator h(space, 0.1);
  std::map<std::pair<long, long>, int> node_at;
  auto key = [](const Vec2& p) { return std::make_pair(std::lround(p.x() * 1e6), std::lround(p.y() * 1e6)); };
  for (int n = 0; n < space->num_nodes(); ++n) node_at[key(space->node(n))] = n;
  std::vector<int> mirror(static_cast<std::size_t>(space->num_nodes()));
  for (int n = 0; n < space->num_nodes(); ++n) {
    const Vec2 p = space->node(n);
    mirror[static_cast<std::size_t>(n)] = node_at.at(key(Vec2(1.0 - p.x(), p.y())));
  }
  std::mt19937 rng(8);
  DualVector d(space), dm(space);
  d.coeffs = random_vector(space->num_dofs(), rng);
  d.apply_constraints();
  for (int n = 0; n < space->num_nodes(); ++n) {
    const int m = mirror[static_cast<std::size_t>(n)];
    dm.coeffs[2 * m] = -d.coeffs[2 * n];
    dm.coeffs[2 * m + 1] = d.coeffs[2 * n + 1];
  }
  const auto g = riesz_project(h, d), gm = riesz_project(h, dm);
  for (int n = 0; n < space->num_nodes(); ++n) {
    const int m = mirror[static_cast<std::size_t>(n)];
    EXPECT_NEAR(gm.field.coeffs[2 * m], -g.field.coeffs[2 * n], 1e-10 * g.norm);
    EXPECT_NEAR(gm.field.coeffs[2 * m + 1], g.field.coeffs[2 * n + 1], 1e-10 * g.norm);
  }
}

TEST(Riesz, RejectsNonPositiveRho) {
  EXPECT_THROW(RieszOperator(setup().space, 0.0), ConfigError);
}

TEST(Gram, Examples) {
  const auto& s = setup();
  std::mt19937 rng(6);
  const GradientField v = random_gradient(s.h, rng);
  const Eigen::MatrixXd one = gram_matrix(s.h, {v});
  EXPECT_NEAR(one(0, 0), v.norm * v.norm, 1e-12 * v.norm * v.norm);
  const Eigen::MatrixXd twin = gram_matrix(s.h, {v, v});
  EXPECT_LE((twin - v.norm * v.norm * Eigen::Matrix2d::Ones()).norm(), 1e-12 * v.norm * v.norm);

  // H-orthogonal pair with norms 1 and 2.
  GradientField a = random_gradient(s.h, rng), b = random_gradient(s.h, rng);
  a = make_gradient(s.h, Field(s.space, a.field.coeffs / a.norm));
  b = make_gradient(s.h, Field(s.space, b.field.coeffs - s.h.inner(a.field, b.field) * a.field.coeffs));
  b = make_gradient(s.h, Field(s.space, 2.0 * b.field.coeffs / b.norm));
  const Eigen::MatrixXd g = gram_matrix(s.h, {a, b});
  EXPECT_NEAR(g(0, 0), 1.0, 1e-12);
  EXPECT_NEAR(g(1, 1), 4.0, 1e-12);
  EXPECT_NEAR(g(0, 1), 0.0, 1e-12);
  EXPECT_EQ(g(0, 1), g(1, 0));
}

TEST(Gram, MixedSpacesAreRejected) {
  const auto& s = setup();
  const RieszOperator other(deformation_space(s.mesh, 1), 0.5);
  std::mt19937 rng(1);
  EXPECT_THROW(gram_matrix(s.h, {random_gradient(s.h, rng), random_gradient(other, rng)}), Error);
}

TEST(Simplex, Examples) {
  EXPECT_EQ(min_norm_simplex(Eigen::MatrixXd::Constant(1, 1, 3.0))[0], 1.0);
  const Eigen::VectorXd a = min_norm_simplex(Eigen::Matrix2d::Identity());
  EXPECT_NEAR(a[0], 0.5, 1e-12);
  EXPECT_NEAR(a[1], 0.5, 1e-12);
  const Eigen::MatrixXd d = Eigen::Vector2d(1.0, 4.0).asDiagonal();
  const Eigen::VectorXd b = min_norm_simplex(d);
  EXPECT_NEAR(b[0], 0.8, 1e-12);
  EXPECT_NEAR(b[1], 0.2, 1e-12);
  EXPECT_NEAR(b.dot(d * b), 0.8, 1e-12);
}

TEST(Simplex, MatchesGridSearch) {
  std::mt19937 rng(12);
  for (int trial = 0; trial < 30; ++trial) {
    const int k = 1 + trial % 3;
    Eigen::MatrixXd g(k, k + 1);
    for (int i = 0; i < k; ++i) g.row(i) = random_vector(k + 1, rng).transpose();
    const Eigen::MatrixXd a = g * g.transpose();
    const Eigen::VectorXd x = min_norm_simplex(a);
    EXPECT_GE(x.minCoeff(), 0.0);
    EXPECT_NEAR(x.sum(), 1.0, 1e-12);
    EXPECT_LE(x.dot(a * x), grid_minimum(a) + 1e-6);
  }
}

TEST(Simplex, IsDeterministicUnderTies) {
  const Eigen::MatrixXd a = Eigen::MatrixXd::Ones(3, 3);
  const Eigen::VectorXd x = min_norm_simplex(a);
  EXPECT_EQ(x, min_norm_simplex(a));
  EXPECT_EQ(x[0], 1.0);  // lowest-index support wins
}

TEST(Direction, SingleGradientIsNormalized) {
  const auto& s = setup();
  std::mt19937 rng(10);
  GradientField v = random_gradient(s.h, rng);
  v = make_gradient(s.h, Field(s.space, 2.0 * v.field.coeffs / v.norm));
  const Direction d = descent_direction(s.h, {v}, Eigen::VectorXd::Ones(1), 1e-12);
  EXPECT_FALSE(d.stationary);
  EXPECT_NEAR(d.z_norm, 2.0, 1e-12);
  EXPECT_LE((d.x.field.coeffs + 0.5 * v.field.coeffs).norm(), 1e-12 * v.field.coeffs.norm());
  EXPECT_NEAR(d.x.norm, 1.0, 1e-12);
  EXPECT_NEAR(stationarity(s.h, {v}, Eigen::VectorXd::Ones(1)), 2.0, 1e-12);
}

TEST(Direction, ZeroAndAntipodalAreStationary) {
  const auto& s = setup();
  const Direction z = descent_direction(s.h, {GradientField{Field(s.space), 0.0}}, Eigen::VectorXd::Ones(1), 1e-12);
  EXPECT_TRUE(z.stationary);
  EXPECT_EQ(z.x.field.coeffs.norm(), 0.0);
  std::mt19937 rng(14);
  const GradientField v = random_gradient(s.h, rng);
  const GradientField w = make_gradient(s.h, Field(s.space, -v.field.coeffs));
  const Eigen::VectorXd alpha = min_norm_simplex(gram_matrix(s.h, {v, w}));
  EXPECT_LE(alpha.dot(gram_matrix(s.h, {v, w}) * alpha), 1e-12 * v.norm * v.norm);
  const Direction d = steepest_descent(s.h, {v, w}, 1e-8 * v.norm);
  EXPECT_TRUE(d.stationary);
  EXPECT_LE(d.z_norm, 1e-8 * v.norm);
}

TEST(Direction, DiagonalGramStationarity) {
  const auto& s = setup();
  std::mt19937 rng(15);
  GradientField a = random_gradient(s.h, rng), b = random_gradient(s.h, rng);
  a = make_gradient(s.h, Field(s.space, a.field.coeffs / a.norm));
  b = make_gradient(s.h, Field(s.space, b.field.coeffs - s.h.inner(a.field, b.field) * a.field.coeffs));
  b = make_gradient(s.h, Field(s.space, 2.0 * b.field.coeffs / b.norm));
  const Direction d = steepest_descent(s.h, {a, b}, 1e-12);
  EXPECT_NEAR(d.z_norm, std::sqrt(0.8), 1e-10);
}

TEST(Direction, StrictDescentAgainstEveryGradient) {
  const auto& s = setup();
  std::mt19937 rng(16);
  for (int trial = 0; trial < 20; ++trial) {
    const int k = 1 + trial % 4;
    const GradientField common = random_gradient(s.h, rng);
    std::vector<GradientField> v;
    double max_sq = 0.0;
    for (int i = 0; i < k; ++i) {
      const GradientField r = random_gradient(s.h, rng);
      v.push_back(make_gradient(s.h, Field(s.space, 2.0 * common.field.coeffs + r.field.coeffs)));
      max_sq = std::max(max_sq, v.back().norm * v.back().norm);
    }
    const Direction d = steepest_descent(s.h, v, 1e-12);
    ASSERT_FALSE(d.stationary);
    for (const auto& g : v) EXPECT_LT(s.h.inner(g.field, d.x.field), -1e-12 * max_sq);
  }
}

TEST(Direction, PositiveScalingLeavesDirectionUnchanged) {
  const auto& s = setup();
  std::mt19937 rng(18);
  std::vector<GradientField> v, w;
  for (int i = 0; i < 3; ++i) {
    v.push_back(random_gradient(s.h, rng));
    w.push_back(make_gradient(s.h, Field(s.space, 7.5 * v.back().field.coeffs)));
  }
  const Direction a = steepest_descent(s.h, v, 1e-12), b = steepest_descent(s.h, w, 1e-12);
  EXPECT_LE((a.x.field.coeffs - b.x.field.coeffs).norm(), 1e-12 * a.x.field.coeffs.norm());
}

TEST(Composite, ThresholdCases) {
  const auto& s = setup();
  std::mt19937 rng(20);
  const GradientField vol = random_gradient(s.h, rng);
  const std::vector<GradientField> sigma{random_gradient(s.h, rng), random_gradient(s.h, rng)};
  const double g1 = 0.1, g2 = 2.0;
  // delta = 0: composites only.
  auto list = composite_gradients(s.h, g1, g2, vol, sigma, 5.0, 0.0, 1e-3);
  ASSERT_EQ(list.size(), 2u);
  EXPECT_LE((list[1].field.coeffs - (g1 * vol.field.coeffs + g2 * sigma[1].field.coeffs)).norm(), 1e-14);
  // below the threshold: volume only.
  list = composite_gradients(s.h, g1, g2, vol, sigma, 4.0, 5.0, 1e-3);
  ASSERT_EQ(list.size(), 1u);
  EXPECT_LE((list[0].field.coeffs - g1 * vol.field.coeffs).norm(), 1e-14);
  // inside the tolerance band: composites plus the volume gradient.
  list = composite_gradients(s.h, g1, g2, vol, sigma, 5.0 * (1 + 1e-4), 5.0, 1e-3);
  EXPECT_EQ(list.size(), 3u);
  // above the band: composites.
  list = composite_gradients(s.h, g1, g2, vol, sigma, 6.0, 5.0, 1e-3);
  EXPECT_EQ(list.size(), 2u);
}

TEST(Composite, StationarityThresholdScales) {
  EXPECT_DOUBLE_EQ(stationarity_threshold(1e-4, 0.0), 1e-8);
  EXPECT_DOUBLE_EQ(stationarity_threshold(1e-2, 100.0), 2e-8);
}
