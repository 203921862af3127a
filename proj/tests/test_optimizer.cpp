#include "test_util.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace shapeopt;
using namespace shapeopt::testing;

namespace {

ProblemConfig small_bridge(CostMode mode, int iterations) {
  ProblemConfig c = builtin_problem("bridge");
  c.h = 1.0;
  c.order = 1;
  c.mode = mode;
  c.iterations = iterations;
  c.snapshot_every = 5;
  return c;
}

std::string history(const RunResult& r) {
  std::ostringstream os;
  write_history_csv(os, r);
  return os.str();
}

void expect_well_formed(const RunResult& r) {
  for (std::size_t i = 0; i < r.records.size(); ++i) EXPECT_EQ(r.records[i].iter, static_cast<int>(i));
  for (const auto& e : r.remeshes) EXPECT_NEAR(e.area_after, e.area_before, 1e-12 * e.area_before);
  // A cost-increase remesh never directly follows a remesh.
  for (const auto& e : r.remeshes) {
    if (e.reason != "cost increase") continue;
    ASSERT_GE(e.iter, 0);
    if (e.iter > 0) {
      EXPECT_FALSE(r.records[static_cast<std::size_t>(e.iter - 1)].remeshed) << "iteration " << e.iter;
    }
    for (const auto& other : r.remeshes)
      if (&other != &e && other.iter == e.iter) ADD_FAILURE() << "two remeshes in iteration " << e.iter;
  }
  int flagged = 0;
  for (const auto& rec : r.records) flagged += rec.remeshed;
  std::vector<int> iters;
  for (const auto& e : r.remeshes) iters.push_back(e.iter);
  std::sort(iters.begin(), iters.end());
  iters.erase(std::unique(iters.begin(), iters.end()), iters.end());
  EXPECT_EQ(flagged, static_cast<int>(iters.size()));
}

}  // namespace

TEST(StepSize, Examples) {
  auto mesh = std::make_shared<const TriMesh>(structured_rectangle(0, 0, 10, 10, 2, 2));
  ASSERT_DOUBLE_EQ(mesh->min_edge_length(), 5.0);
  const auto space = make_space(mesh, 1, {});
  EXPECT_EQ(step_size(*mesh, Field(space)), 0.0);
  Field x(space);
  x.coeffs[8] = 0.6;  // vertex 4, |X| = 1
  x.coeffs[9] = -0.8;
  EXPECT_DOUBLE_EQ(step_size(*mesh, x, {0.3, std::numeric_limits<double>::infinity()}), 1.5);
  EXPECT_DOUBLE_EQ(step_size(*mesh, x, {0.6, std::numeric_limits<double>::infinity()}), 3.0);
  EXPECT_DOUBLE_EQ(step_size(*mesh, x, {0.3, 0.25}), 0.25);
}

TEST(Run, ZeroIterationsGiveOneRecord) {
  for (CostMode mode : {CostMode::MaxNorm, CostMode::PNorm}) {
    const RunResult r = run_optimization(small_bridge(mode, 0));
    ASSERT_EQ(r.records.size(), 1u);
    EXPECT_EQ(r.records[0].iter, 0);
    EXPECT_EQ(r.status, RunResult::Status::Completed);
    EXPECT_EQ(r.snapshots.count(0), 1u);
    EXPECT_GT(r.records[0].cost.max_sigma_sq, 0.0);
  }
}

TEST(Run, UnloadedBodyAtTargetVolumeIsStationary) {
  for (CostMode mode : {CostMode::MaxNorm, CostMode::PNorm}) {
    ProblemConfig c = small_bridge(mode, 10);
    c.traction = Vec2::Zero();
    c.volume_target = 19.0;
    const RunResult r = run_optimization(c);
    EXPECT_EQ(r.status, RunResult::Status::Stationary);
    ASSERT_EQ(r.records.size(), 1u);
    EXPECT_LE(r.records[0].stationarity, 1e-8);
  }
}

TEST(Run, UnloadedBodyFollowsVolumeFlow) {
  // Steps have fixed length, so the area approaches V monotonically and then
  // oscillates around it by at most one step.
  for (CostMode mode : {CostMode::MaxNorm, CostMode::PNorm}) {
    ProblemConfig c = small_bridge(mode, 25);
    c.traction = Vec2::Zero();
    c.c_step = 0.1;
    const RunResult r = run_optimization(c);
    expect_well_formed(r);
    const double v = c.volume_target;
    std::size_t first = r.records.size();
    for (std::size_t i = 0; i < r.records.size() && first == r.records.size(); ++i)
      if (r.records[i].cost.area <= v) first = i;
    ASSERT_LT(first, r.records.size());
    double max_change = 0.0;
    for (std::size_t i = 1; i < r.records.size(); ++i)
      max_change = std::max(max_change, std::abs(r.records[i].cost.area - r.records[i - 1].cost.area));
    for (std::size_t i = 1; i <= first; ++i) EXPECT_LT(r.records[i].cost.area, r.records[i - 1].cost.area);
    for (std::size_t i = first; i < r.records.size(); ++i)
      EXPECT_LE(std::abs(r.records[i].cost.area - v), max_change);
  }
}

TEST(Run, TinyStressWeightIsVolumeFlow) {
  ProblemConfig c = small_bridge(CostMode::PNorm, 20);
  c.gamma2 = 1e-12;
  c.normalize_stress_gradients = false;
  c.c_step = 0.1;
  const RunResult r = run_optimization(c);
  expect_well_formed(r);
  for (std::size_t i = 1; i < r.records.size(); ++i)
    if (r.records[i - 1].cost.area > c.volume_target) {
      EXPECT_LE(r.records[i].cost.area, r.records[i - 1].cost.area);
    }
  EXPECT_LT(r.records.back().cost.j_vol, 0.2 * r.records.front().cost.j_vol);
}

TEST(Run, LoadedRunsAreWellFormedAndDeterministic) {
  for (CostMode mode : {CostMode::MaxNorm, CostMode::PNorm}) {
    const ProblemConfig c = small_bridge(mode, 12);
    const RunResult a = run_optimization(c);
    const RunResult b = run_optimization(c);
    EXPECT_EQ(a.status, RunResult::Status::Completed);
    ASSERT_EQ(a.records.size(), 13u);
    expect_well_formed(a);
    EXPECT_EQ(history(a), history(b));
    EXPECT_EQ(a.snapshots.count(0) + a.snapshots.count(5) + a.snapshots.count(10) + a.snapshots.count(12), 4u);
    if (mode == CostMode::MaxNorm) {
      for (std::size_t i = 0; i + 1 < a.records.size(); ++i) EXPECT_GE(a.records[i].n_active, 1);
    }
    // Every accepted shape is a valid mesh (construction checks orientation).
    for (const auto& [iter, mesh] : a.snapshots)
      for (int t = 0; t < mesh.num_triangles(); ++t) EXPECT_GT(mesh.triangle_area(t), 0.0);
  }
}

TEST(Run, CallbackSeesEveryRecord) {
  int calls = 0;
  const RunResult r = run_optimization(small_bridge(CostMode::PNorm, 3), [&](const IterationRecord& rec) {
    EXPECT_EQ(rec.iter, calls);
    ++calls;
  });
  EXPECT_EQ(calls, static_cast<int>(r.records.size()));
}

TEST(Run, ModeWrappersSetTheMode) {
  ProblemConfig c = small_bridge(CostMode::PNorm, 0);
  EXPECT_EQ(run_max_norm(c).config.mode, CostMode::MaxNorm);
  c.mode = CostMode::MaxNorm;
  EXPECT_EQ(run_p_norm(c).config.mode, CostMode::PNorm);
}

TEST(Run, InvalidConfigIsRejected) {
  ProblemConfig c = small_bridge(CostMode::PNorm, 1);
  c.p = 1.0;
  EXPECT_THROW(run_optimization(c), ConfigError);
}
