#pragma once

#include "shapeopt/descent.hpp"
#include "shapeopt/problem.hpp"

#include <map>

namespace shapeopt {

struct StepRule {
  double c_step = 0.3;
  double max_step = std::numeric_limits<double>::infinity();
};

/// s = min(max_step, c_step h_min / max_v |X(v)|) with h_min the shortest mesh edge.
inline double step_size(const TriMesh& mesh, const Field& x, const StepRule& rule = {}) {
  double peak = 0.0;
  for (int v = 0; v < mesh.num_vertices(); ++v) peak = std::max(peak, x.vertex_value(v).norm());
  if (peak == 0.0) return 0.0;
  return std::min(rule.max_step, rule.c_step * mesh.min_edge_length() / peak);
}

/// State, stress samples and cost of one shape.
struct Evaluation {
  std::shared_ptr<const TriMesh> mesh;
  std::shared_ptr<const ElasticSystem> system;
  Field u;
  StressSamples samples;
  CostBreakdown cost;
};

inline Evaluation evaluate(std::shared_ptr<const TriMesh> mesh, const ProblemConfig& cfg, const MaterialParams& mat) {
  Evaluation ev;
  ev.mesh = mesh;
  ev.system = std::make_shared<const ElasticSystem>(state_space(mesh, cfg.order), mat);
  ev.u = solve_state(*ev.system, cfg.loads());
  ev.samples = von_mises_samples(ev.u, mat, cfg.sampling_degree);
  ev.cost = cost(*mesh, ev.u, mat, cfg.cost_config(), &ev.samples);
  return ev;
}

struct DirectionInfo {
  Direction direction;
  int n_active = 0;
  double vol_grad_norm = 0.0;
};

/// Steepest descent direction for the configured mode at an evaluated shape.
inline DirectionInfo compute_direction(const Evaluation& ev, const ProblemConfig& cfg, const MaterialParams& mat) {
  const auto def = deformation_space(ev.mesh, cfg.deformation_order);
  const RieszOperator h(def, cfg.rho_low);
  const Loads loads = cfg.loads();
  const GradientField vol = riesz_project(h, dj_vol(def, cfg.volume_target));
  const double threshold = stationarity_threshold(cfg.gamma1, vol.norm);
  DirectionInfo out;
  out.vol_grad_norm = vol.norm;
  auto scaled = [&](GradientField g) {
    if (cfg.normalize_stress_gradients && g.norm > 0.0) {
      g.field.coeffs /= g.norm;
      g.norm = 1.0;
    }
    return g;
  };
  std::vector<GradientField> list;
  if (cfg.mode == CostMode::MaxNorm) {
    const ActiveSet active = active_set(ev.samples, *ev.mesh, cfg.rel_tol);
    std::vector<GradientField> sigma;
    for (const auto& pt : active.points) {
      const AdjointField q = solve_adjoint_pointwise(*ev.system, ev.u, pt.x, cfg.radius);
      sigma.push_back(scaled(riesz_project(h, dj_sigma_point(def, mat, ev.u, q, pt.element, pt.xi, loads))));
    }
    list = composite_gradients(h, cfg.gamma1, cfg.gamma2, vol, sigma, active.max_value, cfg.delta, cfg.rel_tol);
    out.n_active = active.size();
  } else {
    if (pnorm_integral(ev.u, mat, cfg.p) > 0.0) {
      const AdjointField q = solve_adjoint_pnorm(*ev.system, ev.u, cfg.p);
      const GradientField gp = scaled(riesz_project(h, dj_p(def, mat, ev.u, q, loads)));
      list.push_back(combine(h, cfg.gamma1, vol, cfg.gamma2, gp));
    } else {
      list.push_back(make_gradient(h, Field(def, cfg.gamma1 * vol.field.coeffs)));
    }
    out.n_active = 0;
  }
  out.direction = list.size() == 1 ? descent_direction(h, list, Eigen::VectorXd::Ones(1), threshold)
                                   : steepest_descent(h, list, threshold);
  return out;
}

struct IterationRecord {
  int iter = 0;
  CostBreakdown cost;
  double stationarity = 0.0;
  double step = 0.0;
  bool remeshed = false;
  int n_active = 0;
  double min_quality = 0.0;
  int num_triangles = 0;
};

struct RemeshEvent {
  int iter = 0;
  std::string reason;
  double area_before = 0.0;
  double area_after = 0.0;
};

struct RunResult {
  enum class Status { Completed, Stationary, Aborted };
  ProblemConfig config;
  std::vector<IterationRecord> records;
  std::vector<RemeshEvent> remeshes;
  std::map<int, TriMesh> snapshots;
  std::shared_ptr<const TriMesh> final_mesh;
  Field final_u;
  Status status = Status::Completed;
  std::string message;
};

inline std::string_view to_string(RunResult::Status s) {
  switch (s) {
    case RunResult::Status::Completed: return "completed";
    case RunResult::Status::Stationary: return "stationary";
    case RunResult::Status::Aborted: return "aborted";
  }
  return "?";
}

using IterationCallback = std::function<void(const IterationRecord&)>;

/// Moving-mesh descent loop shared by both modes.
///
/// Each iteration: quality check and remesh, state and cost, direction,
/// step with inversion halving, then the trial shape is accepted unless it
/// raises the cost while no remesh happened in this or the previous
/// iteration, in which case the mesh is regenerated instead. The last
/// iteration N_max only evaluates.
inline RunResult run_optimization(const ProblemConfig& cfg, const IterationCallback& on_iteration = {}) {
  cfg.validate();
  const MaterialParams mat = cfg.material();
  RunResult res;
  res.config = cfg;
  auto mesh = std::make_shared<const TriMesh>(generate_mesh(cfg.geometry, cfg.h));
  std::optional<Evaluation> cached;
  bool remeshed_last = false;
  const StepRule rule{cfg.c_step, cfg.max_step};
  auto do_remesh = [&](int iter, const char* reason) {
    const double before = mesh->area();
    mesh = std::make_shared<const TriMesh>(remesh(*mesh));
    res.remeshes.push_back({iter, reason, before, mesh->area()});
    cached.reset();
  };
  for (int n = 0; n <= cfg.iterations; ++n) {
    IterationRecord rec;
    rec.iter = n;
    bool remeshed_now = false;
    try {
      if (mesh_quality(*mesh).min_ratio < cfg.remesh_quality) {
        do_remesh(n, "quality");
        remeshed_now = true;
      }
      Evaluation ev = cached ? std::move(*cached) : evaluate(mesh, cfg, mat);
      cached.reset();
      rec.cost = ev.cost;
      rec.min_quality = mesh_quality(*mesh).min_ratio;
      rec.num_triangles = mesh->num_triangles();
      res.final_mesh = mesh;
      res.final_u = ev.u;
      const bool last = n == cfg.iterations;
      if ((cfg.snapshot_every > 0 && n % cfg.snapshot_every == 0) || last) res.snapshots.insert_or_assign(n, *mesh);
      if (last) {
        rec.remeshed = remeshed_now;
        res.records.push_back(rec);
        if (on_iteration) on_iteration(rec);
        break;
      }
      const DirectionInfo info = compute_direction(ev, cfg, mat);
      rec.stationarity = info.direction.z_norm;
      rec.n_active = info.n_active;
      if (info.direction.stationary) {
        rec.remeshed = remeshed_now;
        res.records.push_back(rec);
        res.snapshots.insert_or_assign(n, *mesh);
        res.status = RunResult::Status::Stationary;
        if (on_iteration) on_iteration(rec);
        break;
      }
      double s = step_size(*mesh, info.direction.x.field, rule);
      std::optional<TriMesh> trial;
      for (int k = 0; k <= cfg.max_halvings; ++k, s *= 0.5) {
        trial = deform_mesh(*mesh, info.direction.x.field, s);
        if (trial && boundary_is_simple(*trial)) break;  // parts of the boundary may cross without inverting
        trial.reset();
      }
      if (!trial) {
        do_remesh(n, "inversion");
        remeshed_now = true;
      } else {
        auto trial_mesh = std::make_shared<const TriMesh>(std::move(*trial));
        Evaluation tev = evaluate(trial_mesh, cfg, mat);
        if (tev.cost.total > ev.cost.total && !remeshed_last && !remeshed_now) {
          do_remesh(n, "cost increase");
          remeshed_now = true;
        } else {
          mesh = trial_mesh;
          cached = std::move(tev);
          rec.step = s;
        }
      }
    } catch (const GeometryError& e) {
      rec.remeshed = remeshed_now;
      res.records.push_back(rec);
      res.status = RunResult::Status::Aborted;
      res.message = e.what();
      if (on_iteration) on_iteration(rec);
      return res;
    }
    rec.remeshed = remeshed_now;
    res.records.push_back(rec);
    if (on_iteration) on_iteration(rec);
    remeshed_last = remeshed_now;
  }
  return res;
}

inline RunResult run_max_norm(ProblemConfig cfg, const IterationCallback& cb = {}) {
  cfg.mode = CostMode::MaxNorm;
  return run_optimization(cfg, cb);
}

inline RunResult run_p_norm(ProblemConfig cfg, const IterationCallback& cb = {}) {
  cfg.mode = CostMode::PNorm;
  return run_optimization(cfg, cb);
}

}  // namespace shapeopt
