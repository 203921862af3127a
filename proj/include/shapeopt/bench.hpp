#pragma once

// Finite-difference derivative oracle, common-mesh peak stress comparison,
// telemetry export and run archives.

#include "shapeopt/mesh_io.hpp"
#include "shapeopt/optimizer.hpp"

#include <filesystem>
#include <random>
#include <set>

namespace shapeopt {

enum class Functional { Vol, PNorm, MaxNorm };

inline std::string_view to_string(Functional f) {
  switch (f) {
    case Functional::Vol: return "VOL";
    case Functional::PNorm: return "PNORM";
    case Functional::MaxNorm: return "MAXNORM";
  }
  return "?";
}

inline Functional parse_functional(std::string_view s) {
  if (s == "VOL" || s == "vol") return Functional::Vol;
  if (s == "PNORM" || s == "pnorm") return Functional::PNorm;
  if (s == "MAXNORM" || s == "maxnorm") return Functional::MaxNorm;
  throw ConfigError("unknown functional '" + std::string(s) + "'; valid: VOL, PNORM, MAXNORM");
}

/// Smooth seeded vertex field vanishing on Dirichlet and Neumann vertices.
///
/// Sum of low Fourier modes cos/sin(pi (i s_x + j s_y)), i, j in 0..2, over
/// bounding-box coordinates s, with uniform coefficients in [-1, 1] damped by
/// 1 / (1 + i^2 + j^2).
inline std::vector<Vec2> random_admissible_field(const TriMesh& mesh, unsigned seed) {
  const auto fixed = mesh.vertices_with_tags({BoundaryTag::Dirichlet, BoundaryTag::Neumann});
  Vec2 lo = mesh.vertex(0), hi = mesh.vertex(0);
  for (const auto& v : mesh.vertices()) {
    lo = lo.cwiseMin(v);
    hi = hi.cwiseMax(v);
  }
  const Vec2 ext = (hi - lo).cwiseMax(Vec2::Constant(1e-300));
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> coef(-1.0, 1.0);
  struct Mode {
    int i, j;
    double a[4];
  };
  std::vector<Mode> modes;
  for (int i = 0; i <= 2; ++i)
    for (int j = 0; j <= 2; ++j) {
      Mode m{i, j, {}};
      for (double& a : m.a) a = coef(rng);
      modes.push_back(m);
    }
  std::vector<Vec2> out(static_cast<std::size_t>(mesh.num_vertices()), Vec2::Zero());
  for (int v = 0; v < mesh.num_vertices(); ++v) {
    if (fixed[static_cast<std::size_t>(v)]) continue;
    const Vec2 s = (mesh.vertex(v) - lo).cwiseQuotient(ext);
    Vec2 x = Vec2::Zero();
    for (const auto& m : modes) {
      const double arg = M_PI * (m.i * s.x() + m.j * s.y());
      const double c = std::cos(arg), sn = std::sin(arg);
      x += Vec2(m.a[0] * c + m.a[1] * sn, m.a[2] * c + m.a[3] * sn) / (1.0 + m.i * m.i + m.j * m.j);
    }
    out[static_cast<std::size_t>(v)] = x;
  }
  return out;
}

struct FdRow {
  double t = 0.0;
  double forward = 0.0;    ///< (J(t) - J(0)) / t
  double central = 0.0;    ///< (J(t) - J(-t)) / 2t
  double analytic = 0.0;   ///< assembled derivative paired with X
  double abs_error = 0.0;  ///< |central - analytic|
  double rel_error = 0.0;  ///< abs_error / |analytic| (abs_error when analytic is 0)
  double migration = 0.0;  ///< MAXNORM: distance from the transported point to the maximizer on the moved mesh
};

struct FdReport {
  Functional functional = Functional::Vol;
  unsigned seed = 0;
  std::vector<FdRow> rows;       ///< strictly decreasing t
  std::vector<double> dropped;   ///< t values skipped because a triangle inverted
  double slope = std::numeric_limits<double>::quiet_NaN();

  /// Row with the smallest relative error.
  const FdRow& best() const {
    if (rows.empty()) throw Error("fd report has no rows");
    return *std::min_element(rows.begin(), rows.end(),
                             [](const FdRow& a, const FdRow& b) { return a.rel_error < b.rel_error; });
  }
};

/// Log-log slope of error against t over the leading truncation-dominated
/// rows: a row counts while its error falls at least linearly in t relative
/// to the previous row. NaN when fewer than three such rows exist.
inline double fd_slope(const std::vector<FdRow>& rows) {
  auto local = [&](std::size_t i) {
    return std::log(rows[i - 1].abs_error / rows[i].abs_error) / std::log(rows[i - 1].t / rows[i].t);
  };
  std::size_t n = 0;
  while (n < rows.size() && rows[n].abs_error > 0.0 && (n == 0 || local(n) >= 1.0)) ++n;
  if (n < 3) return std::numeric_limits<double>::quiet_NaN();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = std::log(rows[i].t), y = std::log(rows[i].abs_error);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double m = static_cast<double>(n);
  return (m * sxy - sx * sy) / (m * sxx - sx * sx);
}

namespace detail {

inline std::vector<double> sorted_steps(std::vector<double> t_list) {
  for (double t : t_list)
    if (!(t > 0.0) || !std::isfinite(t)) throw ConfigError("fd step sizes must be positive and finite");
  std::sort(t_list.begin(), t_list.end(), std::greater<>());
  t_list.erase(std::unique(t_list.begin(), t_list.end()), t_list.end());
  if (t_list.empty()) throw ConfigError("fd step list is empty");
  return t_list;
}

}  // namespace detail

/// Compares the assembled shape derivative with finite differences along a
/// seeded admissible vertex field on the initial mesh of `cfg`.
///
/// MAXNORM differentiates sigma_M^2 at the material point of the discrete
/// maximizer, using the ball adjoint of radius cfg.radius.
inline FdReport fd_check(const ProblemConfig& cfg, Functional functional, unsigned seed,
                         std::vector<double> t_list) {
  cfg.validate();
  t_list = detail::sorted_steps(std::move(t_list));
  const MaterialParams mat = cfg.material();
  const Loads loads = cfg.loads();
  auto mesh = std::make_shared<const TriMesh>(generate_mesh(cfg.geometry, cfg.h));
  const auto xv = random_admissible_field(*mesh, seed);
  const auto def = deformation_space(mesh, cfg.deformation_order);
  const Field x = embed_vertex_field(def, xv);

  const ElasticSystem sys(state_space(mesh, cfg.order), mat);
  const Field u = solve_state(sys, loads);
  ActivePoint peak;
  double analytic = 0.0;
  switch (functional) {
    case Functional::Vol:
      analytic = dj_vol(def, cfg.volume_target).pair(x);
      break;
    case Functional::PNorm:
      analytic = dj_p(def, mat, u, solve_adjoint_pnorm(sys, u, cfg.p), loads).pair(x);
      break;
    case Functional::MaxNorm: {
      peak = active_set(von_mises_samples(u, mat, cfg.sampling_degree), *mesh, cfg.rel_tol).points.front();
      const AdjointField q = solve_adjoint_pointwise(sys, u, peak.x, cfg.radius);
      analytic = dj_sigma_point(def, mat, u, q, peak.element, peak.xi, loads).pair(x);
      break;
    }
  }

  struct Value {
    double j = 0.0;
    double migration = 0.0;
  };
  auto value_at = [&](double t) -> std::optional<Value> {
    auto moved = deform_vertices(*mesh, xv, t);
    if (!moved) return std::nullopt;
    auto m = std::make_shared<const TriMesh>(std::move(*moved));
    if (functional == Functional::Vol) {
      const double d = m->area() - cfg.volume_target;
      return Value{d * d, 0.0};
    }
    const ElasticSystem s(state_space(m, cfg.order), mat);
    const Field ut = solve_state(s, loads);
    if (functional == Functional::PNorm) return Value{std::pow(pnorm_integral(ut, mat, cfg.p), 1.0 / cfg.p), 0.0};
    const auto samples = von_mises_samples(ut, mat, cfg.sampling_degree);
    const auto top = std::max_element(samples.begin(), samples.end(),
                                      [](const StressSample& a, const StressSample& b) { return a.value < b.value; });
    const Vec2 moved_point = element_geometry(*m, peak.element).map(peak.xi);
    return Value{mises_sq(ut.gradient_in(peak.element, peak.xi), mat), (top->x - moved_point).norm()};
  };

  FdReport rep;
  rep.functional = functional;
  rep.seed = seed;
  const auto j0 = value_at(0.0);
  for (double t : t_list) {
    const auto jp = value_at(t);
    const auto jm = value_at(-t);
    if (!jp || !jm) {
      rep.dropped.push_back(t);
      continue;
    }
    FdRow row;
    row.t = t;
    row.forward = (jp->j - j0->j) / t;
    row.central = (jp->j - jm->j) / (2.0 * t);
    row.analytic = analytic;
    row.abs_error = std::abs(row.central - analytic);
    row.rel_error = analytic != 0.0 ? row.abs_error / std::abs(analytic) : row.abs_error;
    row.migration = jp->migration;
    rep.rows.push_back(row);
  }
  rep.slope = fd_slope(rep.rows);
  return rep;
}

inline void write_fd_report(std::ostream& out, const FdReport& rep) {
  using detail::format_double;
  out << "t,forward,central,analytic,abs_error,rel_error";
  if (rep.functional == Functional::MaxNorm) out << ",migration";
  out << "\n";
  for (const auto& r : rep.rows) {
    out << format_double(r.t) << "," << format_double(r.forward) << "," << format_double(r.central) << ","
        << format_double(r.analytic) << "," << format_double(r.abs_error) << "," << format_double(r.rel_error);
    if (rep.functional == Functional::MaxNorm) out << "," << format_double(r.migration);
    out << "\n";
  }
}

/// Peak sigma_M^2 of the shape bounded by `boundary`, meshed afresh at size h.
inline double common_mesh_peak(const TaggedPolygon& boundary, const ProblemConfig& cfg, double h,
                               int* num_triangles = nullptr) {
  auto mesh = std::make_shared<const TriMesh>(generate_mesh(boundary, h));
  if (num_triangles) *num_triangles = mesh->num_triangles();
  const MaterialParams mat = cfg.material();
  const ElasticSystem sys(state_space(mesh, cfg.order), mat);
  const Field u = solve_state(sys, cfg.loads());
  double peak = 0.0;
  for (const auto& s : von_mises_samples(u, mat, cfg.sampling_degree)) peak = std::max(peak, s.value);
  return peak;
}

struct ComparisonRow {
  int checkpoint = 0;
  double h_min = 0.0;
  double peak_a = 0.0;
  double peak_b = 0.0;
  int triangles_a = 0;
  int triangles_b = 0;
};

struct ComparisonTable {
  std::vector<ComparisonRow> rows;  ///< ascending checkpoints
  std::vector<std::string> warnings;
};

/// Regenerates both runs' snapshot shapes at a common meshsize and tabulates
/// the peak sigma_M^2. h_min is the smallest element diameter of the two
/// snapshots at each checkpoint, or over all checkpoints when `uniform_h`.
inline ComparisonTable compare_runs(const RunResult& a, const RunResult& b, std::vector<int> checkpoints,
                                    bool uniform_h = false) {
  std::sort(checkpoints.begin(), checkpoints.end());
  checkpoints.erase(std::unique(checkpoints.begin(), checkpoints.end()), checkpoints.end());
  ComparisonTable table;
  std::vector<int> kept;
  for (int c : checkpoints) {
    const bool ha = a.snapshots.count(c) != 0, hb = b.snapshots.count(c) != 0;
    if (ha && hb)
      kept.push_back(c);
    else
      table.warnings.push_back("checkpoint " + std::to_string(c) + " skipped: snapshot missing in run " +
                               (ha ? "b" : hb ? "a" : "a and b"));
  }
  auto h_at = [&](int c) {
    return std::min(a.snapshots.at(c).min_element_size(), b.snapshots.at(c).min_element_size());
  };
  double h_all = std::numeric_limits<double>::infinity();
  for (int c : kept) h_all = std::min(h_all, h_at(c));
  for (int c : kept) {
    ComparisonRow row;
    row.checkpoint = c;
    row.h_min = uniform_h ? h_all : h_at(c);
    row.peak_a = common_mesh_peak(boundary_polygon(a.snapshots.at(c)), a.config, row.h_min, &row.triangles_a);
    row.peak_b = common_mesh_peak(boundary_polygon(b.snapshots.at(c)), b.config, row.h_min, &row.triangles_b);
    table.rows.push_back(row);
  }
  return table;
}

inline void write_comparison(std::ostream& out, const ComparisonTable& table) {
  using detail::format_double;
  out << "checkpoint,h_min,peak_a,peak_b,triangles_a,triangles_b\n";
  for (const auto& r : table.rows)
    out << r.checkpoint << "," << format_double(r.h_min) << "," << format_double(r.peak_a) << ","
        << format_double(r.peak_b) << "," << r.triangles_a << "," << r.triangles_b << "\n";
}

/// Telemetry, one row per iteration.
inline void write_history_csv(std::ostream& out, const RunResult& result) {
  using detail::format_double;
  out << "iter,j_vol,j_sigma_max,j_p,total,stationarity,step,remeshed,n_active,max_sigma_sq\n";
  for (const auto& r : result.records)
    out << r.iter << "," << format_double(r.cost.j_vol) << "," << format_double(r.cost.j_sigma_max) << ","
        << format_double(r.cost.j_p) << "," << format_double(r.cost.total) << "," << format_double(r.stationarity)
        << "," << format_double(r.step) << "," << (r.remeshed ? 1 : 0) << "," << r.n_active << ","
        << format_double(r.cost.max_sigma_sq) << "\n";
}

/// Log-scale line chart of the weighted volume cost, the stress cost and the total.
inline void write_cost_svg(std::ostream& out, const RunResult& result) {
  using detail::format_double;
  const auto& cfg = result.config;
  struct Series {
    const char* name;
    const char* color;
    std::vector<std::pair<double, double>> pts;
  };
  std::vector<Series> series{{"volume cost", "#1f77b4", {}}, {"stress cost", "#d62728", {}}, {"total", "#2ca02c", {}}};
  for (const auto& r : result.records) {
    const double stress = cfg.mode == CostMode::MaxNorm ? r.cost.j_sigma_max : r.cost.j_p;
    const double vals[3] = {cfg.gamma1 * r.cost.j_vol, cfg.gamma2 * stress, r.cost.total};
    for (int i = 0; i < 3; ++i)
      if (vals[i] > 0.0 && std::isfinite(vals[i])) series[i].pts.emplace_back(r.iter, std::log10(vals[i]));
  }
  double x0 = 0, x1 = 1, y0 = std::numeric_limits<double>::infinity(), y1 = -y0;
  if (!result.records.empty()) x1 = std::max(1.0, static_cast<double>(result.records.back().iter));
  for (const auto& s : series)
    for (const auto& [x, y] : s.pts) {
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  if (!(y0 <= y1)) y0 = 0, y1 = 1;
  y0 = std::floor(y0);
  y1 = std::max(std::ceil(y1), y0 + 1);
  const double w = 640, h = 400, ml = 60, mr = 20, mt = 20, mb = 40;
  auto px = [&](double x) { return ml + (x - x0) / (x1 - x0) * (w - ml - mr); };
  auto py = [&](double y) { return h - mb - (y - y0) / (y1 - y0) * (h - mt - mb); };
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<g stroke=\"#ccc\" font-family=\"sans-serif\" font-size=\"11\">\n";
  for (int e = static_cast<int>(y0); e <= static_cast<int>(y1); ++e)
    out << "<line x1=\"" << ml << "\" x2=\"" << w - mr << "\" y1=\"" << py(e) << "\" y2=\"" << py(e)
        << "\"/><text x=\"" << ml - 6 << "\" y=\"" << py(e) + 4 << "\" text-anchor=\"end\" stroke=\"none\">1e" << e
        << "</text>\n";
  out << "<text x=\"" << (ml + w - mr) / 2 << "\" y=\"" << h - 8
      << "\" text-anchor=\"middle\" stroke=\"none\">iteration</text>\n</g>\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    out << "<polyline fill=\"none\" stroke=\"" << series[i].color << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& [x, y] : series[i].pts) out << format_double(px(x)) << "," << format_double(py(y)) << " ";
    out << "\"/>\n";
    out << "<text x=\"" << w - mr - 100 << "\" y=\"" << mt + 14 * (i + 1) << "\" fill=\"" << series[i].color
        << "\" font-family=\"sans-serif\" font-size=\"12\">" << series[i].name << "</text>\n";
  }
  out << "</svg>\n";
}

namespace detail {

inline void ensure_directory(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir))
    throw Error("cannot create directory " + dir.string() + (ec ? ": " + ec.message() : ""));
}

template <class Writer>
void write_file(const std::filesystem::path& path, Writer&& writer) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  writer(out);
  if (!out) throw Error("write failed for " + path.string());
}

inline std::string snapshot_name(int iter) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "mesh_%05d.msh", iter);
  return buf;
}

}  // namespace detail

/// Writes history.csv and cost.svg into out_dir.
inline void export_plots(const RunResult& result, const std::filesystem::path& out_dir) {
  if (result.records.empty()) throw Error("export_plots: result has no iterations");
  detail::ensure_directory(out_dir);
  detail::write_file(out_dir / "history.csv", [&](std::ostream& o) { write_history_csv(o, result); });
  detail::write_file(out_dir / "cost.svg", [&](std::ostream& o) { write_cost_svg(o, result); });
}

/// Full run archive: plots, config.cfg, remeshes.csv, summary.txt and
/// snapshots/mesh_NNNNN.msh.
inline void save_run(const RunResult& result, const std::filesystem::path& out_dir) {
  export_plots(result, out_dir);
  save_config(result.config, (out_dir / "config.cfg").string());
  detail::write_file(out_dir / "remeshes.csv", [&](std::ostream& o) {
    o << "iter,reason,area_before,area_after\n";
    for (const auto& e : result.remeshes)
      o << e.iter << "," << e.reason << "," << detail::format_double(e.area_before) << ","
        << detail::format_double(e.area_after) << "\n";
  });
  detail::write_file(out_dir / "summary.txt", [&](std::ostream& o) {
    o << "status " << to_string(result.status) << "\n";
    o << "iterations " << result.records.size() << "\n";
    o << "remeshes " << result.remeshes.size() << "\n";
    if (!result.records.empty()) {
      const auto& last = result.records.back().cost;
      o << "area " << detail::format_double(last.area) << "\n";
      o << "max_sigma_sq " << detail::format_double(last.max_sigma_sq) << "\n";
      o << "total " << detail::format_double(last.total) << "\n";
    }
    if (!result.message.empty()) o << "message " << result.message << "\n";
  });
  const auto snap_dir = out_dir / "snapshots";
  detail::ensure_directory(snap_dir);
  for (const auto& [iter, mesh] : result.snapshots) save_mesh((snap_dir / detail::snapshot_name(iter)).string(), mesh);
}

/// Config and snapshots of a saved run; records are not restored.
inline RunResult load_run(const std::filesystem::path& dir) {
  RunResult r;
  r.config = load_config((dir / "config.cfg").string());
  const auto snap_dir = dir / "snapshots";
  if (!std::filesystem::is_directory(snap_dir)) throw ConfigError("no snapshots directory in " + dir.string());
  for (const auto& entry : std::filesystem::directory_iterator(snap_dir)) {
    const std::string name = entry.path().filename().string();
    int iter = 0;
    if (std::sscanf(name.c_str(), "mesh_%d.msh", &iter) != 1) continue;
    r.snapshots.emplace(iter, load_mesh(entry.path().string()));
  }
  if (!r.snapshots.empty()) r.final_mesh = std::make_shared<const TriMesh>(r.snapshots.rbegin()->second);
  return r;
}

}  // namespace shapeopt
