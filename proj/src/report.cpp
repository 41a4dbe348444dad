#include <certignc/report.h>

#include <algorithm>
#include <sstream>

namespace certignc {

using nlohmann::json;

OutlierScores score_outliers(const std::vector<std::size_t> &classified,
                             const std::vector<std::size_t> &injected) {
  std::vector<std::size_t> a = classified, b = injected;
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::vector<std::size_t> common;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(),
                        std::back_inserter(common));
  OutlierScores s;
  s.true_positives = common.size();
  s.false_positives = a.size() - common.size();
  s.false_negatives = b.size() - common.size();
  if (!a.empty())
    s.precision = static_cast<double>(common.size()) / a.size();
  if (!b.empty())
    s.recall = static_cast<double>(common.size()) / b.size();
  return s;
}

namespace {

json vec(const Vector &v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i)
    out.push_back(v(i));
  return out;
}

json mat(const Matrix &m) {
  json out = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      row.push_back(m(r, c));
    out.push_back(std::move(row));
  }
  return out;
}

json edge_json(const MeasurementEdge &e) {
  json j;
  j["class"] = to_string(e.cls);
  if (e.is_relative_pose()) {
    const auto &m = e.relative_pose();
    j["i"] = m.i;
    j["j"] = m.j;
    j["R"] = mat(m.R);
    j["t"] = vec(m.t);
  } else {
    const auto &m = e.pose_landmark();
    j["pose"] = m.pose;
    j["landmark"] = m.landmark;
    j["l"] = vec(m.l);
  }
  return j;
}

json optional_number(const std::optional<double> &v) {
  return v ? json(*v) : json(nullptr);
}

} // namespace

json to_json(const InjectionReport &report) {
  json j;
  j["rate"] = report.rate;
  j["seed"] = report.seed;
  j["eligible"] = report.eligible;
  j["replaced"] = report.replaced;
  json edges = json::array();
  for (const auto &e : report.edges)
    edges.push_back({{"edge_index", e.edge_index},
                     {"original", edge_json(e.original)},
                     {"corrupted", edge_json(e.corrupted)}});
  j["edges"] = std::move(edges);
  return j;
}

InjectionReport injection_report_from_json(const json &j) {
  InjectionReport r;
  r.rate = j.at("rate").get<double>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.eligible = j.at("eligible").get<std::size_t>();
  r.replaced = j.at("replaced").get<std::vector<std::size_t>>();
  return r;
}

json to_json(const AteResult &ate) {
  return {{"translation_rmse", ate.translation_rmse},
          {"rotation_rmse_deg", ate.rotation_rmse_deg},
          {"R_align", mat(ate.R_align)},
          {"t_align", vec(ate.t_align)}};
}

std::string trace_csv(const GncTrace &trace, bool timings) {
  std::ostringstream os;
  os << "iter,mu,weighted_cost,robust_cost,rank,gap,certified,ms\n";
  for (const auto &r : trace) {
    os << r.iteration << ',' << (r.mu ? format_double(*r.mu) : "") << ','
       << format_double(r.weighted_cost) << ',' << format_double(r.robust_cost)
       << ',' << r.rank << ',' << (r.gap ? format_double(*r.gap) : "") << ','
       << (r.certified ? "true" : "false") << ','
       << (timings ? format_double(r.ms) : "") << '\n';
  }
  return os.str();
}

json trace_json(const GncTrace &trace, bool timings) {
  json rows = json::array();
  for (const auto &r : trace) {
    rows.push_back({{"iter", r.iteration},
                    {"mu", optional_number(r.mu)},
                    {"weighted_cost", r.weighted_cost},
                    {"robust_cost", r.robust_cost},
                    {"rank", r.rank},
                    {"gap", optional_number(r.gap)},
                    {"gap_absolute", r.gap ? json(r.gap_absolute) : json(nullptr)},
                    {"certified", r.certified},
                    {"ms", timings ? json(r.ms) : json(nullptr)}});
  }
  return rows;
}

json config_json(const PipelineConfig &cfg, const Problem &problem,
                 const std::vector<double> &cbar) {
  json c;
  c["mode"] = to_string(cfg.mode);
  c["init"] = to_string(cfg.gnc.init);
  c["seed"] = cfg.seed;
  c["seeds"] = {{"initialization", derive_seed(cfg.seed, 2)},
                {"eigensolver", derive_seed(cfg.seed, 3)}};
  c["cbar"] = cfg.gnc.cbar ? json(*cfg.gnc.cbar) : json(nullptr);
  c["cbar_quantile"] = cfg.gnc.cbar_quantile;
  json per_class = json::object();
  const auto robust = problem.robust_edge_indices();
  for (std::size_t k = 0; k < robust.size() && k < cbar.size(); ++k)
    per_class[to_string(problem.edges[robust[k]].cls)] = cbar[k];
  c["cbar_resolved"] = per_class;
  c["gamma"] = cfg.gnc.gamma;
  c["mu_min"] = cfg.gnc.mu_min;
  c["eps"] = cfg.gnc.eps;
  c["c_tol_outer"] = cfg.gnc.c_tol_outer;
  c["c_tol_inner"] = cfg.gnc.c_tol_inner;
  c["max_outer"] = cfg.gnc.max_outer;
  c["p0"] = cfg.staircase.p0 == 0 ? problem.d : cfg.staircase.p0;
  c["p_max"] = cfg.staircase.p_max;
  c["eta"] = cfg.staircase.eta_absolute ? json(*cfg.staircase.eta_absolute)
                                        : json(nullptr);
  c["eta_relative"] = cfg.staircase.eta_relative;
  c["solver"] = {{"max_iterations", cfg.solver.max_iterations},
                 {"gradient_norm_tol", cfg.solver.gradient_norm_tol
                                            ? json(*cfg.solver.gradient_norm_tol)
                                            : json(nullptr)},
                 {"relative_cost_tol", cfg.solver.relative_cost_tol},
                 {"absolute_cost_tol", cfg.solver.absolute_cost_tol}};
  return c;
}

json run_report(const RunReportInput &in) {
  json j;
  j["schema_version"] = kReportSchemaVersion;
  j["config"] = in.config;

  const Problem &p = *in.problem;
  std::size_t counts[3] = {0, 0, 0};
  for (const auto &e : p.edges)
    ++counts[static_cast<int>(e.cls)];
  j["problem"] = {{"source", p.source},
                  {"d", p.d},
                  {"poses", p.poses.size()},
                  {"landmarks", p.landmarks.size()},
                  {"edges", p.edges.size()},
                  {"odometry_edges", counts[0]},
                  {"loop_closure_edges", counts[1]},
                  {"pose_landmark_edges", counts[2]},
                  {"precisions_isotropized", p.precisions_isotropized},
                  {"scene_scale", p.scene_scale}};

  const PipelineResult &r = *in.result;
  j["trace"] = trace_json(r.trace, in.timings);
  j["result"] = {{"termination", r.termination},
                 {"certified", r.certified},
                 {"final_rank", r.final_rank},
                 {"inlier_count", r.inliers.size()},
                 {"outliers", r.outliers},
                 {"failure", r.failure ? json(*r.failure) : json(nullptr)}};

  json metrics;
  metrics["translation_rmse"] = in.ate ? json(in.ate->translation_rmse) : json(nullptr);
  metrics["rotation_rmse_deg"] = in.ate ? json(in.ate->rotation_rmse_deg) : json(nullptr);
  metrics["outlier_precision"] = in.outliers ? json(in.outliers->precision) : json(nullptr);
  metrics["outlier_recall"] = in.outliers ? json(in.outliers->recall) : json(nullptr);
  j["metrics"] = std::move(metrics);
  j["wall_ms"] = in.timings ? json(r.wall_ms) : json(nullptr);
  j["status"] = in.status;
  return j;
}

std::string dump(const json &j) { return j.dump(2) + "\n"; }

} // namespace certignc
