#include <certignc/pipeline.h>

#include <chrono>

namespace certignc {

std::string to_string(SolveMode m) {
  switch (m) {
  case SolveMode::CertiGnc:
    return "certi-gnc";
  case SolveMode::GncLocal:
    return "gnc-local";
  case SolveMode::Local:
    return "local";
  case SolveMode::Certifiable:
    return "certifiable";
  }
  return "";
}

SolveMode parse_solve_mode(const std::string &s) {
  if (s == "certi-gnc")
    return SolveMode::CertiGnc;
  if (s == "gnc-local")
    return SolveMode::GncLocal;
  if (s == "local")
    return SolveMode::Local;
  if (s == "certifiable")
    return SolveMode::Certifiable;
  throw std::invalid_argument("unknown solve mode '" + s + "'");
}

bool promises_certification(SolveMode m) {
  return m == SolveMode::CertiGnc || m == SolveMode::Certifiable;
}

namespace {

void classify_all_inliers(const Problem &problem, PipelineResult &out) {
  out.inliers = problem.robust_edge_indices();
  out.weights = Vector::Ones(static_cast<Eigen::Index>(out.inliers.size()));
}

PipelineResult single_solve(const Problem &problem, const PipelineConfig &cfg) {
  PipelineResult out;
  out.cbar = resolve_cbar(problem, cfg.gnc);
  const int d = problem.d;
  const LiftedGraph graph = lift_graph(problem, d);
  const SparseDataMatrix Q = assemble_data_matrix(graph);

  GncRecord rec;
  rec.iteration = 1;
  if (cfg.mode == SolveMode::Local) {
    const ProductPoint Y0 = initial_point(problem, graph.layout_ptr(), d,
                                          cfg.gnc.init, derive_seed(cfg.seed, 2));
    const SolveResult r = optimize(graph, Q, Y0, cfg.solver);
    out.estimate = round_solution(r.Y);
    rec.weighted_cost = r.cost;
    rec.rank = d;
    out.termination = to_string(r.termination);
    out.final_rank = d;
  } else {
    StaircaseConfig scfg = cfg.staircase;
    scfg.solver = cfg.solver;
    scfg.eigen.seed = derive_seed(cfg.seed, 3);
    const int p0 = scfg.p0 == 0 ? d : scfg.p0;
    const ProductPoint Y0 = initial_point(problem, graph.layout_ptr(), p0,
                                          cfg.gnc.init, derive_seed(cfg.seed, 2));
    const StaircaseResult s = riemannian_staircase(graph, Q, Y0, scfg);
    out.estimate = s.estimate;
    rec.weighted_cost = evaluate_cost(graph, s.Y);
    rec.rank = s.termination_rank;
    rec.certified = s.certified;
    if (s.certified && s.f_sdp) {
      const Gap g = suboptimality_gap(s.f_qcqp, *s.f_sdp);
      rec.gap = g.value;
      rec.gap_absolute = g.absolute;
    }
    out.certified = s.certified;
    out.final_rank = s.termination_rank;
    out.termination = s.certified ? "certified" : "p_max_exceeded";
    if (s.failure)
      out.failure = *s.failure;
  }
  rec.robust_cost = evaluate_tls_cost(problem, *out.estimate, out.cbar);
  classify_all_inliers(problem, out);
  rec.weights = out.weights;
  out.trace.push_back(std::move(rec));
  return out;
}

} // namespace

PipelineResult run_pipeline(const Problem &problem, const PipelineConfig &cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  PipelineResult out;
  try {
    if (cfg.mode == SolveMode::Local || cfg.mode == SolveMode::Certifiable) {
      out = single_solve(problem, cfg);
    } else {
      GncConfig gcfg = cfg.gnc;
      gcfg.inner = cfg.mode == SolveMode::CertiGnc ? InnerMode::Certifiable
                                                   : InnerMode::Local;
      GncResult g = gnc_solve(problem, gcfg, cfg.staircase, cfg.solver, cfg.seed);
      out.estimate = std::move(g.estimate);
      out.trace = std::move(g.trace);
      out.termination = to_string(g.termination);
      out.certified = g.all_certified;
      out.final_rank = g.final_rank;
      out.weights = std::move(g.weights);
      out.cbar = std::move(g.cbar);
      out.inliers = std::move(g.inliers);
      out.outliers = std::move(g.outliers);
      if (promises_certification(cfg.mode) && !out.certified)
        out.failure = "at least one stage was not certified";
    }
  } catch (const GncFailure &e) {
    out.trace = e.trace();
    out.termination = "solver_failure";
    out.failure = e.what();
  } catch (const std::exception &e) {
    out.termination = "solver_failure";
    out.failure = e.what();
  }
  out.wall_ms = std::chrono::duration<double, std::milli>(
                    std::chrono::steady_clock::now() - t0)
                    .count();
  return out;
}

} // namespace certignc
