#include <certignc/gnc.h>

#include <Eigen/LU>

#include <boost/math/distributions/chi_squared.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

namespace certignc {

double tls_outlier_process(double w, double mu, double cbar) {
  if (!(w >= 0.0 && w <= 1.0))
    throw std::invalid_argument("tls_outlier_process: w must lie in [0, 1]");
  if (!(mu > 0.0))
    throw std::invalid_argument("tls_outlier_process: mu must be positive");
  return mu * (1.0 - w) / (mu + w) * cbar * cbar;
}

double tls_weight_update(double r2, double mu, double cbar) {
  if (!(r2 >= 0.0))
    throw std::invalid_argument("tls_weight_update: r2 must be >= 0");
  if (!(mu > 0.0))
    throw std::invalid_argument("tls_weight_update: mu must be positive");
  const double c2 = cbar * cbar;
  if (r2 <= mu / (mu + 1.0) * c2)
    return 1.0;
  if (r2 >= (mu + 1.0) / mu * c2)
    return 0.0;
  const double w = cbar / std::sqrt(r2) * std::sqrt(mu * (mu + 1.0)) - mu;
  return std::clamp(w, 0.0, 1.0);
}

double init_mu(const std::vector<double> &residuals, double cbar,
               double mu_min) {
  return init_mu(residuals, std::vector<double>(residuals.size(), cbar),
                 mu_min);
}

double init_mu(const std::vector<double> &residuals,
               const std::vector<double> &cbar, double mu_min) {
  if (residuals.empty())
    throw std::invalid_argument("init_mu: no residuals");
  if (cbar.size() != residuals.size())
    throw std::invalid_argument("init_mu: one threshold per residual");
  constexpr double kLarge = 1e6;
  double mu = kLarge;
  for (std::size_t i = 0; i < residuals.size(); ++i) {
    const double c2 = cbar[i] * cbar[i];
    const double excess = 2.0 * residuals[i] * residuals[i] - c2;
    if (excess > 0.0)
      mu = std::min(mu, std::max(mu_min, c2 / excess));
  }
  return mu;
}

double update_mu(double mu, double gamma) {
  if (!(mu > 0.0) || !(gamma > 1.0))
    throw std::invalid_argument("update_mu: need mu > 0 and gamma > 1");
  return gamma * mu;
}

namespace {

struct SplitResiduals {
  std::vector<double> robust_r2;
  double fixed_cost = 0.0;
};

SplitResiduals split_residuals(const Problem &problem,
                               const Estimate &estimate) {
  const auto sq = squared_edge_residuals(problem, estimate);
  SplitResiduals out;
  for (std::size_t k = 0; k < sq.size(); ++k) {
    if (problem.edges[k].robust())
      out.robust_r2.push_back(sq[k]);
    else
      out.fixed_cost += sq[k];
  }
  return out;
}

} // namespace

double evaluate_br_objective(const Problem &problem, const Estimate &estimate,
                             const Vector &weights, double mu,
                             const std::vector<double> &cbar) {
  const SplitResiduals s = split_residuals(problem, estimate);
  if (static_cast<std::size_t>(weights.size()) != s.robust_r2.size() ||
      cbar.size() != s.robust_r2.size())
    throw LayoutMismatchError("evaluate_br_objective: one weight per robust edge");
  double total = s.fixed_cost;
  for (std::size_t i = 0; i < s.robust_r2.size(); ++i) {
    const double w = weights(static_cast<Eigen::Index>(i));
    total += w * s.robust_r2[i] + tls_outlier_process(w, mu, cbar[i]);
  }
  return total;
}

double evaluate_br_objective(const Problem &problem, const Estimate &estimate,
                             const Vector &weights, double mu, double cbar) {
  return evaluate_br_objective(
      problem, estimate, weights, mu,
      std::vector<double>(problem.robust_edge_count(), cbar));
}

double evaluate_tls_cost(const Problem &problem, const Estimate &estimate,
                         const std::vector<double> &cbar) {
  const SplitResiduals s = split_residuals(problem, estimate);
  if (cbar.size() != s.robust_r2.size())
    throw LayoutMismatchError("evaluate_tls_cost: one threshold per robust edge");
  double total = s.fixed_cost;
  for (std::size_t i = 0; i < s.robust_r2.size(); ++i)
    total += std::min(s.robust_r2[i], cbar[i] * cbar[i]);
  return total;
}

Gap suboptimality_gap(double f_qcqp, double f_sdp) {
  if (f_sdp > 1e-12 * (1.0 + std::abs(f_qcqp)))
    return {(f_qcqp - f_sdp) / f_sdp, false};
  return {f_qcqp - f_sdp, true};
}

double default_cbar(EdgeClass cls, int d, double quantile) {
  if (!(quantile > 0.0 && quantile < 1.0))
    throw std::invalid_argument("default_cbar: quantile must lie in (0, 1)");
  const int dof = cls == EdgeClass::PoseLandmark ? d : d * (d + 1) / 2 + d;
  boost::math::chi_squared dist(dof);
  return std::sqrt(boost::math::quantile(dist, quantile));
}

std::string to_string(InnerMode m) {
  return m == InnerMode::Certifiable ? "certifiable" : "local";
}

std::string to_string(InitKind k) {
  return k == InitKind::Odometry ? "odometry" : "random";
}

std::string to_string(GncTermination t) {
  switch (t) {
  case GncTermination::WeightsConverged:
    return "weights_converged";
  case GncTermination::CostConverged:
    return "cost_converged";
  case GncTermination::MaxIterations:
    return "max_iterations";
  }
  return "";
}

void GncConfig::validate() const {
  if (cbar && !(*cbar > 0.0))
    throw std::invalid_argument("GncConfig: cbar must be positive");
  if (!(cbar_quantile > 0.0 && cbar_quantile < 1.0))
    throw std::invalid_argument("GncConfig: cbar quantile must lie in (0, 1)");
  if (!(gamma > 1.0))
    throw std::invalid_argument("GncConfig: gamma must be > 1");
  if (!(mu_min > 0.0))
    throw std::invalid_argument("GncConfig: mu_min must be positive");
  if (!(eps > 0.0 && eps < 0.5))
    throw std::invalid_argument("GncConfig: eps must lie in (0, 1/2)");
  if (!(c_tol_outer > 0.0) || !(c_tol_inner > 0.0))
    throw std::invalid_argument("GncConfig: tolerances must be positive");
  if (max_outer < 1 || max_inner < 1)
    throw std::invalid_argument("GncConfig: iteration limits must be >= 1");
  if (fixed_mu_value && !(*fixed_mu_value > 0.0))
    throw std::invalid_argument("GncConfig: fixed mu must be positive");
}

std::vector<double> resolve_cbar(const Problem &problem, const GncConfig &cfg) {
  std::vector<double> out;
  for (const auto &e : problem.edges)
    if (e.robust())
      out.push_back(cfg.cbar ? *cfg.cbar
                             : default_cbar(e.cls, problem.d, cfg.cbar_quantile));
  return out;
}

ProductPoint initial_point(const Problem &problem, const LayoutPtr &layout,
                           int p, InitKind init, std::uint64_t seed) {
  if (init == InitKind::Odometry)
    return embed_estimate(odometry_initialization(problem), layout, p);
  ProductPoint Y = random_point(layout, p, seed);
  if (p != layout->d())
    return Y;
  // At rank d the solver cannot leave O(d)'s negative component.
  Matrix M = Y.Y();
  for (const auto &b : layout->blocks())
    if (b.kind == BlockKind::Stiefel &&
        M.middleRows(b.offset, b.rows).determinant() < 0)
      M.row(b.offset) *= -1.0;
  return ProductPoint(layout, std::move(M));
}

namespace {

struct StageOutcome {
  ProductPoint Y;
  Estimate estimate;
  double cost = 0.0;
  int rank = 0;
  bool certified = false;
  std::optional<double> f_sdp;
  double f_qcqp = 0.0;
};

class InnerSolver {
public:
  InnerSolver(const GncConfig &cfg, const StaircaseConfig &scfg,
              const SolverConfig &solver)
      : mode_(cfg.inner), scfg_(scfg), solver_(solver) {
    solver_.absolute_cost_tol = cfg.c_tol_inner;
    scfg_.solver = solver_;
  }

  StageOutcome solve(const LiftedGraph &graph, const SparseDataMatrix &Q,
                     const ProductPoint &Y0) const {
    if (mode_ == InnerMode::Local) {
      const SolveResult r = optimize(graph, Q, Y0, solver_);
      Estimate est = round_solution(r.Y);
      return {r.Y, std::move(est), r.cost, r.Y.p(), false, std::nullopt, r.cost};
    }
    // Warm start at the numerical rank of the previous stage's solution.
    const int p_min = scfg_.p0 == 0 ? graph.layout().d() : scfg_.p0;
    const ProductPoint start = Y0.p() > p_min ? compress_rank(Y0, p_min) : Y0;
    StaircaseResult s = riemannian_staircase(graph, Q, start, scfg_);
    const double cost = evaluate_cost(graph, s.Y);
    return {s.Y, std::move(s.estimate), cost, s.termination_rank, s.certified,
            s.f_sdp, s.f_qcqp};
  }

private:
  InnerMode mode_;
  StaircaseConfig scfg_;
  SolverConfig solver_;
};

double rounding_error(const Vector &w) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < w.size(); ++i)
    worst = std::max(worst, std::abs(w(i) - std::round(w(i))));
  return worst;
}

bool all_binary(const Vector &w) {
  for (Eigen::Index i = 0; i < w.size(); ++i)
    if (w(i) != 0.0 && w(i) != 1.0)
      return false;
  return true;
}

} // namespace

GncResult gnc_solve(const Problem &problem, const GncConfig &cfg,
                    const StaircaseConfig &staircase_cfg,
                    const SolverConfig &solver_cfg, std::uint64_t seed) {
  cfg.validate();
  const int d = problem.d;
  StaircaseConfig scfg = staircase_cfg;
  scfg.eigen.seed = derive_seed(seed, 3);
  scfg.validate(d);

  GncResult result;
  result.cbar = resolve_cbar(problem, cfg);

  LiftedGraph graph = lift_graph(problem, d);
  SparseDataMatrix Q = assemble_data_matrix(graph);
  const InnerSolver inner(cfg, scfg, solver_cfg);

  const int p0 = cfg.inner == InnerMode::Local ? d : (scfg.p0 == 0 ? d : scfg.p0);
  ProductPoint Y =
      initial_point(problem, graph.layout_ptr(), p0, cfg.init, derive_seed(seed, 2));

  Vector w = graph.weights();
  double mu = 0.0;
  std::optional<double> previous_cost;
  int binary_streak = 0;
  bool certified_everywhere = true;
  std::optional<StageOutcome> last;

  for (int it = 1; it <= cfg.max_outer; ++it) {
    const auto t0 = std::chrono::steady_clock::now();
    Vector w_new;
    double stage_cost = 0.0;
    int inner_count = 0;
    std::optional<double> inner_prev;
    for (;;) {
      try {
        last = inner.solve(graph, Q, Y);
      } catch (const std::exception &e) {
        throw GncFailure(std::string("inner solve failed: ") + e.what(),
                         result.trace);
      }
      Y = last->Y;
      stage_cost = last->cost;
      ++inner_count;

      const SplitResiduals s = split_residuals(problem, last->estimate);
      if (it == 1 && inner_count == 1) {
        if (cfg.fixed_mu_value) {
          mu = *cfg.fixed_mu_value;
        } else if (s.robust_r2.empty()) {
          mu = 1e6;
        } else {
          std::vector<double> r(s.robust_r2.size());
          std::transform(s.robust_r2.begin(), s.robust_r2.end(), r.begin(),
                         [](double v) { return std::sqrt(v); });
          mu = init_mu(r, result.cbar, cfg.mu_min);
        }
      }
      w_new.resize(static_cast<Eigen::Index>(s.robust_r2.size()));
      for (std::size_t i = 0; i < s.robust_r2.size(); ++i)
        w_new(static_cast<Eigen::Index>(i)) =
            tls_weight_update(s.robust_r2[i], mu, result.cbar[i]);

      const bool inner_done =
          cfg.single_inner_iteration || inner_count >= cfg.max_inner ||
          (inner_prev && std::abs(stage_cost - *inner_prev) <= cfg.c_tol_inner);
      inner_prev = stage_cost;
      if (inner_done)
        break;
      Q = reweight_data_matrix(Q, graph, w, w_new);
      graph = graph.with_weights(w_new);
      w = w_new;
    }

    GncRecord rec;
    rec.iteration = it;
    rec.mu = mu;
    rec.weighted_cost = stage_cost;
    rec.robust_cost = evaluate_tls_cost(problem, last->estimate, result.cbar);
    rec.rank = last->rank;
    rec.certified = last->certified;
    if (last->certified && last->f_sdp) {
      const Gap g = suboptimality_gap(last->f_qcqp, *last->f_sdp);
      rec.gap = g.value;
      rec.gap_absolute = g.absolute;
    }
    rec.weights = w_new;
    certified_everywhere = certified_everywhere && last->certified;

    Q = reweight_data_matrix(Q, graph, w, w_new);
    graph = graph.with_weights(w_new);
    w = w_new;

    rec.ms = std::chrono::duration<double, std::milli>(
                 std::chrono::steady_clock::now() - t0)
                 .count();
    result.trace.push_back(std::move(rec));

    // All weights rounding to zero is the starting state of the continuation
    // (every weight is O(sqrt(mu)) at mu0), not a converged classification.
    const bool any_inlier = w.size() == 0 || (w.array() >= 0.5).any();
    if (any_inlier && rounding_error(w) <= cfg.eps) {
      result.termination = GncTermination::WeightsConverged;
      break;
    }
    if (previous_cost && std::abs(stage_cost - *previous_cost) <= cfg.c_tol_outer) {
      result.termination = GncTermination::CostConverged;
      break;
    }
    previous_cost = stage_cost;

    binary_streak = all_binary(w) ? binary_streak + 1 : 0;
    if (!cfg.fixed_mu && binary_streak < 2)
      mu = update_mu(mu, cfg.gamma);
  }

  result.estimate = last->estimate;
  result.weights = w;
  result.final_rank = last->rank;
  result.all_certified = cfg.inner == InnerMode::Certifiable && certified_everywhere;
  const auto robust = problem.robust_edge_indices();
  for (std::size_t i = 0; i < robust.size(); ++i)
    (w(static_cast<Eigen::Index>(i)) >= 0.5 ? result.inliers : result.outliers)
        .push_back(robust[i]);
  return result;
}

} // namespace certignc
