#pragma once

#include <certignc/certifier.h>
#include <certignc/factor_graph.h>
#include <certignc/solver.h>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace certignc {

/// mu (1 - w) / (mu + w) * cbar^2
double tls_outlier_process(double w, double mu, double cbar);

/// argmin_{w in [0,1]} w r^2 + tls_outlier_process(w, mu, cbar).
double tls_weight_update(double r2, double mu, double cbar);

/// mu0 = max(mu_min, cbar^2 / (2 r_max^2 - cbar^2)), or 1e6 when every
/// residual already sits inside the band (2 r_max^2 <= cbar^2).
double init_mu(const std::vector<double> &residuals, double cbar,
               double mu_min);
/// Per-edge thresholds: the ratio cbar_i^2 / r_i^2 that is smallest decides.
double init_mu(const std::vector<double> &residuals,
               const std::vector<double> &cbar, double mu_min);

double update_mu(double mu, double gamma);

/// sum_i [w_i r_i^2 + Phi(w_i)] over robust edges plus the unweighted cost of
/// the non-robust edges. `cbar` holds one threshold per robust edge.
double evaluate_br_objective(const Problem &problem, const Estimate &estimate,
                             const Vector &weights, double mu,
                             const std::vector<double> &cbar);
double evaluate_br_objective(const Problem &problem, const Estimate &estimate,
                             const Vector &weights, double mu, double cbar);

/// TLS cost sum_i min(r_i^2, cbar_i^2) plus the non-robust cost.
double evaluate_tls_cost(const Problem &problem, const Estimate &estimate,
                         const std::vector<double> &cbar);

struct Gap {
  double value = 0.0;
  /// True when f_sdp was too small to divide by and `value` is absolute.
  bool absolute = false;
};

Gap suboptimality_gap(double f_qcqp, double f_sdp);

/// sqrt of the chi-square quantile with the residual dof of an edge class:
/// d(d+1)/2 + d for pose edges, d for landmark edges.
double default_cbar(EdgeClass cls, int d, double quantile = 0.99);

enum class InnerMode { Certifiable, Local };
enum class InitKind { Odometry, Random };

std::string to_string(InnerMode m);
std::string to_string(InitKind k);

struct GncConfig {
  /// Global threshold; unset means per-class chi-square defaults.
  std::optional<double> cbar;
  double cbar_quantile = 0.99;
  double gamma = 1.4;
  double mu_min = 1e-4;
  double eps = 1e-2;
  double c_tol_outer = 1e-6;
  double c_tol_inner = 1e-5;
  int max_outer = 100;
  InnerMode inner = InnerMode::Certifiable;
  bool fixed_mu = false;
  /// mu used by IRLS mode; unset means init_mu.
  std::optional<double> fixed_mu_value;
  bool single_inner_iteration = true;
  /// Inner solves per mu stage when single_inner_iteration is false.
  int max_inner = 10;
  InitKind init = InitKind::Odometry;

  void validate() const;
};

struct GncRecord {
  int iteration = 0;
  /// Absent for single-solve modes that run no continuation.
  std::optional<double> mu;
  double weighted_cost = 0.0;
  double robust_cost = 0.0;
  int rank = 0;
  std::optional<double> gap;
  bool gap_absolute = false;
  bool certified = false;
  double ms = 0.0;
  Vector weights;
};

using GncTrace = std::vector<GncRecord>;

enum class GncTermination { WeightsConverged, CostConverged, MaxIterations };

std::string to_string(GncTermination t);

struct GncResult {
  Estimate estimate;
  Vector weights;
  /// Edge indices (into problem.edges) classified by rounding w at 1/2.
  std::vector<std::size_t> inliers;
  std::vector<std::size_t> outliers;
  GncTrace trace;
  GncTermination termination = GncTermination::MaxIterations;
  /// Thresholds used, one per robust edge.
  std::vector<double> cbar;
  bool all_certified = false;
  int final_rank = 0;
};

/// Inner failure, carrying the trace up to the failing stage.
class GncFailure : public std::runtime_error {
public:
  GncFailure(const std::string &what, GncTrace trace)
      : std::runtime_error(what), trace_(std::move(trace)) {}
  const GncTrace &trace() const { return trace_; }

private:
  GncTrace trace_;
};

/// Per-robust-edge thresholds resolved from the config.
std::vector<double> resolve_cbar(const Problem &problem, const GncConfig &cfg);

/// Starting point at rank p from the configured initialization.
ProductPoint initial_point(const Problem &problem, const LayoutPtr &layout,
                           int p, InitKind init, std::uint64_t seed);

/// Graduated non-convexity with TLS weights over an inner weighted solve:
/// the Riemannian staircase (certifiable) or one local solve at rank d.
GncResult gnc_solve(const Problem &problem, const GncConfig &cfg,
                    const StaircaseConfig &staircase_cfg,
                    const SolverConfig &solver_cfg, std::uint64_t seed);

} // namespace certignc
