#pragma once

#include <certignc/factor_graph.h>

#include <optional>
#include <string>
#include <vector>

namespace certignc {

struct SolverConfig {
  double relative_cost_tol = 1e-8;
  double absolute_cost_tol = 1e-8;
  /// Defaults to 1e-8 * (1 + |f(Y0)|) when unset.
  std::optional<double> gradient_norm_tol;
  int max_iterations = 100;
  double initial_damping = 1e-4;
  double damping_increase = 10.0;
  double damping_decrease = 10.0;
  /// Inner truncated-CG budget per damped step.
  int max_cg_iterations = 500;

  void validate() const;
};

enum class SolverTermination { RelativeTol, AbsoluteTol, GradientTol, MaxIterations };

std::string to_string(SolverTermination t);

struct SolveResult {
  ProductPoint Y;
  double cost = 0.0;
  int iterations = 0;
  std::vector<double> cost_trace;
  SolverTermination termination = SolverTermination::MaxIterations;
  double gradient_norm = 0.0;
};

/// Riemannian Hessian-vector product of Y -> <Q, Y Y^T> at Y, given QY.
Matrix riemannian_hessian_vector(const SparseDataMatrix &Q, const ProductPoint &Y,
                                 const Matrix &QY, const Matrix &V);

/// Damped Newton (Levenberg-Marquardt style) descent on M^(p).
///
/// Each iteration solves (Hess + lambda I) eta = -grad on the tangent space
/// with block-Jacobi preconditioned truncated CG, retracts, and accepts the
/// step only if the cost decreases; otherwise lambda grows.
SolveResult optimize(const LiftedGraph &graph, const SparseDataMatrix &Q,
                     const ProductPoint &Y0, const SolverConfig &cfg);
SolveResult optimize(const LiftedGraph &graph, const ProductPoint &Y0,
                     const SolverConfig &cfg);

} // namespace certignc
