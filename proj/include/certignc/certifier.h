#pragma once

#include <certignc/factor_graph.h>
#include <certignc/solver.h>

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace certignc {

/// Symmetric d x d multiplier per Stiefel block, in Layout::blocks() order
/// (Euclidean blocks carry none).
using MultiplierBlocks = std::vector<Matrix>;

/// Lambda_i = Sym((Q Y)_i Y_i^T): the least-squares multiplier of the
/// orthonormality constraint of block i at a (near) stationary Y.
MultiplierBlocks recover_multipliers(const SparseDataMatrix &Q,
                                     const ProductPoint &Y);

/// Implicit S = Q - BlockDiag(Lambda); only matrix products are formed.
class CertificateOperator {
public:
  CertificateOperator(const SparseDataMatrix &Q, MultiplierBlocks multipliers);

  int n() const { return Q_.n(); }
  Matrix apply(const Matrix &X) const;
  Vector apply(const Vector &x) const;
  /// Gershgorin upper bound on lambda_max(S).
  double gershgorin_upper_bound() const;
  const MultiplierBlocks &multipliers() const { return multipliers_; }
  /// Dense materialization, for small-instance checks only.
  Matrix to_dense() const;

private:
  SparseDataMatrix Q_;
  MultiplierBlocks multipliers_;
  std::vector<std::size_t> stiefel_offsets_;
};

CertificateOperator build_certificate(const SparseDataMatrix &Q,
                                      MultiplierBlocks multipliers);

struct EigenConfig {
  /// Converged when ||S v - lambda v|| <= tolerance * (|sigma| + |lambda|).
  double tolerance = 1e-10;
  int max_matvecs = 20000;
  /// Krylov basis size before a thick restart.
  int max_basis = 80;
  /// Ritz vectors kept across restarts.
  int keep = 20;
  std::uint64_t seed = 0x5eedull;
};

struct EigenPair {
  double value = 0.0;
  Vector vector;
  double residual = 0.0;
  int matvecs = 0;
};

using SymmetricOperator = std::function<Vector(const Vector &)>;

/// Smallest eigenpair of a symmetric operator via restarted Lanczos on the
/// shifted operator sigma I - S, with sigma >= lambda_max(S).
/// Throws EigensolverFailure when the residual target is not reached.
EigenPair min_eigenpair(const SymmetricOperator &S, int n, double sigma,
                        const EigenConfig &cfg = {});
EigenPair min_eigenpair(const CertificateOperator &S,
                        const EigenConfig &cfg = {});

struct CertificateResult {
  MultiplierBlocks multipliers;
  double lambda_min = 0.0;
  Vector v_min;
  bool certified = false;
  bool eigensolver_converged = true;
  double eigensolver_residual = 0.0;
  double stationarity_residual = 0.0; // ||S Y||_F
  double f_attained = 0.0;            // <Q, Y Y^T>
  double eta = 0.0;
  /// f_attained - eta * n: the conservative bound under slack eta.
  double f_sdp_slack_bound = 0.0;
};

/// certified = lambda_min(S) >= -eta.
CertificateResult certify(const SparseDataMatrix &Q, const ProductPoint &Y,
                          double eta, const EigenConfig &cfg = {});

struct StaircaseConfig {
  /// Initial rank; 0 means d.
  int p0 = 0;
  int p_max = 30;
  /// eta = eta_relative * mean(|diag Q|) unless eta_absolute is set.
  double eta_relative = 1e-5;
  std::optional<double> eta_absolute;
  EigenConfig eigen;
  SolverConfig solver;
  double escape_sufficient_decrease = 1e-4;
  int escape_max_halvings = 60;

  void validate(int d) const;
};

double resolve_eta(const StaircaseConfig &cfg, const SparseDataMatrix &Q);

/// Y+ = [Y | 0] moved along the direction that places v_min in the new
/// column, with backtracking alpha = 1, 1/2, ... until
/// cost <= cost(Y) - c alpha^2 |lambda_min|.
ProductPoint saddle_escape(const LiftedGraph &graph, const ProductPoint &Y,
                           const Vector &v_min, double lambda_min,
                           double sufficient_decrease = 1e-4,
                           int max_halvings = 60);

struct StaircaseLevel {
  int rank = 0;
  double cost = 0.0;
  double lambda_min = 0.0;
  bool certified = false;
  int solver_iterations = 0;
  double stationarity_residual = 0.0;
};

struct StaircaseResult {
  Estimate estimate;       // rounded rank-d solution
  ProductPoint Y;          // final lifted point
  bool certified = false;
  /// Lifted optimum <Q, Y Y^T> at the certified level; absent if uncertified.
  std::optional<double> f_sdp;
  std::optional<double> f_sdp_slack_bound;
  double f_qcqp = 0.0;     // cost of the rounded estimate at rank d
  int termination_rank = 0;
  double eta = 0.0;
  std::vector<StaircaseLevel> trace;
  std::optional<std::string> failure;
};

/// Certify-or-lift loop: optimize at rank p, certify, escape to p + 1.
StaircaseResult riemannian_staircase(const LiftedGraph &graph,
                                     const SparseDataMatrix &Q,
                                     const ProductPoint &Y0,
                                     const StaircaseConfig &cfg);
StaircaseResult riemannian_staircase(const LiftedGraph &graph,
                                     const ProductPoint &Y0,
                                     const StaircaseConfig &cfg);

} // namespace certignc
