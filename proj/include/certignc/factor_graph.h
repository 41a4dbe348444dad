#pragma once

#include <certignc/manifolds.h>
#include <certignc/problem.h>

#include <vector>

namespace certignc {

/// One linear residual R = sum_b C_b Y_b contributing precision * ||R||_F^2.
struct ResidualGroup {
  struct Term {
    std::size_t block; // index into Layout::blocks()
    Matrix C;          // rows(R) x rows(block)
  };
  double precision = 1.0;
  int rows = 0;
  std::vector<Term> terms;
};

/// Lifted counterpart of one measurement edge.
struct LiftedFactor {
  std::size_t edge_index = 0;
  bool robust = false;
  int weight_slot = -1; // -1 for odometry (weight fixed at 1)
  std::vector<ResidualGroup> groups;
};

/// The factor graph with each variable replaced by its rank-p block.
///
/// The factor descriptors do not depend on p; `rank` only records the rank
/// the graph was constructed for. Weights live in one slot per robust edge.
class LiftedGraph {
public:
  LiftedGraph(LayoutPtr layout, int rank, std::vector<LiftedFactor> factors,
              std::size_t weight_slots);

  const Layout &layout() const { return *layout_; }
  const LayoutPtr &layout_ptr() const { return layout_; }
  int rank() const { return rank_; }
  const std::vector<LiftedFactor> &factors() const { return factors_; }
  std::size_t weight_slot_count() const { return weights_.size(); }
  const Vector &weights() const { return weights_; }

  /// Weight applied to factor k (1 for non-robust factors).
  double factor_weight(std::size_t k) const;

  /// Copy with new robust weights; throws if any weight is outside [0, 1].
  LiftedGraph with_weights(const Vector &weights) const;

private:
  LayoutPtr layout_;
  int rank_;
  std::vector<LiftedFactor> factors_;
  Vector weights_;
};

/// Symmetric data matrix Q(w) with <Q(w), Y Y^T> equal to the weighted sum
/// of the lifted factor values. Only the upper triangle is stored.
class SparseDataMatrix {
public:
  SparseDataMatrix(LayoutPtr layout, SparseMatrix upper);

  int n() const { return static_cast<int>(upper_.rows()); }
  const Layout &layout() const { return *layout_; }
  const LayoutPtr &layout_ptr() const { return layout_; }
  const SparseMatrix &upper() const { return upper_; }

  Matrix multiply(const Matrix &X) const;
  /// <Q, Y Y^T> = tr(Y^T Q Y).
  double quadratic_form(const Matrix &Y) const;
  double frobenius_norm() const;
  /// Diagonal block of variable block b.
  Matrix diagonal_block(const BlockSpec &b) const;
  /// Row sums of |Q_ij| over the full symmetric matrix.
  Vector absolute_row_sums() const;
  Vector diagonal() const;
  Matrix to_dense() const;

private:
  LayoutPtr layout_;
  SparseMatrix upper_;
};

LiftedGraph lift_graph(const Problem &problem, int p);

/// sum_k w_k l_k(Y), evaluated factor by factor in a fixed order.
double evaluate_cost(const LiftedGraph &graph, const ProductPoint &Y);

SparseDataMatrix assemble_data_matrix(const LiftedGraph &graph);
SparseDataMatrix assemble_data_matrix(const LiftedGraph &graph,
                                      const Vector &weights);

/// Q(w_new) = Q(w_old) + sum_k (w_new_k - w_old_k) Q_k, touching only the
/// factors whose weight changed.
SparseDataMatrix reweight_data_matrix(const SparseDataMatrix &Q,
                                      const LiftedGraph &graph,
                                      const Vector &old_weights,
                                      const Vector &new_weights);

/// Unweighted precision-weighted factor value of every edge at rank d,
/// computed directly in problem space.
std::vector<double> squared_edge_residuals(const Problem &problem,
                                           const Estimate &estimate);

/// r_i >= 0 for every robust edge, in edge order.
std::vector<double> residual_norms(const Problem &problem,
                                   const Estimate &estimate);

TangentVector riemannian_gradient(const SparseDataMatrix &Q,
                                  const ProductPoint &Y);
TangentVector riemannian_gradient(const LiftedGraph &graph,
                                  const ProductPoint &Y);

} // namespace certignc
