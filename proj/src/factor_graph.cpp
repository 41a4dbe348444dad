#include <certignc/factor_graph.h>

#include <cmath>

namespace certignc {

LiftedGraph::LiftedGraph(LayoutPtr layout, int rank,
                         std::vector<LiftedFactor> factors,
                         std::size_t weight_slots)
    : layout_(std::move(layout)), rank_(rank), factors_(std::move(factors)),
      weights_(Vector::Ones(static_cast<Eigen::Index>(weight_slots))) {}

double LiftedGraph::factor_weight(std::size_t k) const {
  const int slot = factors_[k].weight_slot;
  return slot < 0 ? 1.0 : weights_(slot);
}

LiftedGraph LiftedGraph::with_weights(const Vector &weights) const {
  if (weights.size() != weights_.size())
    throw LayoutMismatchError("with_weights: wrong number of weights");
  for (Eigen::Index i = 0; i < weights.size(); ++i)
    if (!(weights(i) >= 0.0 && weights(i) <= 1.0))
      throw std::invalid_argument("with_weights: weights must lie in [0, 1]");
  LiftedGraph out = *this;
  out.weights_ = weights;
  return out;
}

SparseDataMatrix::SparseDataMatrix(LayoutPtr layout, SparseMatrix upper)
    : layout_(std::move(layout)), upper_(std::move(upper)) {
  upper_.makeCompressed();
}

Matrix SparseDataMatrix::multiply(const Matrix &X) const {
  return upper_.selfadjointView<Eigen::Upper>() * X;
}

double SparseDataMatrix::quadratic_form(const Matrix &Y) const {
  return (Y.transpose() * multiply(Y)).trace();
}

double SparseDataMatrix::frobenius_norm() const {
  double sum = 0.0;
  for (int r = 0; r < upper_.outerSize(); ++r)
    for (SparseMatrix::InnerIterator it(upper_, r); it; ++it)
      sum += (it.row() == it.col() ? 1.0 : 2.0) * it.value() * it.value();
  return std::sqrt(sum);
}

Matrix SparseDataMatrix::diagonal_block(const BlockSpec &b) const {
  Matrix out = Matrix::Zero(b.rows, b.rows);
  for (int r = 0; r < b.rows; ++r)
    for (SparseMatrix::InnerIterator it(upper_, b.offset + r); it; ++it) {
      const auto c = it.col() - b.offset;
      if (c >= 0 && c < b.rows) {
        out(r, c) = it.value();
        out(c, r) = it.value();
      }
    }
  return out;
}

Vector SparseDataMatrix::absolute_row_sums() const {
  Vector sums = Vector::Zero(n());
  for (int r = 0; r < upper_.outerSize(); ++r)
    for (SparseMatrix::InnerIterator it(upper_, r); it; ++it) {
      sums(it.row()) += std::abs(it.value());
      if (it.row() != it.col())
        sums(it.col()) += std::abs(it.value());
    }
  return sums;
}

Vector SparseDataMatrix::diagonal() const { return upper_.diagonal(); }

Matrix SparseDataMatrix::to_dense() const {
  const Matrix U(upper_);
  Matrix full = U + U.transpose();
  full.diagonal() = U.diagonal();
  return full;
}

LiftedGraph lift_graph(const Problem &problem, int p) {
  const int d = problem.d;
  if (p < d)
    throw std::invalid_argument("lift_graph: rank p must be >= d");
  problem.validate();
  auto layout = std::make_shared<const Layout>(Layout::from_problem(problem));

  auto rot = [&](int id) {
    return layout->index({VariableType::PoseRotation, id});
  };
  auto trans = [&](int id) {
    return layout->index({VariableType::PoseTranslation, id});
  };
  const Matrix one = Matrix::Ones(1, 1);

  std::vector<LiftedFactor> factors;
  factors.reserve(problem.edges.size());
  int slots = 0;
  for (std::size_t k = 0; k < problem.edges.size(); ++k) {
    const auto &edge = problem.edges[k];
    LiftedFactor f;
    f.edge_index = k;
    f.robust = edge.robust();
    f.weight_slot = f.robust ? slots++ : -1;
    if (edge.is_relative_pose()) {
      const auto &m = edge.relative_pose();
      // kappa ||Y_j - R^T Y_i||^2
      f.groups.push_back(
          {m.kappa, d,
           {{rot(m.j), Matrix::Identity(d, d)}, {rot(m.i), -m.R.transpose()}}});
      // tau ||y_j - y_i - t^T Y_i||^2
      f.groups.push_back({m.tau,
                          1,
                          {{trans(m.j), one},
                           {trans(m.i), -one},
                           {rot(m.i), -m.t.transpose()}}});
    } else {
      const auto &m = edge.pose_landmark();
      const auto lk = layout->index({VariableType::Landmark, m.landmark});
      f.groups.push_back({m.tau,
                          1,
                          {{lk, one},
                           {trans(m.pose), -one},
                           {rot(m.pose), -m.l.transpose()}}});
    }
    factors.push_back(std::move(f));
  }
  return LiftedGraph(std::move(layout), p, std::move(factors),
                     static_cast<std::size_t>(slots));
}

namespace {

double factor_value(const LiftedFactor &f, const Layout &layout,
                    const Matrix &Y) {
  double value = 0.0;
  for (const auto &g : f.groups) {
    Matrix R = Matrix::Zero(g.rows, Y.cols());
    for (const auto &term : g.terms) {
      const auto &b = layout.blocks()[term.block];
      R.noalias() += term.C * Y.middleRows(b.offset, b.rows);
    }
    value += g.precision * R.squaredNorm();
  }
  return value;
}

void append_factor_triplets(const LiftedFactor &f, const Layout &layout,
                            double scale, std::vector<Triplet> &out) {
  for (const auto &g : f.groups) {
    for (const auto &ta : g.terms) {
      const auto &ba = layout.blocks()[ta.block];
      for (const auto &tb : g.terms) {
        const auto &bb = layout.blocks()[tb.block];
        const Matrix M = (scale * g.precision) * ta.C.transpose() * tb.C;
        for (int r = 0; r < M.rows(); ++r)
          for (int c = 0; c < M.cols(); ++c) {
            const int row = ba.offset + r, col = bb.offset + c;
            if (row <= col && M(r, c) != 0.0)
              out.emplace_back(row, col, M(r, c));
          }
      }
    }
  }
}

} // namespace

double evaluate_cost(const LiftedGraph &graph, const ProductPoint &Y) {
  if (&Y.layout() != &graph.layout() && !(Y.layout() == graph.layout()))
    throw LayoutMismatchError("evaluate_cost: layout mismatch");
  double total = 0.0;
  for (std::size_t k = 0; k < graph.factors().size(); ++k) {
    const double w = graph.factor_weight(k);
    if (w == 0.0)
      continue;
    total += w * factor_value(graph.factors()[k], graph.layout(), Y.Y());
  }
  return total;
}

SparseDataMatrix assemble_data_matrix(const LiftedGraph &graph) {
  return assemble_data_matrix(graph, graph.weights());
}

SparseDataMatrix assemble_data_matrix(const LiftedGraph &graph,
                                      const Vector &weights) {
  if (weights.size() != static_cast<Eigen::Index>(graph.weight_slot_count()))
    throw LayoutMismatchError("assemble_data_matrix: wrong number of weights");
  std::vector<Triplet> triplets;
  for (const auto &f : graph.factors()) {
    const double w = f.weight_slot < 0 ? 1.0 : weights(f.weight_slot);
    if (w != 0.0)
      append_factor_triplets(f, graph.layout(), w, triplets);
  }
  const int n = graph.layout().n();
  SparseMatrix upper(n, n);
  upper.setFromTriplets(triplets.begin(), triplets.end());
  return SparseDataMatrix(graph.layout_ptr(), std::move(upper));
}

SparseDataMatrix reweight_data_matrix(const SparseDataMatrix &Q,
                                      const LiftedGraph &graph,
                                      const Vector &old_weights,
                                      const Vector &new_weights) {
  std::vector<Triplet> triplets;
  for (const auto &f : graph.factors()) {
    if (f.weight_slot < 0)
      continue;
    const double delta = new_weights(f.weight_slot) - old_weights(f.weight_slot);
    if (delta != 0.0)
      append_factor_triplets(f, graph.layout(), delta, triplets);
  }
  const int n = Q.n();
  SparseMatrix delta(n, n);
  delta.setFromTriplets(triplets.begin(), triplets.end());
  SparseMatrix sum = Q.upper() + delta;
  sum.prune([](Eigen::Index, Eigen::Index, double v) { return v != 0.0; });
  return SparseDataMatrix(Q.layout_ptr(), std::move(sum));
}

std::vector<double> squared_edge_residuals(const Problem &problem,
                                           const Estimate &estimate) {
  auto pose = [&](int id) -> const Pose & {
    auto it = estimate.poses.find(id);
    if (it == estimate.poses.end())
      throw LayoutMismatchError("estimate is missing pose " +
                                std::to_string(id));
    return it->second;
  };
  std::vector<double> out;
  out.reserve(problem.edges.size());
  for (const auto &e : problem.edges) {
    if (e.is_relative_pose()) {
      const auto &m = e.relative_pose();
      const Pose &pi = pose(m.i), &pj = pose(m.j);
      out.push_back(m.kappa * (pj.R - pi.R * m.R).squaredNorm() +
                    m.tau * (pj.t - pi.t - pi.R * m.t).squaredNorm());
    } else {
      const auto &m = e.pose_landmark();
      auto it = estimate.landmarks.find(m.landmark);
      if (it == estimate.landmarks.end())
        throw LayoutMismatchError("estimate is missing landmark " +
                                  std::to_string(m.landmark));
      const Pose &pi = pose(m.pose);
      out.push_back(m.tau * (it->second - pi.t - pi.R * m.l).squaredNorm());
    }
  }
  return out;
}

std::vector<double> residual_norms(const Problem &problem,
                                   const Estimate &estimate) {
  const auto sq = squared_edge_residuals(problem, estimate);
  std::vector<double> r;
  for (std::size_t k = 0; k < problem.edges.size(); ++k)
    if (problem.edges[k].robust())
      r.push_back(std::sqrt(sq[k]));
  return r;
}

TangentVector riemannian_gradient(const SparseDataMatrix &Q,
                                  const ProductPoint &Y) {
  if (&Y.layout() != &Q.layout() && !(Y.layout() == Q.layout()))
    throw LayoutMismatchError("riemannian_gradient: layout mismatch");
  return tangent_project(Y, 2.0 * Q.multiply(Y.Y()));
}

TangentVector riemannian_gradient(const LiftedGraph &graph,
                                  const ProductPoint &Y) {
  return riemannian_gradient(assemble_data_matrix(graph), Y);
}

} // namespace certignc
