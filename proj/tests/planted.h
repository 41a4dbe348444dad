#pragma once

#include "support.h"

#include <certignc/certifier.h>
#include <certignc/gnc.h>
#include <certignc/solver.h>

namespace certignc::test {

inline SolverConfig tight() {
  SolverConfig c;
  c.relative_cost_tol = 1e-14;
  c.absolute_cost_tol = 1e-14;
  c.gradient_norm_tol = 1e-11;
  c.max_iterations = 300;
  return c;
}

inline Matrix dense_s(const SparseDataMatrix &Q, const MultiplierBlocks &L) {
  Matrix S = Q.to_dense();
  std::size_t k = 0;
  for (const auto &b : Q.layout().blocks())
    if (b.kind == BlockKind::Stiefel)
      S.block(b.offset, b.offset, b.rows, b.rows) -= L[k++];
  return S;
}

struct Planted {
  Problem problem;
  LiftedGraph graph;
  SparseDataMatrix Q;
  ProductPoint Y; // rank-2 second-order critical point
};

/// 5-pose ring, rotation dominated, optimized at p = 2 from a start that
/// winds the headings once more around the circle.
inline Planted planted_saddle(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Problem p = ring_2d(rng, 5, 3.0, 0.01, 0.01, 100.0, 0.01);
  LiftedGraph g = lift_graph(p, 2);
  SparseDataMatrix Q = assemble_data_matrix(g);
  const ProductPoint Y0 = embed_estimate(wrapped_start(p), g.layout_ptr(), 2);
  ProductPoint Y = optimize(g, Q, Y0, tight()).Y;
  return {std::move(p), std::move(g), std::move(Q), std::move(Y)};
}

} // namespace certignc::test
