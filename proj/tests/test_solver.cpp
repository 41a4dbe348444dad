#include "oracles.h"
#include "support.h"

#include <certignc/gnc.h>
#include <certignc/solver.h>

#include <doctest.h>

using namespace certignc;
using namespace certignc::test;

TEST_CASE("optimize: stationary start returns after one iteration") {
  std::mt19937_64 rng(41);
  const Problem p = random_problem(rng, 2, 6, 3, 2, 0.0);
  const LiftedGraph g = lift_graph(p, 3);
  const ProductPoint Y0 = lift_point(embed_estimate(truth_of(p), g.layout_ptr(), 2), 3);
  const SolveResult r = optimize(g, Y0, SolverConfig{});
  CHECK(r.iterations == 1);
  CHECK(r.termination == SolverTermination::GradientTol);
  CHECK(r.Y.Y() == Y0.Y());
}

TEST_CASE("optimize: noiseless 10-pose loop from odometry reaches zero cost") {
  const Problem p = parse_g2o(read_file(fixture("se2_ring10_noiseless.g2o")));
  REQUIRE(p.poses.size() == 10);
  const LiftedGraph g = lift_graph(p, 2);
  const ProductPoint Y0 = initial_point(p, g.layout_ptr(), 2, InitKind::Odometry, 1);
  const SolveResult r = optimize(g, Y0, SolverConfig{});
  CHECK(r.cost <= 1e-12);
}

TEST_CASE("optimize: best of 50 restarts matches the grid oracle on 3-pose cycles") {
  std::mt19937_64 rng(42);
  for (int instance = 0; instance < 3; ++instance) {
    const Problem p = three_cycle(rng, 0.05, 0.05);
    const oracle::GridOptimum opt = oracle::grid_optimum(oracle::AngleCost(p), 1e-3);
    const LiftedGraph g = lift_graph(p, 2);
    double best = std::numeric_limits<double>::infinity();
    for (int restart = 0; restart < 50; ++restart) {
      const ProductPoint Y0 = random_point(g.layout_ptr(), 2, 1000 * instance + restart);
      best = std::min(best, optimize(g, Y0, SolverConfig{}).cost);
    }
    CHECK(rel_err(best, opt.cost) <= 1e-6);
    CHECK(best >= opt.cost * (1.0 - 1e-9));
  }
}

TEST_CASE("optimize: monotone, feasible and deterministic") {
  std::mt19937_64 rng(43);
  for (int d : {2, 3}) {
    const Problem p = random_problem(rng, d, 15, 10, 5, 0.2);
    const LiftedGraph g = lift_graph(p, d + 1);
    const ProductPoint Y0 = random_point(g.layout_ptr(), d + 1, 7);
    const SolveResult a = optimize(g, Y0, SolverConfig{});
    const SolveResult b = optimize(g, Y0, SolverConfig{});
    for (std::size_t k = 1; k < a.cost_trace.size(); ++k)
      CHECK(a.cost_trace[k] <= a.cost_trace[k - 1]);
    CHECK(a.Y.feasibility_error() <= 1e-10);
    CHECK(a.Y.Y() == b.Y.Y());
    CHECK(a.cost_trace == b.cost_trace);
    if (a.termination == SolverTermination::GradientTol)
      CHECK(a.gradient_norm <= 1e-8 * (1.0 + a.cost_trace.front()));
  }
}

TEST_CASE("optimize: invalid inputs") {
  std::mt19937_64 rng(44);
  const Problem p = random_problem(rng, 2, 4, 1);
  const LiftedGraph g = lift_graph(p, 2);
  Matrix Y = random_point(g.layout_ptr(), 2, 1).Y();
  Y.row(0) *= 2.0;
  CHECK_THROWS(optimize(g, ProductPoint(g.layout_ptr(), Y), SolverConfig{}));
  SolverConfig bad;
  bad.max_iterations = 0;
  CHECK_THROWS(bad.validate());
}

TEST_CASE("riemannian_hessian_vector: matches differences of the gradient") {
  std::mt19937_64 rng(45);
  for (int d : {2, 3}) {
    const Problem p = random_problem(rng, d, 6, 4, 2);
    const LiftedGraph g = lift_graph(p, d + 1);
    const SparseDataMatrix Q = assemble_data_matrix(g);
    const ProductPoint Y = random_point(g.layout_ptr(), d + 1, 3);
    const TangentVector V = tangent_project(Y, random_matrix(rng, Y.n(), d + 1));
    const Matrix HV = riemannian_hessian_vector(Q, Y, Q.multiply(Y.Y()), V.V);
    // second directional derivative of f along the retraction curve
    const double h = 1e-4;
    const double f0 = evaluate_cost(g, Y);
    const double fp = evaluate_cost(g, retract(Y, V, h));
    const double fm = evaluate_cost(g, retract(Y, V, -h));
    const double second = (fp - 2 * f0 + fm) / (h * h);
    // polar retraction is second order, so f'' = <V, Hess V>
    CHECK(rel_err((V.V.transpose() * HV).trace(), second) <= 1e-4);
  }
}
