#include "support.h"

#include <certignc/gnc.h>
#include <certignc/io.h>
#include <certignc/pipeline.h>
#include <certignc/report.h>

#include <doctest.h>

#include <boost/math/distributions/chi_squared.hpp>

using namespace certignc;
using namespace certignc::test;

namespace {

double objective_1d(double w, double r2, double mu, double cbar) {
  return w * r2 + tls_outlier_process(w, mu, cbar);
}

/// Grid argmin of w r^2 + Phi(w) over 10^6 + 1 points of [0, 1].
std::pair<double, double> grid_argmin(double r2, double mu, double cbar) {
  const int N = 1000000;
  double best_w = 0.0, best = objective_1d(0.0, r2, mu, cbar);
  for (int k = 1; k <= N; ++k) {
    const double w = double(k) / N;
    const double v = objective_1d(w, r2, mu, cbar);
    if (v < best) {
      best = v;
      best_w = w;
    }
  }
  return {best_w, best};
}

std::vector<double> unit_cbar(const Problem &p, double c) {
  return std::vector<double>(p.robust_edge_count(), c);
}

} // namespace

TEST_CASE("tls_outlier_process: closed-form values") {
  CHECK(tls_outlier_process(1.0, 0.7, 3.0) == 0.0);
  for (double mu : {1e-4, 0.3, 1.0, 1e6})
    CHECK(tls_outlier_process(0.0, mu, 2.0) == doctest::Approx(4.0).epsilon(1e-15));
  CHECK(tls_outlier_process(0.5, 1.0, 2.0) == doctest::Approx(4.0 / 3.0).epsilon(1e-15));
  CHECK_THROWS(tls_outlier_process(1.5, 1.0, 1.0));
  CHECK_THROWS(tls_outlier_process(0.5, 0.0, 1.0));
}

TEST_CASE("tls_weight_update: examples and grid oracle") {
  CHECK(tls_weight_update(0.0, 0.5, 1.0) == 1.0);
  for (double mu : {1e-4, 1.0, 1e4})
    CHECK(tls_weight_update(1e6 * 4.0, mu, 2.0) == 0.0);
  const double w = tls_weight_update(1.0, 1.0, 1.0);
  CHECK(w == doctest::Approx(std::sqrt(2.0) - 1.0).epsilon(1e-12));
  const auto [gw, gv] = grid_argmin(1.0, 1.0, 1.0);
  CHECK(std::abs(w - gw) <= 1e-5);
  CHECK(objective_1d(w, 1.0, 1.0, 1.0) <= gv + 1e-12);
}

TEST_CASE("tls_weight_update: beats random probes and respects the box") {
  std::mt19937_64 rng(61);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 200; ++t) {
    const double cbar = 0.1 + 3.0 * u(rng);
    const double r2 = std::pow(10.0, -2.0 + 4.0 * u(rng)) * cbar * cbar;
    const double mu = std::pow(10.0, -4.0 + 8.0 * u(rng));
    const double w = tls_weight_update(r2, mu, cbar);
    CHECK(w >= 0.0);
    CHECK(w <= 1.0);
    const double best = objective_1d(w, r2, mu, cbar);
    for (int k = 0; k < 1000; ++k)
      CHECK(best <= objective_1d(u(rng), r2, mu, cbar) + 1e-12 * (1.0 + std::abs(best)));
  }
}

TEST_CASE("tls_weight_update: large mu gives the hard indicator") {
  std::mt19937_64 rng(62);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  for (double mu : {1e8, 1e10}) {
    for (int k = 0; k < 1000; ++k) {
      const double cbar = 0.5 + u(rng), r2 = u(rng) * u(rng);
      CHECK(tls_weight_update(r2, mu, cbar) == (r2 <= cbar * cbar ? 1.0 : 0.0));
    }
  }
}

TEST_CASE("evaluate_br_objective: unit weights, partial minimization, TLS limit") {
  std::mt19937_64 rng(63);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const Problem p = random_problem(rng, 2, 8, 6, 3, 0.5);
  const Estimate x = truth_of(random_problem(rng, 2, 8, 0, 3));
  const auto sq = squared_edge_residuals(p, x);
  double all = 0.0, odo = 0.0;
  for (std::size_t e = 0; e < p.edges.size(); ++e) {
    all += sq[e];
    if (!p.edges[e].robust())
      odo += sq[e];
  }
  const Eigen::Index L = static_cast<Eigen::Index>(p.robust_edge_count());
  const double cbar = 4.0;
  CHECK(rel_err(evaluate_br_objective(p, x, Vector::Ones(L), 0.7, cbar), all) <= 1e-12);

  const auto r = residual_norms(p, x);
  for (double mu : {0.01, 1.0, 30.0}) {
    Vector w(L);
    for (Eigen::Index i = 0; i < L; ++i)
      w(i) = tls_weight_update(r[i] * r[i], mu, cbar);
    const double opt = evaluate_br_objective(p, x, w, mu, cbar);
    for (int k = 0; k < 1000; ++k) {
      Vector probe(L);
      for (auto &v : probe)
        v = u(rng);
      CHECK(opt <= evaluate_br_objective(p, x, probe, mu, cbar) + 1e-12 * opt);
    }
  }

  Vector w(L);
  double tls = odo;
  for (Eigen::Index i = 0; i < L; ++i) {
    w(i) = tls_weight_update(r[i] * r[i], 1e8, cbar);
    tls += std::min(r[i] * r[i], cbar * cbar);
  }
  CHECK(rel_err(evaluate_br_objective(p, x, w, 1e8, cbar), tls) <= 1e-8);
  CHECK(rel_err(evaluate_tls_cost(p, x, unit_cbar(p, cbar)), tls) <= 1e-12);
}

TEST_CASE("init_mu: branches") {
  CHECK(init_mu({0.1, 2.0}, 2.0, 1e-4) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(init_mu({0.1, 2.0}, 2.0, 3.0) == 3.0);
  CHECK(init_mu({0.1, 0.7}, 1.0, 1e-4) == 1e6);
  CHECK(init_mu({10.0}, 1.0, 1e-4) == doctest::Approx(1.0 / 199.0).epsilon(1e-14));
  CHECK(init_mu({10.0}, 1.0, 0.01) == 0.01);
  // per-edge thresholds: the edge with the smallest cbar^2 / r^2 decides
  CHECK(init_mu({1.0, 10.0}, {0.1, 5.0}, 1e-4) ==
        doctest::Approx(0.01 / (2.0 - 0.01)).epsilon(1e-14));
}

TEST_CASE("update_mu: schedule arithmetic") {
  CHECK(update_mu(1.0, 1.4) == doctest::Approx(1.4).epsilon(1e-15));
  double mu = 0.01;
  int crossed = -1;
  for (int k = 1; k <= 20; ++k) {
    const double next = update_mu(mu, 1.4);
    CHECK(next > mu);
    mu = next;
    CHECK(mu == doctest::Approx(0.01 * std::pow(1.4, k)).epsilon(1e-13));
    if (crossed < 0 && mu >= 1.0)
      crossed = k;
  }
  CHECK(0.01 * std::pow(1.4, 12) == doctest::Approx(0.567).epsilon(1e-3));
  CHECK(crossed == 14);
  CHECK_THROWS(update_mu(1.0, 1.0));
}

TEST_CASE("suboptimality_gap: values and division guard") {
  CHECK(suboptimality_gap(5.0, 5.0).value == 0.0);
  CHECK(suboptimality_gap(1.01, 1.0).value == doctest::Approx(0.01).epsilon(1e-12));
  CHECK_FALSE(suboptimality_gap(1.01, 1.0).absolute);
  const Gap g = suboptimality_gap(1e-3, 1e-16);
  CHECK(g.absolute);
  CHECK(g.value == doctest::Approx(1e-3 - 1e-16));
}

TEST_CASE("default_cbar: chi-square quantiles") {
  using boost::math::chi_squared;
  CHECK(default_cbar(EdgeClass::LoopClosure, 2) ==
        doctest::Approx(std::sqrt(quantile(chi_squared(5), 0.99))).epsilon(1e-12));
  CHECK(default_cbar(EdgeClass::LoopClosure, 3) ==
        doctest::Approx(std::sqrt(quantile(chi_squared(9), 0.99))).epsilon(1e-12));
  CHECK(default_cbar(EdgeClass::PoseLandmark, 3, 0.95) ==
        doctest::Approx(std::sqrt(quantile(chi_squared(3), 0.95))).epsilon(1e-12));
}

TEST_CASE("gnc_solve: clean problem converges in the first iteration, tight gap") {
  const Problem p = parse_g2o(read_file(fixture("se2_ring20.g2o")));
  const GncResult r = gnc_solve(p, GncConfig{}, StaircaseConfig{}, SolverConfig{}, 0);
  CHECK(r.termination == GncTermination::WeightsConverged);
  REQUIRE(r.trace.size() == 1);
  CHECK(r.trace[0].certified);
  REQUIRE(r.trace[0].gap.has_value());
  CHECK(std::abs(*r.trace[0].gap) <= 1e-9);
  CHECK(r.outliers.empty());
  CHECK(r.all_certified);
}

TEST_CASE("gnc_solve: 30% fixture is classified exactly and traced consistently") {
  const Problem p = parse_g2o(read_file(fixture("se2_ring20_outliers30.g2o")));
  const InjectionReport inj = injection_report_from_json(
      nlohmann::json::parse(read_file(fixture("se2_ring20_outliers30.injection.json"))));
  for (InitKind init : {InitKind::Odometry, InitKind::Random}) {
    GncConfig cfg;
    cfg.init = init;
    const GncResult r = gnc_solve(p, cfg, StaircaseConfig{}, SolverConfig{}, 3);
    const OutlierScores s = score_outliers(r.outliers, inj.replaced);
    CHECK(s.precision == 1.0);
    CHECK(s.recall == 1.0);
    CHECK(r.termination != GncTermination::MaxIterations);
    CHECK(r.all_certified);
    MESSAGE("outer iterations: " << r.trace.size());
    double prev_mu = 0.0;
    for (const auto &rec : r.trace) {
      CHECK(*rec.mu >= prev_mu);
      prev_mu = *rec.mu;
      CHECK(rec.rank <= 15);
      CHECK((rec.weights.array() >= 0.0).all());
      CHECK((rec.weights.array() <= 1.0).all());
      CHECK(rec.gap.has_value() == rec.certified);
    }
    CHECK(r.inliers.size() + r.outliers.size() == p.robust_edge_count());
  }
}

TEST_CASE("gnc_solve: outer iteration count at 30% outliers over 10 seeds") {
  // Large outlier residuals clamp mu0 at mu_min, and weights only settle once
  // mu is of order one: about log(1/mu_min)/log(gamma) steps.
  const GncConfig defaults;
  const auto bound = static_cast<std::size_t>(
      std::ceil(std::log(1.0 / defaults.mu_min) / std::log(defaults.gamma))) + 5;
  std::vector<std::size_t> counts;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SyntheticSpec spec;
    spec.poses = 20;
    const Problem clean = generate_synthetic(spec, derive_seed(seed, 0));
    const auto [p, inj] = inject_outliers(clean, 0.3, derive_seed(seed, 1));
    const GncResult r = gnc_solve(p, GncConfig{}, StaircaseConfig{}, SolverConfig{}, seed);
    counts.push_back(r.trace.size());
    CHECK(r.termination != GncTermination::MaxIterations);
    CHECK(r.trace.size() <= bound);
  }
  std::string line;
  for (auto c : counts)
    line += std::to_string(c) + " ";
  MESSAGE("outer iterations per seed: " << line);
}

TEST_CASE("gnc_solve: weight update then exact solve never increases the BR objective") {
  const Problem p = parse_g2o(read_file(fixture("se2_ring20_outliers30.g2o")));
  const std::vector<double> cbar = resolve_cbar(p, GncConfig{});
  const LiftedGraph g0 = lift_graph(p, 2);
  const Eigen::Index L = static_cast<Eigen::Index>(p.robust_edge_count());
  ProductPoint Y = initial_point(p, g0.layout_ptr(), 2, InitKind::Odometry, 0);
  Vector w = Vector::Ones(L);
  StaircaseResult s = riemannian_staircase(g0.with_weights(w), Y, StaircaseConfig{});
  REQUIRE(s.certified);
  const auto r0 = residual_norms(p, s.estimate);
  std::vector<double> rr(r0.begin(), r0.end());
  double mu = init_mu(rr, cbar, 1e-4);
  for (int stage = 0; stage < 8; ++stage, mu *= 1.4) {
    const double before = evaluate_br_objective(p, s.estimate, w, mu, cbar);
    const auto r = residual_norms(p, s.estimate);
    Vector w_new(L);
    for (Eigen::Index i = 0; i < L; ++i)
      w_new(i) = tls_weight_update(r[i] * r[i], mu, cbar[i]);
    const double after_w = evaluate_br_objective(p, s.estimate, w_new, mu, cbar);
    CHECK(after_w <= before + 1e-9 * (1.0 + before));
    s = riemannian_staircase(g0.with_weights(w_new), s.Y, StaircaseConfig{});
    REQUIRE(s.certified);
    const double after_x = evaluate_br_objective(p, s.estimate, w_new, mu, cbar);
    CHECK(after_x <= after_w + 1e-8 * (1.0 + after_w));
    w = w_new;
  }
}

TEST_CASE("gnc_solve: certifiable inner at rank d reproduces the local baseline") {
  const Problem p = parse_g2o(read_file(fixture("se2_ring20_outliers30.g2o")));
  GncConfig local;
  local.inner = InnerMode::Local;
  GncConfig cert;
  cert.inner = InnerMode::Certifiable;
  StaircaseConfig fixed;
  fixed.p0 = 2;
  fixed.p_max = 2;
  const GncResult a = gnc_solve(p, local, fixed, SolverConfig{}, 5);
  const GncResult b = gnc_solve(p, cert, fixed, SolverConfig{}, 5);
  REQUIRE(a.trace.size() == b.trace.size());
  for (std::size_t k = 0; k < a.trace.size(); ++k) {
    CHECK(*a.trace[k].mu == *b.trace[k].mu);
    CHECK(a.trace[k].weighted_cost == b.trace[k].weighted_cost);
    CHECK(a.trace[k].robust_cost == b.trace[k].robust_cost);
    CHECK(a.trace[k].rank == b.trace[k].rank);
    CHECK(a.trace[k].weights == b.trace[k].weights);
  }
  CHECK(a.termination == b.termination);
  CHECK(a.outliers == b.outliers);
}

TEST_CASE("gnc_solve: fixed-mu IRLS mode keeps mu constant") {
  const Problem p = parse_g2o(read_file(fixture("se2_ring20_outliers30.g2o")));
  GncConfig cfg;
  cfg.fixed_mu = true;
  cfg.fixed_mu_value = 2.0;
  cfg.max_outer = 6;
  const GncResult r = gnc_solve(p, cfg, StaircaseConfig{}, SolverConfig{}, 0);
  for (const auto &rec : r.trace)
    CHECK(*rec.mu == 2.0);
  CHECK(r.trace.size() <= 6);
}

TEST_CASE("gnc_solve: config validation") {
  GncConfig c;
  c.gamma = 1.0;
  CHECK_THROWS(c.validate());
  c = GncConfig{};
  c.eps = 0.5;
  CHECK_THROWS(c.validate());
  c = GncConfig{};
  c.c_tol_outer = 0.0;
  CHECK_THROWS(c.validate());
}

TEST_CASE("run_pipeline: single-solve modes and failure reporting") {
  const Problem p = parse_g2o(read_file(fixture("se2_ring10_noiseless.g2o")));
  PipelineConfig cfg;
  cfg.mode = SolveMode::Certifiable;
  const PipelineResult c = run_pipeline(p, cfg);
  CHECK(c.certified);
  REQUIRE(c.trace.size() == 1);
  CHECK_FALSE(c.trace[0].mu.has_value());
  CHECK(*c.trace[0].gap <= 1e-9);
  cfg.mode = SolveMode::Local;
  const PipelineResult l = run_pipeline(p, cfg);
  CHECK_FALSE(l.certified);
  CHECK(l.trace[0].weighted_cost <= 1e-12);
  cfg.mode = SolveMode::CertiGnc;
  cfg.staircase.p0 = 40; // above p_max
  const PipelineResult f = run_pipeline(p, cfg);
  CHECK(f.termination == "solver_failure");
  CHECK(f.failure.has_value());
  CHECK(parse_solve_mode("gnc-local") == SolveMode::GncLocal);
  CHECK_THROWS(parse_solve_mode("nope"));
}
