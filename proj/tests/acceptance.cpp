// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.
#include "oracles.h"
#include "planted.h"
#include "support.h"

#include <certignc/certifier.h>
#include <certignc/gnc.h>
#include <certignc/io.h>
#include <certignc/pipeline.h>
#include <certignc/report.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

using namespace certignc;
using namespace certignc::test;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string &what) {
    if (!ok) {
      if (pass)
        detail << " first failure: " << what << ";";
      pass = false;
    }
  }
};

// 1 -------------------------------------------------------------------------

void zero_noise(Outcome &o) {
  for (int d : {2, 3}) {
    SyntheticSpec spec;
    spec.d = d;
    spec.poses = 20;
    spec.sigma_r = spec.sigma_t = 0.0;
    const Problem p = generate_synthetic(spec, derive_seed(1, 0));
    const auto t0 = Clock::now();
    const LiftedGraph g = lift_graph(p, d);
    const ProductPoint Y0 = initial_point(p, g.layout_ptr(), d, InitKind::Random, 1);
    const StaircaseResult s = riemannian_staircase(g, Y0, StaircaseConfig{});
    const double secs = seconds_since(t0);
    o.detail << " d=" << d << ": rank " << s.termination_rank << ", f_sdp "
             << s.f_sdp.value_or(NAN) << ", rounded " << s.f_qcqp << ", " << secs << " s;";
    o.require(s.certified, "certified");
    o.require(s.termination_rank <= d + 1, "level");
    o.require(s.f_sdp && *s.f_sdp <= 1e-9, "f_sdp");
    o.require(s.f_qcqp <= 1e-9, "rounded cost");
    o.require(secs < 5.0, "runtime");
  }
}

// 2 -------------------------------------------------------------------------

void tiny_oracle(Outcome &o) {
  std::mt19937_64 rng(2);
  double worst_rel = 0.0, worst_excess = -INFINITY;
  int certified = 0;
  for (int k = 0; k < 20; ++k) {
    const Problem p = three_cycle(rng, 0.1, 0.1);
    const LiftedGraph g = lift_graph(p, 2);
    const StaircaseResult s =
        riemannian_staircase(g, random_point(g.layout_ptr(), 2, k), StaircaseConfig{});
    const double opt = oracle::grid_optimum(oracle::AngleCost(p), 1e-3).cost;
    certified += s.certified;
    if (!s.certified)
      continue;
    worst_rel = std::max(worst_rel, rel_err(s.f_qcqp, opt));
    // the attained lifted cost sits on the oracle value up to rounding
    worst_excess = std::max(worst_excess, (*s.f_sdp - opt) / (1.0 + opt));
    o.require(*s.f_sdp_slack_bound <= opt, "slack bound above oracle");
    o.require(*s.f_sdp <= opt + 1e-9 * (1.0 + opt), "f_sdp above oracle");
  }
  o.require(certified == 20, "all certified");
  o.require(worst_rel <= 1e-5, "rounded cost vs oracle");
  o.detail << " certified " << certified << "/20, max rel err " << worst_rel
           << ", max (f_sdp - opt)/(1 + opt) " << worst_excess << ";";
}

// 3 -------------------------------------------------------------------------

void weight_oracle(Outcome &o) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst_w = 0.0, worst_f = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const double cbar = 0.1 + 5.0 * u(rng);
    const double r2 = std::pow(10.0, -3.0 + 6.0 * u(rng)) * cbar * cbar;
    const double mu = std::pow(10.0, -4.0 + 8.0 * u(rng));
    const double w = tls_weight_update(r2, mu, cbar);
    // objective difference to w, written without cancellation
    auto diff = [&](double x) {
      return (x - w) * (r2 - mu * cbar * cbar * (1.0 + mu) / ((mu + x) * (mu + w)));
    };
    const int N = 1000000;
    double best_x = 0.0, best = diff(0.0);
    for (int k = 1; k <= N; ++k) {
      const double x = double(k) / N;
      const double v = diff(x);
      if (v < best) {
        best = v;
        best_x = x;
      }
    }
    worst_w = std::max(worst_w, std::abs(best_x - w));
    worst_f = std::max(worst_f, -best);
  }
  o.require(worst_w <= 1e-5, "weight");
  o.require(worst_f <= 1e-9, "objective");
  o.detail << " max |w - w_grid| " << worst_w << ", max objective excess " << worst_f << ";";
}

// 4 -------------------------------------------------------------------------

void br_limit(Outcome &o) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.5, 3.0);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const int d = 2 + t % 2;
    const Problem p = random_problem(rng, d, 8, 6, 3, 0.5);
    const Estimate x = truth_of(random_problem(rng, d, 8, 0, 3));
    const double cbar = u(rng);
    const auto sq = squared_edge_residuals(p, x);
    const auto r = residual_norms(p, x);
    Vector w(static_cast<Eigen::Index>(r.size()));
    double expected = 0.0;
    std::size_t k = 0;
    for (std::size_t e = 0; e < p.edges.size(); ++e) {
      if (!p.edges[e].robust()) {
        expected += sq[e];
        continue;
      }
      const double r2 = r[k] * r[k];
      w(static_cast<Eigen::Index>(k)) = tls_weight_update(r2, 1e8, cbar);
      expected += std::min(r2, cbar * cbar);
      ++k;
    }
    worst = std::max(worst, rel_err(evaluate_br_objective(p, x, w, 1e8, cbar), expected));
  }
  o.require(worst <= 1e-8, "relative error");
  o.detail << " max rel err " << worst << ";";
}

// 5 -------------------------------------------------------------------------

void outlier_classification(Outcome &o) {
  int exact = 0, runs = 0, max_outer = 0, max_rank = 0;
  std::ostringstream misses;
  for (double rate : {0.1, 0.2, 0.3})
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      SyntheticSpec spec;
      spec.poses = 20;
      spec.sigma_r = 0.01;
      spec.sigma_t = 0.05;
      const Problem clean = generate_synthetic(spec, derive_seed(seed, 0));
      const auto [p, inj] = inject_outliers(clean, rate, derive_seed(seed, 1));
      PipelineConfig cfg;
      cfg.mode = SolveMode::CertiGnc;
      cfg.gnc.init = InitKind::Random;
      cfg.seed = seed;
      const PipelineResult r = run_pipeline(p, cfg);
      const OutlierScores s = score_outliers(r.outliers, inj.replaced);
      ++runs;
      if (s.precision == 1.0 && s.recall == 1.0)
        ++exact;
      else
        misses << " [rate " << rate << " seed " << seed << ": P " << s.precision << " R "
               << s.recall << " fp " << s.false_positives << " fn " << s.false_negatives
               << "]";
      max_outer = std::max(max_outer, static_cast<int>(r.trace.size()));
      for (const auto &rec : r.trace)
        max_rank = std::max(max_rank, rec.rank);
      o.require(r.termination != "max_iterations" && r.trace.size() <= 100, "outer iterations");
      o.require(!r.failure.has_value(), "solver failure");
    }
  o.require(exact >= 28, "exact classification count");
  o.require(max_rank <= 15, "termination rank");
  o.detail << " exact " << exact << "/" << runs << ", max outer " << max_outer
           << ", max rank " << max_rank << ";" << misses.str();
}

// 6 -------------------------------------------------------------------------

void init_independence(Outcome &o) {
  const Problem base = parse_g2o(read_file(fixture("se2_landmarks30x15.g2o")));
  const Estimate gt = read_ground_truth(read_file(fixture("se2_landmarks30x15.gt")), 2);
  double certi_odo = 0.0, certi_rand = 0.0, local_rand = 0.0;
  int local_failures = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Problem p = inject_outliers(base, 0.3, derive_seed(seed, 1)).first;
    auto run = [&](SolveMode mode, InitKind init) {
      PipelineConfig cfg;
      cfg.mode = mode;
      cfg.gnc.init = init;
      cfg.seed = seed;
      return run_pipeline(p, cfg);
    };
    const PipelineResult a = run(SolveMode::CertiGnc, InitKind::Odometry);
    const PipelineResult b = run(SolveMode::CertiGnc, InitKind::Random);
    const PipelineResult c = run(SolveMode::GncLocal, InitKind::Random);
    o.require(a.estimate && b.estimate, "certi-gnc produced an estimate");
    if (!a.estimate || !b.estimate)
      return;
    certi_odo += rmse_ate(*a.estimate, gt).translation_rmse / 10.0;
    certi_rand += rmse_ate(*b.estimate, gt).translation_rmse / 10.0;
    if (c.estimate)
      local_rand += rmse_ate(*c.estimate, gt).translation_rmse / 10.0;
    else
      ++local_failures, local_rand = INFINITY;
  }
  o.require(certi_rand <= 1.1 * certi_odo, "random vs odometry");
  o.require(certi_rand <= local_rand, "ordering against gnc-local");
  o.detail << " mean RMSE certi-gnc odometry " << certi_odo << ", random " << certi_rand
           << ", gnc-local random " << local_rand;
  if (local_failures)
    o.detail << " (" << local_failures << " gnc-local failures)";
  o.detail << ";";
}

// 7 -------------------------------------------------------------------------

void gradient_check(Outcome &o) {
  std::mt19937_64 rng(7);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const int d = 2 + trial % 2;
    const int p = trial % 4 < 2 ? d : d + 2;
    const Problem prob = random_problem(rng, d, 5 + trial % 7, 4, trial % 3);
    const LiftedGraph g = lift_graph(prob, p);
    const ProductPoint Y = random_point(g.layout_ptr(), p, 700 + trial);
    const TangentVector grad = riemannian_gradient(g, Y);
    const TangentVector V = tangent_project(Y, random_matrix(rng, Y.n(), p));
    const double h = 1e-6;
    const double fd =
        (evaluate_cost(g, retract(Y, V, h)) - evaluate_cost(g, retract(Y, V, -h))) / (2 * h);
    worst = std::max(worst, rel_err((grad.V.transpose() * V.V).trace(), fd));
  }
  o.require(worst <= 1e-5, "relative error");
  o.detail << " max rel err " << worst << ";";
}

// 8 -------------------------------------------------------------------------

void certificate_soundness(Outcome &o) {
  std::mt19937_64 rng(8);
  double worst = 0.0;
  int max_n = 0, agree = 0, certified = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const int d = 2 + trial % 2;
    const int poses = 5 + trial % 30;
    const Problem p = random_problem(rng, d, poses, poses / 2, trial % 4, 0.05 + 0.02 * (trial % 10));
    const LiftedGraph g = lift_graph(p, d);
    const SparseDataMatrix Q = assemble_data_matrix(g);
    // half the starts at the truth so both certificate outcomes occur
    const ProductPoint Y0 = trial % 2 ? random_point(g.layout_ptr(), d, trial)
                                      : embed_estimate(truth_of(p), g.layout_ptr(), d);
    const ProductPoint Y = optimize(g, Q, Y0, tight()).Y;
    const double eta = resolve_eta(StaircaseConfig{}, Q);
    const CertificateResult c = certify(Q, Y, eta);
    const double dense =
        Eigen::SelfAdjointEigenSolver<Matrix>(dense_s(Q, c.multipliers)).eigenvalues()(0);
    max_n = std::max(max_n, Q.n());
    o.require(Q.n() <= 200, "instance size");
    o.require(c.eigensolver_converged, "eigensolver converged");
    worst = std::max(worst, std::abs(c.lambda_min - dense) / (1.0 + std::abs(dense)));
    agree += c.certified == (dense >= -eta);
    certified += c.certified;
  }
  o.require(worst <= 1e-8, "lambda_min");
  o.require(agree == 50, "sign test");
  o.detail << " max |lambda - dense|/(1+|dense|) " << worst << ", sign agreement " << agree
           << "/50 (" << certified << " certified), max n " << max_n << ";";
}

// 9 -------------------------------------------------------------------------

void saddle_escape_check(Outcome &o) {
  for (std::uint64_t seed : {0, 1, 2}) {
    const Planted ps = planted_saddle(seed);
    const double opt = oracle::grid_optimum(oracle::AngleCost(ps.problem), 0.1).cost;
    const CertificateResult at_saddle =
        certify(ps.Q, ps.Y, resolve_eta(StaircaseConfig{}, ps.Q));
    StaircaseConfig cfg;
    cfg.p0 = 2;
    const StaircaseResult s = riemannian_staircase(ps.graph, ps.Q, ps.Y, cfg);
    const double err = rel_err(s.f_qcqp, opt);
    o.detail << " seed " << seed << ": saddle cost " << evaluate_cost(ps.graph, ps.Y)
             << " lambda_min " << at_saddle.lambda_min << ", certified at rank "
             << s.termination_rank << ", rel err " << err << ";";
    o.require(!at_saddle.certified, "planted point is not certified");
    o.require(s.certified, "certified");
    o.require(s.termination_rank - 2 <= 2, "rank increments");
    o.require(err <= 1e-6, "oracle");
  }
}

// 10 ------------------------------------------------------------------------

int shell(const std::string &cmd) {
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void scale_runtime(Outcome &o) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "certignc_acceptance";
  fs::create_directories(dir);
  const std::string cli = CERTIGNC_CLI_PATH;
  const std::string g2o = (dir / "intel_scale.g2o").string();
  const std::string bad = (dir / "intel_scale_20.g2o").string();
  const std::string report = (dir / "report.json").string();
  const std::string trace = (dir / "trace.csv").string();
  const std::string quiet = " > /dev/null 2>&1";
  o.require(shell(cli + " generate --poses 1200 --world grid --seed 10 --output " + g2o + quiet) == 0,
            "generate");
  o.require(shell(cli + " inject --rate 0.2 --seed 10 --input " + g2o + " --output " + bad +
                  quiet) == 0,
            "inject");
  const auto t0 = Clock::now();
  const int code = shell(cli + " solve --mode certi-gnc --seed 10 --input " + bad +
                         " --ground-truth " + g2o + ".gt --injection " + bad +
                         ".injection.json --report " + report + " --trace " + trace + quiet);
  const double secs = seconds_since(t0);
  o.require(code == 0, "solve exit code " + std::to_string(code));
  o.require(secs < 300.0, "runtime");
  o.require(shell(std::string(CERTIGNC_PYTHON) + " " + CERTIGNC_SOURCE_DIR +
                  "/tools/validate_schema.py " + CERTIGNC_SOURCE_DIR +
                  "/schemas/run_report.schema.json " + report) == 0,
            "report schema");

  std::istringstream csv(read_file(trace));
  std::string line;
  std::getline(csv, line);
  o.require(line == "iter,mu,weighted_cost,robust_cost,rank,gap,certified,ms", "trace header");
  std::size_t rows = 0;
  while (std::getline(csv, line)) {
    ++rows;
    o.require(std::count(line.begin(), line.end(), ',') == 7, "trace row arity");
  }
  const auto j = nlohmann::json::parse(read_file(report));
  o.require(rows == j["trace"].size(), "trace rows match report");
  o.detail << " " << secs << " s, " << rows << " outer iterations, status "
           << j["status"].get<std::string>() << ", precision "
           << j["metrics"]["outlier_precision"] << ", recall " << j["metrics"]["outlier_recall"]
           << ", ATE " << j["metrics"]["translation_rmse"] << ";";
}

// 11 ------------------------------------------------------------------------

void parser_round_trip(Outcome &o) {
  namespace fs = std::filesystem;
  int files = 0, landmark_files = 0;
  std::set<int> dims;
  for (const auto &entry : fs::directory_iterator(fixture(""))) {
    if (entry.path().extension() != ".g2o")
      continue;
    ++files;
    const Problem a = parse_g2o(read_file(entry.path().string()));
    const std::string once = serialize_g2o(a);
    const Problem b = parse_g2o(once);
    o.require(serialize_g2o(b) == once, "fixed point " + entry.path().filename().string());
    o.require(a.edges.size() == b.edges.size() && a.poses.size() == b.poses.size() &&
                  a.landmarks.size() == b.landmarks.size(),
              "record counts");
    dims.insert(a.d);
    landmark_files += !a.landmarks.empty();
  }
  int located = 0, malformed = 0;
  for (const auto &entry : fs::directory_iterator(fixture("malformed"))) {
    ++malformed;
    try {
      parse_g2o(read_file(entry.path().string()));
    } catch (const G2oParseError &e) {
      located += e.line() >= 1 && e.column() >= 1;
    }
  }
  o.require(files + malformed >= 6, "corpus size");
  o.require(dims.size() == 2 && landmark_files > 0, "coverage");
  o.require(malformed == 10 && located == 10, "located errors");
  o.detail << " " << files << " valid files round trip, " << located << "/" << malformed
           << " malformed files raise located errors;";
}

} // namespace

int main() {
  const std::pair<const char *, std::function<void(Outcome &)>> criteria[] = {
      {"zero-noise exactness", zero_noise},
      {"tiny-instance global-optimality oracle", tiny_oracle},
      {"weight-update oracle", weight_oracle},
      {"BR-duality limit", br_limit},
      {"outlier classification", outlier_classification},
      {"initialization independence", init_independence},
      {"gradient correctness", gradient_check},
      {"certificate soundness", certificate_soundness},
      {"saddle escape", saddle_escape_check},
      {"scale/runtime", scale_runtime},
      {"parser round trip", parser_round_trip},
  };
  int failures = 0, index = 0;
  for (const auto &[name, check] : criteria) {
    ++index;
    Outcome o;
    const auto t0 = Clock::now();
    try {
      check(o);
    } catch (const std::exception &e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    failures += !o.pass;
    std::printf("%s %2d %s (%.1f s):%s\n", o.pass ? "PASS" : "FAIL", index, name,
                seconds_since(t0), o.detail.str().c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
