// certignc command-line tool: solve, generate, inject, evaluate, bench.

#include <certignc/io.h>
#include <certignc/pipeline.h>
#include <certignc/report.h>

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

using namespace certignc;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitSolver = 3;

// Errors surfaced as exit code 2.
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

Problem load_problem(const std::string &path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const std::exception &e) {
    throw InputError(e.what());
  }
  try {
    return parse_g2o(text, path);
  } catch (const G2oParseError &e) {
    throw InputError("parse error: " + path + ": " + e.what());
  } catch (const std::invalid_argument &e) {
    throw InputError("invalid problem: " + path + ": " + e.what());
  }
}

Estimate load_ground_truth(const std::string &path, int d) {
  try {
    return read_ground_truth(read_file(path), d);
  } catch (const std::exception &e) {
    throw InputError("ground truth: " + path + ": " + e.what());
  }
}

void write_output(const std::string &path, const std::string &content) {
  try {
    write_file(path, content);
  } catch (const std::exception &e) {
    throw InputError(e.what());
  }
}

// solve ----------------------------------------------------------------------

struct SolveArgs {
  std::string input;
  std::string mode = "certi-gnc";
  std::string init = "odometry";
  std::optional<double> cbar;
  double cbar_quantile = 0.99;
  double gamma = 1.4;
  int p0 = 0;
  int pmax = 30;
  std::optional<double> eta;
  double eps = 1e-2;
  int max_outer = 100;
  std::uint64_t seed = 0;
  std::string ground_truth;
  std::string injection;
  std::string report;
  std::string trace;
  std::string output;
  bool allow_uncertified = false;
  bool no_timings = false;
};

void add_solve_options(CLI::App *cmd, SolveArgs &a) {
  cmd->add_option("--input", a.input, "input g2o file")->required();
  cmd->add_option("--mode", a.mode, "certi-gnc|gnc-local|local|certifiable")
      ->check(CLI::IsMember({"certi-gnc", "gnc-local", "local", "certifiable"}))
      ->capture_default_str();
  cmd->add_option("--init", a.init, "odometry|random")
      ->check(CLI::IsMember({"odometry", "random"}))
      ->capture_default_str();
  cmd->add_option("--cbar", a.cbar, "global TLS threshold (residual units)")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--cbar-quantile", a.cbar_quantile,
                  "chi-square quantile for per-class thresholds")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  cmd->add_option("--gamma", a.gamma, "mu growth factor")->capture_default_str();
  cmd->add_option("--p0", a.p0, "initial staircase rank (0 = d)")
      ->capture_default_str();
  cmd->add_option("--pmax", a.pmax, "maximum staircase rank")->capture_default_str();
  cmd->add_option("--eta", a.eta, "absolute certificate slack");
  cmd->add_option("--eps", a.eps, "weight convergence tolerance")
      ->capture_default_str();
  cmd->add_option("--max-outer", a.max_outer, "GNC iteration cap")
      ->capture_default_str();
  cmd->add_option("--seed", a.seed, "master seed")->capture_default_str();
  cmd->add_option("--ground-truth", a.ground_truth, "ground-truth sidecar");
  cmd->add_option("--injection", a.injection, "InjectionReport JSON");
  cmd->add_option("--report", a.report, "RunReport JSON path");
  cmd->add_option("--trace", a.trace, "trace CSV path");
  cmd->add_option("--output", a.output, "solved g2o path");
  cmd->add_flag("--allow-uncertified", a.allow_uncertified,
                "exit 0 even when a stage is uncertified");
  cmd->add_flag("--no-timings", a.no_timings,
                "leave timing fields empty so artifacts are reproducible");
}

PipelineConfig pipeline_config(const SolveArgs &a) {
  PipelineConfig cfg;
  cfg.mode = parse_solve_mode(a.mode);
  cfg.gnc.cbar = a.cbar;
  cfg.gnc.cbar_quantile = a.cbar_quantile;
  cfg.gnc.gamma = a.gamma;
  cfg.gnc.eps = a.eps;
  cfg.gnc.max_outer = a.max_outer;
  cfg.gnc.init = a.init == "random" ? InitKind::Random : InitKind::Odometry;
  cfg.staircase.p0 = a.p0;
  cfg.staircase.p_max = a.pmax;
  cfg.staircase.eta_absolute = a.eta;
  cfg.seed = a.seed;
  return cfg;
}

int cmd_solve(const SolveArgs &a) {
  const Problem problem = load_problem(a.input);
  std::optional<Estimate> gt;
  if (!a.ground_truth.empty())
    gt = load_ground_truth(a.ground_truth, problem.d);
  std::optional<InjectionReport> injection;
  if (!a.injection.empty()) {
    try {
      injection = injection_report_from_json(json::parse(read_file(a.injection)));
    } catch (const std::exception &e) {
      throw InputError("injection report: " + a.injection + ": " + e.what());
    }
  }

  PipelineConfig cfg = pipeline_config(a);
  try {
    cfg.gnc.validate();
    cfg.staircase.validate(problem.d);
  } catch (const std::invalid_argument &e) {
    throw InputError(std::string("invalid configuration: ") + e.what());
  }

  const PipelineResult result = run_pipeline(problem, cfg);

  std::optional<AteResult> ate;
  if (gt && result.estimate) {
    try {
      ate = rmse_ate(*result.estimate, *gt);
    } catch (const std::exception &e) {
      throw InputError(std::string("ground truth: ") + e.what());
    }
  }
  std::optional<OutlierScores> scores;
  if (injection)
    scores = score_outliers(result.outliers, injection->replaced);

  const bool solver_failed = result.termination == "solver_failure" ||
                             !result.estimate;
  const bool uncertified = promises_certification(cfg.mode) && !result.certified;
  std::string status = "ok";
  if (solver_failed)
    status = "solver_failure";
  else if (uncertified)
    status = "uncertified";

  RunReportInput in;
  in.config = config_json(cfg, problem, result.cbar.empty()
                                            ? resolve_cbar(problem, cfg.gnc)
                                            : result.cbar);
  in.problem = &problem;
  in.result = &result;
  in.ate = ate;
  in.outliers = scores;
  in.status = status;
  in.timings = !a.no_timings;
  const json report = run_report(in);

  if (!a.report.empty())
    write_output(a.report, dump(report));
  if (!a.trace.empty())
    write_output(a.trace, trace_csv(result.trace, !a.no_timings));
  if (!a.output.empty() && result.estimate)
    write_output(a.output, serialize_g2o(problem, result.estimate));
  if (a.report.empty())
    std::cout << dump(report);

  if (solver_failed) {
    std::cerr << "error: solver_failure: "
              << result.failure.value_or("no estimate produced") << "\n";
    return kExitSolver;
  }
  if (uncertified && !a.allow_uncertified) {
    std::cerr << "error: uncertified: "
              << result.failure.value_or("a stage was not certified") << "\n";
    return kExitSolver;
  }
  return kExitOk;
}

// generate -------------------------------------------------------------------

struct GenerateArgs {
  SyntheticSpec spec;
  std::string world = "ring";
  std::uint64_t seed = 0;
  std::string output;
  std::string ground_truth;
};

int cmd_generate(GenerateArgs a) {
  a.spec.world = a.world == "grid" ? World::Grid : World::Ring;
  try {
    a.spec.validate();
  } catch (const std::invalid_argument &e) {
    throw InputError(std::string("invalid generator spec: ") + e.what());
  }
  const Problem p = generate_synthetic(a.spec, derive_seed(a.seed, 0));
  write_output(a.output, serialize_g2o(p));
  const std::string sidecar =
      a.ground_truth.empty() ? a.output + ".gt" : a.ground_truth;
  write_output(sidecar, write_ground_truth(*p.ground_truth));
  return kExitOk;
}

// inject ---------------------------------------------------------------------

struct InjectArgs {
  std::string input;
  std::string output;
  std::string report;
  double rate = 0.0;
  std::uint64_t seed = 0;
};

int cmd_inject(const InjectArgs &a) {
  std::string text;
  try {
    text = read_file(a.input);
  } catch (const std::exception &e) {
    throw InputError(e.what());
  }
  G2oDocument doc;
  try {
    doc = parse_g2o_document(text, a.input);
  } catch (const G2oParseError &e) {
    throw InputError("parse error: " + a.input + ": " + e.what());
  }
  auto [corrupted, report] =
      inject_outliers(doc.problem, a.rate, derive_seed(a.seed, 1));
  std::ostringstream prov;
  prov << "certignc inject rate=" << a.rate << " seed=" << a.seed
       << " replaced=" << report.replaced.size() << "/" << report.eligible;
  write_output(a.output, apply_injection(doc, corrupted, report, prov.str()));
  const std::string report_path =
      a.report.empty() ? a.output + ".injection.json" : a.report;
  write_output(report_path, dump(to_json(report)));
  return kExitOk;
}

// evaluate -------------------------------------------------------------------

struct EvaluateArgs {
  std::string input;
  std::string ground_truth;
};

int cmd_evaluate(const EvaluateArgs &a) {
  const Problem p = load_problem(a.input);
  const Estimate gt = load_ground_truth(a.ground_truth, p.d);
  AteResult ate;
  try {
    ate = rmse_ate(vertices_of(p), gt);
  } catch (const std::exception &e) {
    throw InputError(std::string("evaluate: ") + e.what());
  }
  std::cout << dump(to_json(ate));
  return kExitOk;
}

// bench ----------------------------------------------------------------------

struct BenchArgs {
  std::string input;
  std::string ground_truth;
  SyntheticSpec spec;
  std::string world = "ring";
  int trials = 10;
  std::vector<double> rates{0.1, 0.2, 0.3};
  std::uint64_t seed = 0;
  unsigned jobs = 0;
  std::string report;
  std::string csv;
  bool no_timings = false;
};

struct BenchMode {
  std::string name;
  SolveMode mode;
  InitKind init;
};

const std::vector<BenchMode> kBenchModes = {
    {"certi-gnc", SolveMode::CertiGnc, InitKind::Odometry},
    {"gnc-local/odometry", SolveMode::GncLocal, InitKind::Odometry},
    {"gnc-local/random", SolveMode::GncLocal, InitKind::Random},
};

struct TrialKey {
  std::size_t rate_index;
  std::size_t mode_index;
  int trial;
};

struct TrialOutcome {
  bool ok = false;
  std::string error;
  bool certified = false;
  double translation_rmse = NAN;
  double rotation_rmse_deg = NAN;
  double wall_ms = NAN;
  double precision = NAN;
  double recall = NAN;
  std::optional<double> max_gap;
  int max_rank = 0;
  int iterations = 0;
};

json stats(std::vector<double> v) {
  v.erase(std::remove_if(v.begin(), v.end(), [](double x) { return std::isnan(x); }),
          v.end());
  if (v.empty())
    return {{"mean", nullptr}, {"median", nullptr}, {"min", nullptr}, {"max", nullptr}};
  std::sort(v.begin(), v.end());
  double sum = 0.0;
  for (double x : v)
    sum += x;
  const std::size_t n = v.size();
  const double median = n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  return {{"mean", sum / n}, {"median", median}, {"min", v.front()}, {"max", v.back()}};
}

json nullable(double v) { return std::isnan(v) ? json(nullptr) : json(v); }

std::string csv_field(double v) { return std::isnan(v) ? "" : format_double(v); }

int cmd_bench(BenchArgs a) {
  if (a.trials < 1)
    throw InputError("bench: --trials must be positive");
  for (double r : a.rates)
    if (!(r >= 0.0 && r <= 1.0))
      throw InputError("bench: rates must lie in [0, 1]");

  std::optional<Problem> base;
  std::optional<Estimate> base_gt;
  if (!a.input.empty()) {
    base = load_problem(a.input);
    if (!a.ground_truth.empty())
      base_gt = load_ground_truth(a.ground_truth, base->d);
  } else {
    a.spec.world = a.world == "grid" ? World::Grid : World::Ring;
    try {
      a.spec.validate();
    } catch (const std::invalid_argument &e) {
      throw InputError(std::string("invalid generator spec: ") + e.what());
    }
  }

  // One instance per (rate, trial), shared by all modes.
  std::vector<std::vector<Problem>> instances(a.rates.size());
  std::vector<std::vector<InjectionReport>> injections(a.rates.size());
  for (std::size_t r = 0; r < a.rates.size(); ++r) {
    for (int t = 0; t < a.trials; ++t) {
      Problem clean = base ? *base
                           : generate_synthetic(a.spec, derive_seed(derive_seed(a.seed, 0), t));
      if (base_gt)
        clean.ground_truth = base_gt;
      const std::uint64_t inj_seed =
          derive_seed(derive_seed(derive_seed(a.seed, 1), t), r);
      auto [p, rep] = inject_outliers(clean, a.rates[r], inj_seed);
      instances[r].push_back(std::move(p));
      injections[r].push_back(std::move(rep));
    }
  }

  std::vector<TrialKey> keys;
  for (std::size_t r = 0; r < a.rates.size(); ++r)
    for (std::size_t m = 0; m < kBenchModes.size(); ++m)
      for (int t = 0; t < a.trials; ++t)
        keys.push_back({r, m, t});
  std::vector<TrialOutcome> outcomes(keys.size());

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < keys.size(); k = next++) {
      const TrialKey &key = keys[k];
      const Problem &p = instances[key.rate_index][static_cast<std::size_t>(key.trial)];
      const InjectionReport &inj =
          injections[key.rate_index][static_cast<std::size_t>(key.trial)];
      const BenchMode &bm = kBenchModes[key.mode_index];
      PipelineConfig cfg;
      cfg.mode = bm.mode;
      cfg.gnc.init = bm.init;
      cfg.seed = derive_seed(a.seed, 100 + static_cast<std::uint64_t>(key.trial));
      TrialOutcome o;
      const PipelineResult res = run_pipeline(p, cfg);
      o.wall_ms = res.wall_ms;
      o.certified = res.certified;
      o.iterations = static_cast<int>(res.trace.size());
      for (const auto &rec : res.trace) {
        o.max_rank = std::max(o.max_rank, rec.rank);
        if (rec.gap)
          o.max_gap = std::max(o.max_gap.value_or(-INFINITY), *rec.gap);
      }
      if (res.estimate) {
        o.ok = true;
        const OutlierScores s = score_outliers(res.outliers, inj.replaced);
        o.precision = s.precision;
        o.recall = s.recall;
        if (p.ground_truth) {
          try {
            const AteResult ate = rmse_ate(*res.estimate, *p.ground_truth);
            o.translation_rmse = ate.translation_rmse;
            o.rotation_rmse_deg = ate.rotation_rmse_deg;
          } catch (const std::exception &e) {
            o.error = e.what();
          }
        }
      } else {
        o.error = res.failure.value_or("no estimate");
      }
      outcomes[k] = std::move(o);
    }
  };
  unsigned jobs = a.jobs ? a.jobs : std::max(1u, std::thread::hardware_concurrency());
  jobs = std::min<unsigned>(jobs, static_cast<unsigned>(keys.size()));
  std::vector<std::thread> pool;
  for (unsigned i = 0; i < jobs; ++i)
    pool.emplace_back(worker);
  for (auto &th : pool)
    th.join();

  std::ostringstream csv;
  csv << "rate,mode,trial,status,certified,translation_rmse,rotation_rmse_deg,"
         "wall_ms,outlier_precision,outlier_recall,iterations,max_rank,max_gap\n";
  json cells = json::array();
  json trials = json::array();
  for (std::size_t r = 0; r < a.rates.size(); ++r) {
    for (std::size_t m = 0; m < kBenchModes.size(); ++m) {
      std::vector<double> tr, rr, ms, pr, rc;
      int failed = 0;
      for (std::size_t k = 0; k < keys.size(); ++k) {
        if (keys[k].rate_index != r || keys[k].mode_index != m)
          continue;
        const TrialOutcome &o = outcomes[k];
        const double wall = a.no_timings ? NAN : o.wall_ms;
        if (!o.ok)
          ++failed;
        tr.push_back(o.translation_rmse);
        rr.push_back(o.rotation_rmse_deg);
        ms.push_back(wall);
        pr.push_back(o.precision);
        rc.push_back(o.recall);
        csv << format_double(a.rates[r]) << ',' << kBenchModes[m].name << ','
            << keys[k].trial << ',' << (o.ok ? "ok" : "failed") << ','
            << (o.certified ? "true" : "false") << ',' << csv_field(o.translation_rmse)
            << ',' << csv_field(o.rotation_rmse_deg) << ',' << csv_field(wall) << ','
            << csv_field(o.precision) << ',' << csv_field(o.recall) << ','
            << o.iterations << ',' << o.max_rank << ','
            << (o.max_gap ? format_double(*o.max_gap) : "") << '\n';
        trials.push_back({{"rate", a.rates[r]},
                          {"mode", kBenchModes[m].name},
                          {"trial", keys[k].trial},
                          {"status", o.ok ? "ok" : "failed"},
                          {"error", o.error.empty() ? json(nullptr) : json(o.error)},
                          {"certified", o.certified},
                          {"translation_rmse", nullable(o.translation_rmse)},
                          {"rotation_rmse_deg", nullable(o.rotation_rmse_deg)},
                          {"wall_ms", nullable(wall)},
                          {"outlier_precision", nullable(o.precision)},
                          {"outlier_recall", nullable(o.recall)},
                          {"iterations", o.iterations},
                          {"max_rank", o.max_rank},
                          {"max_gap", o.max_gap ? json(*o.max_gap) : json(nullptr)}});
      }
      cells.push_back({{"rate", a.rates[r]},
                       {"mode", kBenchModes[m].name},
                       {"trials", a.trials},
                       {"failed", failed},
                       {"translation_rmse", stats(tr)},
                       {"rotation_rmse_deg", stats(rr)},
                       {"wall_ms", stats(ms)},
                       {"outlier_precision", stats(pr)},
                       {"outlier_recall", stats(rc)}});
    }
  }

  json out;
  out["schema_version"] = kReportSchemaVersion;
  out["config"] = {{"seed", a.seed},
                   {"trials", a.trials},
                   {"rates", a.rates},
                   {"modes", json::array({"certi-gnc", "gnc-local/odometry",
                                          "gnc-local/random"})},
                   {"input", a.input.empty() ? json(nullptr) : json(a.input)}};
  out["cells"] = std::move(cells);
  out["trials"] = std::move(trials);
  if (!a.report.empty())
    write_output(a.report, dump(out));
  else
    std::cout << dump(out);
  if (!a.csv.empty())
    write_output(a.csv, csv.str());
  return kExitOk;
}

void add_generator_options(CLI::App *cmd, SyntheticSpec &spec, std::string &world) {
  cmd->add_option("--dim", spec.d, "2 or 3")->check(CLI::IsMember({2, 3}))
      ->capture_default_str();
  cmd->add_option("--poses", spec.poses, "number of poses")->capture_default_str();
  cmd->add_option("--world", world, "ring|grid")
      ->check(CLI::IsMember({"ring", "grid"}))
      ->capture_default_str();
  cmd->add_option("--sigma-r", spec.sigma_r, "rotation noise (rad)")
      ->capture_default_str();
  cmd->add_option("--sigma-t", spec.sigma_t, "translation noise")
      ->capture_default_str();
  cmd->add_option("--lc-prob", spec.lc_prob, "loop-closure probability")
      ->capture_default_str();
  cmd->add_option("--lc-distance", spec.lc_distance, "loop-closure radius")
      ->capture_default_str();
  cmd->add_option("--landmarks", spec.landmarks, "number of landmarks (2D)")
      ->capture_default_str();
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"certignc: certifiably correct robust factor-graph optimization"};
  app.require_subcommand(1);

  SolveArgs solve;
  add_solve_options(app.add_subcommand("solve", "solve a g2o problem"), solve);

  GenerateArgs gen;
  auto *gen_cmd = app.add_subcommand("generate", "write a synthetic problem");
  add_generator_options(gen_cmd, gen.spec, gen.world);
  gen_cmd->add_option("--seed", gen.seed, "master seed")->capture_default_str();
  gen_cmd->add_option("--output", gen.output, "g2o path")->required();
  gen_cmd->add_option("--ground-truth", gen.ground_truth,
                      "sidecar path (default <output>.gt)");

  InjectArgs inj;
  auto *inj_cmd = app.add_subcommand("inject", "replace robust edges by outliers");
  inj_cmd->add_option("--input", inj.input, "input g2o")->required();
  inj_cmd->add_option("--output", inj.output, "corrupted g2o")->required();
  inj_cmd->add_option("--report", inj.report,
                      "InjectionReport path (default <output>.injection.json)");
  inj_cmd->add_option("--rate", inj.rate, "fraction of robust edges")
      ->check(CLI::Range(0.0, 1.0))
      ->required();
  inj_cmd->add_option("--seed", inj.seed, "master seed")->capture_default_str();

  EvaluateArgs ev;
  auto *ev_cmd = app.add_subcommand("evaluate", "RMSE-ATE against ground truth");
  ev_cmd->add_option("--input", ev.input, "solved g2o")->required();
  ev_cmd->add_option("--ground-truth", ev.ground_truth, "sidecar")->required();

  BenchArgs bench;
  auto *bench_cmd = app.add_subcommand("bench", "Monte Carlo comparison of modes");
  bench_cmd->add_option("--input", bench.input,
                        "clean g2o (default: generate per trial)");
  bench_cmd->add_option("--ground-truth", bench.ground_truth, "sidecar for --input");
  add_generator_options(bench_cmd, bench.spec, bench.world);
  bench_cmd->add_option("--trials", bench.trials, "trials per cell")
      ->capture_default_str();
  bench_cmd->add_option("--rates", bench.rates, "outlier rates")
      ->delimiter(',')
      ->capture_default_str();
  bench_cmd->add_option("--seed", bench.seed, "master seed")->capture_default_str();
  bench_cmd->add_option("--jobs", bench.jobs, "worker threads (0 = all cores)");
  bench_cmd->add_option("--report", bench.report, "aggregate JSON path");
  bench_cmd->add_option("--csv", bench.csv, "long-format CSV path");
  bench_cmd->add_flag("--no-timings", bench.no_timings, "omit wall times");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    std::cerr << "error: usage: " << e.what() << "\n";
    return kExitInput;
  }

  try {
    if (app.got_subcommand("solve"))
      return cmd_solve(solve);
    if (app.got_subcommand("generate"))
      return cmd_generate(gen);
    if (app.got_subcommand("inject"))
      return cmd_inject(inj);
    if (app.got_subcommand("evaluate"))
      return cmd_evaluate(ev);
    if (app.got_subcommand("bench"))
      return cmd_bench(bench);
  } catch (const InputError &e) {
    std::cerr << "error: input: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception &e) {
    std::cerr << "error: internal: " << e.what() << "\n";
    return kExitSolver;
  }
  return kExitOk;
}
