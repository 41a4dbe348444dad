#include "support.h"

#include <certignc/report.h>

#include <doctest.h>

#include <sstream>

using namespace certignc;
using namespace certignc::test;

TEST_CASE("score_outliers: counts and empty denominators") {
  const OutlierScores s = score_outliers({4, 1, 9}, {1, 2, 4, 7});
  CHECK(s.true_positives == 2);
  CHECK(s.false_positives == 1);
  CHECK(s.false_negatives == 2);
  CHECK(s.precision == doctest::Approx(2.0 / 3.0));
  CHECK(s.recall == 0.5);
  const OutlierScores none = score_outliers({}, {});
  CHECK(none.precision == 1.0);
  CHECK(none.recall == 1.0);
  CHECK(score_outliers({3}, {}).precision == 0.0);
  CHECK(score_outliers({}, {3}).recall == 0.0);
}

TEST_CASE("trace_csv: header, empty optionals and timings switch") {
  GncTrace trace(2);
  trace[0].iteration = 0;
  trace[0].weighted_cost = 1.5;
  trace[0].robust_cost = 2.0;
  trace[0].rank = 3;
  trace[0].ms = 4.25;
  trace[1].iteration = 1;
  trace[1].mu = 0.5;
  trace[1].gap = 1e-12;
  trace[1].certified = true;
  trace[1].rank = 2;
  const std::string csv = trace_csv(trace);
  std::istringstream in(csv);
  std::string header, row0, row1, extra;
  std::getline(in, header);
  std::getline(in, row0);
  std::getline(in, row1);
  CHECK_FALSE(std::getline(in, extra));
  CHECK(header == "iter,mu,weighted_cost,robust_cost,rank,gap,certified,ms");
  CHECK(row0 == "0,,1.5,2,3,,false,4.25");
  CHECK(row1 == "1,0.5,0,0,2,9.9999999999999998e-13,true,0");
  CHECK(trace_csv(trace, false).find("false,\n") != std::string::npos);

  const nlohmann::json j = trace_json(trace, false);
  CHECK(j[0]["mu"].is_null());
  CHECK(j[0]["gap"].is_null());
  CHECK(j[0]["ms"].is_null());
  CHECK(j[1]["mu"] == 0.5);
  CHECK(j[1]["gap_absolute"] == false);
}

TEST_CASE("injection report json round trip") {
  SyntheticSpec spec;
  spec.lc_prob = 1.0;
  const Problem p = generate_synthetic(spec, 5);
  const InjectionReport r = inject_outliers(p, 0.5, 11).second;
  const nlohmann::json j = to_json(r);
  CHECK(j["edges"].size() == r.replaced.size());
  const InjectionReport back = injection_report_from_json(nlohmann::json::parse(dump(j)));
  CHECK(back.replaced == r.replaced);
  CHECK(back.seed == r.seed);
  CHECK(back.eligible == r.eligible);
  CHECK(back.rate == r.rate);
}

TEST_CASE("run_report: sections and counts") {
  const Problem p = parse_g2o(read_file(fixture("se2_ring20.g2o")), "ring.g2o");
  PipelineConfig cfg;
  const PipelineResult r = run_pipeline(p, cfg);
  RunReportInput in;
  in.config = {{"mode", "certi-gnc"}};
  in.problem = &p;
  in.result = &r;
  in.status = "ok";
  in.timings = false;
  const nlohmann::json j = run_report(in);
  CHECK(j["schema_version"] == kReportSchemaVersion);
  CHECK(j["problem"]["source"] == "ring.g2o");
  CHECK(j["problem"]["poses"] == 20);
  CHECK(j["problem"]["odometry_edges"].get<std::size_t>() +
            j["problem"]["loop_closure_edges"].get<std::size_t>() ==
        p.edges.size());
  CHECK(j["trace"].size() == r.trace.size());
  CHECK(j["result"]["certified"] == r.certified);
  CHECK(j["result"]["failure"].is_null());
  CHECK(j["metrics"]["translation_rmse"].is_null());
  CHECK(j["wall_ms"].is_null());
  CHECK(dump(j) == dump(run_report(in)));
  CHECK(dump(j).back() == '\n');
}
