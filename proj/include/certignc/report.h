#pragma once

#include <certignc/io.h>
#include <certignc/pipeline.h>

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace certignc {

inline constexpr const char *kReportSchemaVersion = "1.0.0";

struct OutlierScores {
  double precision = 1.0;
  double recall = 1.0;
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
  std::size_t false_negatives = 0;
};

/// Precision/recall of the classified outlier set against the injected one;
/// an empty denominator scores 1.
OutlierScores score_outliers(const std::vector<std::size_t> &classified,
                             const std::vector<std::size_t> &injected);

nlohmann::json to_json(const InjectionReport &report);
InjectionReport injection_report_from_json(const nlohmann::json &j);

nlohmann::json to_json(const AteResult &ate);

/// Header `iter,mu,weighted_cost,robust_cost,rank,gap,certified,ms`; absent
/// values are empty fields. Timings are blank when `timings` is false.
std::string trace_csv(const GncTrace &trace, bool timings = true);

nlohmann::json trace_json(const GncTrace &trace, bool timings = true);

/// Config section of a RunReport; `cbar` holds one threshold per robust edge.
nlohmann::json config_json(const PipelineConfig &cfg, const Problem &problem,
                           const std::vector<double> &cbar);

struct RunReportInput {
  nlohmann::json config;
  const Problem *problem = nullptr;
  const PipelineResult *result = nullptr;
  std::optional<AteResult> ate;
  std::optional<OutlierScores> outliers;
  std::string status; // ok | uncertified | solver_failure
  bool timings = true;
};

nlohmann::json run_report(const RunReportInput &in);

/// JSON text with a trailing newline.
std::string dump(const nlohmann::json &j);

} // namespace certignc
