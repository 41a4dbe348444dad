#pragma once

#include <certignc/gnc.h>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace certignc {

/// certi-gnc: GNC over the staircase. gnc-local: GNC over one rank-d solve.
/// local: one rank-d weighted solve. certifiable: staircase without GNC.
enum class SolveMode { CertiGnc, GncLocal, Local, Certifiable };

std::string to_string(SolveMode m);
SolveMode parse_solve_mode(const std::string &s);
/// Modes whose promise includes a certificate at every stage.
bool promises_certification(SolveMode m);

struct PipelineConfig {
  SolveMode mode = SolveMode::CertiGnc;
  GncConfig gnc;
  StaircaseConfig staircase;
  SolverConfig solver;
  std::uint64_t seed = 0;
};

struct PipelineResult {
  std::optional<Estimate> estimate;
  GncTrace trace;
  std::string termination;
  /// Every stage certified (always false for modes without certificates).
  bool certified = false;
  int final_rank = 0;
  Vector weights;
  std::vector<double> cbar;
  std::vector<std::size_t> inliers;
  std::vector<std::size_t> outliers;
  double wall_ms = 0.0;
  std::optional<std::string> failure;
};

PipelineResult run_pipeline(const Problem &problem, const PipelineConfig &cfg);

} // namespace certignc
