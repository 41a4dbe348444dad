#pragma once

#include <certignc/problem.h>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace certignc {

/// Parse failure pointing at a 1-based line and column.
class G2oParseError : public std::runtime_error {
public:
  G2oParseError(int line, int column, const std::string &message);
  int line() const { return line_; }
  int column() const { return column_; }
  const std::string &message() const { return message_; }

private:
  int line_;
  int column_;
  std::string message_;
};

/// Parsed document: the problem plus the raw lines, so edits can keep the
/// original text of untouched records.
struct G2oDocument {
  Problem problem;
  std::vector<std::string> lines;
  /// 0-based line index of every edge in problem.edges.
  std::vector<std::size_t> edge_lines;
};

G2oDocument parse_g2o_document(const std::string &text,
                               const std::string &source = "");
Problem parse_g2o(const std::string &text, const std::string &source = "");

/// Vertices come from `vertices` when given, else from problem.poses /
/// problem.landmarks. Floats are written with 17 significant digits.
std::string serialize_g2o(const Problem &problem,
                          const std::optional<Estimate> &vertices = std::nullopt);

/// Isotropic (kappa, tau) from a (d+1)x(d+1) (d=2) or 6x6 (d=3) information
/// matrix; translation block first for SE3, last row/col is theta for SE2.
std::pair<double, double> extract_precisions(const Matrix &information, int d);

struct InjectedEdge {
  std::size_t edge_index = 0;
  MeasurementEdge original;
  MeasurementEdge corrupted;
};

struct InjectionReport {
  double rate = 0.0;
  std::uint64_t seed = 0;
  std::size_t eligible = 0;
  std::vector<std::size_t> replaced; // sorted edge indices
  std::vector<InjectedEdge> edges;
};

/// Replaces round(beta L + 1/2) of the L robust edges by random measurements:
/// uniform rotation, translation uniform in a ball of radius scene_scale.
std::pair<Problem, InjectionReport> inject_outliers(const Problem &problem,
                                                    double beta,
                                                    std::uint64_t seed);

/// Rewrites only the replaced edge lines of `doc`, keeping their information
/// entries, and prefixes a provenance comment.
std::string apply_injection(const G2oDocument &doc, const Problem &corrupted,
                            const InjectionReport &report,
                            const std::string &provenance);

enum class World { Ring, Grid };

struct SyntheticSpec {
  int d = 2;
  int poses = 20;
  World world = World::Ring;
  double sigma_r = 0.01;
  double sigma_t = 0.05;
  /// Probability of a loop closure for each non-adjacent pose pair closer
  /// than lc_distance (in step lengths).
  double lc_prob = 0.5;
  double lc_distance = 1.5;
  int landmarks = 0;
  double observation_radius = 3.0;

  void validate() const;
};

/// Ground truth in problem.ground_truth; problem.poses holds the
/// odometry-composed initial guess.
Problem generate_synthetic(const SyntheticSpec &spec, std::uint64_t seed);

struct AteResult {
  double translation_rmse = 0.0;
  double rotation_rmse_deg = 0.0;
  Matrix R_align;
  Vector t_align;
};

/// Rigid alignment of the estimate onto the ground truth (Procrustes with
/// determinant correction), then RMSE over poses and landmarks.
AteResult rmse_ate(const Estimate &estimate, const Estimate &ground_truth);

/// `id x y theta` / `id x y z qx qy qz qw` pose rows, `L id x y [z]` rows for
/// landmarks.
std::string write_ground_truth(const Estimate &gt);
Estimate read_ground_truth(const std::string &text, int d);

/// Estimate made of the vertex values of a problem.
Estimate vertices_of(const Problem &problem);

std::string read_file(const std::string &path);
void write_file(const std::string &path, const std::string &content);

/// %.17g formatting.
std::string format_double(double v);

} // namespace certignc
