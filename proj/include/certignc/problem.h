#pragma once

#include <certignc/types.h>

#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace certignc {

struct Pose {
  Matrix R; // d x d, SO(d)
  Vector t; // d
};

/// Relative pose measurement (R_ij, t_ij) expressed in the frame of pose i.
struct RelativePoseMeasurement {
  int i = 0;
  int j = 0;
  Matrix R;
  Vector t;
  double kappa = 1.0;
  double tau = 1.0;
};

/// Landmark position observed in the frame of pose i.
struct PoseLandmarkMeasurement {
  int pose = 0;
  int landmark = 0;
  Vector l;
  double tau = 1.0;
};

enum class EdgeClass { Odometry, LoopClosure, PoseLandmark };

std::string to_string(EdgeClass c);

struct MeasurementEdge {
  std::variant<RelativePoseMeasurement, PoseLandmarkMeasurement> measurement;
  EdgeClass cls = EdgeClass::Odometry;

  /// Loop closures and landmark observations are subject to GNC reweighting;
  /// odometry never is.
  bool robust() const { return cls != EdgeClass::Odometry; }
  bool is_relative_pose() const {
    return std::holds_alternative<RelativePoseMeasurement>(measurement);
  }
  const RelativePoseMeasurement &relative_pose() const {
    return std::get<RelativePoseMeasurement>(measurement);
  }
  const PoseLandmarkMeasurement &pose_landmark() const {
    return std::get<PoseLandmarkMeasurement>(measurement);
  }
};

/// A rank-d estimate (or ground truth) in problem space.
struct Estimate {
  int d = 2;
  std::map<int, Pose> poses;
  std::map<int, Vector> landmarks;
};

struct Problem {
  int d = 2;
  /// Vertex values (initial guess from a file, or ground truth for synthetic
  /// problems). Every pose/landmark referenced by an edge must be present.
  std::map<int, Pose> poses;
  std::map<int, Vector> landmarks;
  std::vector<MeasurementEdge> edges;

  std::string source;
  double scene_scale = 1.0;
  /// Set when precisions were isotropized from an anisotropic information
  /// matrix on load.
  bool precisions_isotropized = false;
  std::optional<Estimate> ground_truth;

  /// Throws std::invalid_argument on dangling ids, bad precisions or
  /// non-rotation measurements.
  void validate() const;

  std::vector<std::size_t> robust_edge_indices() const;
  std::size_t robust_edge_count() const;
};

/// Max pairwise translation distance of the given pose/landmark positions.
double max_pairwise_distance(const Estimate &est);

/// Scene scale as used by outlier injection: max pairwise ground-truth
/// distance if ground truth exists, else the max measured translation norm.
double compute_scene_scale(const Problem &problem);

/// Compose odometry edges (BFS from the smallest pose id) into an initial
/// guess. Poses unreachable via odometry are reached through any pose edge;
/// landmarks are placed from their first observation.
Estimate odometry_initialization(const Problem &problem);

/// Rotation helpers.
Matrix rotation_2d(double theta);
double angle_2d(const Matrix &R);
/// Geodesic angle between two rotations, radians.
double rotation_angle_between(const Matrix &A, const Matrix &B);
/// Unit quaternion (x, y, z, w) to rotation matrix.
Matrix quaternion_to_rotation(double qx, double qy, double qz, double qw);
/// Rotation matrix to unit quaternion (x, y, z, w) with w >= 0.
Eigen::Vector4d rotation_to_quaternion(const Matrix &R);
/// Rodrigues formula.
Matrix axis_angle_to_rotation(const Eigen::Vector3d &axis, double angle);

} // namespace certignc
