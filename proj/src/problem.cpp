#include <certignc/problem.h>

#include <Eigen/LU>

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <deque>

namespace certignc {

std::string to_string(EdgeClass c) {
  switch (c) {
  case EdgeClass::Odometry:
    return "odometry";
  case EdgeClass::LoopClosure:
    return "loop_closure";
  case EdgeClass::PoseLandmark:
    return "pose_landmark";
  }
  return "";
}

namespace {

void check_rotation(const Matrix &R, int d, const std::string &what) {
  if (R.rows() != d || R.cols() != d)
    throw std::invalid_argument(what + ": rotation has wrong shape");
  const double orth = (R * R.transpose() - Matrix::Identity(d, d)).norm();
  if (orth > 1e-9 || R.determinant() < 0)
    throw std::invalid_argument(what + ": measurement rotation not in SO(d)");
}

} // namespace

void Problem::validate() const {
  if (d != 2 && d != 3)
    throw std::invalid_argument("dimension must be 2 or 3");
  for (std::size_t k = 0; k < edges.size(); ++k) {
    const auto &e = edges[k];
    const std::string where = "edge " + std::to_string(k);
    if (e.is_relative_pose()) {
      const auto &m = e.relative_pose();
      if (!poses.count(m.i) || !poses.count(m.j))
        throw std::invalid_argument(where + ": references unknown pose");
      if (m.i == m.j)
        throw std::invalid_argument(where + ": self-loop");
      if (!(m.kappa > 0) || !(m.tau > 0))
        throw std::invalid_argument(where + ": precisions must be positive");
      if (m.t.size() != d)
        throw std::invalid_argument(where + ": translation has wrong size");
      check_rotation(m.R, d, where);
      if (e.cls == EdgeClass::PoseLandmark)
        throw std::invalid_argument(where + ": pose edge labelled landmark");
    } else {
      const auto &m = e.pose_landmark();
      if (!poses.count(m.pose) || !landmarks.count(m.landmark))
        throw std::invalid_argument(where + ": references unknown variable");
      if (!(m.tau > 0))
        throw std::invalid_argument(where + ": precision must be positive");
      if (m.l.size() != d)
        throw std::invalid_argument(where + ": landmark vector wrong size");
      if (e.cls != EdgeClass::PoseLandmark)
        throw std::invalid_argument(where + ": landmark edge misclassified");
    }
  }
}

std::vector<std::size_t> Problem::robust_edge_indices() const {
  std::vector<std::size_t> idx;
  for (std::size_t k = 0; k < edges.size(); ++k)
    if (edges[k].robust())
      idx.push_back(k);
  return idx;
}

std::size_t Problem::robust_edge_count() const {
  return static_cast<std::size_t>(
      std::count_if(edges.begin(), edges.end(),
                    [](const MeasurementEdge &e) { return e.robust(); }));
}

double max_pairwise_distance(const Estimate &est) {
  std::vector<Vector> pts;
  for (const auto &[id, p] : est.poses)
    pts.push_back(p.t);
  for (const auto &[id, l] : est.landmarks)
    pts.push_back(l);
  double best = 0.0;
  for (std::size_t a = 0; a < pts.size(); ++a)
    for (std::size_t b = a + 1; b < pts.size(); ++b)
      best = std::max(best, (pts[a] - pts[b]).norm());
  return best;
}

double compute_scene_scale(const Problem &problem) {
  if (problem.ground_truth) {
    const double s = max_pairwise_distance(*problem.ground_truth);
    if (s > 0)
      return s;
  }
  double best = 0.0;
  for (const auto &e : problem.edges) {
    if (e.is_relative_pose())
      best = std::max(best, e.relative_pose().t.norm());
    else
      best = std::max(best, e.pose_landmark().l.norm());
  }
  return best > 0 ? best : 1.0;
}

Estimate odometry_initialization(const Problem &problem) {
  const int d = problem.d;
  Estimate est;
  est.d = d;
  if (problem.poses.empty())
    return est;

  auto place_neighbour = [&](const RelativePoseMeasurement &m) -> int {
    if (est.poses.count(m.i) && !est.poses.count(m.j)) {
      const Pose &pi = est.poses.at(m.i);
      est.poses[m.j] = Pose{pi.R * m.R, pi.t + pi.R * m.t};
      return m.j;
    }
    if (est.poses.count(m.j) && !est.poses.count(m.i)) {
      const Pose &pj = est.poses.at(m.j);
      const Matrix Ri = pj.R * m.R.transpose();
      est.poses[m.i] = Pose{Ri, pj.t - Ri * m.t};
      return m.i;
    }
    return -1;
  };

  std::map<int, std::vector<std::size_t>> odometry_incident;
  for (std::size_t k = 0; k < problem.edges.size(); ++k) {
    const auto &e = problem.edges[k];
    if (e.cls != EdgeClass::Odometry)
      continue;
    odometry_incident[e.relative_pose().i].push_back(k);
    odometry_incident[e.relative_pose().j].push_back(k);
  }

  const int root = problem.poses.begin()->first;
  est.poses[root] = Pose{Matrix::Identity(d, d), Vector::Zero(d)};
  std::deque<int> queue{root};
  while (!queue.empty()) {
    const int cur = queue.front();
    queue.pop_front();
    for (std::size_t k : odometry_incident[cur]) {
      const int placed = place_neighbour(problem.edges[k].relative_pose());
      if (placed >= 0)
        queue.push_back(placed);
    }
  }

  // Anything the odometry chain misses is reached through other pose edges.
  bool grew = true;
  while (grew) {
    grew = false;
    for (const auto &e : problem.edges)
      if (e.is_relative_pose() && place_neighbour(e.relative_pose()) >= 0)
        grew = true;
  }
  for (const auto &[id, unused] : problem.poses)
    if (!est.poses.count(id))
      est.poses[id] = Pose{Matrix::Identity(d, d), Vector::Zero(d)};

  for (const auto &e : problem.edges) {
    if (e.is_relative_pose())
      continue;
    const auto &m = e.pose_landmark();
    if (est.landmarks.count(m.landmark))
      continue;
    const Pose &p = est.poses.at(m.pose);
    est.landmarks[m.landmark] = p.t + p.R * m.l;
  }
  for (const auto &[id, unused] : problem.landmarks)
    if (!est.landmarks.count(id))
      est.landmarks[id] = Vector::Zero(d);
  return est;
}

Matrix rotation_2d(double theta) {
  Matrix R(2, 2);
  const double c = std::cos(theta), s = std::sin(theta);
  R << c, -s, s, c;
  return R;
}

double angle_2d(const Matrix &R) { return std::atan2(R(1, 0), R(0, 0)); }

double rotation_angle_between(const Matrix &A, const Matrix &B) {
  const Matrix rel = A.transpose() * B;
  if (rel.rows() == 2)
    return std::abs(angle_2d(rel));
  // atan2 of the skew part keeps small angles accurate
  const Eigen::Vector3d w(rel(2, 1) - rel(1, 2), rel(0, 2) - rel(2, 0), rel(1, 0) - rel(0, 1));
  return std::atan2(0.5 * w.norm(), 0.5 * (rel.trace() - 1.0));
}

Matrix quaternion_to_rotation(double qx, double qy, double qz, double qw) {
  Eigen::Quaterniond q(qw, qx, qy, qz);
  q.normalize();
  return q.toRotationMatrix();
}

Eigen::Vector4d rotation_to_quaternion(const Matrix &R) {
  Eigen::Matrix3d R3 = R;
  Eigen::Quaterniond q(R3);
  q.normalize();
  if (q.w() < 0)
    q.coeffs() *= -1.0;
  return {q.x(), q.y(), q.z(), q.w()};
}

Matrix axis_angle_to_rotation(const Eigen::Vector3d &axis, double angle) {
  return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
}

} // namespace certignc
