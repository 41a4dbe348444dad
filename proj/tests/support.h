#pragma once

#include <certignc/factor_graph.h>
#include <certignc/io.h>
#include <certignc/manifolds.h>
#include <certignc/problem.h>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/SVD>

#include <cmath>
#include <memory>
#include <random>
#include <string>

namespace certignc::test {

inline std::string fixture(const std::string &name) {
  return std::string(CERTIGNC_FIXTURE_DIR) + "/" + name;
}

inline Matrix random_matrix(std::mt19937_64 &rng, int rows, int cols) {
  std::normal_distribution<double> normal;
  Matrix M(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      M(r, c) = normal(rng);
  return M;
}

inline Matrix random_rotation(std::mt19937_64 &rng, int d) {
  Eigen::HouseholderQR<Matrix> qr(random_matrix(rng, d, d));
  Matrix Q = qr.householderQ();
  if (Q.determinant() < 0)
    Q.col(0) *= -1.0;
  return Q;
}

inline LayoutPtr layout_of(const Problem &p) {
  return std::make_shared<const Layout>(Layout::from_problem(p));
}

/// Relative-pose edge measured exactly from two poses, plus optional
/// rotation / translation noise.
inline MeasurementEdge relative_edge(const Pose &a, const Pose &b, int i, int j,
                                     EdgeClass cls, double kappa, double tau,
                                     const Matrix &R_noise, const Vector &t_noise) {
  RelativePoseMeasurement m;
  m.i = i;
  m.j = j;
  m.R = a.R.transpose() * b.R * R_noise;
  m.t = a.R.transpose() * (b.t - a.t) + t_noise;
  m.kappa = kappa;
  m.tau = tau;
  return {m, cls};
}

/// Small random problem: `n` poses on a chain plus random loop closures and
/// optional landmark observations, noisy, d = 2 or 3.
inline Problem random_problem(std::mt19937_64 &rng, int d, int n, int loops,
                              int landmarks = 0, double noise = 0.1) {
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif(0.5, 3.0);
  Problem p;
  p.d = d;
  for (int i = 0; i < n; ++i)
    p.poses[i] = {random_rotation(rng, d), 3.0 * random_matrix(rng, d, 1)};
  auto noisy = [&](int i, int j, EdgeClass cls) {
    const double angle = noise * normal(rng);
    Matrix Rn = d == 2 ? rotation_2d(angle)
                       : axis_angle_to_rotation(random_matrix(rng, 3, 1), angle);
    Vector tn = noise * random_matrix(rng, d, 1);
    p.edges.push_back(relative_edge(p.poses[i], p.poses[j], i, j, cls, unif(rng),
                                    unif(rng), Rn, tn));
  };
  for (int i = 0; i + 1 < n; ++i)
    noisy(i, i + 1, EdgeClass::Odometry);
  std::uniform_int_distribution<int> pick(0, n - 1);
  for (int k = 0; k < loops; ++k) {
    int i = pick(rng), j = pick(rng);
    while (j == i)
      j = pick(rng);
    noisy(i, j, EdgeClass::LoopClosure);
  }
  for (int l = 0; l < landmarks; ++l) {
    const int id = n + l;
    p.landmarks[id] = 3.0 * random_matrix(rng, d, 1);
    for (int rep = 0; rep < 2; ++rep) {
      const int i = pick(rng);
      PoseLandmarkMeasurement m;
      m.pose = i;
      m.landmark = id;
      m.l = p.poses[i].R.transpose() * (p.landmarks[id] - p.poses[i].t) +
            noise * random_matrix(rng, d, 1);
      m.tau = unif(rng);
      p.edges.push_back({m, EdgeClass::PoseLandmark});
    }
  }
  p.validate();
  p.scene_scale = compute_scene_scale(p);
  return p;
}

/// d = 2 ring of `n` poses on a circle of radius `radius`, heading along the
/// tangent: odometry k -> k+1 and the closing edge n-1 -> 0 as a loop closure.
/// Noise angle ~ N(0, sigma_r), translation noise ~ N(0, sigma_t^2 I).
inline Problem ring_2d(std::mt19937_64 &rng, int n, double radius, double sigma_r,
                       double sigma_t, double kappa, double tau) {
  std::normal_distribution<double> normal;
  Problem p;
  p.d = 2;
  for (int k = 0; k < n; ++k) {
    const double a = 2.0 * M_PI * k / n;
    Vector t(2);
    t << radius * std::cos(a), radius * std::sin(a);
    p.poses[k] = {rotation_2d(a + M_PI / 2), t};
  }
  for (int k = 0; k < n; ++k) {
    const int j = (k + 1) % n;
    const Matrix Rn = rotation_2d(sigma_r * normal(rng));
    const Vector tn = sigma_t * random_matrix(rng, 2, 1);
    p.edges.push_back(relative_edge(p.poses[k], p.poses[j], k, j,
                                    j == 0 ? EdgeClass::LoopClosure : EdgeClass::Odometry,
                                    kappa, tau, Rn, tn));
  }
  p.validate();
  p.scene_scale = compute_scene_scale(p);
  return p;
}

/// 3-pose d = 2 cycle with odometry 0 -> 1 -> 2 and loop closure 0 -> 2,
/// random ground truth, precisions kappa = 1/sigma_r^2, tau = 1/sigma_t^2.
inline Problem three_cycle(std::mt19937_64 &rng, double sigma_r, double sigma_t) {
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> angle(-M_PI, M_PI);
  Problem p;
  p.d = 2;
  for (int k = 0; k < 3; ++k)
    p.poses[k] = {rotation_2d(angle(rng)), 2.0 * random_matrix(rng, 2, 1)};
  const std::pair<int, int> pairs[3] = {{0, 1}, {1, 2}, {0, 2}};
  for (const auto &[i, j] : pairs) {
    const Matrix Rn = rotation_2d(sigma_r * normal(rng));
    const Vector tn = sigma_t * random_matrix(rng, 2, 1);
    p.edges.push_back(relative_edge(p.poses[i], p.poses[j], i, j,
                                    j == i + 1 ? EdgeClass::Odometry : EdgeClass::LoopClosure,
                                    1.0 / (sigma_r * sigma_r), 1.0 / (sigma_t * sigma_t),
                                    Rn, tn));
  }
  p.validate();
  p.scene_scale = compute_scene_scale(p);
  return p;
}

/// Ground truth with pose k's heading advanced by 2 pi winding k / n: an
/// adversarial start that wraps the rotations once more around the circle.
inline Estimate wrapped_start(const Problem &p, int winding = 1) {
  Estimate x = vertices_of(p);
  const int n = static_cast<int>(x.poses.size());
  for (auto &[k, pose] : x.poses)
    pose.R = pose.R * rotation_2d(2.0 * M_PI * winding * k / n);
  return x;
}

/// Estimate holding the vertex values of `p`.
inline Estimate truth_of(const Problem &p) { return vertices_of(p); }

/// min over G in O(d) of ||A - B G||_F via orthogonal Procrustes.
inline double procrustes_distance(const Matrix &A, const Matrix &B) {
  Eigen::JacobiSVD<Matrix> svd(B.transpose() * A, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Matrix G = svd.matrixU() * svd.matrixV().transpose();
  return (A - B * G).norm();
}

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300});
}

} // namespace certignc::test
