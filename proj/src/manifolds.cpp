#include <certignc/manifolds.h>

#include <Eigen/LU>

#include <Eigen/QR>
#include <Eigen/SVD>

#include <algorithm>
#include <random>

namespace certignc {

Layout::Layout(int d, std::vector<VariableKey> keys) : d_(d) {
  if (d != 2 && d != 3)
    throw std::invalid_argument("Layout: d must be 2 or 3");
  std::sort(keys.begin(), keys.end());
  if (std::adjacent_find(keys.begin(), keys.end()) != keys.end())
    throw std::invalid_argument("Layout: duplicate variable key");
  blocks_.reserve(keys.size());
  for (const auto &key : keys) {
    const bool rot = key.type == VariableType::PoseRotation;
    const int rows = rot ? d : 1;
    blocks_.push_back(
        {key, rot ? BlockKind::Stiefel : BlockKind::Euclidean, rows, n_});
    n_ += rows;
    if (rot)
      ++stiefel_count_;
  }
}

Layout Layout::from_problem(const Problem &problem) {
  std::vector<VariableKey> keys;
  for (const auto &[id, pose] : problem.poses) {
    keys.push_back({VariableType::PoseRotation, id});
    keys.push_back({VariableType::PoseTranslation, id});
  }
  for (const auto &[id, l] : problem.landmarks)
    keys.push_back({VariableType::Landmark, id});
  return Layout(problem.d, std::move(keys));
}

const BlockSpec &Layout::block(const VariableKey &key) const {
  auto it = std::lower_bound(
      blocks_.begin(), blocks_.end(), key,
      [](const BlockSpec &b, const VariableKey &k) { return b.key < k; });
  if (it == blocks_.end() || it->key != key)
    throw LayoutMismatchError("Layout: unknown variable " +
                              std::to_string(key.id));
  return *it;
}

std::size_t Layout::index(const VariableKey &key) const {
  return static_cast<std::size_t>(&block(key) - blocks_.data());
}

bool Layout::contains(const VariableKey &key) const {
  return std::binary_search(
      blocks_.begin(), blocks_.end(), BlockSpec{key, BlockKind::Euclidean, 0, 0},
      [](const BlockSpec &a, const BlockSpec &b) { return a.key < b.key; });
}

bool Layout::operator==(const Layout &other) const {
  if (d_ != other.d_ || n_ != other.n_ || blocks_.size() != other.blocks_.size())
    return false;
  for (std::size_t i = 0; i < blocks_.size(); ++i)
    if (blocks_[i].key != other.blocks_[i].key)
      return false;
  return true;
}

LiftedStiefelPoint::LiftedStiefelPoint(Matrix M) : M_(std::move(M)) {
  if (M_.rows() > M_.cols())
    throw std::invalid_argument("LiftedStiefelPoint: requires d <= p");
  const double err =
      (M_ * M_.transpose() - Matrix::Identity(M_.rows(), M_.rows())).norm();
  if (err > 1e-10)
    throw std::invalid_argument("LiftedStiefelPoint: rows not orthonormal");
}

ProductPoint::ProductPoint(LayoutPtr layout, Matrix Y)
    : layout_(std::move(layout)), Y_(std::move(Y)) {
  if (!layout_)
    throw std::invalid_argument("ProductPoint: null layout");
  if (Y_.rows() != layout_->n())
    throw LayoutMismatchError("ProductPoint: row count does not match layout");
  if (Y_.cols() < layout_->d())
    throw std::invalid_argument("ProductPoint: rank p must be >= d");
}

double ProductPoint::feasibility_error() const {
  double worst = 0.0;
  const int d = layout_->d();
  for (const auto &b : layout_->blocks()) {
    if (b.kind != BlockKind::Stiefel)
      continue;
    const auto M = block(b);
    worst = std::max(worst,
                     (M * M.transpose() - Matrix::Identity(d, d)).norm());
  }
  return worst;
}

Matrix project_to_stiefel(const Matrix &A) {
  if (A.rows() > A.cols())
    throw std::invalid_argument("project_to_stiefel: requires rows <= cols");
  Eigen::JacobiSVD<Matrix> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto &s = svd.singularValues();
  const double smax = s.size() ? s(0) : 0.0;
  const double smin = s.size() ? s(s.size() - 1) : 0.0;
  if (!(smax > 0.0) || smin <= 1e-13 * smax)
    throw DegenerateInputError("project_to_stiefel: rank-deficient input");
  return svd.matrixU() * svd.matrixV().transpose();
}

Matrix tangent_project(const Matrix &Y, const Matrix &G) {
  const Matrix B = G * Y.transpose();
  return G - 0.5 * (B + B.transpose()) * Y;
}

TangentVector tangent_project(const ProductPoint &Y, const Matrix &G) {
  if (G.rows() != Y.n() || G.cols() != Y.p())
    throw LayoutMismatchError("tangent_project: shape mismatch");
  TangentVector out{G};
  for (const auto &b : Y.layout().blocks()) {
    if (b.kind != BlockKind::Stiefel)
      continue;
    out.V.middleRows(b.offset, b.rows) =
        tangent_project(Matrix(Y.block(b)), Matrix(G.middleRows(b.offset, b.rows)));
  }
  return out;
}

Matrix blockwise_sym_product(const Layout &layout, const Matrix &A,
                             const Matrix &B, const Matrix &C) {
  Matrix out = Matrix::Zero(C.rows(), C.cols());
  for (const auto &b : layout.blocks()) {
    if (b.kind != BlockKind::Stiefel)
      continue;
    const Matrix P =
        A.middleRows(b.offset, b.rows) * B.middleRows(b.offset, b.rows).transpose();
    out.middleRows(b.offset, b.rows) =
        0.5 * (P + P.transpose()) * C.middleRows(b.offset, b.rows);
  }
  return out;
}

ProductPoint retract(const ProductPoint &Y, const TangentVector &V,
                     double step) {
  if (V.V.rows() != Y.n() || V.V.cols() != Y.p())
    throw LayoutMismatchError("retract: tangent shape mismatch");
  if (step == 0.0)
    return Y;
  Matrix out = Y.Y() + step * V.V;
  for (const auto &b : Y.layout().blocks()) {
    if (b.kind != BlockKind::Stiefel)
      continue;
    out.middleRows(b.offset, b.rows) =
        project_to_stiefel(out.middleRows(b.offset, b.rows));
  }
  return ProductPoint(Y.layout_ptr(), std::move(out));
}

ProductPoint lift_point(const ProductPoint &Y, int p_new) {
  if (p_new < Y.p())
    throw std::invalid_argument("lift_point: p_new must be >= p");
  if (p_new == Y.p())
    return Y;
  Matrix out = Matrix::Zero(Y.n(), p_new);
  out.leftCols(Y.p()) = Y.Y();
  return ProductPoint(Y.layout_ptr(), std::move(out));
}

ProductPoint random_point(const LayoutPtr &layout, int p, std::uint64_t seed) {
  const int d = layout->d();
  if (p < d)
    throw std::invalid_argument("random_point: p must be >= d");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix Y(layout->n(), p);
  for (const auto &b : layout->blocks()) {
    if (b.kind == BlockKind::Euclidean) {
      for (int c = 0; c < p; ++c)
        Y(b.offset, c) = normal(rng);
      continue;
    }
    Matrix G(p, d);
    for (int r = 0; r < p; ++r)
      for (int c = 0; c < d; ++c)
        G(r, c) = normal(rng);
    Eigen::HouseholderQR<Matrix> qr(G);
    Matrix Q = qr.householderQ() * Matrix::Identity(p, d);
    const Matrix R = qr.matrixQR().topRows(d).triangularView<Eigen::Upper>();
    for (int c = 0; c < d; ++c)
      if (R(c, c) < 0)
        Q.col(c) *= -1.0;
    Y.middleRows(b.offset, d) = Q.transpose();
  }
  return ProductPoint(layout, std::move(Y));
}

ProductPoint embed_estimate(const Estimate &estimate, const LayoutPtr &layout,
                            int p) {
  const int d = layout->d();
  if (estimate.d != d)
    throw LayoutMismatchError("embed_estimate: dimension mismatch");
  Matrix Y = Matrix::Zero(layout->n(), p);
  for (const auto &b : layout->blocks()) {
    switch (b.key.type) {
    case VariableType::PoseRotation: {
      auto it = estimate.poses.find(b.key.id);
      if (it == estimate.poses.end())
        throw LayoutMismatchError("embed_estimate: missing pose " +
                                  std::to_string(b.key.id));
      Y.block(b.offset, 0, d, d) = it->second.R.transpose();
      break;
    }
    case VariableType::PoseTranslation: {
      auto it = estimate.poses.find(b.key.id);
      if (it == estimate.poses.end())
        throw LayoutMismatchError("embed_estimate: missing pose " +
                                  std::to_string(b.key.id));
      Y.block(b.offset, 0, 1, d) = it->second.t.transpose();
      break;
    }
    case VariableType::Landmark: {
      auto it = estimate.landmarks.find(b.key.id);
      if (it == estimate.landmarks.end())
        throw LayoutMismatchError("embed_estimate: missing landmark " +
                                  std::to_string(b.key.id));
      Y.block(b.offset, 0, 1, d) = it->second.transpose();
      break;
    }
    }
  }
  return ProductPoint(layout, std::move(Y));
}

namespace {

// Nearest element of SO(d) to a d x d block.
Matrix project_to_special_orthogonal(const Matrix &B) {
  Eigen::JacobiSVD<Matrix> svd(B, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Matrix U = svd.matrixU();
  const Matrix &V = svd.matrixV();
  if ((U * V.transpose()).determinant() < 0)
    U.col(U.cols() - 1) *= -1.0;
  return U * V.transpose();
}

} // namespace

namespace {

// Euclidean rows enter the cost only through differences, so a common
// offset is pure gauge; it is removed before picking a dominant subspace.
Matrix centre_euclidean_rows(const ProductPoint &Y) {
  Matrix centred = Y.Y();
  int euclidean = 0;
  Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(Y.p());
  for (const auto &b : Y.layout().blocks())
    if (b.kind == BlockKind::Euclidean) {
      mean += Y.Y().row(b.offset);
      ++euclidean;
    }
  if (euclidean > 0) {
    mean /= euclidean;
    for (const auto &b : Y.layout().blocks())
      if (b.kind == BlockKind::Euclidean)
        centred.row(b.offset) -= mean;
  }
  return centred;
}

} // namespace

ProductPoint compress_rank(const ProductPoint &Y, int p_min, double rel_tol) {
  if (p_min < Y.layout().d() || p_min > Y.p())
    throw std::invalid_argument("compress_rank: need d <= p_min <= p");
  Eigen::BDCSVD<Matrix> svd(centre_euclidean_rows(Y), Eigen::ComputeThinV);
  const Vector &sv = svd.singularValues();
  int r = 0;
  while (r < sv.size() && sv(r) > rel_tol * sv(0))
    ++r;
  r = std::max(r, p_min);
  if (r >= Y.p())
    return Y;
  Matrix X = Y.Y() * svd.matrixV().leftCols(r);
  for (const auto &b : Y.layout().blocks())
    if (b.kind == BlockKind::Stiefel)
      X.middleRows(b.offset, b.rows) = project_to_stiefel(X.middleRows(b.offset, b.rows));
  return ProductPoint(Y.layout_ptr(), std::move(X));
}

Estimate round_solution(const ProductPoint &Y) {
  const Layout &layout = Y.layout();
  const int d = layout.d();

  const Matrix centred = centre_euclidean_rows(Y);
  Eigen::BDCSVD<Matrix> svd(centred, Eigen::ComputeThinV);
  Matrix X = Y.Y() * svd.matrixV().leftCols(d);

  int negative = 0, total = 0;
  for (const auto &b : layout.blocks()) {
    if (b.kind != BlockKind::Stiefel)
      continue;
    ++total;
    if (X.middleRows(b.offset, d).determinant() < 0)
      ++negative;
  }
  if (2 * negative > total)
    X.col(d - 1) *= -1.0;

  Estimate est;
  est.d = d;
  for (const auto &b : layout.blocks()) {
    switch (b.key.type) {
    case VariableType::PoseRotation: {
      const Matrix block = X.middleRows(b.offset, d);
      Matrix R;
      try {
        R = project_to_stiefel(block);
        if (R.determinant() < 0)
          R = project_to_special_orthogonal(block);
      } catch (const DegenerateInputError &) {
        R = project_to_special_orthogonal(block);
      }
      est.poses[b.key.id].R = R.transpose();
      break;
    }
    case VariableType::PoseTranslation:
      est.poses[b.key.id].t = X.row(b.offset).transpose();
      break;
    case VariableType::Landmark:
      est.landmarks[b.key.id] = X.row(b.offset).transpose();
      break;
    }
  }
  return est;
}

} // namespace certignc
