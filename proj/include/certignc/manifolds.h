#pragma once

#include <certignc/problem.h>
#include <certignc/types.h>

#include <compare>
#include <cstdint>
#include <memory>
#include <vector>

namespace certignc {

enum class VariableType { PoseRotation = 0, PoseTranslation = 1, Landmark = 2 };

struct VariableKey {
  VariableType type;
  int id;
  auto operator<=>(const VariableKey &) const = default;
};

enum class BlockKind { Stiefel, Euclidean };

struct BlockSpec {
  VariableKey key;
  BlockKind kind;
  int rows;   // d for rotations, 1 for translations/landmarks
  int offset; // first row in the stacked matrix Y
};

/// Canonical block partition of the stacked variable Y in R^{n x p}.
///
/// Blocks are sorted by (variable type, id): all rotation blocks, then all
/// translation rows, then all landmark rows. Rotation blocks use the
/// row-block convention, i.e. at rank p = d the block equals R^T.
class Layout {
public:
  Layout(int d, std::vector<VariableKey> keys);

  static Layout from_problem(const Problem &problem);

  int d() const { return d_; }
  int n() const { return n_; }
  const std::vector<BlockSpec> &blocks() const { return blocks_; }
  const BlockSpec &block(const VariableKey &key) const;
  /// Position of the block in blocks().
  std::size_t index(const VariableKey &key) const;
  bool contains(const VariableKey &key) const;
  std::size_t stiefel_block_count() const { return stiefel_count_; }

  bool operator==(const Layout &other) const;

private:
  int d_;
  int n_ = 0;
  std::size_t stiefel_count_ = 0;
  std::vector<BlockSpec> blocks_;
};

using LayoutPtr = std::shared_ptr<const Layout>;

/// A d x p matrix with orthonormal rows.
class LiftedStiefelPoint {
public:
  /// Validates M M^T = I within 1e-10 (Frobenius) and d <= p.
  explicit LiftedStiefelPoint(Matrix M);
  const Matrix &matrix() const { return M_; }
  int d() const { return static_cast<int>(M_.rows()); }
  int p() const { return static_cast<int>(M_.cols()); }

private:
  Matrix M_;
};

/// Point on M^(p) = product of Stiefel blocks and Euclidean rows, stored as
/// the stacked matrix Y.
class ProductPoint {
public:
  ProductPoint(LayoutPtr layout, Matrix Y);

  const Layout &layout() const { return *layout_; }
  const LayoutPtr &layout_ptr() const { return layout_; }
  const Matrix &Y() const { return Y_; }
  int p() const { return static_cast<int>(Y_.cols()); }
  int n() const { return static_cast<int>(Y_.rows()); }

  auto block(const BlockSpec &b) const {
    return Y_.middleRows(b.offset, b.rows);
  }

  /// Largest Frobenius violation of M M^T = I over the Stiefel blocks.
  double feasibility_error() const;

private:
  LayoutPtr layout_;
  Matrix Y_;
};

/// Tangent vector at a ProductPoint; same block layout as the base point.
struct TangentVector {
  Matrix V;
};

/// Polar factor U V^T of the thin SVD of A (d x p, full row rank).
/// Throws DegenerateInputError when A is numerically rank deficient.
Matrix project_to_stiefel(const Matrix &A);

/// G - Sym(G Y^T) Y for one Stiefel block Y.
Matrix tangent_project(const Matrix &Y, const Matrix &G);

/// Blockwise projection of an ambient n x p matrix onto T_Y M^(p).
TangentVector tangent_project(const ProductPoint &Y, const Matrix &G);

/// For every Stiefel block i: Sym(A_i B_i^T) C_i; Euclidean rows are zero.
Matrix blockwise_sym_product(const Layout &layout, const Matrix &A,
                             const Matrix &B, const Matrix &C);

/// Polar retraction on Stiefel blocks, addition on Euclidean rows.
ProductPoint retract(const ProductPoint &Y, const TangentVector &V,
                     double step);

/// Append zero columns up to rank p_new.
ProductPoint lift_point(const ProductPoint &Y, int p_new);

/// Gaussian sample: Stiefel blocks via sign-fixed QR, Euclidean rows
/// standard normal. Deterministic per seed.
ProductPoint random_point(const LayoutPtr &layout, int p, std::uint64_t seed);

/// Embed a rank-d estimate at rank p (Y_i = [R_i^T | 0], y_i = [t_i^T | 0]).
ProductPoint embed_estimate(const Estimate &estimate, const LayoutPtr &layout,
                            int p);

/// Y V_r with V_r the top right singular vectors of Y (translation offset
/// removed), r = max(p_min, #{sigma_k > rel_tol sigma_1}). Stiefel blocks are
/// re-projected. Returns Y unchanged when nothing can be dropped.
ProductPoint compress_rank(const ProductPoint &Y, int p_min,
                           double rel_tol = 1e-6);

/// Rank-d rounding: truncated SVD, projection of the rotation blocks to O(d),
/// majority determinant flip and per-block fix into SO(d).
Estimate round_solution(const ProductPoint &Y);

} // namespace certignc
