#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace certignc {

using Scalar = double;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Triplet = Eigen::Triplet<double>;

/// Raised when a numerical routine receives input it cannot handle
/// (rank-deficient projection, singular alignment, ...).
class DegenerateInputError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Raised when the shapes/ids of two objects that must agree do not.
class LayoutMismatchError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Lanczos did not reach the requested residual within its budget.
class EigensolverFailure : public std::runtime_error {
public:
  EigensolverFailure(const std::string &what, double best_residual)
      : std::runtime_error(what), best_residual_(best_residual) {}
  double best_residual() const { return best_residual_; }

private:
  double best_residual_;
};

/// Saddle escape line search ran out of halvings.
class EscalationFailure : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Deterministic 64-bit seed derivation (splitmix64) so one master seed can
/// feed several independent streams.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  std::uint64_t z = master + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

} // namespace certignc
