#include <certignc/certifier.h>

#include <Eigen/Eigenvalues>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <random>

namespace certignc {

MultiplierBlocks recover_multipliers(const SparseDataMatrix &Q,
                                     const ProductPoint &Y) {
  const Matrix QY = Q.multiply(Y.Y());
  MultiplierBlocks out;
  out.reserve(Y.layout().stiefel_block_count());
  for (const auto &b : Y.layout().blocks()) {
    if (b.kind != BlockKind::Stiefel)
      continue;
    const Matrix P = QY.middleRows(b.offset, b.rows) * Y.block(b).transpose();
    out.push_back(0.5 * (P + P.transpose()));
  }
  return out;
}

CertificateOperator::CertificateOperator(const SparseDataMatrix &Q,
                                         MultiplierBlocks multipliers)
    : Q_(Q), multipliers_(std::move(multipliers)) {
  for (const auto &b : Q.layout().blocks())
    if (b.kind == BlockKind::Stiefel)
      stiefel_offsets_.push_back(static_cast<std::size_t>(b.offset));
  if (stiefel_offsets_.size() != multipliers_.size())
    throw LayoutMismatchError("CertificateOperator: one multiplier per Stiefel block");
}

Matrix CertificateOperator::apply(const Matrix &X) const {
  Matrix out = Q_.multiply(X);
  const int d = Q_.layout().d();
  for (std::size_t k = 0; k < multipliers_.size(); ++k) {
    const auto off = static_cast<Eigen::Index>(stiefel_offsets_[k]);
    out.middleRows(off, d).noalias() -= multipliers_[k] * X.middleRows(off, d);
  }
  return out;
}

Vector CertificateOperator::apply(const Vector &x) const {
  return apply(Matrix(x)).col(0);
}

double CertificateOperator::gershgorin_upper_bound() const {
  const Vector diag = Q_.diagonal();
  Vector radius = Q_.absolute_row_sums() - diag.cwiseAbs();
  Vector centre = diag;
  const int d = Q_.layout().d();
  for (std::size_t k = 0; k < multipliers_.size(); ++k) {
    const auto off = static_cast<Eigen::Index>(stiefel_offsets_[k]);
    for (int r = 0; r < d; ++r) {
      centre(off + r) -= multipliers_[k](r, r);
      for (int c = 0; c < d; ++c)
        if (c != r)
          radius(off + r) += std::abs(multipliers_[k](r, c));
    }
  }
  return (centre + radius).maxCoeff();
}

Matrix CertificateOperator::to_dense() const {
  Matrix S = Q_.to_dense();
  const int d = Q_.layout().d();
  for (std::size_t k = 0; k < multipliers_.size(); ++k) {
    const auto off = static_cast<Eigen::Index>(stiefel_offsets_[k]);
    S.block(off, off, d, d) -= multipliers_[k];
  }
  return S;
}

CertificateOperator build_certificate(const SparseDataMatrix &Q,
                                      MultiplierBlocks multipliers) {
  return CertificateOperator(Q, std::move(multipliers));
}

EigenPair min_eigenpair(const SymmetricOperator &S, int n, double sigma,
                        const EigenConfig &cfg) {
  if (n <= 0)
    throw std::invalid_argument("min_eigenpair: empty operator");
  const int m = std::clamp(cfg.max_basis, 2, std::max(2, n));
  const int keep = std::clamp(cfg.keep, 1, m - 1);

  // Shifted operator A = sigma I - S; its largest eigenvalue gives lambda_min.
  auto apply_shifted = [&](const Vector &v) -> Vector {
    return sigma * v - S(v);
  };

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal;
  Vector start(n);
  for (int i = 0; i < n; ++i)
    start(i) = normal(rng);
  start.normalize();

  Matrix V(n, m), AV(n, m), H = Matrix::Zero(m, m);
  V.col(0) = start;
  int k = 0; // number of basis vectors with computed products
  int matvecs = 0;
  EigenPair best;
  best.residual = std::numeric_limits<double>::infinity();

  auto ritz = [&](int size, Eigen::SelfAdjointEigenSolver<Matrix> &es) {
    es.compute(H.topLeftCorner(size, size));
  };

  while (matvecs < cfg.max_matvecs) {
    Vector w = apply_shifted(V.col(k));
    ++matvecs;
    AV.col(k) = w;
    const Vector h = V.leftCols(k + 1).transpose() * w;
    H.block(0, k, k + 1, 1) = h;
    H.block(k, 0, 1, k + 1) = h.transpose();
    w -= V.leftCols(k + 1) * h;
    w -= V.leftCols(k + 1) * (V.leftCols(k + 1).transpose() * w);
    ++k;

    const double beta = w.norm();
    const bool full = k == m;
    const bool breakdown = beta <= 1e-13 * std::max(1.0, std::abs(sigma));
    const bool exhausted = k == n;
    if (full || breakdown || exhausted || k % 5 == 0 ||
        matvecs >= cfg.max_matvecs) {
      Eigen::SelfAdjointEigenSolver<Matrix> es;
      ritz(k, es);
      const double theta = es.eigenvalues()(k - 1);
      const Vector s = es.eigenvectors().col(k - 1);
      Vector x = V.leftCols(k) * s;
      const Vector Ax = AV.leftCols(k) * s;
      const double xnorm = x.norm();
      x /= xnorm;
      const double residual = (Ax / xnorm - theta * x).norm();
      const double lambda = sigma - theta;
      if (residual < best.residual) {
        best.value = lambda;
        best.vector = x;
        best.residual = residual;
      }
      best.matvecs = matvecs;
      if (residual <= cfg.tolerance * (std::abs(sigma) + std::abs(lambda)) ||
          exhausted) {
        best.value = lambda;
        best.vector = x;
        best.residual = residual;
        return best;
      }
      if (breakdown) {
        // Invariant subspace found without convergence; restart from a
        // fresh direction orthogonal to the current basis.
        Vector r(n);
        for (int i = 0; i < n; ++i)
          r(i) = normal(rng);
        r -= V.leftCols(k) * (V.leftCols(k).transpose() * r);
        w = r;
      }
      if (full || breakdown) {
        const int kept = std::min(keep, k);
        const Matrix S_keep = es.eigenvectors().rightCols(kept);
        const Matrix V_keep = V.leftCols(k) * S_keep;
        const Matrix AV_keep = AV.leftCols(k) * S_keep;
        V.leftCols(kept) = V_keep;
        AV.leftCols(kept) = AV_keep;
        H.setZero();
        H.topLeftCorner(kept, kept) = V_keep.transpose() * AV_keep;
        H.topLeftCorner(kept, kept) =
            0.5 * (H.topLeftCorner(kept, kept) +
                   H.topLeftCorner(kept, kept).transpose()).eval();
        k = kept;
        w -= V.leftCols(k) * (V.leftCols(k).transpose() * w);
      }
    }
    const double wn = w.norm();
    if (!(wn > 0))
      break;
    V.col(k) = w / wn;
  }
  throw EigensolverFailure("min_eigenpair: no convergence within budget",
                           best.residual);
}

EigenPair min_eigenpair(const CertificateOperator &S, const EigenConfig &cfg) {
  const double sigma = std::max(S.gershgorin_upper_bound(), 0.0);
  return min_eigenpair([&S](const Vector &v) { return S.apply(v); }, S.n(),
                       sigma, cfg);
}

namespace {

using ColSparse = Eigen::SparseMatrix<double>;

// Upper triangle of S + shift I.
ColSparse shifted_upper(const SparseDataMatrix &Q, const MultiplierBlocks &lambda,
                        double shift) {
  std::vector<Eigen::Triplet<double>> t;
  const SparseMatrix &U = Q.upper();
  t.reserve(static_cast<std::size_t>(U.nonZeros()) + Q.n() +
            lambda.size() * 9);
  for (int r = 0; r < U.outerSize(); ++r)
    for (SparseMatrix::InnerIterator it(U, r); it; ++it)
      t.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
  for (int i = 0; i < Q.n(); ++i)
    t.emplace_back(i, i, shift);
  std::size_t k = 0;
  for (const auto &b : Q.layout().blocks()) {
    if (b.kind != BlockKind::Stiefel)
      continue;
    const Matrix &L = lambda[k++];
    for (int r = 0; r < b.rows; ++r)
      for (int c = r; c < b.rows; ++c)
        t.emplace_back(b.offset + r, b.offset + c, -L(r, c));
  }
  ColSparse A(Q.n(), Q.n());
  A.setFromTriplets(t.begin(), t.end());
  return A;
}

using Ldlt = Eigen::SimplicialLDLT<ColSparse, Eigen::Upper>;

// Direction x with x^T A x = D_kk for the most negative pivot D_kk.
Vector negative_pivot_direction(const Ldlt &ldlt, int n) {
  const Vector D = ldlt.vectorD();
  Eigen::Index k = 0;
  D.minCoeff(&k);
  Vector e = Vector::Zero(n);
  e(k) = 1.0;
  const Vector y = ldlt.matrixU().solve(e);
  Vector x = ldlt.permutationPinv() * y;
  return x.normalized();
}

} // namespace

CertificateResult certify(const SparseDataMatrix &Q, const ProductPoint &Y,
                          double eta, const EigenConfig &cfg) {
  CertificateResult out;
  out.eta = eta;
  out.multipliers = recover_multipliers(Q, Y);
  const CertificateOperator S(Q, out.multipliers);
  out.stationarity_residual = S.apply(Y.Y()).norm();
  out.f_attained = Q.quadratic_form(Y.Y());
  out.f_sdp_slack_bound = out.f_attained - eta * Q.n();
  const int n = Q.n();

  // S + eta I = L D L^T with D > 0 proves lambda_min(S) > -eta.
  Ldlt ldlt(shifted_upper(Q, out.multipliers, eta));
  const bool factored = ldlt.info() == Eigen::Success;
  const bool positive = factored && ldlt.vectorD().minCoeff() > 0.0;

  auto residual_of = [&](const Vector &v, double lambda) {
    return (S.apply(v) - lambda * v).norm();
  };

  if (positive) {
    out.certified = true;
    // Shift-invert: the top eigenvalue of (S + eta I)^{-1} is
    // 1 / (lambda_min + eta), well separated even when S has a dense
    // cluster near zero.
    try {
      const EigenPair top = min_eigenpair(
          [&ldlt](const Vector &v) { return Vector(-ldlt.solve(v)); }, n, 0.0, cfg);
      const double mu = -top.value;
      out.v_min = top.vector;
      out.lambda_min = 1.0 / mu - eta;
      out.eigensolver_residual = residual_of(out.v_min, out.lambda_min);
    } catch (const EigensolverFailure &e) {
      out.eigensolver_converged = false;
      out.eigensolver_residual = e.best_residual();
      out.lambda_min = -eta;
      out.v_min = Vector::Zero(n);
    }
    return out;
  }

  try {
    const EigenPair pair = min_eigenpair(S, cfg);
    out.lambda_min = pair.value;
    out.v_min = pair.vector;
    out.eigensolver_residual = pair.residual;
    out.certified = pair.value >= -eta;
  } catch (const EigensolverFailure &e) {
    out.eigensolver_converged = false;
    out.eigensolver_residual = e.best_residual();
    out.certified = false;
    Vector v;
    if (factored) {
      v = negative_pivot_direction(ldlt, n);
    } else {
      // Deterministic random direction so the caller can still escape.
      std::mt19937_64 rng(cfg.seed ^ 0xabcdefull);
      std::normal_distribution<double> normal;
      v.resize(n);
      for (int i = 0; i < n; ++i)
        v(i) = normal(rng);
      v.normalize();
    }
    out.v_min = v;
    out.lambda_min = v.dot(S.apply(v));
  }
  return out;
}

void StaircaseConfig::validate(int d) const {
  const int p_start = p0 == 0 ? d : p0;
  if (p_start < d || p_start > p_max)
    throw std::invalid_argument("StaircaseConfig: need d <= p0 <= p_max");
  if (eta_absolute && *eta_absolute < 0)
    throw std::invalid_argument("StaircaseConfig: eta must be >= 0");
  if (!(eta_relative >= 0))
    throw std::invalid_argument("StaircaseConfig: eta_relative must be >= 0");
  solver.validate();
}

double resolve_eta(const StaircaseConfig &cfg, const SparseDataMatrix &Q) {
  if (cfg.eta_absolute)
    return *cfg.eta_absolute;
  const Vector diag = Q.diagonal();
  const double mean = diag.size() ? diag.cwiseAbs().mean() : 0.0;
  return cfg.eta_relative * mean;
}

ProductPoint saddle_escape(const LiftedGraph &graph, const ProductPoint &Y,
                           const Vector &v_min, double lambda_min,
                           double sufficient_decrease, int max_halvings) {
  if (v_min.size() != Y.n())
    throw LayoutMismatchError("saddle_escape: eigenvector length mismatch");
  const ProductPoint lifted = lift_point(Y, Y.p() + 1);
  Matrix D = Matrix::Zero(Y.n(), Y.p() + 1);
  D.col(Y.p()) = v_min;
  const TangentVector direction{D};

  const double f0 = evaluate_cost(graph, Y);
  const double curvature = std::abs(lambda_min);
  double alpha = 1.0;
  for (int h = 0; h <= max_halvings; ++h, alpha *= 0.5) {
    try {
      ProductPoint candidate = retract(lifted, direction, alpha);
      const double f = evaluate_cost(graph, candidate);
      if (f < f0 && f <= f0 - sufficient_decrease * alpha * alpha * curvature)
        return candidate;
    } catch (const DegenerateInputError &) {
    }
  }
  throw EscalationFailure("saddle_escape: line search exhausted");
}

StaircaseResult riemannian_staircase(const LiftedGraph &graph,
                                     const ProductPoint &Y0,
                                     const StaircaseConfig &cfg) {
  return riemannian_staircase(graph, assemble_data_matrix(graph), Y0, cfg);
}

namespace {

ProductPoint perturbed_lift(const ProductPoint &Y, std::uint64_t seed) {
  const ProductPoint lifted = lift_point(Y, Y.p() + 1);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Matrix D = Matrix::Zero(Y.n(), Y.p() + 1);
  for (int i = 0; i < Y.n(); ++i)
    D(i, Y.p()) = normal(rng);
  D *= 1e-3 / D.norm();
  return retract(lifted, TangentVector{D}, 1.0);
}

} // namespace

StaircaseResult riemannian_staircase(const LiftedGraph &graph,
                                     const SparseDataMatrix &Q,
                                     const ProductPoint &Y0,
                                     const StaircaseConfig &cfg) {
  const int d = graph.layout().d();
  cfg.validate(d);
  const int p_start = cfg.p0 == 0 ? d : cfg.p0;

  StaircaseResult result{Estimate{}, Y0};
  result.eta = resolve_eta(cfg, Q);
  ProductPoint Y = Y0.p() < p_start ? lift_point(Y0, p_start) : Y0;
  if (Y.p() > cfg.p_max)
    throw std::invalid_argument("riemannian_staircase: initial rank exceeds p_max");

  for (;;) {
    const SolveResult solved = optimize(graph, Q, Y, cfg.solver);
    Y = solved.Y;
    EigenConfig eig = cfg.eigen;
    eig.seed = derive_seed(cfg.eigen.seed, static_cast<std::uint64_t>(Y.p()));
    const CertificateResult cert = certify(Q, Y, result.eta, eig);
    result.trace.push_back({Y.p(), solved.cost, cert.lambda_min, cert.certified,
                            solved.iterations, cert.stationarity_residual});

    if (cert.certified) {
      result.certified = true;
      result.f_sdp = solved.cost;
      result.f_sdp_slack_bound = cert.f_sdp_slack_bound;
      break;
    }
    if (Y.p() + 1 > cfg.p_max) {
      result.failure = "p_max exceeded without certification";
      break;
    }
    try {
      Y = saddle_escape(graph, Y, cert.v_min, cert.lambda_min,
                        cfg.escape_sufficient_decrease,
                        cfg.escape_max_halvings);
    } catch (const EscalationFailure &) {
      Y = perturbed_lift(Y, eig.seed);
    }
  }

  result.Y = Y;
  result.termination_rank = Y.p();
  result.estimate = round_solution(Y);
  result.f_qcqp = evaluate_cost(
      graph, embed_estimate(result.estimate, graph.layout_ptr(), d));
  return result;
}

} // namespace certignc
