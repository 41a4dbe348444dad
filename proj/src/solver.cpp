#include <certignc/solver.h>

#include <Eigen/SparseCholesky>

#include <cmath>
#include <limits>

namespace certignc {

void SolverConfig::validate() const {
  if (!(relative_cost_tol > 0) || !(absolute_cost_tol > 0))
    throw std::invalid_argument("SolverConfig: tolerances must be positive");
  if (gradient_norm_tol && !(*gradient_norm_tol > 0))
    throw std::invalid_argument("SolverConfig: gradient tolerance must be positive");
  if (max_iterations < 1)
    throw std::invalid_argument("SolverConfig: max_iterations must be >= 1");
  if (!(initial_damping > 0) || !(damping_increase > 1) ||
      !(damping_decrease > 1))
    throw std::invalid_argument("SolverConfig: invalid damping schedule");
  if (max_cg_iterations < 1)
    throw std::invalid_argument("SolverConfig: max_cg_iterations must be >= 1");
}

std::string to_string(SolverTermination t) {
  switch (t) {
  case SolverTermination::RelativeTol:
    return "relative_tol";
  case SolverTermination::AbsoluteTol:
    return "absolute_tol";
  case SolverTermination::GradientTol:
    return "gradient_tol";
  case SolverTermination::MaxIterations:
    return "max_iters";
  }
  return "";
}

Matrix riemannian_hessian_vector(const SparseDataMatrix &Q, const ProductPoint &Y,
                                 const Matrix &QY, const Matrix &V) {
  Matrix H = Q.multiply(V);
  H -= blockwise_sym_product(Y.layout(), QY, Y.Y(), V);
  H *= 2.0;
  return tangent_project(Y, H).V;
}

namespace {

inline double inner(const Matrix &A, const Matrix &B) {
  return (A.array() * B.array()).sum();
}

// Preconditioner (2 Q + lambda I)^{-1} by sparse LDL^T, followed by tangent
// projection. The pattern is analyzed once; each damping level refactorizes.
class SparsePreconditioner {
public:
  explicit SparsePreconditioner(const SparseDataMatrix &Q) {
    const Eigen::SparseMatrix<double> upper = 2.0 * Q.upper();
    std::vector<Eigen::Triplet<double>> diag;
    for (int i = 0; i < Q.n(); ++i)
      diag.emplace_back(i, i, 0.0);
    Eigen::SparseMatrix<double> D(Q.n(), Q.n());
    D.setFromTriplets(diag.begin(), diag.end());
    // Explicit zeros keep every diagonal entry in the pattern.
    A_ = upper + D;
    base_diag_ = A_.diagonal();
    // Relative floor keeps the factorization defined on gauge directions.
    floor_ = 1e-10 * std::max(1.0, base_diag_.cwiseAbs().maxCoeff());
    ldlt_.analyzePattern(A_);
  }

  void set_damping(double lambda) {
    A_.diagonal() = base_diag_.array() + std::max(lambda, floor_);
    ldlt_.factorize(A_);
    ok_ = ldlt_.info() == Eigen::Success;
  }

  Matrix apply(const ProductPoint &Y, const Matrix &R) const {
    if (!ok_)
      return R;
    return tangent_project(Y, ldlt_.solve(R)).V;
  }

private:
  Eigen::SparseMatrix<double> A_;
  Vector base_diag_;
  double floor_ = 0.0;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>, Eigen::Upper> ldlt_;
  bool ok_ = false;
};

struct CgOutcome {
  Matrix step;
  double model_decrease; // -(<g, x> + 1/2 <x, H x>), undamped model
};

CgOutcome truncated_cg(const SparseDataMatrix &Q, const ProductPoint &Y,
                       const Matrix &QY, const Matrix &grad, double lambda,
                       const SparsePreconditioner &precond, int max_iters) {
  const double gnorm = grad.norm();
  const double tol = gnorm * std::min(0.1, std::sqrt(gnorm));

  Matrix x = Matrix::Zero(grad.rows(), grad.cols());
  Matrix Hx = x; // undamped H x
  Matrix r = -grad;
  Matrix z = precond.apply(Y, r);
  Matrix dir = z;
  double rz = inner(r, z);

  for (int k = 0; k < max_iters; ++k) {
    const Matrix Hd = riemannian_hessian_vector(Q, Y, QY, dir);
    const double dHd = inner(dir, Hd) + lambda * dir.squaredNorm();
    if (!(dHd > 0)) {
      if (k == 0) {
        // Negative curvature on the first direction: damped gradient step.
        const double scale =
            rz / (std::abs(dHd) + lambda * dir.squaredNorm() +
                  std::numeric_limits<double>::min());
        x = scale * dir;
        Hx = scale * Hd;
      }
      break;
    }
    const double alpha = rz / dHd;
    x += alpha * dir;
    Hx += alpha * Hd;
    r -= alpha * (Hd + lambda * dir);
    if (r.norm() <= tol)
      break;
    z = precond.apply(Y, r);
    const double rz_next = inner(r, z);
    dir = z + (rz_next / rz) * dir;
    rz = rz_next;
  }
  return {x, -(inner(grad, x) + 0.5 * inner(x, Hx))};
}

} // namespace

SolveResult optimize(const LiftedGraph &graph, const ProductPoint &Y0,
                     const SolverConfig &cfg) {
  return optimize(graph, assemble_data_matrix(graph), Y0, cfg);
}

SolveResult optimize(const LiftedGraph &graph, const SparseDataMatrix &Q,
                     const ProductPoint &Y0, const SolverConfig &cfg) {
  cfg.validate();
  if (!(Y0.layout() == graph.layout()))
    throw LayoutMismatchError("optimize: layout mismatch");
  if (Y0.feasibility_error() > 1e-8)
    throw std::invalid_argument("optimize: initial point is infeasible");

  ProductPoint Y = Y0;
  double f = evaluate_cost(graph, Y);
  if (!std::isfinite(f))
    throw std::invalid_argument("optimize: non-finite cost at initial point");
  const double gtol =
      cfg.gradient_norm_tol.value_or(1e-8 * (1.0 + std::abs(f)));

  SolveResult result{Y, f, 0, {f}, SolverTermination::MaxIterations, 0.0};
  SparsePreconditioner precond(Q);
  double lambda = cfg.initial_damping;
  constexpr double kMaxDamping = 1e20;

  for (int it = 1; it <= cfg.max_iterations; ++it) {
    result.iterations = it;
    const Matrix QY = Q.multiply(Y.Y());
    const Matrix grad = tangent_project(Y, 2.0 * QY).V;
    result.gradient_norm = grad.norm();
    if (result.gradient_norm <= gtol) {
      result.termination = SolverTermination::GradientTol;
      break;
    }

    bool accepted = false;
    double f_new = f;
    while (!accepted && lambda <= kMaxDamping) {
      precond.set_damping(lambda);
      const CgOutcome cg = truncated_cg(Q, Y, QY, grad, lambda, precond,
                                        cfg.max_cg_iterations);
      ProductPoint candidate = Y;
      bool valid = true;
      try {
        candidate = retract(Y, TangentVector{cg.step}, 1.0);
        f_new = evaluate_cost(graph, candidate);
        valid = std::isfinite(f_new);
      } catch (const DegenerateInputError &) {
        valid = false;
      }
      if (valid && f_new < f) {
        const double rho =
            cg.model_decrease > 0 ? (f - f_new) / cg.model_decrease : 0.0;
        if (rho > 0.75)
          lambda = std::max(lambda / cfg.damping_decrease, 1e-12);
        else if (rho < 0.25)
          lambda *= cfg.damping_increase;
        Y = std::move(candidate);
        accepted = true;
      } else {
        lambda *= cfg.damping_increase;
      }
    }

    if (!accepted) {
      // No descent step exists at any damping level: converged to roundoff.
      result.termination = SolverTermination::RelativeTol;
      break;
    }
    const double decrease = f - f_new;
    const double f_prev = f;
    f = f_new;
    result.cost_trace.push_back(f);
    if (decrease <= cfg.absolute_cost_tol) {
      result.termination = SolverTermination::AbsoluteTol;
      break;
    }
    if (decrease <= cfg.relative_cost_tol * std::abs(f_prev)) {
      result.termination = SolverTermination::RelativeTol;
      break;
    }
  }

  if (result.termination != SolverTermination::GradientTol)
    result.gradient_norm = riemannian_gradient(Q, Y).V.norm();
  result.Y = std::move(Y);
  result.cost = f;
  return result;
}

} // namespace certignc
