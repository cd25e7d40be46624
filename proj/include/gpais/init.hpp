#pragma once

#include "gpais/mcmc.hpp"

namespace gpais {

struct NonFiniteObjective : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NotNegativeDefinite : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Mode m of the log target in log space, the Hessian H of the log target at
/// m, and the cubic ops the search spent.
struct ModeResult {
  Vector mode;
  Matrix hessian;
  std::int64_t op_cost;
};

/// Quasi-Newton (BFGS) ascent from theta0 to a stationary point of the log
/// target, grad infinity-norm below tol.  All evaluations are charged.
ModeResult find_mode(const GradTarget& target, const Vector& theta0,
                     OpCounter& counter, double tol = 1e-5,
                     int max_iter = 200);

/// Wraps a value-only target with central finite differences (step h in log
/// space), for classification targets whose gradient has no analytic form.
GradTarget finite_difference_gradient(
    const std::function<double(const Vector&, OpCounter&)>& f, double h = 1e-4);

/// Central finite-difference Hessian at m, symmetrized.
Matrix hessian_at_mode(const std::function<double(const Vector&, OpCounter&)>& f,
                       const Vector& mode, OpCounter& counter, double h = 1e-4);

enum class ProposalVariant { Identity, DiagInverseNegHessian, InverseNegHessian };

/// -H repaired to positive definiteness by flooring eigenvalues at
/// 1e-6 * max eigenvalue.
Matrix repaired_neg_hessian_inverse(const Matrix& hessian);

/// N(m, alpha I), N(m, alpha (-H)^{-1}), or N(m, alpha diag((-H)^{-1})).
ProposalParams build_proposal(ProposalVariant variant, const Vector& mode,
                              const Matrix& hessian, double alpha);

}  // namespace gpais
