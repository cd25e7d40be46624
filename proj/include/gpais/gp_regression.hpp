#pragma once

#include "gpais/kernels.hpp"

namespace gpais {

/// Cholesky with the standard jitter escalation: 1e-10 * mean(diag), times
/// 10 up to 1e-4 * mean(diag), then NotPositiveDefinite.  Every attempt is
/// charged.
CholeskyFactor cholesky_with_jitter(const Matrix& m, OpCounter& counter);

/// Full log marginal likelihood of the regression model, constant included.
/// Exactly one cubic op (the Cholesky of C) for a well-conditioned C.
double log_marginal_regression(const KernelSpec& spec, const ParamVector& theta,
                               const Dataset& data, OpCounter& counter);

/// Gradient with respect to log-space theta.  A joint value+gradient
/// evaluation costs 3 cubic ops: the Cholesky plus two for the explicit
/// inverse of C.
struct ValueAndGrad {
  double value;
  Vector grad;
};
ValueAndGrad log_marginal_regression_with_grad(const KernelSpec& spec,
                                               const ParamVector& theta,
                                               const Dataset& data,
                                               OpCounter& counter);

}  // namespace gpais
