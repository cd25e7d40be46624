#include "gpais/gp_regression.hpp"

#include <cmath>

namespace gpais {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;
}

CholeskyFactor cholesky_with_jitter(const Matrix& m, OpCounter& counter) {
  const double mean_diag = m.diagonal().mean();
  double jitter = 0.0;
  for (;;) {
    try {
      if (jitter == 0.0) return cholesky(m, counter);
      Matrix jm = m;
      jm.diagonal().array() += jitter;
      return cholesky(jm, counter);
    } catch (const NotPositiveDefinite&) {
      if (jitter == 0.0) {
        jitter = 1e-10 * mean_diag;
      } else {
        jitter *= 10.0;
      }
      if (jitter > 1e-4 * mean_diag) {
        throw NotPositiveDefinite(
            "cholesky_with_jitter: jitter policy exhausted");
      }
    }
  }
}

double log_marginal_regression(const KernelSpec& spec, const ParamVector& theta,
                               const Dataset& data, OpCounter& counter) {
  const Matrix C = covariance_matrix(spec, theta, data.X, true);
  const CholeskyFactor L = cholesky_with_jitter(C, counter);
  const Vector alpha = tri_solve(L, data.y);
  const double n = static_cast<double>(data.size());
  return -0.5 * log_det_from_chol(L) - 0.5 * alpha.squaredNorm() -
         0.5 * n * kLog2Pi;
}

ValueAndGrad log_marginal_regression_with_grad(const KernelSpec& spec,
                                               const ParamVector& theta,
                                               const Dataset& data,
                                               OpCounter& counter) {
  const Eigen::Index n = data.size();
  const Matrix C = covariance_matrix(spec, theta, data.X, true);
  const CholeskyFactor L = cholesky_with_jitter(C, counter);

  const Vector v = tri_solve(L, data.y);
  const Vector alpha = tri_solve(L, v, /*transposed=*/true);  // C^{-1} y

  // Explicit inverse from the factor, charged as two cubic ops per the
  // inversion accounting.
  counter.add(2);
  Matrix Linv = Matrix::Identity(n, n);
  L.matrix().triangularView<Eigen::Lower>().solveInPlace(Linv);
  const Matrix Cinv = Linv.transpose() * Linv;

  const double value = -0.5 * log_det_from_chol(L) - 0.5 * v.squaredNorm() -
                       0.5 * static_cast<double>(n) * kLog2Pi;

  const std::vector<Matrix> dC = covariance_gradients(spec, theta, data.X);
  Vector grad(static_cast<Eigen::Index>(dC.size()));
  const Matrix A = alpha * alpha.transpose() - Cinv;
  for (std::size_t j = 0; j < dC.size(); ++j) {
    grad(static_cast<Eigen::Index>(j)) = 0.5 * A.cwiseProduct(dC[j]).sum();
  }
  return {value, grad};
}

}  // namespace gpais
