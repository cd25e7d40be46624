#pragma once

#include "gpais/kernels.hpp"

#include <optional>

namespace gpais {

struct NoConvergence : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct OscillationDetected : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct AllWeightsDegenerate : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// ln Phi(y f), stable down to arbitrarily negative y*f (asymptotic tail
/// expansion below -8).
double probit_log_likelihood(double y, double f);

/// phi(z)/Phi(z), computed through the log CDF for stability.
double probit_hazard(double z);

/// Gaussian fit to the latent posterior p(f | y, theta): mean, Cholesky of
/// the covariance, the approximate log evidence ln p(y | theta), and the
/// Cholesky of the GP prior covariance K (reused as the latent prior density
/// in the pseudo-marginal estimator).
struct GaussianApprox {
  Vector mean;
  CholeskyFactor chol_cov;
  double log_evidence;
  CholeskyFactor prior_chol;
};

/// Newton iteration to the latent posterior mode.  Cubic-op cost:
/// 2 + iterations + 2.
GaussianApprox laplace_approx(const KernelSpec& spec, const ParamVector& theta,
                              const Dataset& data, OpCounter& counter,
                              double tol = 1e-8, int max_iter = 50);

/// Sequential-site EP for the probit likelihood with a full recomputation of
/// the posterior from the sites at the end of every sweep.  Cubic-op cost:
/// 2 + 3 * sweeps.  Negative candidate site precisions are skipped for that
/// sweep.
GaussianApprox ep_approx(const KernelSpec& spec, const ParamVector& theta,
                         const Dataset& data, OpCounter& counter,
                         double tol = 1e-6, int max_sweeps = 50);

/// Log of the unbiased importance-sampling estimate of the marginal
/// likelihood p(y | theta), using the supplied latent approximation as the
/// importance density.  Computed entirely in log space.
double pseudo_marginal_estimate(const Dataset& data,
                                const GaussianApprox& approx, int n_imp,
                                Rng& rng);

}  // namespace gpais
