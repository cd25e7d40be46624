#include "gpais/gp_classification.hpp"

#include "gpais/gp_regression.hpp"

#include <cmath>

namespace gpais {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

double std_normal_log_pdf(double z) { return -0.5 * z * z - 0.5 * kLog2Pi; }

double log_phi_cdf(double z) {
  if (z > -8.0) {
    return std::log(0.5 * std::erfc(-z * M_SQRT1_2));
  }
  // Mills-ratio expansion: Phi(z) ~ phi(z)/(-z) (1 - 1/z^2 + 3/z^4 - 15/z^6)
  const double z2 = z * z;
  const double series = 1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2);
  return std_normal_log_pdf(z) - std::log(-z) + std::log(series);
}

}  // namespace

double probit_log_likelihood(double y, double f) { return log_phi_cdf(y * f); }

double probit_hazard(double z) {
  return std::exp(std_normal_log_pdf(z) - log_phi_cdf(z));
}

GaussianApprox laplace_approx(const KernelSpec& spec, const ParamVector& theta,
                              const Dataset& data, OpCounter& counter,
                              double tol, int max_iter) {
  const Eigen::Index n = data.size();
  const Matrix K = covariance_matrix(spec, theta, data.X, false);
  CholeskyFactor prior_chol = cholesky_with_jitter(K, counter);

  Vector f = Vector::Zero(n);
  double log_det_B = 0.0;
  Matrix LB = Matrix::Identity(n, n);
  Vector sqrt_w = Vector::Zero(n);
  bool converged = false;
  for (int iter = 0; iter < max_iter; ++iter) {
    Vector grad(n), w(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double z = data.y(i) * f(i);
      const double r = probit_hazard(z);
      grad(i) = data.y(i) * r;
      w(i) = r * (r + z);
    }
    sqrt_w = w.cwiseSqrt();
    Matrix B = Matrix::Identity(n, n) +
               sqrt_w.asDiagonal() * K * sqrt_w.asDiagonal();
    const CholeskyFactor LBf = cholesky(B, counter);
    LB = LBf.matrix();
    const Vector b = w.cwiseProduct(f) + grad;
    const Vector c = tri_solve(LBf, sqrt_w.cwiseProduct(K * b));
    const Vector a =
        b - sqrt_w.cwiseProduct(tri_solve(LBf, c, /*transposed=*/true));
    const Vector f_new = K * a;
    log_det_B = log_det_from_chol(LBf);
    const double delta = (f_new - f).lpNorm<Eigen::Infinity>();
    f = f_new;
    if (delta < tol) {
      converged = true;
      break;
    }
  }
  if (!converged) {
    throw NoConvergence("laplace_approx: Newton iteration did not converge");
  }

  // a = K^{-1} f at the mode, recovered through the prior factor
  const Vector a = tri_solve(prior_chol, tri_solve(prior_chol, f), true);
  double loglik = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    loglik += probit_log_likelihood(data.y(i), f(i));
  }
  const double log_evidence = -0.5 * a.dot(f) + loglik - 0.5 * log_det_B;

  // covariance (K^{-1} + W)^{-1} = K - K W^{1/2} B^{-1} W^{1/2} K,
  // charged as the explicit inversion
  counter.add(2);
  Matrix V = LB.triangularView<Eigen::Lower>().solve(
      Matrix(sqrt_w.asDiagonal() * K));
  Matrix cov = K - V.transpose() * V;
  CholeskyFactor chol_cov = cholesky_with_jitter(cov, counter);

  return {f, std::move(chol_cov), log_evidence, std::move(prior_chol)};
}

GaussianApprox ep_approx(const KernelSpec& spec, const ParamVector& theta,
                         const Dataset& data, OpCounter& counter,
                         double tol, int max_sweeps) {
  const Eigen::Index n = data.size();
  const Matrix K = covariance_matrix(spec, theta, data.X, false);
  CholeskyFactor prior_chol = cholesky_with_jitter(K, counter);

  Vector site_prec = Vector::Zero(n);   // tau-tilde
  Vector site_nat = Vector::Zero(n);    // nu-tilde
  Matrix Sigma = K;
  Vector mu = Vector::Zero(n);
  Eigen::VectorXi neg_streak = Eigen::VectorXi::Zero(n);
  double log_det_B = 0.0;
  bool converged = false;

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double max_change = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double cav_prec = 1.0 / Sigma(i, i) - site_prec(i);
      if (cav_prec <= 0.0) continue;
      const double cav_nat = mu(i) / Sigma(i, i) - site_nat(i);
      const double cav_var = 1.0 / cav_prec;
      const double cav_mean = cav_nat * cav_var;

      const double denom = std::sqrt(1.0 + cav_var);
      const double z = data.y(i) * cav_mean / denom;
      const double r = probit_hazard(z);
      const double tilted_mean = cav_mean + cav_var * data.y(i) * r / denom;
      const double tilted_var =
          cav_var * (1.0 - cav_var * r * (z + r) / (1.0 + cav_var));

      const double new_prec = 1.0 / tilted_var - cav_prec;
      if (new_prec < 0.0) {
        if (++neg_streak(i) >= 20) {
          throw OscillationDetected("ep_approx: site precision oscillates");
        }
        continue;
      }
      neg_streak(i) = 0;
      const double new_nat = tilted_mean / tilted_var - cav_nat;
      const double d_prec = new_prec - site_prec(i);
      max_change = std::max(
          {max_change, std::abs(d_prec), std::abs(new_nat - site_nat(i))});
      site_prec(i) = new_prec;
      site_nat(i) = new_nat;

      // rank-1 posterior update
      const Vector s = Sigma.col(i);
      Sigma -= (d_prec / (1.0 + d_prec * Sigma(i, i))) * (s * s.transpose());
      mu = Sigma * site_nat;
    }

    // recompute the posterior from the sites (counted 1 Cholesky + 2 for
    // the explicit inverse, per sweep)
    const Vector sqrt_s = site_prec.cwiseSqrt();
    Matrix B = Matrix::Identity(n, n) +
               sqrt_s.asDiagonal() * K * sqrt_s.asDiagonal();
    const CholeskyFactor LB = cholesky(B, counter);
    counter.add(2);
    Matrix V = LB.matrix().triangularView<Eigen::Lower>().solve(
        Matrix(sqrt_s.asDiagonal() * K));
    Sigma = K - V.transpose() * V;
    mu = Sigma * site_nat;
    log_det_B = log_det_from_chol(LB);

    if (max_change < tol) {
      converged = true;
      break;
    }
  }
  if (!converged) {
    throw NoConvergence("ep_approx: sweeps did not converge");
  }

  // EP log evidence, written in natural parameters so tau-tilde = 0 sites
  // stay regular
  double log_evidence = -0.5 * log_det_B + 0.5 * site_nat.dot(Sigma * site_nat);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double cav_prec = 1.0 / Sigma(i, i) - site_prec(i);
    const double cav_var = 1.0 / cav_prec;
    const double cav_mean = (mu(i) / Sigma(i, i) - site_nat(i)) * cav_var;
    const double z = data.y(i) * cav_mean / std::sqrt(1.0 + cav_var);
    const double t = 1.0 + site_prec(i) * cav_var;
    log_evidence += log_phi_cdf(z) + 0.5 * std::log(t);
    log_evidence += (site_prec(i) * cav_mean * cav_mean -
                     2.0 * cav_mean * site_nat(i) -
                     cav_var * site_nat(i) * site_nat(i)) /
                    (2.0 * t);
  }

  CholeskyFactor chol_cov = cholesky_with_jitter(Sigma, counter);
  return {mu, std::move(chol_cov), log_evidence, std::move(prior_chol)};
}

double pseudo_marginal_estimate(const Dataset& data,
                                const GaussianApprox& approx, int n_imp,
                                Rng& rng) {
  const Eigen::Index n = data.size();
  const Vector zero = Vector::Zero(n);
  std::vector<double> log_w;
  log_w.reserve(n_imp);
  for (int s = 0; s < n_imp; ++s) {
    const Vector f = mvn_sample(approx.mean, approx.chol_cov, rng);
    double loglik = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      loglik += probit_log_likelihood(data.y(i), f(i));
    }
    log_w.push_back(loglik + mvn_log_density(f, zero, approx.prior_chol) -
                    mvn_log_density(f, approx.mean, approx.chol_cov));
  }
  const double lse = log_sum_exp(log_w);
  if (lse == -std::numeric_limits<double>::infinity()) {
    throw AllWeightsDegenerate("pseudo_marginal_estimate: all weights zero");
  }
  return lse - std::log(static_cast<double>(n_imp));
}

}  // namespace gpais
