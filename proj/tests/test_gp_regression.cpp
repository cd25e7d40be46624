#include <doctest.h>

#include <Eigen/LU>
#include <cmath>

#include "gpais/gp_regression.hpp"

using namespace gpais;

namespace {

Dataset random_dataset(Rng& rng, Eigen::Index n, Eigen::Index d) {
  Dataset data;
  data.X.resize(n, d);
  data.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) data.X(i, j) = rng.normal();
    data.y(i) = rng.normal();
  }
  return data;
}

ParamVector random_theta(Rng& rng, int n_params) {
  ParamVector theta;
  theta.log_values.resize(n_params);
  for (int j = 0; j < n_params; ++j) theta.log_values(j) = 0.5 * rng.normal();
  return theta;
}

}  // namespace

TEST_CASE("log marginal matches the dense multivariate-normal formula") {
  Rng rng(20);
  for (int rep = 0; rep < 10; ++rep) {
    KernelSpec spec;
    spec.family = rep % 2 == 0 ? KernelFamily::RBF : KernelFamily::ARD;
    spec.input_dim = 2;
    spec.task = TaskType::Regression;
    const Dataset data = random_dataset(rng, 6, 2);
    const ParamVector theta = random_theta(rng, spec.n_params());

    OpCounter counter;
    const double value = log_marginal_regression(spec, theta, data, counter);

    // oracle: dense inverse / LU determinant, no Cholesky
    const Matrix c = covariance_matrix(spec, theta, data.X, true);
    const double n = static_cast<double>(data.size());
    const double oracle = -0.5 * data.y.dot(c.fullPivLu().solve(data.y)) -
                          0.5 * std::log(c.fullPivLu().determinant()) -
                          0.5 * n * std::log(2.0 * M_PI);
    CHECK(value == doctest::Approx(oracle).epsilon(1e-9));
  }
}

TEST_CASE("one cubic op per evaluation, three with gradient") {
  Rng rng(21);
  KernelSpec spec;
  spec.family = KernelFamily::RBF;
  spec.input_dim = 1;
  spec.task = TaskType::Regression;
  const Dataset data = random_dataset(rng, 8, 1);
  const ParamVector theta = random_theta(rng, 3);

  OpCounter c1;
  log_marginal_regression(spec, theta, data, c1);
  CHECK(c1.count() == 1);

  OpCounter c3;
  log_marginal_regression_with_grad(spec, theta, data, c3);
  CHECK(c3.count() == 3);
}

TEST_CASE("value from the gradient path equals the plain value") {
  Rng rng(22);
  KernelSpec spec;
  spec.family = KernelFamily::ARD;
  spec.input_dim = 3;
  spec.task = TaskType::Regression;
  const Dataset data = random_dataset(rng, 7, 3);
  const ParamVector theta = random_theta(rng, spec.n_params());

  OpCounter counter;
  const double value = log_marginal_regression(spec, theta, data, counter);
  const ValueAndGrad vg =
      log_marginal_regression_with_grad(spec, theta, data, counter);
  CHECK(vg.value == doctest::Approx(value).epsilon(1e-12));
}

TEST_CASE("gradient matches central finite differences") {
  Rng rng(23);
  for (int rep = 0; rep < 10; ++rep) {
    KernelSpec spec;
    spec.family = rep % 2 == 0 ? KernelFamily::RBF : KernelFamily::ARD;
    spec.input_dim = 1 + static_cast<int>(rng.integer(3));
    spec.task = TaskType::Regression;
    const Eigen::Index n = 3 + static_cast<Eigen::Index>(rng.integer(6));
    const Dataset data = random_dataset(rng, n, spec.input_dim);
    const ParamVector theta = random_theta(rng, spec.n_params());

    OpCounter counter;
    const ValueAndGrad vg =
        log_marginal_regression_with_grad(spec, theta, data, counter);
    const double h = 1e-6;
    for (int p = 0; p < spec.n_params(); ++p) {
      ParamVector tp = theta, tm = theta;
      tp.log_values(p) += h;
      tm.log_values(p) -= h;
      const double fd =
          (log_marginal_regression(spec, tp, data, counter) -
           log_marginal_regression(spec, tm, data, counter)) /
          (2.0 * h);
      CHECK(vg.grad(p) ==
            doctest::Approx(fd).epsilon(1e-5).scale(std::abs(fd) + 1.0));
    }
  }
}

TEST_CASE("jittered cholesky rescues near-singular matrices and charges "
          "every attempt") {
  // rank-one matrix: plain cholesky fails, jitter succeeds
  Vector v(3);
  v << 1.0, 2.0, 3.0;
  const Matrix singular = v * v.transpose();
  OpCounter counter;
  const CholeskyFactor chol = cholesky_with_jitter(singular, counter);
  CHECK(counter.count() > 1);  // at least one failed attempt plus the rescue
  const Matrix recon = chol.matrix() * chol.matrix().transpose();
  // reconstruction differs from the input only by the added jitter
  const double mean_diag = singular.diagonal().mean();
  CHECK((recon - singular).cwiseAbs().maxCoeff() <= 1.1e-4 * mean_diag);

  // a well-conditioned matrix costs exactly one op
  OpCounter c_ok;
  Matrix spd(2, 2);
  spd << 2.0, 0.3, 0.3, 1.0;
  cholesky_with_jitter(spd, c_ok);
  CHECK(c_ok.count() == 1);

  // a strongly indefinite input exhausts the escalation
  OpCounter c_bad;
  Matrix indef(2, 2);
  indef << 1.0, 2.0, 2.0, 1.0;  // eigenvalues -1 and 3, jitter can't fix it
  CHECK_THROWS_AS(cholesky_with_jitter(indef, c_bad), NotPositiveDefinite);
  CHECK(c_bad.count() > 1);
}
