#include <doctest.h>

#include <Eigen/LU>
#include <cmath>
#include <set>

#include "gpais/linalg.hpp"

using namespace gpais;

namespace {

Matrix random_spd(Rng& rng, Eigen::Index n) {
  Matrix a(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) a(i, j) = rng.normal();
  }
  return a * a.transpose() + 0.5 * Matrix::Identity(n, n);
}

}  // namespace

TEST_CASE("cholesky reconstructs the input and charges one op") {
  Matrix m(2, 2);
  m << 4.0, 2.0, 2.0, 3.0;
  OpCounter counter;
  const CholeskyFactor chol = cholesky(m, counter);
  CHECK(counter.count() == 1);
  const Matrix& l = chol.matrix();
  // hand factorization: L = [[2, 0], [1, sqrt(2)]]
  CHECK(l(0, 0) == doctest::Approx(2.0));
  CHECK(l(1, 0) == doctest::Approx(1.0));
  CHECK(l(1, 1) == doctest::Approx(std::sqrt(2.0)));
  CHECK(l(0, 1) == doctest::Approx(0.0));
  CHECK(((l * l.transpose()) - m).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("cholesky rejects bad inputs") {
  OpCounter counter;
  Matrix not_square(2, 3);
  not_square.setZero();
  CHECK_THROWS_AS(cholesky(not_square, counter), DimensionMismatch);

  Matrix asym(2, 2);
  asym << 1.0, 0.5, 0.4, 1.0;  // asymmetry far above tolerance
  CHECK_THROWS_AS(cholesky(asym, counter), std::invalid_argument);

  Matrix nearly(2, 2);
  nearly << 1.0, 0.5, 0.5 + 1e-12, 1.0;  // below 1e-10 relative: averaged away
  CHECK_NOTHROW(cholesky(nearly, counter));

  Matrix indef(2, 2);
  indef << 1.0, 2.0, 2.0, 1.0;
  CHECK_THROWS_AS(cholesky(indef, counter), NotPositiveDefinite);
}

TEST_CASE("tri_solve matches a dense solve") {
  Rng rng(1);
  const Matrix m = random_spd(rng, 5);
  OpCounter counter;
  const CholeskyFactor chol = cholesky(m, counter);
  Vector b(5);
  for (int i = 0; i < 5; ++i) b(i) = rng.normal();

  const Vector x = tri_solve(chol, b);
  // oracle: direct triangular system via dense inverse
  const Matrix l = chol.matrix();
  CHECK((l * x - b).cwiseAbs().maxCoeff() < 1e-10);

  const Vector xt = tri_solve(chol, b, true);
  CHECK((l.transpose() * xt - b).cwiseAbs().maxCoeff() < 1e-10);

  // full solve M x = b through the two triangular stages
  const Vector full = tri_solve(chol, tri_solve(chol, b), true);
  const Vector oracle = m.fullPivLu().solve(b);
  CHECK((full - oracle).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("log_det_from_chol matches an LU determinant") {
  Rng rng(2);
  for (int rep = 0; rep < 5; ++rep) {
    const Matrix m = random_spd(rng, 4);
    OpCounter counter;
    const CholeskyFactor chol = cholesky(m, counter);
    const double oracle = std::log(m.fullPivLu().determinant());
    CHECK(log_det_from_chol(chol) == doctest::Approx(oracle).epsilon(1e-10));
  }
}

TEST_CASE("mvn_log_density matches the dense-inverse formula") {
  Rng rng(3);
  const Eigen::Index d = 3;
  const Matrix cov = random_spd(rng, d);
  Vector mean(d), x(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    mean(i) = rng.normal();
    x(i) = rng.normal();
  }
  OpCounter counter;
  const CholeskyFactor chol = cholesky(cov, counter);
  // oracle: -d/2 log 2pi - 1/2 log|cov| - 1/2 (x-m)' cov^-1 (x-m), all dense
  const Vector r = x - mean;
  const double oracle =
      -0.5 * d * std::log(2.0 * M_PI) -
      0.5 * std::log(cov.fullPivLu().determinant()) -
      0.5 * r.dot(cov.fullPivLu().solve(r));
  CHECK(mvn_log_density(x, mean, chol) ==
        doctest::Approx(oracle).epsilon(1e-10));
}

TEST_CASE("mvn_sample has the right first two moments") {
  Rng rng(4);
  Matrix cov(2, 2);
  cov << 2.0, 0.8, 0.8, 1.0;
  Vector mean(2);
  mean << -1.0, 0.5;
  OpCounter counter;
  const CholeskyFactor chol = cholesky(cov, counter);

  const int n = 200000;
  Vector sum = Vector::Zero(2);
  Matrix sum_outer = Matrix::Zero(2, 2);
  for (int i = 0; i < n; ++i) {
    const Vector s = mvn_sample(mean, chol, rng);
    sum += s;
    sum_outer += s * s.transpose();
  }
  const Vector mhat = sum / n;
  const Matrix chat = sum_outer / n - mhat * mhat.transpose();
  CHECK((mhat - mean).cwiseAbs().maxCoeff() < 0.02);
  CHECK((chat - cov).cwiseAbs().maxCoeff() < 0.05);
}

TEST_CASE("log_sum_exp handles extreme ranges") {
  CHECK(log_sum_exp({0.0, 0.0}) == doctest::Approx(std::log(2.0)));
  CHECK(log_sum_exp({-1000.0, -1000.0}) ==
        doctest::Approx(-1000.0 + std::log(2.0)));
  CHECK(log_sum_exp({1000.0, 0.0}) == doctest::Approx(1000.0));
  const double ninf = -std::numeric_limits<double>::infinity();
  CHECK(log_sum_exp({ninf, ninf}) == ninf);
  CHECK(log_add_exp(ninf, 2.0) == doctest::Approx(2.0));
  CHECK(log_add_exp(std::log(3.0), std::log(5.0)) ==
        doctest::Approx(std::log(8.0)));
}

TEST_CASE("rng streams are deterministic and independent") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.uniform() == b.uniform());

  // a split stream does not depend on how much the parent has consumed
  Rng parent1(7), parent2(7);
  parent2.uniform();
  Rng c1 = parent1.split(3), c2 = parent2.split(3);
  for (int i = 0; i < 10; ++i) CHECK(c1.uniform() == c2.uniform());

  // distinct streams differ
  Rng d1 = parent1.split(1), d2 = parent1.split(2);
  bool all_equal = true;
  for (int i = 0; i < 10; ++i) {
    if (d1.uniform() != d2.uniform()) all_equal = false;
  }
  CHECK_FALSE(all_equal);
}

TEST_CASE("rng marginals") {
  Rng rng(9);
  const int n = 200000;
  double su = 0, sn = 0, sn2 = 0, se = 0;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    CHECK(u > 0.0);
    CHECK(u <= 1.0);
    su += u;
    const double z = rng.normal();
    sn += z;
    sn2 += z * z;
    se += rng.exponential();
  }
  CHECK(su / n == doctest::Approx(0.5).epsilon(0.01));
  CHECK(sn / n == doctest::Approx(0.0).epsilon(1.0).scale(0.01));
  CHECK(std::abs(sn / n) < 0.01);
  CHECK(sn2 / n == doctest::Approx(1.0).epsilon(0.02));
  CHECK(se / n == doctest::Approx(1.0).epsilon(0.02));

  std::set<std::uint64_t> seen;
  for (int i = 0; i < 1000; ++i) {
    const std::uint64_t v = rng.integer(7);
    CHECK(v < 7);
    seen.insert(v);
  }
  CHECK(seen.size() == 7);
}

TEST_CASE("op counter accumulates") {
  OpCounter c;
  CHECK(c.count() == 0);
  c.add(3);
  c.add(2);
  CHECK(c.count() == 5);
}
