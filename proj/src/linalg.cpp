#include "gpais/linalg.hpp"

#include <cmath>
#include <vector>

namespace gpais {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

// splitmix64, used both to expand seeds into state and to derive streams
std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

CholeskyFactor::CholeskyFactor(Matrix L) : L_(std::move(L)) {
  if (L_.rows() != L_.cols() || L_.rows() == 0) {
    throw DimensionMismatch("Cholesky factor must be square and non-empty");
  }
  for (Eigen::Index i = 0; i < L_.rows(); ++i) {
    if (!(L_(i, i) > 0.0)) {
      throw NotPositiveDefinite("Cholesky factor has non-positive diagonal");
    }
  }
}

Rng::Rng(std::uint64_t seed) : seed_(seed) {
  state_[0] = mix64(seed);
  state_[1] = mix64(state_[0]);
  if (state_[0] == 0 && state_[1] == 0) state_[1] = 1;
}

Rng Rng::split(std::uint64_t stream) const {
  return Rng(mix64(seed_ ^ mix64(stream + 0x5851f42d4c957f2dULL)));
}

std::uint64_t Rng::next() {
  // xoroshiro128++
  const std::uint64_t s0 = state_[0];
  std::uint64_t s1 = state_[1];
  const std::uint64_t result = rotl(s0 + s1, 17) + s0;
  s1 ^= s0;
  state_[0] = rotl(s0, 49) ^ s1 ^ (s1 << 21);
  state_[1] = rotl(s1, 28);
  return result;
}

double Rng::uniform() {
  // 53-bit mantissa, shifted into (0,1]
  return (static_cast<double>(next() >> 11) + 1.0) * 0x1.0p-53;
}

double Rng::normal() {
  if (has_cached_) {
    has_cached_ = false;
    return cached_;
  }
  // Box-Muller
  const double u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * M_PI * u2;
  cached_ = r * std::sin(a);
  has_cached_ = true;
  return r * std::cos(a);
}

double Rng::exponential() { return -std::log(uniform()); }

std::uint64_t Rng::integer(std::uint64_t bound) {
  // rejection-free modulo is fine at our bounds (<= a few thousand)
  return next() % bound;
}

CholeskyFactor cholesky(const Matrix& m, OpCounter& counter) {
  if (m.rows() != m.cols() || m.rows() == 0) {
    throw DimensionMismatch("cholesky: matrix must be square and non-empty");
  }
  const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
  const double scale = std::max(m.cwiseAbs().maxCoeff(), 1e-300);
  if (asym > 1e-10 * scale) {
    throw std::invalid_argument("cholesky: matrix is not symmetric");
  }
  Matrix sym = 0.5 * (m + m.transpose());
  counter.add(1);
  Eigen::LLT<Matrix> llt(sym);
  if (llt.info() != Eigen::Success) {
    throw NotPositiveDefinite("cholesky: matrix is not positive definite");
  }
  return CholeskyFactor(llt.matrixL());
}

Vector tri_solve(const CholeskyFactor& chol, const Vector& b, bool transposed) {
  if (b.size() != chol.order()) {
    throw DimensionMismatch("tri_solve: dimension mismatch");
  }
  if (transposed) {
    return chol.matrix().triangularView<Eigen::Lower>().transpose().solve(b);
  }
  return chol.matrix().triangularView<Eigen::Lower>().solve(b);
}

double log_det_from_chol(const CholeskyFactor& chol) {
  return 2.0 * chol.matrix().diagonal().array().log().sum();
}

double mvn_log_density(const Vector& x, const Vector& mean,
                       const CholeskyFactor& chol) {
  if (x.size() != mean.size() || x.size() != chol.order()) {
    throw DimensionMismatch("mvn_log_density: dimension mismatch");
  }
  const Vector z = tri_solve(chol, x - mean);
  const double d = static_cast<double>(x.size());
  return -0.5 * d * kLog2Pi - 0.5 * log_det_from_chol(chol) -
         0.5 * z.squaredNorm();
}

Vector mvn_sample(const Vector& mean, const CholeskyFactor& chol, Rng& rng) {
  Vector z(chol.order());
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = rng.normal();
  return mean + chol.matrix().triangularView<Eigen::Lower>() * z;
}

double log_add_exp(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

double log_sum_exp(const std::vector<double>& log_values) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : log_values) m = std::max(m, v);
  if (m == -std::numeric_limits<double>::infinity()) return m;
  double s = 0.0;
  for (double v : log_values) s += std::exp(v - m);
  return m + std::log(s);
}

}  // namespace gpais
