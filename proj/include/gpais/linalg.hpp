#pragma once

#include <Eigen/Dense>
#include <atomic>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace gpais {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct NotPositiveDefinite : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DimensionMismatch : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Tally of O(n^3) linear-algebra operations (Cholesky factorizations and
/// explicit inversions).  Shared across all modules within one run; safe to
/// increment from parallel sample evaluations.
class OpCounter {
 public:
  OpCounter() : count_(0) {}
  void add(std::int64_t n) { count_.fetch_add(n, std::memory_order_relaxed); }
  std::int64_t count() const { return count_.load(std::memory_order_relaxed); }

 private:
  std::atomic<std::int64_t> count_;
};

/// Lower-triangular Cholesky factor L with M = L L^T.
class CholeskyFactor {
 public:
  explicit CholeskyFactor(Matrix L);
  const Matrix& matrix() const { return L_; }
  Eigen::Index order() const { return L_.rows(); }

 private:
  Matrix L_;
};

/// Splittable deterministic RNG.  Every stochastic operation takes an
/// explicit handle; child streams are derived by mixing the seed with a
/// stream id, never by sharing state.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  Rng split(std::uint64_t stream) const;

  double uniform();                 // U(0,1), open at 0
  double normal();                  // standard normal
  double exponential();             // rate 1
  std::uint64_t integer(std::uint64_t bound);  // uniform in [0, bound)

 private:
  std::uint64_t state_[2];
  std::uint64_t next();
  std::uint64_t seed_;
  bool has_cached_ = false;
  double cached_ = 0.0;
};

/// Factorizes a symmetric positive-definite matrix; charges exactly one
/// cubic op.  Asymmetry below 1e-10 relative is averaged away, anything
/// larger is an error.  Throws NotPositiveDefinite on leading-minor failure;
/// callers own the jitter policy.
CholeskyFactor cholesky(const Matrix& m, OpCounter& counter);

/// Solves L x = b (or L^T x = b when transposed).  O(n^2), not charged.
Vector tri_solve(const CholeskyFactor& chol, const Vector& b,
                 bool transposed = false);

/// 2 sum_i ln L_ii.
double log_det_from_chol(const CholeskyFactor& chol);

/// Log density of N(mean, L L^T) at x.  The factor is supplied, so nothing
/// is charged.
double mvn_log_density(const Vector& x, const Vector& mean,
                       const CholeskyFactor& chol);

/// mean + L z with z iid standard normal.
Vector mvn_sample(const Vector& mean, const CholeskyFactor& chol, Rng& rng);

double log_sum_exp(const std::vector<double>& log_values);
double log_add_exp(double a, double b);

}  // namespace gpais
