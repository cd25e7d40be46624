#pragma once

#include "gpais/linalg.hpp"

#include <functional>
#include <optional>

namespace gpais {

struct ZeroTotalWeight : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ProposalCollapse : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Log of the unnormalized target f (or of its unbiased estimate f-tilde for
/// noisy targets).  Each theta is evaluated exactly once; retro-weighting
/// reuses the cached value.
struct TargetDensity {
  std::function<double(const Vector& theta, Rng& rng, OpCounter& counter)>
      log_eval;
  bool is_noisy = false;
};

/// Gaussian importance-density parameters gamma = (mu, Sigma).
struct ProposalParams {
  Vector mean;
  CholeskyFactor chol_cov;

  double log_density(const Vector& theta) const {
    return mvn_log_density(theta, mean, chol_cov);
  }
  Vector sample(Rng& rng) const { return mvn_sample(mean, chol_cov, rng); }
};

/// Iteration count T and per-iteration sample size N_t.
struct Schedule {
  int iterations;
  std::function<int(int)> sample_size;  // t in [0, T)

  static Schedule constant(int T, int N);
  static Schedule affine(int T, int base, int slope);  // N_t = base + slope*t
};

enum class AdaptMode { FullCov, DiagCov };

/// Full sampler history: samples, cached log-target values, log mixture
/// denominators delta, and the list of proposals used.
class WeightedSampleStore {
 public:
  std::vector<Vector> samples;
  std::vector<double> log_target;
  std::vector<double> log_delta;
  std::vector<int> iteration_of;
  std::vector<ProposalParams> proposals;
  std::vector<int> sample_sizes;
  int degenerate_iterations = 0;  // iterations whose ESS fell below 2

  std::int64_t total_samples() const {
    return static_cast<std::int64_t>(samples.size());
  }
  /// log w_i = log f_i - (log delta_i - log sum_t N_t)
  double log_weight(std::size_t i) const;
  std::vector<double> log_weights() const;
  /// Weights scaled to sum to 1.
  std::vector<double> normalized_weights() const;
};

struct IsRunOptions {
  AdaptMode adapt_mode = AdaptMode::FullCov;
  /// Called after each iteration's retro-weighting (trace hook).
  std::function<void(const WeightedSampleStore&, int t)> on_iteration;
  /// MAMIS-P: shrink each iteration's moment-matched proposal toward this
  /// prior with the given strength.
  std::optional<ProposalParams> regularizing_prior;
  double prior_strength = 0.0;
  /// AMIS only: switch adaptation to current-iteration-only (MAMIS-style)
  /// from this iteration on; -1 disables.
  int switch_to_mamis_at = -1;
};

/// Generic AMIS: deterministic-multiple-mixture weights, retroactive delta
/// updates, moment-matching adaptation on the full weighted history.  Noisy
/// targets make this PM-AMIS with identical control flow.
WeightedSampleStore amis_run(const TargetDensity& target,
                             const ProposalParams& gamma0,
                             const Schedule& schedule, Rng& rng,
                             OpCounter& counter, const IsRunOptions& opts = {});

/// Modified AMIS: adapts from the current iteration's samples with classical
/// weights; the final output weights follow the full-mixture rule.
WeightedSampleStore mamis_run(const TargetDensity& target,
                              const ProposalParams& gamma0,
                              const Schedule& schedule, Rng& rng,
                              OpCounter& counter,
                              const IsRunOptions& opts = {});

struct AmisMamisResult {
  WeightedSampleStore store;          // the MAMIS run
  std::int64_t tuning_ops;            // cubic ops spent in the AMIS phase
};

/// AMIS for a fixed number of iterations as a tuning phase, then MAMIS seeded
/// with the moment-matched proposal.  AMIS samples are charged to the counter
/// but excluded from the final estimator.
AmisMamisResult amis_mamis_run(const TargetDensity& target,
                               const ProposalParams& gamma0,
                               const Schedule& amis_schedule,
                               const Schedule& mamis_schedule, Rng& rng,
                               OpCounter& counter,
                               const IsRunOptions& opts = {});

/// Weighted mean and (1/sum-w normalized) covariance of the full history
/// under the current weights.
void moment_match(const std::vector<Vector>& samples,
                  const std::vector<double>& log_weights, Vector& mean,
                  Matrix& cov);
ProposalParams moment_match(const WeightedSampleStore& store);

/// Conjugate-style shrinkage of an iteration's moment-matched proposal
/// toward an informative prior; SPD output whenever the prior is SPD.
ProposalParams mamis_p_update(const ProposalParams& prior,
                              double prior_strength,
                              const std::vector<Vector>& samples,
                              const std::vector<double>& log_weights);

/// Self-normalized estimate of E[h(theta)].
double self_normalized_expectation(const WeightedSampleStore& store,
                                   const std::function<double(const Vector&)>& h);

/// log of Z-hat = sum w / sum N.
double log_normalizing_constant(const WeightedSampleStore& store);

/// (sum w)^2 / sum w^2 from log weights.
double effective_sample_size(const std::vector<double>& log_weights);

}  // namespace gpais
