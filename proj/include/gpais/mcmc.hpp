#pragma once

#include "gpais/is_samplers.hpp"

namespace gpais {

struct TuningFailed : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ShrinkageExhausted : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Current position with its cached log-target value.  For pseudo-marginal
/// chains the cached noisy value stays fixed until the next accepted move.
struct ChainState {
  Vector theta;
  double log_target;
};

/// Exact log target with gradient, for the HMC family.
struct GradTargetResult {
  double value;
  Vector grad;
};
struct GradTarget {
  std::function<GradTargetResult(const Vector&, OpCounter&)> eval;
};

enum class MassVariant { Identity, DiagInverseApproxCov, InverseApproxCov };

/// Momentum covariance M, its factor (for sampling) and inverse (for the
/// kinetic energy and the U-turn criterion).
struct MassMatrix {
  Matrix M;
  CholeskyFactor chol;
  Matrix Minv;
};
MassMatrix make_mass_matrix(MassVariant variant, const Matrix& approx_cov,
                            double scale = 1.0);

struct MhResult {
  ChainState state;
  bool accepted;
};

/// Symmetric Gaussian random-walk Metropolis step; one target evaluation per
/// proposal.  Noisy targets make this PM-MH: the cached estimate of the
/// current state enters the ratio unchanged.
MhResult mh_step(const ChainState& state, const CholeskyFactor& proposal_chol,
                 const TargetDensity& target, Rng& rng, OpCounter& counter);

struct TuneResult {
  double alpha;
  double final_rate;
  int batches;
};

/// Stochastic-approximation scale tuning: alpha <- alpha * exp(rate - target)
/// over batches of 200 steps until within tol twice in a row.  run_batch
/// must advance the chain by n steps at the given alpha and return the batch
/// acceptance rate.
TuneResult tune_scale(const std::function<double(double alpha, int n)>& run_batch,
                      double alpha0, double target_rate, double tol = 0.05,
                      int batch_size = 200, int max_batches = 20);

struct HmcState {
  Vector theta;
  double log_target;
  Vector grad;
};
struct HmcResult {
  HmcState state;
  bool accepted;
  double accept_prob;
};

/// One HMC step: momentum from N(0, M), L leapfrog steps of size eps
/// (L drawn uniformly in {1..l_max} unless jitter is off), Metropolis
/// correction on the Hamiltonian.  Non-finite Hamiltonians reject.
HmcResult hmc_step(const HmcState& state, const MassMatrix& mass, double eps,
                   int l_max, bool jitter_leapfrog, const GradTarget& target,
                   Rng& rng, OpCounter& counter);

struct NutsResult {
  HmcState state;
  double accept_stat_sum;  // alpha in the dual-averaging statistic
  int accept_stat_n;
  int depth;
  bool max_depth_hit;
};

/// No-U-Turn step: recursive doubling with a slice variable, U-turn
/// criterion taken through the mass matrix, tree depth capped at 10.
NutsResult nuts_step(const HmcState& state, const MassMatrix& mass, double eps,
                     const GradTarget& target, Rng& rng, OpCounter& counter,
                     int max_depth = 10);

struct DualAveragingParams {
  double gamma = 0.05;
  double t0 = 30.0;
  double kappa = 0.75;
  double target_accept = 0.65;
};

struct NutsdaResult {
  std::vector<Vector> chain;  // post-adaptation samples
  double epsilon;             // frozen step size
  std::int64_t eot_ops;       // counter value when adaptation ended
  HmcState final_state;       // chain position after the last step
};

/// NUTS with dual averaging of the step size toward the target acceptance
/// statistic over n_adapt steps (tuning cost), then frozen for n_keep steps.
NutsdaResult nutsda_run(
    const HmcState& state0, const MassMatrix& mass,
    const DualAveragingParams& da, int n_adapt, int n_keep,
    const GradTarget& target, Rng& rng, OpCounter& counter,
    const std::function<void(const Vector&, std::int64_t)>& on_sample = {});

/// Heuristic initial step size (doubling/halving until the one-step
/// acceptance crosses 1/2).
double find_reasonable_epsilon(const HmcState& state, const MassMatrix& mass,
                               const GradTarget& target, Rng& rng,
                               OpCounter& counter);

/// Component-wise slice sampling sweep: stepping out with width w (no step
/// cap) then shrinkage, ascending component order.
ChainState slice_step(const ChainState& state, double w,
                      const TargetDensity& target, Rng& rng,
                      OpCounter& counter);

}  // namespace gpais
