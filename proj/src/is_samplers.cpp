#include "gpais/is_samplers.hpp"

#include <cmath>

namespace gpais {

namespace {

// Proposal-space factorizations are d_theta-sized, not n-sized; they are
// never charged to the cubic-op counter.
OpCounter& scratch_counter() {
  thread_local OpCounter c;
  return c;
}

std::optional<ProposalParams> try_make_proposal(const Vector& mean, Matrix cov,
                                                AdaptMode mode) {
  if (mode == AdaptMode::DiagCov) {
    const Vector d = cov.diagonal();
    cov.setZero();
    cov.diagonal() = d;
  }
  try {
    return ProposalParams{mean, cholesky(cov, scratch_counter())};
  } catch (const NotPositiveDefinite&) {
  } catch (const std::invalid_argument&) {
  }
  // ridge rescue
  const double d = static_cast<double>(cov.rows());
  cov.diagonal().array() += 1e-8 * cov.trace() / d;
  try {
    return ProposalParams{mean, cholesky(cov, scratch_counter())};
  } catch (const NotPositiveDefinite&) {
    return std::nullopt;
  } catch (const std::invalid_argument&) {
    return std::nullopt;
  }
}

double ess_of_store(const WeightedSampleStore& store) {
  try {
    return effective_sample_size(store.log_weights());
  } catch (const ZeroTotalWeight&) {
    return 0.0;
  }
}

// Draws N_t samples from the current proposal, evaluates the target once per
// sample, and maintains the mixture denominators: past deltas gain
// N_t q_t(theta), new deltas sum over every proposal used so far.
void run_iteration(WeightedSampleStore& store, const TargetDensity& target,
                   const ProposalParams& proposal, int t, int n_t, Rng& rng,
                   OpCounter& counter, std::vector<double>* log_q_current) {
  const double log_nt = std::log(static_cast<double>(n_t));
  for (std::size_t i = 0; i < store.samples.size(); ++i) {
    store.log_delta[i] = log_add_exp(
        store.log_delta[i], log_nt + proposal.log_density(store.samples[i]));
  }
  store.proposals.push_back(proposal);
  store.sample_sizes.push_back(n_t);

  for (int i = 0; i < n_t; ++i) {
    Vector theta = proposal.sample(rng);
    const double log_f = target.log_eval(theta, rng, counter);
    double log_delta = -std::numeric_limits<double>::infinity();
    for (std::size_t m = 0; m < store.proposals.size(); ++m) {
      log_delta = log_add_exp(
          log_delta, std::log(static_cast<double>(store.sample_sizes[m])) +
                         store.proposals[m].log_density(theta));
    }
    if (log_q_current != nullptr) {
      log_q_current->push_back(proposal.log_density(theta));
    }
    store.samples.push_back(std::move(theta));
    store.log_target.push_back(log_f);
    store.log_delta.push_back(log_delta);
    store.iteration_of.push_back(t);
  }
}

std::vector<double> classical_log_weights(const WeightedSampleStore& store,
                                          int t,
                                          const std::vector<double>& log_q) {
  std::vector<double> lw;
  std::size_t k = 0;
  for (std::size_t i = 0; i < store.samples.size(); ++i) {
    if (store.iteration_of[i] == t) {
      lw.push_back(store.log_target[i] - log_q[k]);
      ++k;
    }
  }
  return lw;
}

std::vector<Vector> iteration_samples(const WeightedSampleStore& store, int t) {
  std::vector<Vector> out;
  for (std::size_t i = 0; i < store.samples.size(); ++i) {
    if (store.iteration_of[i] == t) out.push_back(store.samples[i]);
  }
  return out;
}

}  // namespace

Schedule Schedule::constant(int T, int N) {
  return {T, [N](int) { return N; }};
}

Schedule Schedule::affine(int T, int base, int slope) {
  return {T, [base, slope](int t) { return base + slope * t; }};
}

double WeightedSampleStore::log_weight(std::size_t i) const {
  std::int64_t total = 0;
  for (int n : sample_sizes) total += n;
  return log_target[i] -
         (log_delta[i] - std::log(static_cast<double>(total)));
}

std::vector<double> WeightedSampleStore::log_weights() const {
  std::vector<double> lw(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) lw[i] = log_weight(i);
  return lw;
}

std::vector<double> WeightedSampleStore::normalized_weights() const {
  std::vector<double> lw = log_weights();
  const double lse = log_sum_exp(lw);
  if (lse == -std::numeric_limits<double>::infinity()) {
    throw ZeroTotalWeight("normalized_weights: all weights zero");
  }
  std::vector<double> w(lw.size());
  for (std::size_t i = 0; i < lw.size(); ++i) w[i] = std::exp(lw[i] - lse);
  return w;
}

WeightedSampleStore amis_run(const TargetDensity& target,
                             const ProposalParams& gamma0,
                             const Schedule& schedule, Rng& rng,
                             OpCounter& counter, const IsRunOptions& opts) {
  WeightedSampleStore store;
  ProposalParams current = gamma0;
  for (int t = 0; t < schedule.iterations; ++t) {
    const int n_t = schedule.sample_size(t);
    const bool mamis_style =
        opts.switch_to_mamis_at >= 0 && t >= opts.switch_to_mamis_at;
    std::vector<double> log_q_current;
    run_iteration(store, target, current, t, n_t, rng, counter,
                  mamis_style ? &log_q_current : nullptr);
    if (ess_of_store(store) < 2.0) ++store.degenerate_iterations;
    if (opts.on_iteration) opts.on_iteration(store, t);
    if (t + 1 == schedule.iterations) break;

    try {
      Vector mean;
      Matrix cov;
      if (mamis_style) {
        moment_match(iteration_samples(store, t),
                     classical_log_weights(store, t, log_q_current), mean,
                     cov);
      } else {
        moment_match(store.samples, store.log_weights(), mean, cov);
      }
      if (auto next = try_make_proposal(mean, cov, opts.adapt_mode)) {
        current = *next;
      }
    } catch (const ZeroTotalWeight&) {
    }
    // on degenerate weights or a collapsed covariance, keep the previous
    // proposal for one iteration
  }
  return store;
}

WeightedSampleStore mamis_run(const TargetDensity& target,
                              const ProposalParams& gamma0,
                              const Schedule& schedule, Rng& rng,
                              OpCounter& counter, const IsRunOptions& opts) {
  WeightedSampleStore store;
  ProposalParams current = gamma0;
  for (int t = 0; t < schedule.iterations; ++t) {
    const int n_t = schedule.sample_size(t);
    std::vector<double> log_q_current;
    run_iteration(store, target, current, t, n_t, rng, counter,
                  &log_q_current);
    if (ess_of_store(store) < 2.0) ++store.degenerate_iterations;
    if (opts.on_iteration) opts.on_iteration(store, t);
    if (t + 1 == schedule.iterations) break;

    const std::vector<double> lw =
        classical_log_weights(store, t, log_q_current);
    const std::vector<Vector> samples_t = iteration_samples(store, t);
    try {
      if (opts.regularizing_prior) {
        current = mamis_p_update(*opts.regularizing_prior, opts.prior_strength,
                                 samples_t, lw);
      } else {
        Vector mean;
        Matrix cov;
        moment_match(samples_t, lw, mean, cov);
        if (auto next = try_make_proposal(mean, cov, opts.adapt_mode)) {
          current = *next;
        }
      }
    } catch (const ZeroTotalWeight&) {
      // keep the previous proposal for one iteration
    }
  }
  return store;
}

AmisMamisResult amis_mamis_run(const TargetDensity& target,
                               const ProposalParams& gamma0,
                               const Schedule& amis_schedule,
                               const Schedule& mamis_schedule, Rng& rng,
                               OpCounter& counter, const IsRunOptions& opts) {
  const std::int64_t ops_before = counter.count();
  ProposalParams mamis_gamma0 = gamma0;
  if (amis_schedule.iterations > 0) {
    IsRunOptions tuning_opts;
    tuning_opts.adapt_mode = opts.adapt_mode;
    const WeightedSampleStore tuning =
        amis_run(target, gamma0, amis_schedule, rng, counter, tuning_opts);
    mamis_gamma0 = moment_match(tuning);
  }
  const std::int64_t tuning_ops = counter.count() - ops_before;
  WeightedSampleStore store =
      mamis_run(target, mamis_gamma0, mamis_schedule, rng, counter, opts);
  return {std::move(store), tuning_ops};
}

void moment_match(const std::vector<Vector>& samples,
                  const std::vector<double>& log_weights, Vector& mean,
                  Matrix& cov) {
  const double lse = log_sum_exp(log_weights);
  if (samples.empty() || lse == -std::numeric_limits<double>::infinity()) {
    throw ZeroTotalWeight("moment_match: no positive weight");
  }
  const Eigen::Index d = samples.front().size();
  mean = Vector::Zero(d);
  std::vector<double> w(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    w[i] = std::exp(log_weights[i] - lse);
    mean += w[i] * samples[i];
  }
  cov = Matrix::Zero(d, d);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Vector c = samples[i] - mean;
    cov += w[i] * (c * c.transpose());
  }
}

ProposalParams moment_match(const WeightedSampleStore& store) {
  Vector mean;
  Matrix cov;
  moment_match(store.samples, store.log_weights(), mean, cov);
  if (auto p = try_make_proposal(mean, cov, AdaptMode::FullCov)) return *p;
  throw ProposalCollapse("moment_match: covariance not positive definite");
}

ProposalParams mamis_p_update(const ProposalParams& prior,
                              double prior_strength,
                              const std::vector<Vector>& samples,
                              const std::vector<double>& log_weights) {
  const Matrix prior_cov =
      prior.chol_cov.matrix() * prior.chol_cov.matrix().transpose();
  if (std::isinf(prior_strength)) {
    return prior;
  }
  Vector mean;
  Matrix cov;
  moment_match(samples, log_weights, mean, cov);
  const double n_eff = effective_sample_size(log_weights);
  const double denom = n_eff + prior_strength;
  const Vector m = (n_eff * mean + prior_strength * prior.mean) / denom;
  const Matrix c = (n_eff * cov + prior_strength * prior_cov) / denom;
  return ProposalParams{m, cholesky(c, scratch_counter())};
}

double self_normalized_expectation(
    const WeightedSampleStore& store,
    const std::function<double(const Vector&)>& h) {
  const std::vector<double> w = store.normalized_weights();
  double out = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) out += w[i] * h(store.samples[i]);
  return out;
}

double log_normalizing_constant(const WeightedSampleStore& store) {
  std::int64_t total = 0;
  for (int n : store.sample_sizes) total += n;
  return log_sum_exp(store.log_weights()) -
         std::log(static_cast<double>(total));
}

double effective_sample_size(const std::vector<double>& log_weights) {
  const double lse = log_sum_exp(log_weights);
  if (lse == -std::numeric_limits<double>::infinity()) {
    throw ZeroTotalWeight("effective_sample_size: all weights zero");
  }
  double sum = 0.0, sum_sq = 0.0;
  for (double lw : log_weights) {
    const double w = std::exp(lw - lse);
    sum += w;
    sum_sq += w * w;
  }
  return sum * sum / sum_sq;
}

}  // namespace gpais
