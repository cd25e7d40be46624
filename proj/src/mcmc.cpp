#include "gpais/mcmc.hpp"

#include <cmath>

namespace gpais {

namespace {

OpCounter& scratch_counter() {
  thread_local OpCounter c;
  return c;
}

double kinetic(const MassMatrix& mass, const Vector& p) {
  return 0.5 * p.dot(mass.Minv * p);
}

}  // namespace

MassMatrix make_mass_matrix(MassVariant variant, const Matrix& approx_cov,
                            double scale) {
  const Eigen::Index d = approx_cov.rows();
  Matrix m;
  switch (variant) {
    case MassVariant::Identity:
      m = Matrix::Identity(d, d);
      break;
    case MassVariant::DiagInverseApproxCov: {
      m = Matrix::Zero(d, d);
      m.diagonal() = approx_cov.diagonal().cwiseInverse();
      break;
    }
    case MassVariant::InverseApproxCov:
      m = approx_cov.inverse();
      m = 0.5 * (m + m.transpose());
      break;
  }
  m *= scale;
  CholeskyFactor chol = cholesky(m, scratch_counter());
  Matrix minv = m.inverse();
  minv = 0.5 * (minv + minv.transpose());
  return {std::move(m), std::move(chol), std::move(minv)};
}

MhResult mh_step(const ChainState& state, const CholeskyFactor& proposal_chol,
                 const TargetDensity& target, Rng& rng, OpCounter& counter) {
  const Vector proposed = mvn_sample(state.theta, proposal_chol, rng);
  const double log_f = target.log_eval(proposed, rng, counter);
  const double log_ratio = log_f - state.log_target;
  if (log_ratio >= 0.0 || std::log(rng.uniform()) < log_ratio) {
    return {{proposed, log_f}, true};
  }
  return {state, false};
}

TuneResult tune_scale(const std::function<double(double, int)>& run_batch,
                      double alpha0, double target_rate, double tol,
                      int batch_size, int max_batches) {
  double alpha = alpha0;
  int within = 0;
  double rate = 0.0;
  for (int b = 0; b < max_batches; ++b) {
    rate = run_batch(alpha, batch_size);
    if (std::abs(rate - target_rate) <= tol) {
      if (++within >= 2) return {alpha, rate, b + 1};
    } else {
      within = 0;
    }
    alpha *= std::exp(rate - target_rate);
  }
  throw TuningFailed("tune_scale: acceptance rate did not stabilize");
}

HmcResult hmc_step(const HmcState& state, const MassMatrix& mass, double eps,
                   int l_max, bool jitter_leapfrog, const GradTarget& target,
                   Rng& rng, OpCounter& counter) {
  const Vector zero = Vector::Zero(state.theta.size());
  Vector p = mvn_sample(zero, mass.chol, rng);
  const double h0 = -state.log_target + kinetic(mass, p);

  const int l = jitter_leapfrog
                    ? 1 + static_cast<int>(rng.integer(
                              static_cast<std::uint64_t>(l_max)))
                    : l_max;
  Vector theta = state.theta;
  Vector grad = state.grad;
  double value = state.log_target;
  bool finite = true;
  for (int s = 0; s < l; ++s) {
    p += 0.5 * eps * grad;
    theta += eps * (mass.Minv * p);
    const GradTargetResult r = target.eval(theta, counter);
    value = r.value;
    grad = r.grad;
    if (!std::isfinite(value)) {
      finite = false;
      break;
    }
    p += 0.5 * eps * grad;
  }
  if (!finite) {
    return {state, false, 0.0};
  }
  const double h1 = -value + kinetic(mass, p);
  const double accept_prob = std::isfinite(h1) ? std::min(1.0, std::exp(h0 - h1)) : 0.0;
  if (rng.uniform() < accept_prob) {
    return {{theta, value, grad}, true, accept_prob};
  }
  return {state, false, accept_prob};
}

namespace {

struct TreeNode {
  Vector theta_minus, p_minus, grad_minus;
  Vector theta_plus, p_plus, grad_plus;
  Vector theta_sample, grad_sample;
  double value_sample = 0.0;
  int n_valid = 0;
  bool ok = false;
  double alpha_sum = 0.0;
  int alpha_n = 0;
};

constexpr double kDeltaMax = 1000.0;

void leapfrog(Vector& theta, Vector& p, Vector& grad, double& value,
              double eps, const MassMatrix& mass, const GradTarget& target,
              OpCounter& counter) {
  p += 0.5 * eps * grad;
  theta += eps * (mass.Minv * p);
  const GradTargetResult r = target.eval(theta, counter);
  value = r.value;
  grad = r.grad;
  if (std::isfinite(value)) {
    p += 0.5 * eps * grad;
  }
}

bool no_u_turn(const TreeNode& t, const MassMatrix& mass) {
  const Vector span = t.theta_plus - t.theta_minus;
  return span.dot(mass.Minv * t.p_minus) >= 0.0 &&
         span.dot(mass.Minv * t.p_plus) >= 0.0;
}

TreeNode build_tree(const Vector& theta, const Vector& p, const Vector& grad,
                    double value, double log_u, int dir, int depth, double eps,
                    double joint0, const MassMatrix& mass,
                    const GradTarget& target, Rng& rng, OpCounter& counter) {
  if (depth == 0) {
    TreeNode node;
    Vector th = theta, pp = p, gr = grad;
    double val = value;
    leapfrog(th, pp, gr, val, dir * eps, mass, target, counter);
    const double joint =
        std::isfinite(val) ? val - kinetic(mass, pp)
                           : -std::numeric_limits<double>::infinity();
    node.theta_minus = node.theta_plus = node.theta_sample = th;
    node.p_minus = node.p_plus = pp;
    node.grad_minus = node.grad_plus = node.grad_sample = gr;
    node.value_sample = val;
    node.n_valid = log_u <= joint ? 1 : 0;
    node.ok = log_u < joint + kDeltaMax;
    node.alpha_sum = std::min(1.0, std::exp(joint - joint0));
    if (!std::isfinite(node.alpha_sum)) node.alpha_sum = 0.0;
    node.alpha_n = 1;
    return node;
  }

  TreeNode first = build_tree(theta, p, grad, value, log_u, dir, depth - 1,
                              eps, joint0, mass, target, rng, counter);
  if (!first.ok) return first;

  TreeNode second =
      dir == -1 ? build_tree(first.theta_minus, first.p_minus,
                             first.grad_minus, 0.0, log_u, dir, depth - 1,
                             eps, joint0, mass, target, rng, counter)
                : build_tree(first.theta_plus, first.p_plus, first.grad_plus,
                             0.0, log_u, dir, depth - 1, eps, joint0, mass,
                             target, rng, counter);

  TreeNode merged;
  if (dir == -1) {
    merged.theta_minus = second.theta_minus;
    merged.p_minus = second.p_minus;
    merged.grad_minus = second.grad_minus;
    merged.theta_plus = first.theta_plus;
    merged.p_plus = first.p_plus;
    merged.grad_plus = first.grad_plus;
  } else {
    merged.theta_minus = first.theta_minus;
    merged.p_minus = first.p_minus;
    merged.grad_minus = first.grad_minus;
    merged.theta_plus = second.theta_plus;
    merged.p_plus = second.p_plus;
    merged.grad_plus = second.grad_plus;
  }
  merged.n_valid = first.n_valid + second.n_valid;
  const double p_second =
      merged.n_valid > 0
          ? static_cast<double>(second.n_valid) / merged.n_valid
          : 0.0;
  if (rng.uniform() < p_second) {
    merged.theta_sample = second.theta_sample;
    merged.grad_sample = second.grad_sample;
    merged.value_sample = second.value_sample;
  } else {
    merged.theta_sample = first.theta_sample;
    merged.grad_sample = first.grad_sample;
    merged.value_sample = first.value_sample;
  }
  merged.alpha_sum = first.alpha_sum + second.alpha_sum;
  merged.alpha_n = first.alpha_n + second.alpha_n;
  merged.ok = second.ok && no_u_turn(merged, mass);
  return merged;
}

}  // namespace

NutsResult nuts_step(const HmcState& state, const MassMatrix& mass, double eps,
                     const GradTarget& target, Rng& rng, OpCounter& counter,
                     int max_depth) {
  const Vector zero = Vector::Zero(state.theta.size());
  const Vector p0 = mvn_sample(zero, mass.chol, rng);
  const double joint0 = state.log_target - kinetic(mass, p0);
  const double log_u = joint0 - rng.exponential();

  TreeNode tree;
  tree.theta_minus = tree.theta_plus = state.theta;
  tree.p_minus = tree.p_plus = p0;
  tree.grad_minus = tree.grad_plus = state.grad;
  tree.theta_sample = state.theta;
  tree.grad_sample = state.grad;
  tree.value_sample = state.log_target;
  tree.n_valid = 1;

  HmcState out = state;
  double alpha_sum = 0.0;
  int alpha_n = 0;
  int depth = 0;
  bool max_depth_hit = false;
  bool keep_going = true;
  while (keep_going) {
    if (depth >= max_depth) {
      max_depth_hit = true;
      break;
    }
    const int dir = rng.uniform() < 0.5 ? -1 : 1;
    TreeNode sub =
        dir == -1
            ? build_tree(tree.theta_minus, tree.p_minus, tree.grad_minus, 0.0,
                         log_u, dir, depth, eps, joint0, mass, target, rng,
                         counter)
            : build_tree(tree.theta_plus, tree.p_plus, tree.grad_plus, 0.0,
                         log_u, dir, depth, eps, joint0, mass, target, rng,
                         counter);
    if (dir == -1) {
      tree.theta_minus = sub.theta_minus;
      tree.p_minus = sub.p_minus;
      tree.grad_minus = sub.grad_minus;
    } else {
      tree.theta_plus = sub.theta_plus;
      tree.p_plus = sub.p_plus;
      tree.grad_plus = sub.grad_plus;
    }
    alpha_sum += sub.alpha_sum;
    alpha_n += sub.alpha_n;
    if (sub.ok && sub.n_valid > 0 &&
        rng.uniform() <
            std::min(1.0, static_cast<double>(sub.n_valid) / tree.n_valid)) {
      out = {sub.theta_sample, sub.value_sample, sub.grad_sample};
    }
    tree.n_valid += sub.n_valid;
    keep_going = sub.ok && no_u_turn(tree, mass);
    ++depth;
  }
  if (alpha_n == 0) alpha_n = 1;
  return {std::move(out), alpha_sum, alpha_n, depth, max_depth_hit};
}

double find_reasonable_epsilon(const HmcState& state, const MassMatrix& mass,
                               const GradTarget& target, Rng& rng,
                               OpCounter& counter) {
  double eps = 1.0;
  const Vector zero = Vector::Zero(state.theta.size());
  Vector p = mvn_sample(zero, mass.chol, rng);
  const double joint0 = state.log_target - kinetic(mass, p);

  auto one_step = [&](double e) {
    Vector th = state.theta, pp = p, gr = state.grad;
    double val = state.log_target;
    leapfrog(th, pp, gr, val, e, mass, target, counter);
    if (!std::isfinite(val)) return -std::numeric_limits<double>::infinity();
    return val - kinetic(mass, pp) - joint0;
  };

  double log_ratio = one_step(eps);
  const double dir = log_ratio > std::log(0.5) ? 1.0 : -1.0;
  for (int i = 0; i < 50; ++i) {
    if (dir * log_ratio <= dir * std::log(0.5)) break;
    eps *= std::pow(2.0, dir);
    log_ratio = one_step(eps);
  }
  return eps;
}

NutsdaResult nutsda_run(
    const HmcState& state0, const MassMatrix& mass,
    const DualAveragingParams& da, int n_adapt, int n_keep,
    const GradTarget& target, Rng& rng, OpCounter& counter,
    const std::function<void(const Vector&, std::int64_t)>& on_sample) {
  HmcState state = state0;
  double eps = find_reasonable_epsilon(state, mass, target, rng, counter);
  const double mu = std::log(10.0 * eps);
  double log_eps_bar = 0.0;
  double h_bar = 0.0;

  for (int m = 1; m <= n_adapt; ++m) {
    const NutsResult r = nuts_step(state, mass, eps, target, rng, counter);
    state = r.state;
    const double accept_stat = r.accept_stat_sum / r.accept_stat_n;
    const double frac = 1.0 / (m + da.t0);
    h_bar = (1.0 - frac) * h_bar + frac * (da.target_accept - accept_stat);
    const double log_eps = mu - std::sqrt(static_cast<double>(m)) /
                                    da.gamma * h_bar;
    const double w = std::pow(static_cast<double>(m), -da.kappa);
    log_eps_bar = w * log_eps + (1.0 - w) * log_eps_bar;
    eps = std::exp(log_eps);
  }
  if (n_adapt > 0) eps = std::exp(log_eps_bar);
  const std::int64_t eot_ops = counter.count();

  NutsdaResult out;
  out.epsilon = eps;
  out.eot_ops = eot_ops;
  out.chain.reserve(n_keep);
  for (int m = 0; m < n_keep; ++m) {
    const NutsResult r = nuts_step(state, mass, eps, target, rng, counter);
    state = r.state;
    out.chain.push_back(state.theta);
    if (on_sample) on_sample(state.theta, counter.count());
  }
  out.final_state = state;
  return out;
}

ChainState slice_step(const ChainState& state, double w,
                      const TargetDensity& target, Rng& rng,
                      OpCounter& counter) {
  Vector theta = state.theta;
  double log_f = state.log_target;
  for (Eigen::Index dim = 0; dim < theta.size(); ++dim) {
    const double x0 = theta(dim);
    const double log_level = log_f - rng.exponential();

    auto eval_at = [&](double x) {
      Vector t = theta;
      t(dim) = x;
      return target.log_eval(t, rng, counter);
    };

    // stepping out
    const double u = rng.uniform();
    double left = x0 - u * w;
    double right = left + w;
    while (eval_at(left) > log_level) left -= w;
    while (eval_at(right) > log_level) right += w;

    // shrinkage
    bool placed = false;
    for (int it = 0; it < 1000; ++it) {
      const double x1 = left + rng.uniform() * (right - left);
      const double log_f1 = eval_at(x1);
      if (log_f1 > log_level) {
        theta(dim) = x1;
        log_f = log_f1;
        placed = true;
        break;
      }
      if (x1 > x0) {
        right = x1;
      } else {
        left = x1;
      }
      if (right - left < 1e-14 * (std::abs(x0) + 1.0)) {
        // interval collapsed onto the current point; keep it
        placed = true;
        break;
      }
    }
    if (!placed) {
      throw ShrinkageExhausted("slice_step: shrinkage did not terminate");
    }
  }
  return {theta, log_f};
}

}  // namespace gpais
