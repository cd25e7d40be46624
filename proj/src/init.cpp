#include "gpais/init.hpp"

#include "gpais/gp_classification.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

namespace gpais {

namespace {

OpCounter& scratch_counter() {
  thread_local OpCounter c;
  return c;
}

}  // namespace

ModeResult find_mode(const GradTarget& target, const Vector& theta0,
                     OpCounter& counter, double tol, int max_iter) {
  const std::int64_t ops_before = counter.count();
  const Eigen::Index d = theta0.size();
  Vector x = theta0;
  GradTargetResult cur = target.eval(x, counter);
  if (!std::isfinite(cur.value)) {
    throw NonFiniteObjective("find_mode: objective not finite at start");
  }
  Matrix h_inv = Matrix::Identity(d, d);  // inverse-Hessian estimate (of -logf)

  bool converged = cur.grad.lpNorm<Eigen::Infinity>() <= tol;
  for (int iter = 0; iter < max_iter && !converged; ++iter) {
    const Vector direction = h_inv * cur.grad;  // ascent direction
    double step = 1.0;
    GradTargetResult next{};
    Vector x_next;
    bool improved = false;
    for (int ls = 0; ls < 40; ++ls) {
      x_next = x + step * direction;
      next = target.eval(x_next, counter);
      if (std::isfinite(next.value) &&
          next.value >=
              cur.value + 1e-4 * step * cur.grad.dot(direction)) {
        improved = true;
        break;
      }
      step *= 0.5;
    }
    if (!improved) break;

    const Vector s = x_next - x;
    const Vector yv = cur.grad - next.grad;  // gradient of -logf changes sign
    const double sy = s.dot(yv);
    if (sy > 1e-12) {
      const Matrix i = Matrix::Identity(d, d);
      const Matrix v = i - (s * yv.transpose()) / sy;
      h_inv = v * h_inv * v.transpose() + (s * s.transpose()) / sy;
    }
    x = x_next;
    cur = next;
    converged = cur.grad.lpNorm<Eigen::Infinity>() <= tol;
  }
  if (!converged) {
    throw NoConvergence("find_mode: gradient norm did not reach tolerance");
  }

  Matrix hessian = hessian_at_mode(
      [&target](const Vector& v, OpCounter& c) { return target.eval(v, c).value; },
      x, counter);
  return {x, std::move(hessian), counter.count() - ops_before};
}

GradTarget finite_difference_gradient(
    const std::function<double(const Vector&, OpCounter&)>& f, double h) {
  return GradTarget{[f, h](const Vector& x, OpCounter& counter) {
    GradTargetResult out;
    out.value = f(x, counter);
    out.grad.resize(x.size());
    for (Eigen::Index j = 0; j < x.size(); ++j) {
      Vector xp = x, xm = x;
      xp(j) += h;
      xm(j) -= h;
      out.grad(j) = (f(xp, counter) - f(xm, counter)) / (2.0 * h);
    }
    return out;
  }};
}

Matrix hessian_at_mode(const std::function<double(const Vector&, OpCounter&)>& f,
                       const Vector& mode, OpCounter& counter, double h) {
  const Eigen::Index d = mode.size();
  Matrix hess(d, d);
  const double f0 = f(mode, counter);
  for (Eigen::Index i = 0; i < d; ++i) {
    Vector xp = mode, xm = mode;
    xp(i) += h;
    xm(i) -= h;
    hess(i, i) = (f(xp, counter) - 2.0 * f0 + f(xm, counter)) / (h * h);
    for (Eigen::Index j = 0; j < i; ++j) {
      Vector xpp = mode, xpm = mode, xmp = mode, xmm = mode;
      xpp(i) += h; xpp(j) += h;
      xpm(i) += h; xpm(j) -= h;
      xmp(i) -= h; xmp(j) += h;
      xmm(i) -= h; xmm(j) -= h;
      const double v = (f(xpp, counter) - f(xpm, counter) - f(xmp, counter) +
                        f(xmm, counter)) /
                       (4.0 * h * h);
      hess(i, j) = hess(j, i) = v;
    }
  }
  return hess;
}

Matrix repaired_neg_hessian_inverse(const Matrix& hessian) {
  const Matrix neg_h = -0.5 * (hessian + hessian.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(neg_h);
  Vector evals = es.eigenvalues();
  const double max_ev = evals.maxCoeff();
  if (!(max_ev > 0.0)) {
    throw NotNegativeDefinite(
        "repaired_neg_hessian_inverse: no positive curvature direction");
  }
  const double floor = 1e-6 * max_ev;
  for (Eigen::Index i = 0; i < evals.size(); ++i) {
    evals(i) = std::max(evals(i), floor);
  }
  Matrix inv = es.eigenvectors() * evals.cwiseInverse().asDiagonal() *
               es.eigenvectors().transpose();
  return 0.5 * (inv + inv.transpose());
}

ProposalParams build_proposal(ProposalVariant variant, const Vector& mode,
                              const Matrix& hessian, double alpha) {
  const Eigen::Index d = mode.size();
  Matrix cov;
  switch (variant) {
    case ProposalVariant::Identity:
      cov = alpha * Matrix::Identity(d, d);
      break;
    case ProposalVariant::InverseNegHessian:
      cov = alpha * repaired_neg_hessian_inverse(hessian);
      break;
    case ProposalVariant::DiagInverseNegHessian: {
      const Matrix full = repaired_neg_hessian_inverse(hessian);
      cov = Matrix::Zero(d, d);
      cov.diagonal() = alpha * full.diagonal();
      break;
    }
  }
  return ProposalParams{mode, cholesky(cov, scratch_counter())};
}

}  // namespace gpais
