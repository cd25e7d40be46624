#include "gpais/kernels.hpp"

#include <cmath>

namespace gpais {

double kernel_eval(const KernelSpec& spec, const ParamVector& theta,
                   const Vector& xi, const Vector& xj) {
  if (xi.size() != spec.input_dim || xj.size() != spec.input_dim) {
    throw DimensionMismatch("kernel_eval: input dimension mismatch");
  }
  const double sigma = theta.sigma();
  if (spec.family == KernelFamily::RBF) {
    const double tau = theta.tau();
    return sigma * std::exp(-(xi - xj).squaredNorm() / (tau * tau));
  }
  double expo = 0.0;
  for (int r = 0; r < spec.input_dim; ++r) {
    const double tr = theta.tau(r);
    const double diff = xi(r) - xj(r);
    expo += diff * diff / (tr * tr);
  }
  return sigma * std::exp(-expo);
}

Matrix covariance_matrix(const KernelSpec& spec, const ParamVector& theta,
                         const Matrix& X, bool add_noise) {
  const Eigen::Index n = X.rows();
  const double sigma = theta.sigma();
  Matrix K(n, n);
  if (spec.family == KernelFamily::RBF) {
    const double inv_tau2 = 1.0 / (theta.tau() * theta.tau());
    for (Eigen::Index i = 0; i < n; ++i) {
      K(i, i) = sigma;
      for (Eigen::Index j = 0; j < i; ++j) {
        const double d2 = (X.row(i) - X.row(j)).squaredNorm();
        K(i, j) = K(j, i) = sigma * std::exp(-d2 * inv_tau2);
      }
    }
  } else {
    Vector inv_tau2(spec.input_dim);
    for (int r = 0; r < spec.input_dim; ++r) {
      const double tr = theta.tau(r);
      inv_tau2(r) = 1.0 / (tr * tr);
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      K(i, i) = sigma;
      for (Eigen::Index j = 0; j < i; ++j) {
        double expo = 0.0;
        for (int r = 0; r < spec.input_dim; ++r) {
          const double diff = X(i, r) - X(j, r);
          expo += diff * diff * inv_tau2(r);
        }
        K(i, j) = K(j, i) = sigma * std::exp(-expo);
      }
    }
  }
  if (add_noise) {
    K.diagonal().array() += theta.lambda();
  }
  return K;
}

std::vector<Matrix> covariance_gradients(const KernelSpec& spec,
                                         const ParamVector& theta,
                                         const Matrix& X) {
  const Eigen::Index n = X.rows();
  const Matrix K = covariance_matrix(spec, theta, X, false);
  std::vector<Matrix> grads;
  grads.reserve(spec.n_params());

  // d/d ln(sigma): K itself (k is linear in sigma)
  grads.push_back(K);

  if (spec.family == KernelFamily::RBF) {
    const double inv_tau2 = 1.0 / (theta.tau() * theta.tau());
    Matrix G(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      G(i, i) = 0.0;
      for (Eigen::Index j = 0; j < i; ++j) {
        const double d2 = (X.row(i) - X.row(j)).squaredNorm();
        G(i, j) = G(j, i) = K(i, j) * 2.0 * d2 * inv_tau2;
      }
    }
    grads.push_back(std::move(G));
  } else {
    for (int r = 0; r < spec.input_dim; ++r) {
      const double tr = theta.tau(r);
      const double inv_tr2 = 1.0 / (tr * tr);
      Matrix G(n, n);
      for (Eigen::Index i = 0; i < n; ++i) {
        G(i, i) = 0.0;
        for (Eigen::Index j = 0; j < i; ++j) {
          const double diff = X(i, r) - X(j, r);
          G(i, j) = G(j, i) = K(i, j) * 2.0 * diff * diff * inv_tr2;
        }
      }
      grads.push_back(std::move(G));
    }
  }

  if (spec.task == TaskType::Regression) {
    Matrix G = Matrix::Zero(n, n);
    G.diagonal().array() = theta.lambda();
    grads.push_back(std::move(G));
  }
  return grads;
}

double LogSpacePrior::log_density(const ParamVector& theta) const {
  const double d = static_cast<double>(theta.log_values.size());
  const double s2 = stddev * stddev;
  return -0.5 * d * std::log(2.0 * M_PI * s2) -
         0.5 * theta.log_values.squaredNorm() / s2;
}

Vector LogSpacePrior::grad_log_density(const ParamVector& theta) const {
  return -theta.log_values / (stddev * stddev);
}

}  // namespace gpais
