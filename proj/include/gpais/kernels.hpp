#pragma once

#include "gpais/linalg.hpp"

namespace gpais {

enum class KernelFamily { RBF, ARD };
enum class TaskType { Regression, Classification };

/// Covariance family plus problem dimensions.  Parameter count:
/// RBF -> (sigma, tau), ARD -> (sigma, tau_1..tau_d); regression adds the
/// noise variance lambda.
struct KernelSpec {
  KernelFamily family = KernelFamily::RBF;
  int input_dim = 1;
  TaskType task = TaskType::Regression;

  int n_kernel_params() const {
    return family == KernelFamily::RBF ? 2 : input_dim + 1;
  }
  int n_params() const {
    return n_kernel_params() + (task == TaskType::Regression ? 1 : 0);
  }
};

/// Parameter vector theta in log space: ln sigma, ln tau (or ln tau_1..d),
/// and for regression ln lambda last.
struct ParamVector {
  Vector log_values;

  double sigma() const { return std::exp(log_values(0)); }
  double tau(int r = 0) const { return std::exp(log_values(1 + r)); }
  double lambda() const { return std::exp(log_values(log_values.size() - 1)); }
};

struct Dataset {
  Matrix X;  // n x d
  Vector y;  // regression targets or +-1 labels

  Eigen::Index size() const { return X.rows(); }
  Eigen::Index dim() const { return X.cols(); }
};

double kernel_eval(const KernelSpec& spec, const ParamVector& theta,
                   const Vector& xi, const Vector& xj);

/// K, or C = K + lambda I when add_noise.  Assembly is O(n^2 d), nothing
/// charged.
Matrix covariance_matrix(const KernelSpec& spec, const ParamVector& theta,
                         const Matrix& X, bool add_noise);

/// dC/d(log theta_j) for every parameter, in parameter order.  Used by the
/// regression gradient; the noise derivative is lambda I.
std::vector<Matrix> covariance_gradients(const KernelSpec& spec,
                                         const ParamVector& theta,
                                         const Matrix& X);

/// Independent Gaussian prior on each log-parameter, mean 0.
struct LogSpacePrior {
  double stddev = 3.0;

  double log_density(const ParamVector& theta) const;
  Vector grad_log_density(const ParamVector& theta) const;
};

}  // namespace gpais
