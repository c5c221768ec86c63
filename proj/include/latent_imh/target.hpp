#pragma once

#include "latent_imh/gaussian_posterior.hpp"

#include <functional>

namespace latent_imh {

/// Unnormalized log density with gradient, as consumed by MALA and NUTS.
struct LogDensity {
  Index dim = 0;
  std::function<double(const Vector&)> value;
  std::function<double(const Vector&, Vector&)> value_and_grad;
};

/**
 * log q(y - O G x) + log p(x) with G = F (exact) or Ftilde (approximate).
 * With G = F each value costs one counted forward apply and each gradient
 * one more (the adjoint); approximate targets are free.
 */
inline LogDensity posterior_target(const InverseProblem& problem, const Vector& y,
                                   OperatorChoice choice, SolveCounters& counters) {
  check_length("posterior_target: y", problem.obs_dim(), y.size());
  const bool exact = choice == OperatorChoice::exact;
  const double inv_s2 = 1.0 / (problem.sigma() * problem.sigma());
  const InverseProblem* p = &problem;
  SolveCounters* c = &counters;
  LogDensity t;
  t.dim = problem.dim();
  auto fwd = [p, c, exact](const Vector& x) {
    return exact ? p->forward_exact(x, *c) : p->forward_approx(x);
  };
  t.value = [p, y, inv_s2, fwd](const Vector& x) {
    const Vector r = y - p->observe(fwd(x));
    return -0.5 * inv_s2 * r.squaredNorm() + p->prior().log_density(x);
  };
  t.value_and_grad = [p, c, y, inv_s2, fwd, exact](const Vector& x, Vector& grad) {
    const Vector r = y - p->observe(fwd(x));
    const Vector back = p->observe_transpose(r);
    grad = inv_s2 * (exact ? p->adjoint_exact(back, *c) : p->adjoint_approx(back)) +
           p->prior().grad_log_density(x);
    return -0.5 * inv_s2 * r.squaredNorm() + p->prior().log_density(x);
  };
  return t;
}

/// Approximate posterior of the latent field, log q(y - O u) + log p(Ftilde^{-1} u).
/// The constant log|det Ftilde^{-1}| is dropped. Uses only Ftilde.
inline LogDensity latent_target(const InverseProblem& problem, const Vector& y) {
  check_length("latent_target: y", problem.obs_dim(), y.size());
  const double inv_s2 = 1.0 / (problem.sigma() * problem.sigma());
  const InverseProblem* p = &problem;
  LogDensity t;
  t.dim = problem.dim();
  t.value = [p, y, inv_s2](const Vector& u) {
    const Vector r = y - p->observe(u);
    return -0.5 * inv_s2 * r.squaredNorm() + p->prior().log_density(p->inverse_approx(u));
  };
  t.value_and_grad = [p, y, inv_s2](const Vector& u, Vector& grad) {
    const Vector r = y - p->observe(u);
    const Vector x = p->inverse_approx(u);
    grad = inv_s2 * p->observe_transpose(r) +
           p->inverse_transpose_approx(p->prior().grad_log_density(x));
    return -0.5 * inv_s2 * r.squaredNorm() + p->prior().log_density(x);
  };
  return t;
}

/// N(mean, cov) up to its normalizing constant.
inline LogDensity gaussian_target(const Vector& mean, const Matrix& cov) {
  check_length("gaussian_target: covariance", mean.size(), cov.rows());
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() != Eigen::Success) {
    throw SingularOperatorError("gaussian_target: covariance is not positive definite");
  }
  const Matrix precision = llt.solve(Matrix::Identity(mean.size(), mean.size()));
  LogDensity t;
  t.dim = mean.size();
  t.value = [mean, precision](const Vector& x) {
    const Vector r = x - mean;
    return -0.5 * r.dot(precision * r);
  };
  t.value_and_grad = [mean, precision](const Vector& x, Vector& grad) {
    const Vector r = x - mean;
    grad = -(precision * r);
    return 0.5 * r.dot(grad);
  };
  return t;
}

}  // namespace latent_imh
