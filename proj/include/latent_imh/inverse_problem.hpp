#pragma once

#include "latent_imh/linear_map.hpp"
#include "latent_imh/prior.hpp"

#include <memory>

namespace latent_imh {

/// Isotropic Gaussian noise N(0, sigma^2 I).
struct NoiseModel {
  double sigma = 1.0;

  explicit NoiseModel(double s = 1.0) : sigma(s) {
    if (!(sigma > 0.0)) throw std::invalid_argument("NoiseModel: sigma must be positive");
  }
};

enum class OperatorChoice { exact, approximate };

/**
 * y = O F x + e with an expensive square F and a cheap surrogate Ftilde.
 *
 * Operators are immutable and shared. Every apply/solve with the exact F
 * goes through the *_exact members, which take the SolveCounters to charge;
 * overloads without a counter charge the problem's own shared counter.
 * Forward and adjoint applications of F count as forward solves, F^{-1} as
 * inverse solves. Surrogate operations are never counted.
 */
class InverseProblem {
 public:
  InverseProblem(LinearMap f, LinearMap f_tilde, LinearMap observation, Prior prior,
                 NoiseModel noise, SolveSettings exact_settings = {})
      : f_(std::move(f)),
        f_tilde_(std::move(f_tilde)),
        o_(std::move(observation)),
        prior_(std::move(prior)),
        noise_(noise),
        exact_settings_(exact_settings),
        counters_(std::make_shared<SolveCounters>()) {
    if (!f_.square()) throw std::invalid_argument("InverseProblem: F must be square");
    check_length("InverseProblem: Ftilde rows", f_.rows(), f_tilde_.rows());
    check_length("InverseProblem: Ftilde cols", f_.cols(), f_tilde_.cols());
    check_length("InverseProblem: O cols", f_.rows(), o_.cols());
    check_length("InverseProblem: prior dimension", f_.cols(), prior_.dim());
    if (o_.rows() > f_.rows()) {
      throw std::invalid_argument("InverseProblem: d_y must not exceed d");
    }
    if (!f_tilde_.solvable()) {
      throw SingularOperatorError("InverseProblem: Ftilde must be invertible");
    }
    log_abs_det_f_tilde_ = f_tilde_.log_abs_det();
  }

  Index dim() const { return f_.cols(); }
  Index obs_dim() const { return o_.rows(); }

  const LinearMap& f() const { return f_; }
  const LinearMap& f_tilde() const { return f_tilde_; }
  const LinearMap& observation() const { return o_; }
  const Prior& prior() const { return prior_; }
  const NoiseModel& noise() const { return noise_; }
  double sigma() const { return noise_.sigma; }
  double log_abs_det_f_tilde() const { return log_abs_det_f_tilde_; }
  SolveCounters& counters() const { return *counters_; }

  Vector forward_exact(const Vector& x, SolveCounters& c) const {
    Vector u = f_.apply(x);
    ++c.forward;
    return u;
  }
  Vector forward_exact(const Vector& x) const { return forward_exact(x, *counters_); }

  Vector adjoint_exact(const Vector& v, SolveCounters& c) const {
    Vector w = f_.apply_transpose(v);
    ++c.forward;
    return w;
  }

  Vector inverse_exact(const Vector& u, SolveCounters& c) const {
    Vector x = f_.solve(u, exact_settings_);
    ++c.inverse;
    return x;
  }
  Vector inverse_exact(const Vector& u) const { return inverse_exact(u, *counters_); }

  Vector forward_approx(const Vector& x) const { return f_tilde_.apply(x); }
  Vector inverse_approx(const Vector& u) const { return f_tilde_.solve(u, exact_settings_); }
  Vector inverse_transpose_approx(const Vector& v) const {
    return f_tilde_.solve_transpose(v, exact_settings_);
  }
  Vector adjoint_approx(const Vector& v) const { return f_tilde_.apply_transpose(v); }

  Vector observe(const Vector& u) const { return o_.apply(u); }
  Vector observe_transpose(const Vector& r) const { return o_.apply_transpose(r); }

  /// Dense A = O F and Atilde = O Ftilde; uncounted (setup-time extraction).
  Matrix a_exact_dense() const { return o_.to_dense() * f_.to_dense(); }
  Matrix a_approx_dense() const { return o_.to_dense() * f_tilde_.to_dense(); }

 private:
  LinearMap f_;
  LinearMap f_tilde_;
  LinearMap o_;
  Prior prior_;
  NoiseModel noise_;
  SolveSettings exact_settings_;
  std::shared_ptr<SolveCounters> counters_;
  double log_abs_det_f_tilde_ = 0.0;
};

/// -|y - O u|^2 / (2 sigma^2) for a latent field u.
inline double log_likelihood_latent(const InverseProblem& problem, const Vector& u,
                                    const Vector& y) {
  check_length("log_likelihood: y", problem.obs_dim(), y.size());
  const double s2 = problem.sigma() * problem.sigma();
  return -0.5 * (y - problem.observe(u)).squaredNorm() / s2;
}

/// -|y - A x|^2 / (2 sigma^2), A = O F or O Ftilde. Exact evaluations are
/// charged one forward solve.
inline double log_likelihood(const InverseProblem& problem, const Vector& x, const Vector& y,
                             OperatorChoice choice, SolveCounters& counters) {
  check_length("log_likelihood: x", problem.dim(), x.size());
  const Vector u =
      choice == OperatorChoice::exact ? problem.forward_exact(x, counters) : problem.forward_approx(x);
  return log_likelihood_latent(problem, u, y);
}

inline double log_likelihood(const InverseProblem& problem, const Vector& x, const Vector& y,
                             OperatorChoice choice) {
  return log_likelihood(problem, x, y, choice, problem.counters());
}

/// log ptilde(u) = log p(Ftilde^{-1} u) + log|det Ftilde^{-1}|.
inline double latent_prior_log_density(const InverseProblem& problem, const Vector& u) {
  check_length("latent_prior_log_density", problem.dim(), u.size());
  return problem.prior().log_density(problem.inverse_approx(u)) - problem.log_abs_det_f_tilde();
}

/// Ftilde^{-T} grad log p(Ftilde^{-1} u).
inline Vector latent_prior_grad_log_density(const InverseProblem& problem, const Vector& u) {
  check_length("latent_prior_grad_log_density", problem.dim(), u.size());
  return problem.inverse_transpose_approx(problem.prior().grad_log_density(problem.inverse_approx(u)));
}

}  // namespace latent_imh
