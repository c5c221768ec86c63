#pragma once

#include "latent_imh/inverse_problem.hpp"
#include "latent_imh/rng.hpp"

#include <Eigen/Eigenvalues>

namespace latent_imh {

enum class PosteriorVariant { exact, approx, latent };

inline const char* to_string(PosteriorVariant v) {
  switch (v) {
    case PosteriorVariant::exact: return "exact";
    case PosteriorVariant::approx: return "approx";
    case PosteriorVariant::latent: return "latent";
  }
  return "unknown";
}

/**
 * Gaussian posterior N(mean, covariance) with mean = offset + pseudo_inverse * y.
 * offset is zero for zero-mean priors.
 */
struct GaussianPosterior {
  Vector mean;
  Matrix covariance;
  Matrix pseudo_inverse;  // d x d_y
  Vector offset;
};

/// Regularized pseudo-inverse A^T (A A^T + sigma^2 I)^{-1}.
inline Matrix regularized_pseudo_inverse(const Matrix& a, double sigma) {
  Matrix gram = a * a.transpose();
  gram.diagonal().array() += sigma * sigma;
  Eigen::LLT<Matrix> llt(gram);
  return llt.solve(a).transpose();
}

namespace detail {

// Posterior pieces in whitened coordinates x = m + R z, z ~ N(0, I).
struct PosteriorParts {
  Matrix pinv;
  Matrix cov;
  Vector offset;
};

inline PosteriorParts gaussian_parts(const Matrix& a, double sigma, const Prior& prior) {
  const Index d = a.cols();
  PosteriorParts out;
  if (prior.kind() == PriorKind::standard_normal) {
    out.pinv = regularized_pseudo_inverse(a, sigma);
    out.cov = Matrix::Identity(d, d) - out.pinv * a;
    out.offset = Vector::Zero(d);
  } else if (prior.kind() == PriorKind::general_gaussian) {
    const auto& g = std::get<GeneralGaussianPrior>(prior.spec());
    const Matrix aw = a * g.chol;
    const Matrix pw = regularized_pseudo_inverse(aw, sigma);
    Matrix cov_w = Matrix::Identity(d, d) - pw * aw;
    out.pinv = g.chol * pw;
    out.cov = g.chol * cov_w * g.chol.transpose();
    out.offset = g.mean - out.pinv * (a * g.mean);
  } else {
    throw UnsupportedError(std::string("Gaussian closed form needs a Gaussian prior, got ") +
                           to_string(prior.kind()));
  }
  out.cov = 0.5 * (out.cov + out.cov.transpose()).eval();
  return out;
}

}  // namespace detail

/// K = F^{-1} Ftilde as a dense matrix.
inline Matrix dense_k(const InverseProblem& problem) {
  const Matrix f = problem.f().to_dense();
  const Matrix ft = problem.f_tilde().to_dense();
  Eigen::PartialPivLU<Matrix> lu(f);
  return lu.solve(ft);
}

/**
 * Closed-form posterior for a Gaussian prior:
 *   exact   A^+ = A^T (A A^T + s^2 I)^{-1},   Sigma   = I - A^+ A
 *   approx  same with Atilde
 *   latent  A_l^+ = K Atilde^+,               Sigma_l = K Sigma_a K^T,  K = F^{-1} Ftilde
 * General Gaussian priors are handled by whitening with the prior's
 * Cholesky factor.
 */
inline GaussianPosterior gaussian_posterior(const InverseProblem& problem, const Vector& y,
                                            PosteriorVariant variant) {
  check_length("gaussian_posterior: y", problem.obs_dim(), y.size());
  const Prior& prior = problem.prior();
  if (!prior.is_gaussian()) {
    throw UnsupportedError(std::string("gaussian_posterior: unsupported prior ") +
                           to_string(prior.kind()));
  }
  const Matrix a = variant == PosteriorVariant::exact ? problem.a_exact_dense()
                                                       : problem.a_approx_dense();
  auto parts = detail::gaussian_parts(a, problem.sigma(), prior);
  if (variant == PosteriorVariant::latent) {
    const Matrix k = dense_k(problem);
    parts.pinv = (k * parts.pinv).eval();
    parts.cov = (k * parts.cov * k.transpose()).eval();
    parts.cov = 0.5 * (parts.cov + parts.cov.transpose()).eval();
    parts.offset = (k * parts.offset).eval();
  }
  GaussianPosterior out;
  out.pseudo_inverse = std::move(parts.pinv);
  out.covariance = std::move(parts.cov);
  out.offset = std::move(parts.offset);
  out.mean = out.offset + out.pseudo_inverse * y;
  return out;
}

/// Lower factor L with L L^T = cov; falls back to a clipped eigendecomposition
/// when the Cholesky factorization fails on a numerically semidefinite input.
inline Matrix covariance_factor(const Matrix& cov) {
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  const Vector vals = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * vals.asDiagonal();
}

/// Direct sampler for N(mean, cov).
class GaussianSampler {
 public:
  GaussianSampler() = default;
  GaussianSampler(Vector mean, const Matrix& cov)
      : mean_(std::move(mean)), factor_(covariance_factor(cov)) {
    check_length("GaussianSampler: covariance", mean_.size(), cov.rows());
  }
  Vector draw(Rng& rng) const { return mean_ + factor_ * standard_normal_vector(rng, mean_.size()); }
  const Vector& mean() const { return mean_; }
  const Matrix& factor() const { return factor_; }

 private:
  Vector mean_;
  Matrix factor_;
};

}  // namespace latent_imh
