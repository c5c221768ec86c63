#pragma once

#include "latent_imh/gaussian_posterior.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace latent_imh {

/**
 * Diagonal model: F = diag(s), Ftilde = diag(alpha .* s), O = [I 0] with
 * d_y observed coordinates, N(0, I) prior and N(0, sigma^2 I) noise.
 */
struct DiagonalSpec {
  Index d = 0;
  Index d_y = 0;
  Vector s;
  Vector alpha;
  double sigma = 1.0;

  void validate() const {
    if (d < 1 || d_y < 1 || d_y > d) throw std::invalid_argument("DiagonalSpec: need 1 <= d_y <= d");
    check_length("DiagonalSpec.s", d, s.size());
    check_length("DiagonalSpec.alpha", d, alpha.size());
    if ((s.array() <= 0.0).any()) throw std::invalid_argument("DiagonalSpec: s must be positive");
    if ((alpha.array() == 0.0).any()) throw std::invalid_argument("DiagonalSpec: alpha must be nonzero");
    if (!(sigma > 0.0)) throw std::invalid_argument("DiagonalSpec: sigma must be positive");
  }
};

/// Twice the y-averaged KL divergence of each approximate posterior from the
/// exact posterior.
struct KlReport {
  double d_a = 0.0;
  double d_l = 0.0;
};

/// Constants of the general KL upper bounds and the bounds themselves.
struct BoundReport {
  double kappa_plus = 1.0;
  double kappa_minus = 1.0;
  double eps = 0.0;
  double tau = 0.0;
  double eps_l = 0.0;
  double kappa_a = 0.0;
  double kappa_l = 0.0;
  double a_norm = 0.0;
  Vector gamma;
  Vector rho;
  Vector zeta;
  Vector zeta_tilde;
  double bound_d_a = 0.0;
  double bound_d_l = 0.0;
  // Smallest |v_i^T vtilde_i| after greedy matching; below 0.5 the
  // singular-vector pairing is unreliable and the bounds may be vacuous.
  double min_match = 1.0;
  bool matching_valid = true;
};

/// KL(N(mu1, sigma1) || N(mu2, sigma2)).
inline double kl_gaussians(const Vector& mu1, const Matrix& sigma1, const Vector& mu2,
                           const Matrix& sigma2) {
  const Index d = mu1.size();
  check_length("kl_gaussians: mu2", d, mu2.size());
  check_length("kl_gaussians: sigma1", d, sigma1.rows());
  check_length("kl_gaussians: sigma2", d, sigma2.rows());
  Eigen::LLT<Matrix> llt2(sigma2);
  if (llt2.info() != Eigen::Success) {
    throw SingularOperatorError("kl_gaussians: second covariance is not positive definite");
  }
  Eigen::LLT<Matrix> llt1(sigma1);
  if (llt1.info() != Eigen::Success) {
    throw SingularOperatorError("kl_gaussians: first covariance is not positive definite");
  }
  const double logdet2 = 2.0 * Matrix(llt2.matrixL()).diagonal().array().log().sum();
  const double logdet1 = 2.0 * Matrix(llt1.matrixL()).diagonal().array().log().sum();
  const double trace = llt2.solve(sigma1).trace();
  const Vector diff = mu2 - mu1;
  const double quad = diff.dot(llt2.solve(diff));
  return 0.5 * (logdet2 - logdet1 + trace - static_cast<double>(d) + quad);
}

namespace detail {

struct WhitenedOperators {
  Matrix a;
  Matrix a_tilde;
  Matrix k;  // F^{-1} Ftilde in whitened coordinates
};

// Standard-normal or zero-mean Gaussian priors only; the latter is whitened
// (F <- F R, Ftilde <- Ftilde R).
inline WhitenedOperators whitened_operators(const InverseProblem& problem, const char* who) {
  const Prior& prior = problem.prior();
  WhitenedOperators w;
  w.a = problem.a_exact_dense();
  w.a_tilde = problem.a_approx_dense();
  w.k = dense_k(problem);
  if (prior.kind() == PriorKind::general_gaussian) {
    const auto& g = std::get<GeneralGaussianPrior>(prior.spec());
    if (g.mean.cwiseAbs().maxCoeff() != 0.0) {
      throw UnsupportedError(std::string(who) + ": needs a zero-mean Gaussian prior");
    }
    w.a = (w.a * g.chol).eval();
    w.a_tilde = (w.a_tilde * g.chol).eval();
    Eigen::PartialPivLU<Matrix> lu(g.chol);
    w.k = lu.solve(w.k * g.chol);
  } else if (prior.kind() != PriorKind::standard_normal) {
    throw UnsupportedError(std::string(who) + ": needs a Gaussian prior, got " +
                           to_string(prior.kind()));
  }
  return w;
}

// log|I + M M^T / s^2| via Cholesky.
inline double log_det_gram(const Matrix& m, double sigma) {
  Matrix g = m * m.transpose() / (sigma * sigma);
  g.diagonal().array() += 1.0;
  Eigen::LLT<Matrix> llt(g);
  return 2.0 * Matrix(llt.matrixL()).diagonal().array().log().sum();
}

// Expected-KL closed form given the covariance pieces and pseudo-inverse gap.
//   D = log|S|/|S_q| + tr(S^{-1} S_q) - d + |A D A|^2/s^2 + s^2 |D|^2 + |D A|^2 + |A D|^2
inline double expected_kl_value(const Matrix& a, double sigma, double log_det_sigma,
                                double log_det_sigma_q, const Matrix& sigma_q, const Matrix& delta) {
  const double s2 = sigma * sigma;
  const Index d = a.cols();
  // tr(S^{-1} S_q) with S^{-1} = I + A^T A / s^2
  const double trace = sigma_q.trace() + (a * sigma_q * a.transpose()).trace() / s2;
  const Matrix ad = a * delta;
  const double quad = (ad * a).squaredNorm() / s2 + s2 * delta.squaredNorm() +
                      (delta * a).squaredNorm() + ad.squaredNorm();
  return log_det_sigma - log_det_sigma_q + trace - static_cast<double>(d) + quad;
}

}  // namespace detail

/**
 * Closed-form expected KL of the Approx and Latent posteriors from the exact
 * posterior, for y drawn from the exact evidence N(0, A A^T + s^2 I).
 */
inline KlReport expected_kl_closed_form(const InverseProblem& problem) {
  const auto w = detail::whitened_operators(problem, "expected_kl_closed_form");
  const double sigma = problem.sigma();
  const Index d = problem.dim();
  const Matrix id = Matrix::Identity(d, d);

  const Matrix pinv = regularized_pseudo_inverse(w.a, sigma);
  const Matrix pinv_a = regularized_pseudo_inverse(w.a_tilde, sigma);
  const Matrix pinv_l = w.k * pinv_a;
  // I - Atilde^+ Atilde = s^2 (Atilde^T Atilde + s^2 I)^{-1}, without the cancellation
  Matrix gram_a = w.a_tilde.transpose() * w.a_tilde;
  gram_a.diagonal().array() += sigma * sigma;
  Matrix sigma_a = (sigma * sigma) * Eigen::LLT<Matrix>(gram_a).solve(id);
  sigma_a = 0.5 * (sigma_a + sigma_a.transpose()).eval();
  Matrix sigma_l = w.k * sigma_a * w.k.transpose();
  sigma_l = 0.5 * (sigma_l + sigma_l.transpose()).eval();

  const double log_det_sigma = -detail::log_det_gram(w.a, sigma);
  const double log_det_sigma_a = -detail::log_det_gram(w.a_tilde, sigma);
  Eigen::PartialPivLU<Matrix> lu_k(w.k);
  const double log_det_k = lu_k.matrixLU().diagonal().cwiseAbs().array().log().sum();
  const double log_det_sigma_l = log_det_sigma_a + 2.0 * log_det_k;

  KlReport out;
  out.d_a = detail::expected_kl_value(w.a, sigma, log_det_sigma, log_det_sigma_a, sigma_a,
                                      pinv_a - pinv);
  out.d_l = detail::expected_kl_value(w.a, sigma, log_det_sigma, log_det_sigma_l, sigma_l,
                                      pinv_l - pinv);
  return out;
}

/// Same formula with the prior N(0, I) in place of the approximate posterior:
/// 2 E_y KL(prior || exact posterior). Used to report relative divergences.
inline double expected_kl_prior(const InverseProblem& problem) {
  const auto w = detail::whitened_operators(problem, "expected_kl_prior");
  const double sigma = problem.sigma();
  const Index d = problem.dim();
  const Matrix pinv = regularized_pseudo_inverse(w.a, sigma);
  const double log_det_sigma = -detail::log_det_gram(w.a, sigma);
  return detail::expected_kl_value(w.a, sigma, log_det_sigma, 0.0, Matrix::Identity(d, d), -pinv);
}

/**
 * Expected KL for the diagonal model, with
 *   rho_i = (alpha_i^2 s_i^2 + s^2) / (s_i^2 + s^2),  zeta_i = 1 / (alpha_i^2 s_i^2 + s^2)^2
 *   D_a = -d_y + sum_{i<=d_y} [log rho_i + 1/rho_i + zeta_i (alpha_i-1)^2 (alpha_i s_i^2 - s^2)^2 s_i^2 / s^2]
 *   D_l = -d + sum_{i>d_y} [alpha_i^2 - log alpha_i^2]
 *            + sum_{i<=d_y} [log(rho_i/alpha_i^2) + alpha_i^2/rho_i + zeta_i (alpha_i^2-1)^2 s_i^2 s^2]
 */
inline KlReport expected_kl_diagonal(const DiagonalSpec& spec) {
  spec.validate();
  const double s2 = spec.sigma * spec.sigma;
  KlReport out;
  out.d_a = -static_cast<double>(spec.d_y);
  out.d_l = -static_cast<double>(spec.d);
  for (Index i = 0; i < spec.d; ++i) {
    const double a = spec.alpha[i];
    const double a2 = a * a;
    const double si2 = spec.s[i] * spec.s[i];
    if (i < spec.d_y) {
      const double rho = (a2 * si2 + s2) / (si2 + s2);
      const double denom = a2 * si2 + s2;
      const double zeta = 1.0 / (denom * denom);
      const double t = a * si2 - s2;
      out.d_a += std::log(rho) + 1.0 / rho + zeta * (a - 1.0) * (a - 1.0) * t * t * si2 / s2;
      out.d_l += std::log(rho / a2) + a2 / rho + zeta * (a2 - 1.0) * (a2 - 1.0) * si2 * s2;
    } else {
      out.d_l += a2 - std::log(a2);
    }
  }
  return out;
}

namespace detail {

inline bool is_symmetric(const Matrix& m) {
  return (m - m.transpose()).norm() <= 1e-10 * std::max(1.0, m.norm());
}

// Greedy pairing by largest |M_ij|; returns perm with row i paired to column perm[i].
inline std::vector<Index> greedy_match(const Matrix& m) {
  const Index n = m.rows();
  std::vector<Index> perm(n, -1);
  std::vector<bool> col_used(n, false);
  std::vector<std::tuple<double, Index, Index>> entries;
  entries.reserve(static_cast<std::size_t>(n * n));
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) entries.emplace_back(-std::abs(m(i, j)), i, j);
  std::stable_sort(entries.begin(), entries.end(),
                   [](const auto& a, const auto& b) { return std::get<0>(a) < std::get<0>(b); });
  Index matched = 0;
  for (const auto& [neg, i, j] : entries) {
    if (perm[i] >= 0 || col_used[j]) continue;
    perm[i] = j;
    col_used[j] = true;
    if (++matched == n) break;
  }
  return perm;
}

}  // namespace detail

/**
 * General upper bounds on D_a and D_l for symmetric F, Ftilde with a
 * standard-normal prior.
 *
 * Paired singular vectors of A and Atilde are matched greedily by largest
 * |v_i^T vtilde_j| and sign-aligned (vtilde_i, utilde_i flipped together) so
 * that v_i^T vtilde_i >= 0. The null-space bases, which the SVD leaves
 * arbitrary, are aligned by orthogonal Procrustes before eps is taken over
 * all d right singular vectors.
 */
inline BoundReport kl_general_bounds(const InverseProblem& problem) {
  if (problem.prior().kind() != PriorKind::standard_normal) {
    throw UnsupportedError("kl_general_bounds: needs a standard-normal prior");
  }
  const Matrix f = problem.f().to_dense();
  const Matrix ft = problem.f_tilde().to_dense();
  if (!detail::is_symmetric(f) || !detail::is_symmetric(ft)) {
    throw UnsupportedError("kl_general_bounds: F and Ftilde must be symmetric");
  }
  const double sigma = problem.sigma();
  const double s2 = sigma * sigma;
  const Index d = problem.dim();
  const Index dy = problem.obs_dim();
  const Matrix a = problem.a_exact_dense();
  const Matrix at = problem.a_approx_dense();

  BoundReport r;
  const Matrix k = dense_k(problem);
  Eigen::JacobiSVD<Matrix> svd_k(k);
  r.kappa_plus = svd_k.singularValues()[0];
  r.kappa_minus = svd_k.singularValues()[d - 1];

  Eigen::JacobiSVD<Matrix> svd_a(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::JacobiSVD<Matrix> svd_t(at, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Matrix& u = svd_a.matrixU();
  const Matrix& v = svd_a.matrixV();
  const Vector s = svd_a.singularValues().head(dy);
  Matrix ut_raw = svd_t.matrixU();
  Matrix vt_raw = svd_t.matrixV();
  const Vector st_raw = svd_t.singularValues().head(dy);

  // pair observed directions
  const Matrix overlap = v.leftCols(dy).transpose() * vt_raw.leftCols(dy);
  const auto perm = detail::greedy_match(overlap);
  Matrix ut(dy, dy);
  Matrix vt(d, d);
  Vector st(dy);
  r.min_match = 1.0;
  for (Index i = 0; i < dy; ++i) {
    const Index j = perm[i];
    const double sign = overlap(i, j) < 0.0 ? -1.0 : 1.0;
    vt.col(i) = sign * vt_raw.col(j);
    ut.col(i) = sign * ut_raw.col(j);
    st[i] = st_raw[j];
    r.min_match = std::min(r.min_match, std::abs(overlap(i, j)));
  }
  r.matching_valid = r.min_match >= 0.5;

  // align null-space bases
  if (d > dy) {
    const Matrix vperp = v.rightCols(d - dy);
    const Matrix vtperp = vt_raw.rightCols(d - dy);
    Eigen::JacobiSVD<Matrix> proc(vperp.transpose() * vtperp,
                                  Eigen::ComputeFullU | Eigen::ComputeFullV);
    vt.rightCols(d - dy) = vtperp * proc.matrixV() * proc.matrixU().transpose();
  }

  r.eps = 0.0;
  for (Index i = 0; i < d; ++i) r.eps = std::max(r.eps, std::abs(1.0 - v.col(i).dot(vt.col(i))));
  for (Index i = 0; i < dy; ++i) r.eps = std::max(r.eps, std::abs(1.0 - u.col(i).dot(ut.col(i))));

  const Vector s_sig = s.array().square() / (s.array().square() + s2);
  const Vector st_sig = st.array().square() / (st.array().square() + s2);
  const Matrix v_par = v.leftCols(dy);
  const Matrix vt_par = vt.leftCols(dy);
  const double tau_v = (v_par * s_sig.asDiagonal() * v_par.transpose() -
                        vt_par * st_sig.asDiagonal() * vt_par.transpose())
                           .squaredNorm();
  const double tau_u = (u * s_sig.asDiagonal() * u.transpose() -
                        ut * st_sig.asDiagonal() * ut.transpose())
                           .squaredNorm();
  r.tau = std::max(tau_v, tau_u);

  r.eps_l = r.kappa_plus * (1.0 + r.eps) - 1.0;
  const double ka = std::max(std::abs(1.0 / r.kappa_minus - 1.0), std::abs(1.0 / r.kappa_plus - 1.0));
  r.kappa_a = ka * ka;
  r.kappa_l = r.kappa_plus * r.kappa_plus / (r.kappa_minus * r.kappa_minus) -
              2.0 * r.kappa_minus / r.kappa_plus + 1.0;
  r.a_norm = s.size() ? s.maxCoeff() : 0.0;

  r.gamma = (st.array().square() + s2) / (s.array().square() + s2);
  r.rho = (s.array().square() - st.array().square()) / (st.array().square() + s2);
  r.zeta = s.array() + s2 / s.array();
  r.zeta_tilde = st.array() + s2 / st.array();

  const double snr_factor = r.a_norm * r.a_norm / s2;
  const double dd = static_cast<double>(d);
  const double ddy = static_cast<double>(dy);
  double cov_a = 2.0 * r.eps * dd;
  double cov_l = 2.0 * r.eps_l * dd;
  double pinv_a = 0.0;
  double pinv_l = 0.0;
  for (Index i = 0; i < dy; ++i) {
    const double z = r.zeta[i];
    const double zt = r.zeta_tilde[i];
    cov_a += (1.0 + 2.0 * r.eps) * r.rho[i] + std::log(r.gamma[i]);
    cov_l += (1.0 + 2.0 * r.eps_l) * r.rho[i] +
             std::log(r.gamma[i] / (r.kappa_minus * r.kappa_minus));
    const double diff = 1.0 / z - 1.0 / zt;
    pinv_a += diff * diff + 4.0 * r.eps / (z * zt);
    pinv_l += r.kappa_plus * r.kappa_plus / (zt * zt) + 1.0 / (z * z) -
              2.0 * (r.kappa_minus + r.eps * (r.kappa_minus - 1.0)) / (z * zt);
  }
  r.bound_d_a = cov_a + (1.0 + snr_factor) * (r.tau + r.kappa_a * ddy + s2 * pinv_a);
  r.bound_d_l = cov_l + (2.0 + snr_factor) * r.tau + r.kappa_l * ddy + s2 * pinv_l;
  return r;
}

/// Inputs of the IMH mixing-time bound.
struct MixingBoundInputs {
  double m = 1.0;            // strong log-concavity of the exact posterior
  double beta = 1.0;         // warm-start constant, >= 1
  double eps_tv = 0.25;      // target total-variation accuracy, in (0, 1)
  double lipschitz_c = 0.0;  // local Lipschitz constant of the log weight

  void validate() const {
    if (!(m > 0.0)) throw std::invalid_argument("MixingBoundInputs.m must be positive");
    if (!(beta >= 1.0)) throw std::invalid_argument("MixingBoundInputs.beta must be >= 1");
    if (!(eps_tv > 0.0 && eps_tv < 1.0)) {
      throw std::invalid_argument("MixingBoundInputs.eps_tv must lie in (0, 1)");
    }
    if (!(lipschitz_c >= 0.0)) {
      throw std::invalid_argument("MixingBoundInputs.lipschitz_c must be >= 0");
    }
  }
};

/// 128 log(2 beta / eps) max(1, 128^2 C^2 / ((log 2)^2 m)).
inline double mixing_bound(const MixingBoundInputs& in) {
  in.validate();
  const double ln2 = std::log(2.0);
  const double second = 128.0 * 128.0 * in.lipschitz_c * in.lipschitz_c / (ln2 * ln2 * in.m);
  return 128.0 * std::log(2.0 * in.beta / in.eps_tv) * std::max(1.0, second);
}

struct MixingScaling {
  double scale_a = 0.0;
  double scale_l = 0.0;
};

/**
 * Order-of-magnitude mixing indicators for the diagonal model (constants
 * omitted; not step counts):
 *   scale_a = d/m^2 * max_{i<=d_y} (1 - alpha_i^2)^2 s_i^4 / sigma^4
 *   scale_l = d/m^2 * max_{i<=d}   (1 - 1/alpha_i^2)^2
 */
inline MixingScaling mixing_scaling_diagonal(const DiagonalSpec& spec, double m) {
  spec.validate();
  if (!(m > 0.0)) throw std::invalid_argument("mixing_scaling_diagonal: m must be positive");
  const double pre = static_cast<double>(spec.d) / (m * m);
  const double s4 = std::pow(spec.sigma, 4);
  double max_a = 0.0;
  double max_l = 0.0;
  for (Index i = 0; i < spec.d; ++i) {
    const double a2 = spec.alpha[i] * spec.alpha[i];
    if (i < spec.d_y) {
      const double t = (1.0 - a2) * (1.0 - a2) * std::pow(spec.s[i], 4) / s4;
      max_a = std::max(max_a, t);
    }
    const double tl = (1.0 - 1.0 / a2) * (1.0 - 1.0 / a2);
    max_l = std::max(max_l, tl);
  }
  return {pre * max_a, pre * max_l};
}

}  // namespace latent_imh
