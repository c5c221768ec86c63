#pragma once

#include "latent_imh/problems/common.hpp"

#include <Eigen/Eigenvalues>

namespace latent_imh {

enum class ObservationLayout { rotated, canonical };

struct DiagonalSyntheticConfig {
  Index d = 500;
  Index d_y = 100;
  double spectral_error = 0.06;  // target |I - Ftilde^{-1} F|_2
  std::uint64_t seed = 0;
  ObservationLayout observation = ObservationLayout::rotated;
  NoiseSpec noise = NoiseSpec::snr(2.5);
};

/// Largest |1 - 1/alpha_i| for alpha = 1 + delta * xi.
inline double diagonal_spectral_error(const Vector& xi, double delta) {
  double e = 0.0;
  for (Index i = 0; i < xi.size(); ++i) e = std::max(e, std::abs(1.0 - 1.0 / (1.0 + delta * xi[i])));
  return e;
}

/// Half-width delta in (0, 1) with max_i |1 - 1/(1 + delta xi_i)| = target.
inline double calibrate_delta(const Vector& xi, double target) {
  if (target < 0.0) throw std::invalid_argument("spectral error target must be >= 0");
  if (target == 0.0) return 0.0;
  double hi = 1.0 - 1e-12;
  if (diagonal_spectral_error(xi, hi) < target) {
    throw std::invalid_argument("spectral error target " + std::to_string(target) +
                                " is unreachable with perturbation half-width below 1");
  }
  double lo = 0.0;
  for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
    const double mid = 0.5 * (lo + hi);
    (diagonal_spectral_error(xi, mid) < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

/**
 * F = V S V^T with S_ii = 1/i^2 and Ftilde = V S diag(alpha) V^T, where V
 * holds the eigenvectors of a seeded random symmetric matrix and
 * alpha_i ~ Uniform(1 - delta, 1 + delta) with delta calibrated so that
 * |I - Ftilde^{-1} F|_2 equals the target.
 *
 * With the rotated layout O = [I 0] V^T the problem is the diagonal model
 * in the eigenbasis of F, and the returned DiagonalSpec describes it
 * exactly (for rotation-invariant priors). The canonical layout uses
 * O = [I 0] and carries no DiagonalSpec.
 */
inline ProblemInstance make_diagonal_synthetic(const DiagonalSyntheticConfig& cfg,
                                               std::optional<Prior> prior = std::nullopt) {
  if (cfg.d < 1 || cfg.d_y < 1 || cfg.d_y > cfg.d) {
    throw std::invalid_argument("make_diagonal_synthetic: need 1 <= d_y <= d");
  }
  const Index d = cfg.d;
  Rng rng(stream_seed(cfg.seed, 0, "diagonal-synthetic"));

  Matrix g(d, d);
  std::normal_distribution<double> normal;
  for (Index j = 0; j < d; ++j)
    for (Index i = 0; i < d; ++i) g(i, j) = normal(rng);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (g + g.transpose()));
  const Matrix v = eig.eigenvectors();

  Vector s(d);
  for (Index i = 0; i < d; ++i) s[i] = 1.0 / static_cast<double>((i + 1) * (i + 1));
  Vector xi(d);
  for (Index i = 0; i < d; ++i) xi[i] = 2.0 * uniform01(rng) - 1.0;
  const double delta = calibrate_delta(xi, cfg.spectral_error);
  const Vector alpha = (1.0 + delta * xi.array()).matrix();

  Matrix o;
  if (cfg.observation == ObservationLayout::rotated) {
    o = v.leftCols(cfg.d_y).transpose();
  } else {
    o = Matrix::Identity(cfg.d_y, d);
  }
  Prior p = prior ? *prior : Prior::standard_normal(d);
  check_length("make_diagonal_synthetic: prior dimension", d, p.dim());
  const bool rotation_invariant = p.kind() == PriorKind::standard_normal;

  ProblemInstance inst = detail::assemble_instance(
      LinearMap::svd_structured(v, s), LinearMap::svd_structured(v, s.cwiseProduct(alpha)),
      LinearMap::dense(o), std::move(p), cfg.noise, rng);
  if (cfg.observation == ObservationLayout::rotated && rotation_invariant) {
    DiagonalSpec spec;
    spec.d = d;
    spec.d_y = cfg.d_y;
    spec.s = s;
    spec.alpha = alpha;
    spec.sigma = inst.problem->sigma();
    inst.diagonal = spec;
  }
  inst.info["delta"] = delta;
  inst.info["sigma"] = inst.problem->sigma();
  return inst;
}

/// Zero-mean Gaussian prior with eigenvalues log-spaced over [1/condition, 1]
/// in a seeded random basis.
inline Prior ill_conditioned_gaussian_prior(Index d, double condition, std::uint64_t seed) {
  if (!(condition >= 1.0)) throw std::invalid_argument("condition number must be >= 1");
  Rng rng(stream_seed(seed, 0, "ill-conditioned-prior"));
  Matrix g(d, d);
  std::normal_distribution<double> normal;
  for (Index j = 0; j < d; ++j)
    for (Index i = 0; i < d; ++i) g(i, j) = normal(rng);
  Eigen::HouseholderQR<Matrix> qr(g);
  const Matrix q = qr.householderQ() * Matrix::Identity(d, d);
  Vector ev(d);
  for (Index i = 0; i < d; ++i) {
    const double t = d > 1 ? static_cast<double>(i) / static_cast<double>(d - 1) : 0.0;
    ev[i] = std::pow(condition, -t);
  }
  Matrix cov = q * ev.asDiagonal() * q.transpose();
  cov = 0.5 * (cov + cov.transpose()).eval();
  return Prior::general_gaussian(Vector::Zero(d), cov);
}

/// Equal-weight mixture with means at -spread, 0, +spread (for three
/// components) along the first coordinate; k components spaced evenly.
inline Prior spread_mixture_prior(Index d, Index components, double spread) {
  if (components < 1) throw std::invalid_argument("mixture needs at least one component");
  std::vector<Vector> means;
  for (Index i = 0; i < components; ++i) {
    Vector m = Vector::Zero(d);
    if (components > 1) {
      m[0] = spread * (2.0 * static_cast<double>(i) / static_cast<double>(components - 1) - 1.0);
    }
    means.push_back(m);
  }
  return Prior::gaussian_mixture(Vector::Constant(components, 1.0 / static_cast<double>(components)),
                                 std::move(means));
}

}  // namespace latent_imh
