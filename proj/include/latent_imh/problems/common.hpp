#pragma once

#include "latent_imh/analytics.hpp"
#include "latent_imh/reparameterization.hpp"

#include <map>
#include <memory>
#include <optional>
#include <string>

namespace latent_imh {

/// How the noise level is fixed: directly, by log10 of
/// SNR = E|y|^2 / E|e|^2 under a standard-normal prior, or by the relative
/// level |e| / |A x_true| of the generated data.
struct NoiseSpec {
  enum class Kind { sigma, log10_snr, relative };
  Kind kind = Kind::relative;
  double value = 0.1;

  static NoiseSpec fixed(double sigma) { return {Kind::sigma, sigma}; }
  static NoiseSpec snr(double log10_snr) { return {Kind::log10_snr, log10_snr}; }
  static NoiseSpec relative_level(double level) { return {Kind::relative, level}; }
};

inline const char* to_string(NoiseSpec::Kind k) {
  switch (k) {
    case NoiseSpec::Kind::sigma: return "sigma";
    case NoiseSpec::Kind::log10_snr: return "log10-snr";
    case NoiseSpec::Kind::relative: return "relative";
  }
  return "unknown";
}

/// A generated problem with its synthetic data.
struct ProblemInstance {
  std::shared_ptr<const InverseProblem> problem;
  Vector y;
  Vector x_true;
  double spectral_error = 0.0;       // |I - Ftilde^{-1} F|_2
  std::optional<DiagonalSpec> diagonal;  // exact diagonal structure, when available
  std::map<std::string, double> info;    // generator diagnostics
};

/// |I - Ftilde^{-1} F|_2, dense.
inline double spectral_error(const LinearMap& f, const LinearMap& f_tilde) {
  const Matrix fd = f.to_dense();
  Eigen::PartialPivLU<Matrix> lu(f_tilde.to_dense());
  Matrix m = -lu.solve(fd);
  m.diagonal().array() += 1.0;
  Eigen::BDCSVD<Matrix> svd(m);
  return svd.singularValues()[0];
}

/// Draws from the prior; smoothed-TV priors have no direct sampler.
inline Vector sample_prior(const Prior& prior, Rng& rng) {
  const Index d = prior.dim();
  switch (prior.kind()) {
    case PriorKind::standard_normal: return standard_normal_vector(rng, d);
    case PriorKind::general_gaussian: {
      const auto& g = std::get<GeneralGaussianPrior>(prior.spec());
      return g.mean + g.chol * standard_normal_vector(rng, d);
    }
    case PriorKind::gaussian_mixture: {
      const auto& m = std::get<GaussianMixturePrior>(prior.spec());
      const double u = uniform01(rng);
      double acc = 0.0;
      std::size_t k = m.means.size() - 1;
      for (std::size_t i = 0; i < m.means.size(); ++i) {
        acc += m.weights[static_cast<Index>(i)];
        if (u < acc) {
          k = i;
          break;
        }
      }
      return m.means[k] + standard_normal_vector(rng, d);
    }
    case PriorKind::laplace: {
      std::exponential_distribution<double> expo(1.0);
      Vector x(d);
      for (Index i = 0; i < d; ++i) x[i] = (uniform01(rng) < 0.5 ? -1.0 : 1.0) * expo(rng);
      return x;
    }
    case PriorKind::smoothed_tv: break;
  }
  throw UnsupportedError("sample_prior: no direct sampler for smoothed-tv priors");
}

/// Noise standard deviation for data A x_true under the given spec.
inline double resolve_sigma(const NoiseSpec& noise, const Matrix& a, const Vector& x_true) {
  const double dy = static_cast<double>(a.rows());
  double sigma = 0.0;
  switch (noise.kind) {
    case NoiseSpec::Kind::sigma: sigma = noise.value; break;
    case NoiseSpec::Kind::log10_snr: {
      const double snr = std::pow(10.0, noise.value);
      if (!(snr > 1.0)) throw std::invalid_argument("log10_snr must be positive");
      sigma = std::sqrt(a.squaredNorm() / (dy * (snr - 1.0)));
      break;
    }
    case NoiseSpec::Kind::relative: sigma = noise.value * (a * x_true).norm() / std::sqrt(dy); break;
  }
  if (!(sigma > 0.0)) throw std::invalid_argument("noise level must be positive");
  return sigma;
}

namespace detail {

// Assembles the problem, draws x_true (unless given) and y = A x_true + sigma e.
inline ProblemInstance assemble_instance(LinearMap f, LinearMap f_tilde, LinearMap o, Prior prior,
                                         const NoiseSpec& noise, Rng& rng,
                                         std::optional<Vector> x_true = std::nullopt) {
  const Matrix a = o.to_dense() * f.to_dense();
  ProblemInstance inst;
  inst.x_true = x_true ? *x_true : sample_prior(prior, rng);
  const double sigma = resolve_sigma(noise, a, inst.x_true);
  inst.y = a * inst.x_true + sigma * standard_normal_vector(rng, a.rows());
  inst.spectral_error = spectral_error(f, f_tilde);
  inst.problem = std::make_shared<const InverseProblem>(std::move(f), std::move(f_tilde), std::move(o),
                                                        std::move(prior), NoiseModel(sigma));
  return inst;
}

}  // namespace detail

}  // namespace latent_imh
