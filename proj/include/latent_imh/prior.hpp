#pragma once

#include "latent_imh/types.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace latent_imh {

/// N(0, I).
struct StandardNormalPrior {};

/// N(mean, covariance). Held together with its Cholesky factor.
struct GeneralGaussianPrior {
  Vector mean;
  Matrix covariance;
  Matrix chol;       // lower factor, covariance = chol * chol^T
  Matrix precision;  // covariance^{-1}
};

/// sum_i w_i N(mean_i, I).
struct GaussianMixturePrior {
  Vector weights;
  std::vector<Vector> means;
};

/// iid Laplace with rate 1.
struct LaplacePrior {};

/// exp(-lambda * TV_eps(x)) on a rows x cols image stored row-major.
struct SmoothedTvPrior {
  double lambda = 1.0;
  double eps = 1e-2;
  Index rows = 0;
  Index cols = 0;
};

enum class PriorKind { standard_normal, general_gaussian, gaussian_mixture, laplace, smoothed_tv };

inline const char* to_string(PriorKind kind) {
  switch (kind) {
    case PriorKind::standard_normal: return "standard-normal";
    case PriorKind::general_gaussian: return "general-gaussian";
    case PriorKind::gaussian_mixture: return "gaussian-mixture";
    case PriorKind::laplace: return "laplace";
    case PriorKind::smoothed_tv: return "smoothed-tv";
  }
  return "unknown";
}

/**
 * Prior density over x in R^d, evaluated in the log domain.
 *
 * Normalization constants are dropped per kind:
 *   standard-normal   -|x|^2 / 2
 *   general-gaussian  -(x-m)^T S^{-1} (x-m) / 2
 *   gaussian-mixture  log sum_i w_i exp(-|x - m_i|^2 / 2)
 *   laplace           -|x|_1
 *   smoothed-tv       -lambda * TV_eps(x)
 */
class Prior {
 public:
  using Spec = std::variant<StandardNormalPrior, GeneralGaussianPrior, GaussianMixturePrior,
                            LaplacePrior, SmoothedTvPrior>;

  static Prior standard_normal(Index d) { return Prior(d, StandardNormalPrior{}); }

  static Prior general_gaussian(Vector mean, Matrix covariance) {
    const Index d = mean.size();
    check_length("general-gaussian covariance", d, covariance.rows());
    check_length("general-gaussian covariance", d, covariance.cols());
    Eigen::LLT<Matrix> llt(covariance);
    if (llt.info() != Eigen::Success) {
      throw std::invalid_argument("general-gaussian prior: covariance is not positive definite");
    }
    GeneralGaussianPrior g;
    g.mean = std::move(mean);
    g.chol = llt.matrixL();
    g.precision = llt.solve(Matrix::Identity(d, d));
    g.covariance = std::move(covariance);
    return Prior(d, std::move(g));
  }

  static Prior gaussian_mixture(Vector weights, std::vector<Vector> means) {
    if (weights.size() == 0 || static_cast<std::size_t>(weights.size()) != means.size()) {
      throw std::invalid_argument("gaussian-mixture prior: need one mean per weight");
    }
    if ((weights.array() <= 0.0).any()) {
      throw std::invalid_argument("gaussian-mixture prior: weights must be positive");
    }
    if (std::abs(weights.sum() - 1.0) > 1e-12) {
      throw std::invalid_argument("gaussian-mixture prior: weights must sum to 1");
    }
    const Index d = means.front().size();
    for (const auto& m : means) check_length("gaussian-mixture mean", d, m.size());
    return Prior(d, GaussianMixturePrior{std::move(weights), std::move(means)});
  }

  static Prior laplace(Index d) { return Prior(d, LaplacePrior{}); }

  static Prior smoothed_tv(Index rows, Index cols, double lambda, double eps = 1e-2) {
    if (!(eps > 0.0)) throw std::invalid_argument("smoothed-tv prior requires eps > 0");
    if (!(lambda > 0.0)) throw std::invalid_argument("smoothed-tv prior requires lambda > 0");
    if (rows < 1 || cols < 1) throw std::invalid_argument("smoothed-tv prior: empty grid");
    return Prior(rows * cols, SmoothedTvPrior{lambda, eps, rows, cols});
  }

  Index dim() const { return d_; }
  PriorKind kind() const { return static_cast<PriorKind>(spec_.index()); }
  const Spec& spec() const { return spec_; }
  bool is_gaussian() const {
    return kind() == PriorKind::standard_normal || kind() == PriorKind::general_gaussian;
  }

  double log_density(const Vector& x) const {
    check_length("Prior::log_density", d_, x.size());
    return std::visit([&](const auto& s) { return log_density_impl(s, x); }, spec_);
  }

  Vector grad_log_density(const Vector& x) const {
    check_length("Prior::grad_log_density", d_, x.size());
    return std::visit([&](const auto& s) { return grad_impl(s, x); }, spec_);
  }

  static double log_sum_exp(const Vector& v) {
    const double m = v.maxCoeff();
    if (!std::isfinite(m)) return m;
    return m + std::log((v.array() - m).exp().sum());
  }

 private:
  Prior(Index d, Spec spec) : d_(d), spec_(std::move(spec)) {
    if (d_ < 1) throw std::invalid_argument("prior dimension must be positive");
  }

  static double log_density_impl(const StandardNormalPrior&, const Vector& x) {
    return -0.5 * x.squaredNorm();
  }
  static Vector grad_impl(const StandardNormalPrior&, const Vector& x) { return -x; }

  static double log_density_impl(const GeneralGaussianPrior& g, const Vector& x) {
    const Vector r = x - g.mean;
    return -0.5 * r.dot(g.precision * r);
  }
  static Vector grad_impl(const GeneralGaussianPrior& g, const Vector& x) {
    return -(g.precision * (x - g.mean));
  }

  static Vector mixture_logits(const GaussianMixturePrior& m, const Vector& x) {
    Vector logits(m.weights.size());
    for (Index i = 0; i < m.weights.size(); ++i) {
      logits[i] = std::log(m.weights[i]) - 0.5 * (x - m.means[i]).squaredNorm();
    }
    return logits;
  }
  static double log_density_impl(const GaussianMixturePrior& m, const Vector& x) {
    return log_sum_exp(mixture_logits(m, x));
  }
  static Vector grad_impl(const GaussianMixturePrior& m, const Vector& x) {
    const Vector logits = mixture_logits(m, x);
    const double lse = log_sum_exp(logits);
    Vector g = Vector::Zero(x.size());
    for (Index i = 0; i < logits.size(); ++i) {
      g += std::exp(logits[i] - lse) * (m.means[i] - x);
    }
    return g;
  }

  static double log_density_impl(const LaplacePrior&, const Vector& x) {
    return -x.cwiseAbs().sum();
  }
  // Subgradient; 0 at the kink.
  static Vector grad_impl(const LaplacePrior&, const Vector& x) {
    return x.unaryExpr([](double v) { return v > 0.0 ? -1.0 : (v < 0.0 ? 1.0 : 0.0); });
  }

  // Forward differences; the difference across the last row/column is zero.
  static double log_density_impl(const SmoothedTvPrior& t, const Vector& x) {
    double tv = 0.0;
    const double eps2 = t.eps * t.eps;
    for (Index i = 0; i < t.rows; ++i) {
      for (Index j = 0; j < t.cols; ++j) {
        const double c = x[i * t.cols + j];
        const double di = i + 1 < t.rows ? x[(i + 1) * t.cols + j] - c : 0.0;
        const double dj = j + 1 < t.cols ? x[i * t.cols + j + 1] - c : 0.0;
        tv += std::sqrt(di * di + dj * dj + eps2);
      }
    }
    return -t.lambda * tv;
  }
  static Vector grad_impl(const SmoothedTvPrior& t, const Vector& x) {
    Vector g = Vector::Zero(x.size());
    const double eps2 = t.eps * t.eps;
    for (Index i = 0; i < t.rows; ++i) {
      for (Index j = 0; j < t.cols; ++j) {
        const Index c = i * t.cols + j;
        const bool has_i = i + 1 < t.rows;
        const bool has_j = j + 1 < t.cols;
        const double di = has_i ? x[c + t.cols] - x[c] : 0.0;
        const double dj = has_j ? x[c + 1] - x[c] : 0.0;
        const double inv = 1.0 / std::sqrt(di * di + dj * dj + eps2);
        if (has_i) {
          g[c + t.cols] -= t.lambda * di * inv;
          g[c] += t.lambda * di * inv;
        }
        if (has_j) {
          g[c + 1] -= t.lambda * dj * inv;
          g[c] += t.lambda * dj * inv;
        }
      }
    }
    return g;
  }

  Index d_;
  Spec spec_;
};

}  // namespace latent_imh
