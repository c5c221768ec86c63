#pragma once

#include "latent_imh/rng.hpp"
#include "latent_imh/sample_batch.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace latent_imh {

/// A metric value with a flag for the degenerate cases described per metric.
struct MetricValue {
  double value = 0.0;
  bool flagged = false;
};

/// |mean(x_1..x_t) - mu| / |mu|; absolute error (flagged) when mu = 0.
inline MetricValue relative_mean_error(const Matrix& samples, Index t, const Vector& mu_true) {
  if (t < 1 || t > samples.rows()) throw std::invalid_argument("relative_mean_error: need 1 <= t <= rows");
  check_length("relative_mean_error: mu", samples.cols(), mu_true.size());
  const Vector mean = samples.topRows(t).colwise().mean().transpose();
  const double err = (mean - mu_true).norm();
  const double ref = mu_true.norm();
  if (ref == 0.0) return {err, true};
  return {err / ref, false};
}

/// mean_j ((mean(x_j^2) - m_j) / m_j)^2 over coordinates with m_j != 0;
/// flagged when any coordinate is skipped.
inline MetricValue squared_bias_second_moment(const Matrix& samples, Index t, const Vector& m2_true) {
  if (t < 1 || t > samples.rows()) throw std::invalid_argument("squared_bias_second_moment: need 1 <= t <= rows");
  check_length("squared_bias_second_moment: moments", samples.cols(), m2_true.size());
  const Vector m2 = samples.topRows(t).array().square().colwise().mean().transpose();
  MetricValue out;
  double sum = 0.0;
  Index used = 0;
  for (Index j = 0; j < m2.size(); ++j) {
    if (m2_true[j] == 0.0) {
      out.flagged = true;
      continue;
    }
    const double r = (m2[j] - m2_true[j]) / m2_true[j];
    sum += r * r;
    ++used;
  }
  out.value = used > 0 ? sum / static_cast<double>(used) : 0.0;
  return out;
}

namespace detail {

inline double rbf_sum(const Matrix& a, const Matrix& b, double gamma, bool skip_diagonal) {
  double total = 0.0;
  for (Index i = 0; i < a.rows(); ++i) {
    for (Index j = 0; j < b.rows(); ++j) {
      if (skip_diagonal && i == j) continue;
      total += std::exp(-gamma * (a.row(i) - b.row(j)).squaredNorm());
    }
  }
  return total;
}

}  // namespace detail

/// Unbiased MMD^2 with RBF kernel exp(-gamma |x - y|^2); rows are points.
inline double mmd2(const Matrix& x, const Matrix& y, double gamma) {
  if (x.cols() != y.cols()) throw DimensionError("mmd2: point dimension", x.cols(), y.cols());
  if (x.rows() < 2 || y.rows() < 2) throw std::invalid_argument("mmd2: unbiased estimator needs >= 2 points per set");
  const double n = static_cast<double>(x.rows());
  const double m = static_cast<double>(y.rows());
  return detail::rbf_sum(x, x, gamma, true) / (n * (n - 1.0)) +
         detail::rbf_sum(y, y, gamma, true) / (m * (m - 1.0)) -
         2.0 * detail::rbf_sum(x, y, gamma, false) / (n * m);
}

/// Biased (V-statistic) MMD^2; zero for identical sets.
inline double mmd2_biased(const Matrix& x, const Matrix& y, double gamma) {
  if (x.cols() != y.cols()) throw DimensionError("mmd2_biased: point dimension", x.cols(), y.cols());
  if (x.rows() < 1 || y.rows() < 1) throw std::invalid_argument("mmd2_biased: empty set");
  const double n = static_cast<double>(x.rows());
  const double m = static_cast<double>(y.rows());
  return detail::rbf_sum(x, x, gamma, false) / (n * n) + detail::rbf_sum(y, y, gamma, false) / (m * m) -
         2.0 * detail::rbf_sum(x, y, gamma, false) / (n * m);
}

/// Rows of `points` subsampled to at most `cap` without replacement (seeded);
/// returned in their original order.
inline Matrix subsample_rows(const Matrix& points, Index cap, std::uint64_t seed) {
  if (points.rows() <= cap) return points;
  std::vector<Index> idx(static_cast<std::size_t>(points.rows()));
  std::iota(idx.begin(), idx.end(), Index{0});
  Rng rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(static_cast<std::size_t>(cap));
  std::sort(idx.begin(), idx.end());
  Matrix out(cap, points.cols());
  for (Index i = 0; i < cap; ++i) out.row(i) = points.row(idx[static_cast<std::size_t>(i)]);
  return out;
}

/// gamma = 1 / median of pairwise squared distances, over at most `cap`
/// seeded-subsampled points.
inline double median_heuristic(const Matrix& y, Index cap = 10000, std::uint64_t seed = 0) {
  if (y.rows() < 2) throw std::invalid_argument("median_heuristic: need >= 2 points");
  const Matrix p = subsample_rows(y, cap, seed);
  std::vector<double> d2;
  d2.reserve(static_cast<std::size_t>(p.rows() * (p.rows() - 1) / 2));
  for (Index i = 0; i < p.rows(); ++i)
    for (Index j = i + 1; j < p.rows(); ++j) d2.push_back((p.row(i) - p.row(j)).squaredNorm());
  const std::size_t n = d2.size();
  const std::size_t mid = n / 2;
  std::nth_element(d2.begin(), d2.begin() + static_cast<std::ptrdiff_t>(mid), d2.end());
  double med = d2[mid];
  if (n % 2 == 0) {
    const double lower = *std::max_element(d2.begin(), d2.begin() + static_cast<std::ptrdiff_t>(mid));
    med = 0.5 * (med + lower);
  }
  if (!(med > 0.0)) throw std::invalid_argument("median_heuristic: degenerate point set");
  return 1.0 / med;
}

struct ErrorMaps {
  Matrix mean_map;
  Matrix var_map;
};

/// Per-pixel |mean - truth_mean| and |var - truth_var| (t - 1 denominator),
/// reshaped row-major to rows x cols.
inline ErrorMaps error_maps(const Matrix& samples, const Vector& truth_mean, const Vector& truth_var,
                            Index rows, Index cols) {
  const Index d = rows * cols;
  check_length("error_maps: sample dimension", d, samples.cols());
  check_length("error_maps: truth_mean", d, truth_mean.size());
  check_length("error_maps: truth_var", d, truth_var.size());
  const Index t = samples.rows();
  if (t < 2) throw std::invalid_argument("error_maps: variance map needs t >= 2");
  const Vector mean = samples.colwise().mean().transpose();
  const Vector var =
      (samples.rowwise() - mean.transpose()).array().square().colwise().sum().transpose() /
      static_cast<double>(t - 1);
  ErrorMaps out;
  out.mean_map = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      Vector((mean - truth_mean).cwiseAbs()).data(), rows, cols);
  out.var_map = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      Vector((var - truth_var).cwiseAbs()).data(), rows, cols);
  return out;
}

/// Effective sample size of one coordinate via Geyer's initial positive sequence.
inline double effective_sample_size(const Vector& chain) {
  const Index n = chain.size();
  if (n < 4) return static_cast<double>(n);
  const Vector c = chain.array() - chain.mean();
  const double c0 = c.squaredNorm() / static_cast<double>(n);
  if (c0 == 0.0) return static_cast<double>(n);
  auto rho = [&](Index lag) {
    return c.head(n - lag).dot(c.tail(n - lag)) / (static_cast<double>(n) * c0);
  };
  double sum = 0.0;
  for (Index k = 0; 2 * k + 1 < n; ++k) {
    const double pair = (k == 0 ? 1.0 : rho(2 * k)) + rho(2 * k + 1);
    if (pair <= 0.0) break;
    sum += pair;
  }
  const double tau = std::max(2.0 * sum - 1.0, 1e-12);
  return static_cast<double>(n) / tau;
}

/// Minimum per-coordinate ESS.
inline double min_effective_sample_size(const Matrix& samples) {
  double m = std::numeric_limits<double>::infinity();
  for (Index j = 0; j < samples.cols(); ++j) m = std::min(m, effective_sample_size(samples.col(j)));
  return m;
}

/// Reference quantities a chain is scored against.
struct GroundTruth {
  Vector mean;
  Vector second_moment;
  Matrix samples;  // reference draws for MMD
  double gamma = 1.0;
};

struct MetricSeries {
  std::vector<Index> checkpoints;
  std::vector<std::uint64_t> cost_forward;
  std::vector<std::uint64_t> cost_inverse;
  std::vector<double> acceptance_rate;
  std::vector<double> rel_mean_err;
  std::vector<double> sq_bias_2nd;
  std::vector<double> mmd;
  bool truncated = false;

  std::size_t size() const { return checkpoints.size(); }
};

/// Evenly spaced step counts from `first` to `last` (inclusive), strictly increasing.
inline std::vector<Index> linear_checkpoints(Index first, Index last, Index count) {
  std::vector<Index> out;
  if (count < 1 || first < 1 || last < first) return out;
  for (Index i = 0; i < count; ++i) {
    const Index v = count == 1 ? last : first + (last - first) * i / (count - 1);
    if (out.empty() || v > out.back()) out.push_back(v);
  }
  return out;
}

/**
 * Scores the first t rows of a batch at each checkpoint t (checkpoints past
 * the end of a truncated batch are dropped). MMD compares at most
 * `mmd_points` rows, evenly spaced over the prefix, with the reference draws.
 */
inline MetricSeries compute_series(const SampleBatch& batch, const std::vector<Index>& checkpoints,
                                   const GroundTruth& truth, Index mmd_points = 300) {
  MetricSeries s;
  s.truncated = batch.truncated;
  const Index d = batch.dim();
  Vector sum = Vector::Zero(d);
  Vector sum2 = Vector::Zero(d);
  Index row = 0;
  Index acc = 0;
  for (Index t : checkpoints) {
    if (t < 1 || t > batch.steps()) continue;
    for (; row < t; ++row) {
      sum += batch.samples.row(row).transpose();
      sum2 += batch.samples.row(row).transpose().array().square().matrix();
      if (batch.accepted[static_cast<std::size_t>(row)]) ++acc;
    }
    const double td = static_cast<double>(t);
    const Vector mean = sum / td;
    const double ref = truth.mean.norm();
    const double rme = ref > 0.0 ? (mean - truth.mean).norm() / ref : (mean - truth.mean).norm();
    double sb = 0.0;
    Index used = 0;
    for (Index j = 0; j < d; ++j) {
      if (truth.second_moment[j] == 0.0) continue;
      const double r = (sum2[j] / td - truth.second_moment[j]) / truth.second_moment[j];
      sb += r * r;
      ++used;
    }
    sb = used > 0 ? sb / static_cast<double>(used) : 0.0;
    double m = 0.0;
    if (truth.samples.rows() >= 2 && t >= 2) {
      const Index k = std::min(t, mmd_points);
      Matrix pts(k, d);
      for (Index i = 0; i < k; ++i) pts.row(i) = batch.samples.row(k == 1 ? 0 : (t - 1) * i / (k - 1));
      m = mmd2(pts, truth.samples, truth.gamma);
    }
    s.checkpoints.push_back(t);
    s.cost_forward.push_back(batch.forward_solves[static_cast<std::size_t>(t - 1)]);
    s.cost_inverse.push_back(batch.inverse_solves[static_cast<std::size_t>(t - 1)]);
    s.acceptance_rate.push_back(static_cast<double>(acc) / td);
    s.rel_mean_err.push_back(rme);
    s.sq_bias_2nd.push_back(sb);
    s.mmd.push_back(m);
  }
  return s;
}

}  // namespace latent_imh
