#pragma once

#include "latent_imh/problems/common.hpp"
#include "latent_imh/randomized_cholesky.hpp"

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include <algorithm>
#include <numbers>
#include <numeric>

namespace latent_imh {

struct HelmholtzGrid {
  Index n_u = 32;         // fine grid side (interior nodes)
  Index n_u_coarse = 16;  // coarse grid side
  Index n_x = 8;          // source grid side
  double wavenumber = 3.0;
  Index events = 2;

  void validate() const {
    if (n_u < 2 || n_u_coarse < 2 || n_x < 1 || events < 1) {
      throw std::invalid_argument("HelmholtzGrid: sizes must be positive");
    }
    if (n_u_coarse > n_u) throw std::invalid_argument("HelmholtzGrid: coarse grid finer than fine grid");
    if (n_x > n_u_coarse) throw std::invalid_argument("HelmholtzGrid: n_x must not exceed the coarse side");
    if (!(wavenumber > 0.0)) throw std::invalid_argument("HelmholtzGrid: wavenumber must be positive");
  }
};

struct HelmholtzConfig {
  HelmholtzGrid grid;
  double tv_lambda = 1.0;
  double tv_eps = 1e-2;
  double observation_ratio = 0.2;  // d_y = round(ratio * d_x)
  double source_width_cells = 2.0;
  std::uint64_t seed = 0;
  NoiseSpec noise = NoiseSpec::relative_level(0.1);
};

/// k^2 I + Delta_h on the n x n interior nodes of the unit square, zero
/// Dirichlet boundary, h = 1/(n+1), 5-point stencil, row-major node order.
inline SparseMatrix helmholtz_operator(Index n, double k) {
  const double h = 1.0 / static_cast<double>(n + 1);
  const double inv_h2 = 1.0 / (h * h);
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(5 * n * n));
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      const Index c = i * n + j;
      trip.emplace_back(c, c, k * k - 4.0 * inv_h2);
      if (i > 0) trip.emplace_back(c, c - n, inv_h2);
      if (i + 1 < n) trip.emplace_back(c, c + n, inv_h2);
      if (j > 0) trip.emplace_back(c, c - 1, inv_h2);
      if (j + 1 < n) trip.emplace_back(c, c + 1, inv_h2);
    }
  }
  SparseMatrix l(n * n, n * n);
  l.setFromTriplets(trip.begin(), trip.end());
  return l;
}

/// Smallest |eigenvalue| of k^2 I + Delta_h relative to the largest, from the
/// analytic Dirichlet spectrum.
inline double helmholtz_relative_gap(Index n, double k) {
  const double h = 1.0 / static_cast<double>(n + 1);
  const double pi = std::numbers::pi;
  double lo = std::numeric_limits<double>::infinity();
  double hi = 0.0;
  for (Index p = 1; p <= n; ++p) {
    for (Index q = 1; q <= n; ++q) {
      const double sp = std::sin(0.5 * pi * static_cast<double>(p) * h);
      const double sq = std::sin(0.5 * pi * static_cast<double>(q) * h);
      const double lam = k * k - 4.0 / (h * h) * (sp * sp + sq * sq);
      lo = std::min(lo, std::abs(lam));
      hi = std::max(hi, std::abs(lam));
    }
  }
  return lo / hi;
}

inline void check_non_resonant(Index n, double k, const char* which) {
  if (helmholtz_relative_gap(n, k) < 1e-8) {
    throw SingularOperatorError(std::string("Helmholtz ") + which +
                                " operator is resonant at wavenumber " + std::to_string(k) +
                                "; shift k away from the discrete Dirichlet eigenvalues");
  }
}

/// Bilinear interpolation from coarse interior nodes (zero boundary) to
/// fine interior nodes. Identity when both grids coincide.
inline SparseMatrix prolongation(Index n_fine, Index n_coarse) {
  const double hf = 1.0 / static_cast<double>(n_fine + 1);
  const double hc = 1.0 / static_cast<double>(n_coarse + 1);
  auto weights = [&](Index i) {
    double t = static_cast<double>(i + 1) * hf / hc - 1.0;
    const double r = std::round(t);
    if (std::abs(t - r) < 1e-12) t = r;
    const Index i0 = static_cast<Index>(std::floor(t));
    const double frac = t - static_cast<double>(i0);
    std::vector<std::pair<Index, double>> w;
    if (i0 >= 0 && i0 < n_coarse && 1.0 - frac != 0.0) w.emplace_back(i0, 1.0 - frac);
    if (i0 + 1 >= 0 && i0 + 1 < n_coarse && frac != 0.0) w.emplace_back(i0 + 1, frac);
    return w;
  };
  std::vector<Eigen::Triplet<double>> trip;
  for (Index i = 0; i < n_fine; ++i) {
    const auto wi = weights(i);
    for (Index j = 0; j < n_fine; ++j) {
      const auto wj = weights(j);
      for (const auto& [ci, a] : wi)
        for (const auto& [cj, b] : wj) trip.emplace_back(i * n_fine + j, ci * n_coarse + cj, a * b);
    }
  }
  SparseMatrix p(n_fine * n_fine, n_coarse * n_coarse);
  p.setFromTriplets(trip.begin(), trip.end());
  return p;
}

/// Gaussian source profiles centred on an n_x x n_x lattice, sampled at the
/// interior nodes of an n x n grid; one column per source.
inline Matrix source_lifting(Index n, Index n_x, double width) {
  const double h = 1.0 / static_cast<double>(n + 1);
  const double hx = 1.0 / static_cast<double>(n_x + 1);
  Matrix b(n * n, n_x * n_x);
  for (Index a = 0; a < n_x; ++a) {
    for (Index c = 0; c < n_x; ++c) {
      const double cx = static_cast<double>(a + 1) * hx;
      const double cy = static_cast<double>(c + 1) * hx;
      for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < n; ++j) {
          const double dx = static_cast<double>(i + 1) * h - cx;
          const double dy = static_cast<double>(j + 1) * h - cy;
          b(i * n + j, a * n_x + c) = std::exp(-(dx * dx + dy * dy) / (2.0 * width * width));
        }
      }
    }
  }
  return b;
}

/// Piecewise-constant test medium: a disk of value 1 on a zero background.
inline Vector disk_image(Index n_x) {
  Vector x = Vector::Zero(n_x * n_x);
  const double hx = 1.0 / static_cast<double>(n_x + 1);
  for (Index a = 0; a < n_x; ++a) {
    for (Index c = 0; c < n_x; ++c) {
      const double px = static_cast<double>(a + 1) * hx - 0.55;
      const double py = static_cast<double>(c + 1) * hx - 0.45;
      if (px * px + py * py <= 0.3 * 0.3) x[a * n_x + c] = 1.0;
    }
  }
  return x;
}

/**
 * Helmholtz problem on the unit square. Each event observes the field
 * u = L^{-1} B x on the fine grid at its own random distinct nodes, so
 * d_u = events * n_u^2. The approximation is P Ltilde^{-1} Btilde with the
 * same construction on the coarse grid and bilinear prolongation P. Both
 * maps are squared by the reparameterization built from the approximate
 * map; the prior is smoothed TV on the n_x x n_x source image and the data
 * come from disk_image.
 *
 * info: "d_u", "d_y".
 */
inline ProblemInstance make_helmholtz_problem(const HelmholtzConfig& cfg) {
  const auto& g = cfg.grid;
  g.validate();
  check_non_resonant(g.n_u, g.wavenumber, "fine");
  check_non_resonant(g.n_u_coarse, g.wavenumber, "coarse");
  const Index n2 = g.n_u * g.n_u;
  const Index d_x = g.n_x * g.n_x;
  const Index d_u = g.events * n2;
  const auto d_y = static_cast<Index>(std::llround(cfg.observation_ratio * static_cast<double>(d_x)));
  if (d_y < 1 || d_y > d_x) throw std::invalid_argument("helmholtz: observation ratio gives invalid d_y");

  const double width = cfg.source_width_cells / static_cast<double>(g.n_u + 1);
  const SparseMatrix l = helmholtz_operator(g.n_u, g.wavenumber);
  Eigen::SparseLU<SparseMatrix> lu(l);
  if (lu.info() != Eigen::Success) throw SingularOperatorError("helmholtz: fine factorization failed");
  const Matrix field = lu.solve(source_lifting(g.n_u, g.n_x, width));

  const SparseMatrix lc = helmholtz_operator(g.n_u_coarse, g.wavenumber);
  Eigen::SparseLU<SparseMatrix> luc(lc);
  if (luc.info() != Eigen::Success) throw SingularOperatorError("helmholtz: coarse factorization failed");
  const Matrix coarse = luc.solve(source_lifting(g.n_u_coarse, g.n_x, width));
  const Matrix field_tilde = prolongation(g.n_u, g.n_u_coarse) * coarse;

  Matrix f_raw(d_u, d_x);
  Matrix ft_raw(d_u, d_x);
  for (Index e = 0; e < g.events; ++e) {
    f_raw.middleRows(e * n2, n2) = field;
    ft_raw.middleRows(e * n2, n2) = field_tilde;
  }

  Rng rng(stream_seed(cfg.seed, 0, "helmholtz-observation"));
  Matrix o = Matrix::Zero(d_y, d_u);
  Index row = 0;
  for (Index e = 0; e < g.events; ++e) {
    const Index count = d_y / g.events + (e < d_y % g.events ? 1 : 0);
    std::vector<Index> idx(static_cast<std::size_t>(n2));
    std::iota(idx.begin(), idx.end(), Index{0});
    std::shuffle(idx.begin(), idx.end(), rng);
    std::sort(idx.begin(), idx.begin() + count);
    for (Index t = 0; t < count; ++t) o(row++, e * n2 + idx[static_cast<std::size_t>(t)]) = 1.0;
  }

  const auto rep = build_reparameterization(LinearMap::dense(o), LinearMap::dense(ft_raw));
  Matrix f = rep.v_x.transpose() * f_raw;
  Matrix ft = rep.v_x.transpose() * ft_raw;
  ProblemInstance inst = detail::assemble_instance(
      LinearMap::dense(std::move(f)), LinearMap::dense(std::move(ft)), LinearMap::dense(rep.z),
      Prior::smoothed_tv(g.n_x, g.n_x, cfg.tv_lambda, cfg.tv_eps), cfg.noise, rng, disk_image(g.n_x));
  inst.info["d_u"] = static_cast<double>(d_u);
  inst.info["d_y"] = static_cast<double>(d_y);
  inst.info["reparam_residual"] = (rep.z * rep.v_x.transpose() - o).norm() / o.norm();
  return inst;
}

}  // namespace latent_imh
