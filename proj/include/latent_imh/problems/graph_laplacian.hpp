#pragma once

#include "latent_imh/pcg.hpp"
#include "latent_imh/problems/common.hpp"
#include "latent_imh/randomized_cholesky.hpp"

#include <algorithm>
#include <array>
#include <queue>
#include <set>
#include <utility>

namespace latent_imh {

struct GraphLaplacianConfig {
  Index lattice_side = 10;
  Index k_neighbors = 6;
  Index d_x = 100;
  Index d_y = 20;
  PcgSettings pcg{1e-2, 10000, PreconditionerKind::factorization};
  double exact_tol = 1e-12;
  double regularization = 1e-6;  // mu = regularization * trace(L) / d_u
  std::uint64_t seed = 0;
  NoiseSpec noise = NoiseSpec::relative_level(0.1);
};

/**
 * Unweighted graph Laplacian of the k-nearest-neighbour graph on a
 * side^3 lattice in the unit cube, symmetrized (i ~ j if either is among
 * the other's k nearest). Distance ties are broken by vertex index.
 */
inline SparseMatrix lattice_knn_laplacian(Index side, Index k) {
  if (side < 2) throw std::invalid_argument("lattice side must be >= 2");
  const Index n = side * side * side;
  if (k < 1 || k >= n) throw std::invalid_argument("k_neighbors must lie in [1, n)");
  auto coord = [side](Index i) {
    return std::array<Index, 3>{i % side, (i / side) % side, i / (side * side)};
  };
  std::set<std::pair<Index, Index>> edges;
  std::vector<std::pair<Index, Index>> cand(static_cast<std::size_t>(n - 1));
  for (Index i = 0; i < n; ++i) {
    const auto ci = coord(i);
    std::size_t c = 0;
    for (Index j = 0; j < n; ++j) {
      if (j == i) continue;
      const auto cj = coord(j);
      Index d2 = 0;
      for (int a = 0; a < 3; ++a) d2 += (ci[a] - cj[a]) * (ci[a] - cj[a]);
      cand[c++] = {d2, j};
    }
    std::partial_sort(cand.begin(), cand.begin() + k, cand.end());
    for (Index t = 0; t < k; ++t) {
      const Index j = cand[static_cast<std::size_t>(t)].second;
      edges.insert({std::min(i, j), std::max(i, j)});
    }
  }
  std::vector<Eigen::Triplet<double>> trip;
  Vector deg = Vector::Zero(n);
  for (const auto& [i, j] : edges) {
    trip.emplace_back(i, j, -1.0);
    trip.emplace_back(j, i, -1.0);
    deg[i] += 1.0;
    deg[j] += 1.0;
  }
  for (Index i = 0; i < n; ++i) trip.emplace_back(i, i, deg[i]);
  SparseMatrix l(n, n);
  l.setFromTriplets(trip.begin(), trip.end());
  return l;
}

/// True if the off-diagonal pattern of a symmetric matrix is connected.
inline bool graph_connected(const SparseMatrix& l) {
  const Index n = l.rows();
  if (n == 0) return true;
  std::vector<bool> seen(static_cast<std::size_t>(n), false);
  std::queue<Index> q;
  q.push(0);
  seen[0] = true;
  Index count = 1;
  while (!q.empty()) {
    const Index v = q.front();
    q.pop();
    for (SparseMatrix::InnerIterator it(l, v); it; ++it) {
      const Index w = it.row();
      if (w != v && it.value() != 0.0 && !seen[static_cast<std::size_t>(w)]) {
        seen[static_cast<std::size_t>(w)] = true;
        ++count;
        q.push(w);
      }
    }
  }
  return count == n;
}

/// Solves M X = B column by column with PCG; returns X and the mean iteration count.
inline std::pair<Matrix, double> pcg_solve_columns(const SparseMatrix& m, const Matrix& b,
                                                   const RandomizedCholesky* precond,
                                                   const PcgSettings& settings) {
  const ApplyFn apply = [&m](const Vector& x) { return Vector(m * x); };
  ApplyFn pre;
  if (precond != nullptr && settings.preconditioner == PreconditionerKind::factorization) {
    pre = [precond](const Vector& r) { return precond->apply_inverse(r); };
  }
  Matrix x(m.rows(), b.cols());
  double iters = 0.0;
  for (Index j = 0; j < b.cols(); ++j) {
    const auto res = pcg_solve(apply, b.col(j), pre, settings);
    x.col(j) = res.x;
    iters += res.iterations;
  }
  return {x, b.cols() > 0 ? iters / static_cast<double>(b.cols()) : 0.0};
}

/**
 * Graph-Laplacian problem u = (L + mu I)^{-1} B x, y = O u + e, with
 * Gaussian B and O and a standard-normal prior. The exact map solves with
 * PCG to exact_tol, the approximate one to pcg.tolerance, both
 * preconditioned by a randomized Cholesky factor. Each map is materialized
 * column by column at build time and then squared by the reparameterization
 * built from the approximate map.
 *
 * info: "pcg_iterations_exact", "pcg_iterations_approx", "mu".
 */
inline ProblemInstance make_graph_laplacian_problem(const GraphLaplacianConfig& cfg) {
  cfg.pcg.validate();
  const Index side = cfg.lattice_side;
  const Index d_u = side * side * side;
  if (cfg.d_x > d_u) throw std::invalid_argument("graph problem: d_x exceeds lattice size");
  if (cfg.d_y > cfg.d_x) throw std::invalid_argument("graph problem: d_y exceeds d_x");
  if (!(cfg.regularization > 0.0)) throw std::invalid_argument("graph problem: regularization must be positive");

  SparseMatrix l = lattice_knn_laplacian(side, cfg.k_neighbors);
  if (!graph_connected(l)) {
    throw SingularOperatorError("graph problem: k-NN graph is disconnected, Laplacian is singular");
  }
  const double mu = cfg.regularization * l.diagonal().sum() / static_cast<double>(d_u);
  SparseMatrix lreg = l;
  for (Index i = 0; i < d_u; ++i) lreg.coeffRef(i, i) += mu;
  const RandomizedCholesky rchol(lreg, stream_seed(cfg.seed, 0, "graph-rchol"));

  Rng rng(stream_seed(cfg.seed, 0, "graph-operators"));
  Matrix b(d_u, cfg.d_x);
  for (Index j = 0; j < b.cols(); ++j) b.col(j) = standard_normal_vector(rng, d_u);
  Matrix o(cfg.d_y, d_u);
  for (Index j = 0; j < o.cols(); ++j) o.col(j) = standard_normal_vector(rng, cfg.d_y);

  PcgSettings exact = cfg.pcg;
  exact.tolerance = cfg.exact_tol;
  const auto [f_raw, it_exact] = pcg_solve_columns(lreg, b, &rchol, exact);
  const auto [ft_raw, it_approx] = pcg_solve_columns(lreg, b, &rchol, cfg.pcg);

  const auto rep = build_reparameterization(LinearMap::dense(o), LinearMap::dense(ft_raw));
  Matrix f = rep.v_x.transpose() * f_raw;
  Matrix ft = rep.v_x.transpose() * ft_raw;
  ProblemInstance inst =
      detail::assemble_instance(LinearMap::dense(std::move(f)), LinearMap::dense(std::move(ft)),
                                LinearMap::dense(rep.z), Prior::standard_normal(cfg.d_x), cfg.noise, rng);
  inst.info["pcg_iterations_exact"] = it_exact;
  inst.info["pcg_iterations_approx"] = it_approx;
  inst.info["mu"] = mu;
  inst.info["reparam_residual"] = (rep.z * rep.v_x.transpose() - o).norm() / o.norm();
  return inst;
}

}  // namespace latent_imh
