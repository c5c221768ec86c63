#pragma once

#include "latent_imh/types.hpp"

#include <Eigen/SparseCore>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <random>
#include <vector>

namespace latent_imh {

using SparseMatrix = Eigen::SparseMatrix<double>;

/**
 * Sampling-based approximate Cholesky factor G G^T ~ M of a symmetric
 * diagonally dominant matrix with nonpositive off-diagonals (a graph
 * Laplacian plus a nonnegative diagonal).
 *
 * Vertices are eliminated in a seeded random order. Eliminating a vertex
 * replaces its exact Schur-complement clique with a sampled spanning
 * structure whose expectation equals the clique, so each column of G has
 * at most deg(v) + 1 entries.
 */
class RandomizedCholesky {
 public:
  RandomizedCholesky(const SparseMatrix& m, std::uint64_t seed) { factorize(m, seed); }

  Index size() const { return n_; }
  const SparseMatrix& factor() const { return g_; }
  const std::vector<int>& permutation() const { return perm_; }

  /// z = (G G^T)^{-1} r in the original ordering.
  Vector apply_inverse(const Vector& r) const {
    check_length("RandomizedCholesky::apply_inverse", n_, r.size());
    Vector rp(n_);
    for (Index i = 0; i < n_; ++i) rp[i] = r[perm_[i]];
    g_.triangularView<Eigen::Lower>().solveInPlace(rp);
    g_.transpose().triangularView<Eigen::Upper>().solveInPlace(rp);
    Vector z(n_);
    for (Index i = 0; i < n_; ++i) z[perm_[i]] = rp[i];
    return z;
  }

  std::size_t nonzeros() const { return static_cast<std::size_t>(g_.nonZeros()); }

 private:
  void factorize(const SparseMatrix& m, std::uint64_t seed) {
    if (m.rows() != m.cols()) throw DimensionError("RandomizedCholesky: square matrix", m.rows(),
                                                   m.cols());
    n_ = m.rows();
    std::mt19937_64 rng(seed);
    perm_.resize(n_);
    std::iota(perm_.begin(), perm_.end(), 0);
    std::shuffle(perm_.begin(), perm_.end(), rng);
    std::vector<int> inv(n_);
    for (Index i = 0; i < n_; ++i) inv[perm_[i]] = static_cast<int>(i);

    // adjacency in eliminated order; weights are -M_ij > 0
    std::vector<std::map<int, double>> adj(n_);
    std::vector<double> excess(n_, 0.0);
    for (Index col = 0; col < m.outerSize(); ++col) {
      for (SparseMatrix::InnerIterator it(m, col); it; ++it) {
        const int i = inv[it.row()];
        const int j = inv[it.col()];
        if (i == j) {
          excess[i] += it.value();
        } else {
          if (it.value() > 0.0) {
            throw std::invalid_argument("RandomizedCholesky: positive off-diagonal entry");
          }
          adj[i][j] += -it.value();
        }
      }
    }
    for (Index i = 0; i < n_; ++i) {
      for (const auto& [j, w] : adj[i]) excess[i] -= w;
      if (excess[i] < -1e-12 * std::max(1.0, std::abs(excess[i]))) {
        throw std::invalid_argument("RandomizedCholesky: matrix is not diagonally dominant");
      }
      excess[i] = std::max(excess[i], 0.0);
    }

    std::vector<Eigen::Triplet<double>> triplets;
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<std::pair<double, int>> nbrs;
    std::vector<double> suffix;
    for (Index k = 0; k < n_; ++k) {
      nbrs.clear();
      double degree = 0.0;
      for (const auto& [j, w] : adj[k]) {
        nbrs.emplace_back(w, j);
        degree += w;
      }
      const double pivot = degree + excess[k];
      if (!(pivot > 0.0)) {
        // isolated vertex without excess: singular input, keep factor invertible
        triplets.emplace_back(k, k, 1.0);
        continue;
      }
      const double root = std::sqrt(pivot);
      triplets.emplace_back(k, k, root);
      for (const auto& [w, j] : nbrs) {
        triplets.emplace_back(j, k, -w / root);
        adj[j].erase(static_cast<int>(k));
        excess[j] += w * excess[k] / pivot;
      }
      adj[k].clear();
      if (nbrs.size() < 2) continue;

      std::sort(nbrs.begin(), nbrs.end());
      const std::size_t cnt = nbrs.size();
      suffix.assign(cnt + 1, 0.0);
      for (std::size_t i = cnt; i-- > 0;) suffix[i] = suffix[i + 1] + nbrs[i].first;
      for (std::size_t i = 0; i + 1 < cnt; ++i) {
        const double rest = suffix[i + 1];
        double target = unif(rng) * rest;
        std::size_t j = i + 1;
        for (; j + 1 < cnt; ++j) {
          target -= nbrs[j].first;
          if (target <= 0.0) break;
        }
        const double w = nbrs[i].first * rest / pivot;
        const int a = nbrs[i].second;
        const int b = nbrs[j].second;
        adj[a][b] += w;
        adj[b][a] += w;
      }
    }
    g_.resize(n_, n_);
    g_.setFromTriplets(triplets.begin(), triplets.end());
    g_.makeCompressed();
  }

  Index n_ = 0;
  std::vector<int> perm_;
  SparseMatrix g_;
};

}  // namespace latent_imh
