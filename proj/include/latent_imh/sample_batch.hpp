#pragma once

#include "latent_imh/linear_map.hpp"

#include <cstdint>
#include <vector>

namespace latent_imh {

/// Step cap and optional cap on counted solves (0 = no budget).
struct RunLimits {
  Index n_steps = 1000;
  std::uint64_t solve_budget = 0;

  void validate() const {
    if (n_steps < 1) throw std::invalid_argument("n_steps must be >= 1");
  }
  bool exhausted(const SolveCounters& c) const {
    return solve_budget != 0 && c.total() >= solve_budget;
  }
};

/**
 * Chain output: one row per recorded step, acceptance flags and the
 * cumulative counted solves after each step (warm-up work included).
 */
struct SampleBatch {
  Matrix samples;  // n x d
  std::vector<bool> accepted;
  std::vector<std::uint64_t> forward_solves;
  std::vector<std::uint64_t> inverse_solves;
  double acceptance_rate = 0.0;
  bool truncated = false;
  double step_size = 0.0;  // gradient samplers only
  Index divergences = 0;   // NUTS only

  Index steps() const { return samples.rows(); }
  Index dim() const { return samples.cols(); }
};

namespace detail {

class BatchRecorder {
 public:
  BatchRecorder(Index dim, Index expected_steps) : dim_(dim) {
    const auto n = static_cast<std::size_t>(std::min<Index>(expected_steps, 1 << 20));
    data_.reserve(n * static_cast<std::size_t>(dim));
    accepted_.reserve(n);
  }

  void push(const Vector& x, bool accepted, const SolveCounters& c) {
    data_.insert(data_.end(), x.data(), x.data() + dim_);
    accepted_.push_back(accepted);
    forward_.push_back(c.forward.load());
    inverse_.push_back(c.inverse.load());
  }

  Index size() const { return static_cast<Index>(accepted_.size()); }

  SampleBatch finish(bool truncated) {
    SampleBatch b;
    const Index n = size();
    b.samples = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        data_.data(), n, dim_);
    b.accepted = std::move(accepted_);
    b.forward_solves = std::move(forward_);
    b.inverse_solves = std::move(inverse_);
    Index acc = 0;
    for (bool a : b.accepted) acc += a ? 1 : 0;
    b.acceptance_rate = n > 0 ? static_cast<double>(acc) / static_cast<double>(n) : 0.0;
    b.truncated = truncated;
    return b;
  }

 private:
  Index dim_;
  std::vector<double> data_;
  std::vector<bool> accepted_;
  std::vector<std::uint64_t> forward_;
  std::vector<std::uint64_t> inverse_;
};

}  // namespace detail

}  // namespace latent_imh
