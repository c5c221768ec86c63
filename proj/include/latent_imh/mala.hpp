#pragma once

#include "latent_imh/rng.hpp"
#include "latent_imh/sample_batch.hpp"
#include "latent_imh/target.hpp"

#include <algorithm>
#include <cmath>

namespace latent_imh {

/**
 * Proposal x' = x + (h^2 / 2) grad log pi(x) + h xi. With adapt = true the
 * step h follows a Robbins-Monro recursion on log h toward target_accept
 * during the first n_warmup steps and is frozen afterwards. Warm-up steps
 * are not recorded but their solves are counted.
 */
struct MalaSettings {
  double step = 0.1;
  bool adapt = true;
  Index n_warmup = 1000;
  double target_accept = 0.5;

  void validate() const {
    if (!(step > 0.0)) throw std::invalid_argument("MalaSettings.step must be positive");
    if (n_warmup < 0) throw std::invalid_argument("MalaSettings.n_warmup must be >= 0");
    if (!(target_accept > 0.0 && target_accept < 1.0)) {
      throw std::invalid_argument("MalaSettings.target_accept must lie in (0, 1)");
    }
  }
};

/// Current point of a gradient-based chain with its cached density and gradient.
struct GradientState {
  Vector x;
  double log_density = 0.0;
  Vector grad;
};

inline GradientState make_gradient_state(const LogDensity& target, Vector x) {
  check_length("initial point", target.dim, x.size());
  GradientState s;
  s.log_density = target.value_and_grad(x, s.grad);
  s.x = std::move(x);
  return s;
}

struct MalaProposal {
  GradientState state;
  double log_ratio = 0.0;  // Metropolis-Hastings log acceptance ratio
};

inline MalaProposal mala_propose(const LogDensity& target, const GradientState& cur, double h,
                                 Rng& rng) {
  const double h2 = h * h;
  const Vector xi = standard_normal_vector(rng, cur.x.size());
  MalaProposal p;
  p.state.x = cur.x + 0.5 * h2 * cur.grad + h * xi;
  p.state.log_density = target.value_and_grad(p.state.x, p.state.grad);
  const double log_fwd = -0.5 * xi.squaredNorm();
  const double log_bwd =
      -0.5 * (cur.x - p.state.x - 0.5 * h2 * p.state.grad).squaredNorm() / h2;
  p.log_ratio = p.state.log_density - cur.log_density + log_bwd - log_fwd;
  if (!std::isfinite(p.log_ratio)) p.log_ratio = -std::numeric_limits<double>::infinity();
  return p;
}

/// Robbins-Monro update of log h.
inline double adapt_step(double h, double log_ratio, double target_accept, Index iteration) {
  const double accept = log_ratio >= 0.0 ? 1.0 : std::exp(log_ratio);
  const double rate = std::pow(static_cast<double>(iteration) + 1.0, -0.6);
  return h * std::exp(rate * (accept - target_accept));
}

inline SampleBatch run_mala(const LogDensity& target, const Vector& x0, const MalaSettings& settings,
                            const RunLimits& limits, Rng& rng, SolveCounters& counters) {
  settings.validate();
  limits.validate();
  GradientState cur = make_gradient_state(target, x0);
  double h = settings.step;
  const Index warmup = settings.adapt ? settings.n_warmup : 0;
  detail::BatchRecorder rec(target.dim, limits.n_steps);
  bool truncated = false;
  for (Index it = 0; it < warmup + limits.n_steps; ++it) {
    if (limits.exhausted(counters)) {
      truncated = true;
      break;
    }
    MalaProposal prop = mala_propose(target, cur, h, rng);
    const bool acc = metropolis_accept(prop.log_ratio, rng);
    if (acc) cur = std::move(prop.state);
    if (it < warmup) {
      h = adapt_step(h, prop.log_ratio, settings.target_accept, it);
    } else {
      rec.push(cur.x, acc, counters);
    }
  }
  SampleBatch b = rec.finish(truncated);
  b.step_size = h;
  return b;
}

}  // namespace latent_imh
