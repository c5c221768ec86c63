#pragma once

#include "latent_imh/mala.hpp"

namespace latent_imh {

enum class FirstStage { approx_posterior, latent_posterior };

inline const char* to_string(FirstStage s) {
  return s == FirstStage::approx_posterior ? "approx-posterior" : "latent-posterior";
}

/// Cheap first-stage density. The latent posterior is only available in
/// closed form, so it needs a Gaussian prior.
inline LogDensity first_stage_target(const InverseProblem& problem, const Vector& y, FirstStage stage,
                                     SolveCounters& scratch) {
  if (stage == FirstStage::approx_posterior) {
    return posterior_target(problem, y, OperatorChoice::approximate, scratch);
  }
  const auto post = gaussian_posterior(problem, y, PosteriorVariant::latent);
  return gaussian_target(post.mean, post.covariance);
}

/**
 * Starting point for a two-stage chain: the first-stage posterior mean for
 * Gaussian priors, otherwise the end of an uncounted MALA pilot run on the
 * first-stage density started at x0.
 */
inline Vector first_stage_start(const InverseProblem& problem, const Vector& y, FirstStage stage,
                                const Vector& x0, const MalaSettings& settings, Rng& rng) {
  if (problem.prior().is_gaussian()) {
    const auto variant = stage == FirstStage::approx_posterior ? PosteriorVariant::approx : PosteriorVariant::latent;
    return gaussian_posterior(problem, y, variant).mean;
  }
  SolveCounters scratch;
  const LogDensity cheap = first_stage_target(problem, y, stage, scratch);
  MalaSettings pilot = settings;
  pilot.adapt = true;
  pilot.n_warmup = std::max<Index>(settings.n_warmup, 200);
  const SampleBatch b = run_mala(cheap, x0, pilot, RunLimits{1, 0}, rng, scratch);
  return b.samples.row(b.steps() - 1).transpose();
}

/**
 * Delayed-acceptance MALA. Stage 1 is a MALA accept/reject on the cheap
 * density pi_hat; stage-1 acceptances are corrected with
 * [pi(x') / pi(x_t)] [pi_hat(x_t) / pi_hat(x')], which costs one counted
 * forward apply. pi(x_t) is cached, so stage-1 rejections are free.
 * Step-size adaptation follows the stage-1 acceptance.
 */
inline SampleBatch run_two_stage(const InverseProblem& problem, const Vector& y, FirstStage stage,
                                 const Vector& x0, const MalaSettings& settings,
                                 const RunLimits& limits, Rng& rng, SolveCounters& counters) {
  settings.validate();
  limits.validate();
  SolveCounters scratch;
  const LogDensity cheap = first_stage_target(problem, y, stage, scratch);
  const LogDensity exact = posterior_target(problem, y, OperatorChoice::exact, counters);

  GradientState cur = make_gradient_state(cheap, x0);
  double exact_cur = exact.value(cur.x);
  double h = settings.step;
  const Index warmup = settings.adapt ? settings.n_warmup : 0;
  detail::BatchRecorder rec(problem.dim(), limits.n_steps);
  bool truncated = false;
  for (Index it = 0; it < warmup + limits.n_steps; ++it) {
    if (limits.exhausted(counters)) {
      truncated = true;
      break;
    }
    MalaProposal prop = mala_propose(cheap, cur, h, rng);
    bool acc = metropolis_accept(prop.log_ratio, rng);
    if (acc) {
      const double exact_prop = exact.value(prop.state.x);
      double lr2 = (exact_prop - exact_cur) - (prop.state.log_density - cur.log_density);
      if (!std::isfinite(lr2)) lr2 = -std::numeric_limits<double>::infinity();
      acc = metropolis_accept(lr2, rng);
      if (acc) {
        cur = std::move(prop.state);
        exact_cur = exact_prop;
      }
    }
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
