#pragma once

#include "latent_imh/nuts.hpp"

#include <optional>
#include <utility>

namespace latent_imh {

enum class ImhKind { approx, latent };

/// How proposals are drawn from the approximate posterior.
enum class InnerKind { automatic, exact_gaussian, exact_mixture, inner_nuts };

/// black_box uses log ptilde(u) with its determinant; linear uses p(Ftilde^{-1} u).
enum class LatentRatioMode { black_box, linear };

inline const char* to_string(ImhKind k) { return k == ImhKind::approx ? "approx-imh" : "latent-imh"; }

inline const char* to_string(InnerKind k) {
  switch (k) {
    case InnerKind::automatic: return "automatic";
    case InnerKind::exact_gaussian: return "exact-gaussian";
    case InnerKind::exact_mixture: return "exact-mixture";
    case InnerKind::inner_nuts: return "inner-nuts";
  }
  return "unknown";
}

struct ImhSettings {
  ImhKind kind = ImhKind::latent;
  InnerKind inner = InnerKind::automatic;
  LatentRatioMode ratio_mode = LatentRatioMode::linear;
  NutsSettings inner_nuts{200, 0.8};
  Index inner_steps = 16;
};

/// Cached state of an IMH chain. For Approx-IMH log_term is
/// log q(y - A x) - log q(y - Atilde x); for Latent-IMH it is
/// log p(x) - log ptilde(u) (or log p(Ftilde^{-1} u) in linear mode).
struct ChainState {
  Vector x;
  std::optional<Vector> u;
  double log_term = 0.0;
};

/**
 * Draws from the approximate posterior using only Ftilde.
 *
 * Approx-IMH proposals live in x-space, pi_a(x|y) ~ q(y - Atilde x) p(x).
 * Latent-IMH proposals live in u-space, pi_a(u|y) ~ q(y - O u) ptilde(u);
 * for Gaussian and mixture priors these are u = Ftilde x_a with x_a an
 * approx-posterior draw. The inner-NUTS engine keeps one persistent chain
 * and advances it inner_steps transitions per draw, so successive proposals
 * are only approximately independent.
 */
class ProposalEngine {
 public:
  ProposalEngine(const InverseProblem& problem, const Vector& y, const ImhSettings& settings, Rng& rng)
      : problem_(&problem), settings_(settings) {
    check_length("ProposalEngine: y", problem.obs_dim(), y.size());
    const Prior& prior = problem.prior();
    inner_ = settings.inner;
    if (inner_ == InnerKind::automatic) {
      inner_ = prior.is_gaussian() ? InnerKind::exact_gaussian
               : prior.kind() == PriorKind::gaussian_mixture ? InnerKind::exact_mixture
                                                              : InnerKind::inner_nuts;
    }
    switch (inner_) {
      case InnerKind::exact_gaussian: {
        const auto post = gaussian_posterior(problem, y, PosteriorVariant::approx);
        components_.emplace_back(post.mean, post.covariance);
        log_weights_ = Vector::Zero(1);
        break;
      }
      case InnerKind::exact_mixture: init_mixture(y); break;
      case InnerKind::inner_nuts: {
        if (settings.inner_steps < 1) throw std::invalid_argument("inner_steps must be >= 1");
        target_ = settings.kind == ImhKind::latent
                      ? latent_target(problem, y)
                      : posterior_target(problem, y, OperatorChoice::approximate, scratch_);
        Vector start = Vector::Zero(problem.dim());
        inner_chain_.emplace(target_, start, settings.inner_nuts, rng);
        for (Index i = 0; i < settings.inner_nuts.n_warmup; ++i) inner_chain_->transition(rng, true);
        inner_chain_->end_adaptation();
        break;
      }
      case InnerKind::automatic: break;
    }
  }

  ProposalEngine(const ProposalEngine&) = delete;
  ProposalEngine& operator=(const ProposalEngine&) = delete;

  InnerKind inner() const { return inner_; }
  ImhKind kind() const { return settings_.kind; }
  LatentRatioMode ratio_mode() const { return settings_.ratio_mode; }
  bool approximately_independent() const { return inner_ == InnerKind::inner_nuts; }

  /// Approx-posterior draw in x-space (Approx-IMH) or u-space (Latent-IMH).
  Vector draw(Rng& rng) {
    if (inner_ == InnerKind::inner_nuts) {
      for (Index i = 0; i < settings_.inner_steps; ++i) inner_chain_->transition(rng, false);
      return inner_chain_->position();
    }
    std::size_t k = 0;
    if (components_.size() > 1) {
      const double u = uniform01(rng);
      double acc = 0.0;
      k = components_.size() - 1;
      for (std::size_t i = 0; i < components_.size(); ++i) {
        acc += std::exp(log_weights_[static_cast<Index>(i)]);
        if (u < acc) {
          k = i;
          break;
        }
      }
    }
    const Vector x = components_[k].draw(rng);
    return settings_.kind == ImhKind::latent ? problem_->forward_approx(x) : x;
  }

  /// Normalized log weights of the exact mixture proposal components.
  const Vector& component_log_weights() const { return log_weights_; }

 private:
  void init_mixture(const Vector& y) {
    const Prior& prior = problem_->prior();
    if (prior.kind() != PriorKind::gaussian_mixture) {
      throw UnsupportedError("exact-mixture proposal needs a gaussian-mixture prior");
    }
    const auto& mix = std::get<GaussianMixturePrior>(prior.spec());
    const Index d = problem_->dim();
    const double sigma = problem_->sigma();
    const Matrix at = problem_->a_approx_dense();
    const auto parts = detail::gaussian_parts(at, sigma, Prior::standard_normal(d));
    // marginal of y under component i: N(Atilde m_i, Atilde Atilde^T + sigma^2 I)
    Matrix evid = at * at.transpose();
    evid.diagonal().array() += sigma * sigma;
    Eigen::LLT<Matrix> llt(evid);
    const Index k = mix.weights.size();
    Vector logits(k);
    for (Index i = 0; i < k; ++i) {
      const Vector& m = mix.means[static_cast<std::size_t>(i)];
      const Vector r = y - at * m;
      logits[i] = std::log(mix.weights[i]) - 0.5 * r.dot(llt.solve(r));
      components_.emplace_back(m + parts.pinv * r, parts.cov);
    }
    log_weights_ = logits.array() - Prior::log_sum_exp(logits);
  }

  const InverseProblem* problem_;
  ImhSettings settings_;
  InnerKind inner_ = InnerKind::automatic;
  std::vector<GaussianSampler> components_;
  Vector log_weights_;
  LogDensity target_;
  SolveCounters scratch_;
  std::optional<NutsChain> inner_chain_;
};

/// Approx-IMH log term log q(y - A x) - log q(y - Atilde x); one counted forward apply.
inline double approx_log_term(const InverseProblem& problem, const Vector& x, const Vector& y,
                              SolveCounters& counters) {
  return log_likelihood(problem, x, y, OperatorChoice::exact, counters) -
         log_likelihood(problem, x, y, OperatorChoice::approximate);
}

/// Latent-IMH log term log p(x) - log ptilde(u); no counted solves.
inline double latent_log_term(const InverseProblem& problem, const Vector& x, const Vector& u,
                              LatentRatioMode mode) {
  const double lp = problem.prior().log_density(x);
  if (mode == LatentRatioMode::linear) return lp - problem.prior().log_density(problem.inverse_approx(u));
  return lp - latent_prior_log_density(problem, u);
}

/// Log of the Approx-IMH acceptance ratio before the min; one counted forward apply.
inline double accept_log_ratio_approx(const InverseProblem& problem, const Vector& x_prop,
                                      const Vector& y, const ChainState& state, SolveCounters& counters) {
  check_length("accept_log_ratio_approx: x", problem.dim(), x_prop.size());
  return approx_log_term(problem, x_prop, y, counters) - state.log_term;
}

/// Log of the Latent-IMH acceptance ratio before the min; x_prop = F^{-1} u_prop
/// must already be computed. No counted solves.
inline double accept_log_ratio_latent(const InverseProblem& problem, const Vector& x_prop,
                                      const Vector& u_prop, const ChainState& state,
                                      LatentRatioMode mode) {
  check_length("accept_log_ratio_latent: x", problem.dim(), x_prop.size());
  check_length("accept_log_ratio_latent: u", problem.dim(), u_prop.size());
  return latent_log_term(problem, x_prop, u_prop, mode) - state.log_term;
}

/// u ~ pi_a(u|y), then x = F^{-1} u (one counted inverse solve).
inline std::pair<Vector, Vector> propose_latent(const InverseProblem& problem, ProposalEngine& engine,
                                                Rng& rng, SolveCounters& counters) {
  if (engine.kind() != ImhKind::latent) throw std::invalid_argument("propose_latent: engine is not latent");
  Vector u = engine.draw(rng);
  Vector x = problem.inverse_exact(u, counters);
  return {std::move(u), std::move(x)};
}

/**
 * Independence Metropolis-Hastings. Row 0 is the initial draw x_1 from the
 * proposal (accepted by convention); each further row is one
 * propose/accept step. Every row costs exactly one counted solve: a forward
 * apply for Approx-IMH, an inverse solve for Latent-IMH.
 */
inline SampleBatch run_imh(const InverseProblem& problem, const Vector& y, ProposalEngine& engine,
                           const RunLimits& limits, Rng& rng, SolveCounters& counters) {
  limits.validate();
  detail::BatchRecorder rec(problem.dim(), limits.n_steps);
  const bool latent = engine.kind() == ImhKind::latent;
  const LatentRatioMode mode = engine.ratio_mode();
  ChainState state;
  bool truncated = false;
  for (Index it = 0; it < limits.n_steps; ++it) {
    if (limits.exhausted(counters)) {
      truncated = true;
      break;
    }
    bool accepted = false;
    if (latent) {
      auto [u, x] = propose_latent(problem, engine, rng, counters);
      const double term = latent_log_term(problem, x, u, mode);
      accepted = it == 0 || metropolis_accept(term - state.log_term, rng);
      if (accepted) {
        state.log_term = term;
        state.x = std::move(x);
        state.u = std::move(u);
      }
    } else {
      Vector x = engine.draw(rng);
      const double term = approx_log_term(problem, x, y, counters);
      accepted = it == 0 || metropolis_accept(term - state.log_term, rng);
      if (accepted) {
        state.log_term = term;
        state.x = std::move(x);
      }
    }
    rec.push(state.x, accepted, counters);
  }
  return rec.finish(truncated);
}

}  // namespace latent_imh
