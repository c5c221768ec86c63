#pragma once

#include "latent_imh/mala.hpp"

#include <cmath>
#include <limits>

namespace latent_imh {

/// Slice-sampling NUTS with identity mass matrix and dual-averaging step adaptation.
struct NutsSettings {
  Index n_warmup = 500;
  double target_accept = 0.45;
  int max_depth = 10;
  double max_delta_h = 1000.0;
  double initial_step = 0.0;  // <= 0: heuristic search
  double gamma = 0.05;
  double t0 = 10.0;
  double kappa = 0.75;

  void validate() const {
    if (n_warmup < 0) throw std::invalid_argument("NutsSettings.n_warmup must be >= 0");
    if (!(target_accept > 0.0 && target_accept < 1.0)) {
      throw std::invalid_argument("NutsSettings.target_accept must lie in (0, 1)");
    }
    if (max_depth < 1) throw std::invalid_argument("NutsSettings.max_depth must be >= 1");
  }
};

/// One leapfrog step of size eps; updates (x, r, grad) in place and returns log pi(x).
inline double leapfrog(const LogDensity& target, Vector& x, Vector& r, Vector& grad, double eps) {
  r.noalias() += 0.5 * eps * grad;
  x.noalias() += eps * r;
  const double lp = target.value_and_grad(x, grad);
  r.noalias() += 0.5 * eps * grad;
  return lp;
}

class NutsChain {
 public:
  struct Step {
    bool moved = false;
    bool divergent = false;
    double accept_stat = 0.0;
    int depth = 0;
  };

  NutsChain(const LogDensity& target, const Vector& x0, const NutsSettings& settings, Rng& rng)
      : target_(target), settings_(settings), state_(make_gradient_state(target, x0)) {
    settings_.validate();
    eps_ = settings_.initial_step > 0.0 ? settings_.initial_step : find_reasonable_step(rng);
    mu_ = std::log(10.0 * eps_);
    log_eps_bar_ = 0.0;
  }

  const Vector& position() const { return state_.x; }
  double log_density() const { return state_.log_density; }
  double step_size() const { return eps_; }

  /// Freeze the step at the dual-averaged value.
  void end_adaptation() {
    if (adapt_count_ > 0) eps_ = std::exp(log_eps_bar_);
  }

  Step transition(Rng& rng, bool adapt) {
    const Index d = state_.x.size();
    const Vector r0 = standard_normal_vector(rng, d);
    const double joint0 = state_.log_density - 0.5 * r0.squaredNorm();
    const double log_u = joint0 + std::log(uniform01(rng));

    Tree edge;
    edge.x_minus = edge.x_plus = state_.x;
    edge.r_minus = edge.r_plus = r0;
    edge.g_minus = edge.g_plus = state_.grad;

    GradientState next = state_;
    double n = 1.0;
    bool keep_going = true;
    double alpha_sum = 0.0;
    double n_alpha = 0.0;
    Step out;
    int depth = 0;
    while (keep_going && depth < settings_.max_depth) {
      const int dir = uniform01(rng) < 0.5 ? -1 : 1;
      Tree sub;
      if (dir < 0) {
        sub = build_tree(edge.x_minus, edge.r_minus, edge.g_minus, log_u, dir, depth, joint0, rng);
        edge.x_minus = sub.x_minus;
        edge.r_minus = sub.r_minus;
        edge.g_minus = sub.g_minus;
      } else {
        sub = build_tree(edge.x_plus, edge.r_plus, edge.g_plus, log_u, dir, depth, joint0, rng);
        edge.x_plus = sub.x_plus;
        edge.r_plus = sub.r_plus;
        edge.g_plus = sub.g_plus;
      }
      alpha_sum += sub.alpha;
      n_alpha += sub.n_alpha;
      out.divergent = out.divergent || sub.divergent;
      if (sub.ok && sub.n > 0.0 && uniform01(rng) < std::min(1.0, sub.n / n)) {
        next = sub.proposal;
        out.moved = true;
      }
      n += sub.n;
      keep_going = sub.ok && no_u_turn(edge.x_minus, edge.x_plus, edge.r_minus, edge.r_plus);
      ++depth;
    }
    out.depth = depth;
    out.accept_stat = n_alpha > 0.0 ? alpha_sum / n_alpha : 0.0;
    if (out.moved) state_ = std::move(next);
    if (adapt) dual_average(out.accept_stat);
    return out;
  }

 private:
  struct Tree {
    Vector x_minus, r_minus, g_minus;
    Vector x_plus, r_plus, g_plus;
    GradientState proposal;
    double n = 0.0;
    bool ok = true;
    bool divergent = false;
    double alpha = 0.0;
    double n_alpha = 0.0;
  };

  static bool no_u_turn(const Vector& xm, const Vector& xp, const Vector& rm, const Vector& rp) {
    const Vector dx = xp - xm;
    return dx.dot(rm) >= 0.0 && dx.dot(rp) >= 0.0;
  }

  Tree build_tree(const Vector& x, const Vector& r, const Vector& g, double log_u, int dir, int depth,
                  double joint0, Rng& rng) {
    if (depth == 0) {
      Tree t;
      Vector x1 = x;
      Vector r1 = r;
      Vector g1 = g;
      const double lp = leapfrog(target_, x1, r1, g1, dir * eps_);
      double joint = lp - 0.5 * r1.squaredNorm();
      if (!std::isfinite(joint)) joint = -std::numeric_limits<double>::infinity();
      t.n = log_u <= joint ? 1.0 : 0.0;
      t.ok = log_u < settings_.max_delta_h + joint;
      t.divergent = !t.ok;
      t.alpha = std::min(1.0, std::exp(joint - joint0));
      t.n_alpha = 1.0;
      t.proposal.x = x1;
      t.proposal.log_density = lp;
      t.proposal.grad = g1;
      t.x_minus = t.x_plus = std::move(x1);
      t.r_minus = t.r_plus = std::move(r1);
      t.g_minus = t.g_plus = std::move(g1);
      return t;
    }
    Tree t = build_tree(x, r, g, log_u, dir, depth - 1, joint0, rng);
    if (!t.ok) return t;
    Tree t2;
    if (dir < 0) {
      t2 = build_tree(t.x_minus, t.r_minus, t.g_minus, log_u, dir, depth - 1, joint0, rng);
      t.x_minus = t2.x_minus;
      t.r_minus = t2.r_minus;
      t.g_minus = t2.g_minus;
    } else {
      t2 = build_tree(t.x_plus, t.r_plus, t.g_plus, log_u, dir, depth - 1, joint0, rng);
      t.x_plus = t2.x_plus;
      t.r_plus = t2.r_plus;
      t.g_plus = t2.g_plus;
    }
    const double total = t.n + t2.n;
    if (total > 0.0 && uniform01(rng) < t2.n / total) t.proposal = std::move(t2.proposal);
    t.alpha += t2.alpha;
    t.n_alpha += t2.n_alpha;
    t.divergent = t.divergent || t2.divergent;
    t.ok = t2.ok && no_u_turn(t.x_minus, t.x_plus, t.r_minus, t.r_plus);
    t.n = total;
    return t;
  }

  double find_reasonable_step(Rng& rng) {
    double eps = 1.0;
    const Index d = state_.x.size();
    auto log_accept = [&](double e) {
      Vector x = state_.x;
      Vector r = standard_normal_vector(rng, d);
      Vector g = state_.grad;
      const double h0 = state_.log_density - 0.5 * r.squaredNorm();
      const double lp = leapfrog(target_, x, r, g, e);
      const double v = lp - 0.5 * r.squaredNorm() - h0;
      return std::isfinite(v) ? v : -std::numeric_limits<double>::infinity();
    };
    double la = log_accept(eps);
    const double a = la > std::log(0.5) ? 1.0 : -1.0;
    for (int i = 0; i < 60 && a * la > -a * std::log(2.0); ++i) {
      eps *= std::pow(2.0, a);
      la = log_accept(eps);
    }
    return eps;
  }

  void dual_average(double accept_stat) {
    ++adapt_count_;
    const double m = static_cast<double>(adapt_count_);
    const double w = 1.0 / (m + settings_.t0);
    h_bar_ = (1.0 - w) * h_bar_ + w * (settings_.target_accept - accept_stat);
    const double log_eps = mu_ - std::sqrt(m) / settings_.gamma * h_bar_;
    const double mk = std::pow(m, -settings_.kappa);
    log_eps_bar_ = mk * log_eps + (1.0 - mk) * log_eps_bar_;
    eps_ = std::exp(log_eps);
  }

  LogDensity target_;
  NutsSettings settings_;
  GradientState state_;
  double eps_ = 1.0;
  double mu_ = 0.0;
  double h_bar_ = 0.0;
  double log_eps_bar_ = 0.0;
  Index adapt_count_ = 0;
};

inline SampleBatch run_nuts(const LogDensity& target, const Vector& x0, const NutsSettings& settings,
                            const RunLimits& limits, Rng& rng, SolveCounters& counters) {
  limits.validate();
  NutsChain chain(target, x0, settings, rng);
  detail::BatchRecorder rec(target.dim, limits.n_steps);
  bool truncated = false;
  Index divergences = 0;
  for (Index it = 0; it < settings.n_warmup + limits.n_steps; ++it) {
    if (limits.exhausted(counters)) {
      truncated = true;
      break;
    }
    if (it == settings.n_warmup) chain.end_adaptation();
    const bool warm = it < settings.n_warmup;
    const auto step = chain.transition(rng, warm);
    if (!warm) {
      if (step.divergent) ++divergences;
      rec.push(chain.position(), step.moved, counters);
    }
  }
  SampleBatch b = rec.finish(truncated);
  b.step_size = chain.step_size();
  b.divergences = divergences;
  return b;
}

}  // namespace latent_imh
