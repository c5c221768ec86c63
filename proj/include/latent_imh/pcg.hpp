#pragma once

#include "latent_imh/types.hpp"

#include <functional>
#include <string>

namespace latent_imh {

enum class PreconditionerKind { none, factorization };

struct PcgSettings {
  double tolerance = 1e-8;  // relative residual ||b - Ax|| / ||b||
  int max_iters = 10000;
  PreconditionerKind preconditioner = PreconditionerKind::factorization;

  void validate() const {
    if (!(tolerance > 0.0 && tolerance < 1.0)) {
      throw std::invalid_argument("PcgSettings.tolerance must lie in (0, 1)");
    }
    if (max_iters < 1) throw std::invalid_argument("PcgSettings.max_iters must be >= 1");
  }
};

struct PcgResult {
  Vector x;
  int iterations = 0;
  double relative_residual = 0.0;
};

using ApplyFn = std::function<Vector(const Vector&)>;

/**
 * Preconditioned conjugate gradients for a symmetric positive definite
 * action, starting from x = 0. `preconditioner` applies M^{-1}; pass an
 * empty function for plain CG. Throws SolveError carrying the final residual
 * if max_iters is reached first.
 */
inline PcgResult pcg_solve(const ApplyFn& apply_a, const Vector& b, const ApplyFn& preconditioner,
                           const PcgSettings& settings) {
  settings.validate();
  const double b_norm = b.norm();
  PcgResult out;
  out.x = Vector::Zero(b.size());
  if (b_norm == 0.0) return out;

  Vector r = b;
  Vector z = preconditioner ? preconditioner(r) : r;
  Vector p = z;
  double rz = r.dot(z);
  for (int it = 1; it <= settings.max_iters; ++it) {
    const Vector ap = apply_a(p);
    const double pap = p.dot(ap);
    if (!(pap > 0.0)) {
      throw SolveError("PCG breakdown: operator not positive definite along search direction",
                       r.norm() / b_norm, it);
    }
    const double alpha = rz / pap;
    out.x.noalias() += alpha * p;
    r.noalias() -= alpha * ap;
    out.iterations = it;
    out.relative_residual = r.norm() / b_norm;
    if (out.relative_residual <= settings.tolerance) return out;
    z = preconditioner ? preconditioner(r) : r;
    const double rz_next = r.dot(z);
    p = z + (rz_next / rz) * p;
    rz = rz_next;
  }
  throw SolveError("PCG reached max_iters", out.relative_residual, out.iterations);
}

}  // namespace latent_imh
