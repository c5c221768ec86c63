#pragma once

#include "latent_imh/types.hpp"

#include <Eigen/IterativeLinearSolvers>

#include <atomic>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace latent_imh {

enum class MapKind { dense, diagonal, svd_structured, composed, solver_backed };

inline const char* to_string(MapKind kind) {
  switch (kind) {
    case MapKind::dense: return "dense";
    case MapKind::diagonal: return "diagonal";
    case MapKind::svd_structured: return "svd-structured";
    case MapKind::composed: return "composed";
    case MapKind::solver_backed: return "solver-backed";
  }
  return "unknown";
}

/// Tolerance and iteration cap for iterative solves. Direct factorizations
/// ignore both.
struct SolveSettings {
  double tolerance = 1e-10;
  int max_iters = 5000;
};

/**
 * Counts exact-operator work. Forward applies of F (and F^T) count as
 * forward solves; applications of F^{-1} count as inverse solves.
 *
 * Increments are atomic so a counter may be shared between threads, but
 * samplers normally own one per chain and merge afterwards.
 */
struct SolveCounters {
  std::atomic<std::uint64_t> forward{0};
  std::atomic<std::uint64_t> inverse{0};

  SolveCounters() = default;
  SolveCounters(const SolveCounters& other)
      : forward(other.forward.load()), inverse(other.inverse.load()) {}
  SolveCounters& operator=(const SolveCounters& other) {
    forward = other.forward.load();
    inverse = other.inverse.load();
    return *this;
  }

  void merge(const SolveCounters& other) {
    forward += other.forward.load();
    inverse += other.inverse.load();
  }
  std::uint64_t total() const { return forward.load() + inverse.load(); }
};

namespace detail {

class MapImpl {
 public:
  virtual ~MapImpl() = default;
  virtual Index rows() const = 0;
  virtual Index cols() const = 0;
  virtual MapKind kind() const = 0;
  virtual Vector apply(const Vector& x) const = 0;
  virtual bool transposable() const { return false; }
  virtual Vector apply_transpose(const Vector&) const {
    throw UnsupportedError("operator has no transpose action");
  }
  virtual bool solvable() const { return false; }
  virtual Vector solve(const Vector&, const SolveSettings&) const {
    throw UnsupportedError("operator is not solvable");
  }
  virtual bool transpose_solvable() const { return false; }
  virtual Vector solve_transpose(const Vector&, const SolveSettings&) const {
    throw UnsupportedError("operator has no transpose solve");
  }
  virtual std::optional<double> log_abs_det() const { return std::nullopt; }
};

// Dense square matrices up to this size are factorized once at construction.
inline constexpr Index kDirectSolveLimit = 2000;
inline constexpr double kSingularRatio = 1e-12;

class DenseImpl final : public MapImpl {
 public:
  explicit DenseImpl(Matrix m) : m_(std::move(m)) {
    if (m_.rows() == m_.cols() && m_.rows() <= kDirectSolveLimit && m_.rows() > 0) {
      lu_.compute(m_);
      const Vector pivots = lu_.matrixLU().diagonal().cwiseAbs();
      singular_ = pivots.minCoeff() <= kSingularRatio * pivots.maxCoeff();
    }
  }
  Index rows() const override { return m_.rows(); }
  Index cols() const override { return m_.cols(); }
  MapKind kind() const override { return MapKind::dense; }
  Vector apply(const Vector& x) const override { return m_ * x; }
  bool transposable() const override { return true; }
  Vector apply_transpose(const Vector& y) const override { return m_.transpose() * y; }
  bool solvable() const override { return m_.rows() == m_.cols() && !singular_; }
  Vector solve(const Vector& b, const SolveSettings& settings) const override {
    require_square();
    if (m_.rows() <= kDirectSolveLimit) return lu_.solve(b);
    return iterative(m_, b, settings);
  }
  bool transpose_solvable() const override { return solvable(); }
  Vector solve_transpose(const Vector& b, const SolveSettings& settings) const override {
    require_square();
    if (m_.rows() <= kDirectSolveLimit) return lu_.transpose().solve(b);
    return iterative(m_.transpose(), b, settings);
  }
  std::optional<double> log_abs_det() const override {
    if (m_.rows() != m_.cols()) return std::nullopt;
    if (m_.rows() <= kDirectSolveLimit) {
      if (singular_) throw SingularOperatorError("log-determinant of a singular matrix");
      return lu_.matrixLU().diagonal().cwiseAbs().array().log().sum();
    }
    return Eigen::PartialPivLU<Matrix>(m_).matrixLU().diagonal().cwiseAbs().array().log().sum();
  }

  const Matrix& matrix() const { return m_; }

 private:
  void require_square() const {
    if (m_.rows() != m_.cols()) throw UnsupportedError("solve on a non-square operator");
    if (singular_) throw SingularOperatorError("dense operator is numerically singular");
  }

  template <typename M>
  static Vector iterative(const M& m, const Vector& b, const SolveSettings& settings) {
    Matrix dense = m;
    Eigen::BiCGSTAB<Matrix> solver(dense);
    solver.setTolerance(settings.tolerance);
    solver.setMaxIterations(settings.max_iters);
    Vector x = solver.solve(b);
    if (solver.info() != Eigen::Success) {
      throw SolveError("BiCGSTAB did not converge", solver.error(),
                       static_cast<int>(solver.iterations()));
    }
    return x;
  }

  Matrix m_;
  Eigen::PartialPivLU<Matrix> lu_;
  bool singular_ = false;
};

class DiagonalImpl final : public MapImpl {
 public:
  explicit DiagonalImpl(Vector d) : d_(std::move(d)) {
    const double big = d_.size() ? d_.cwiseAbs().maxCoeff() : 0.0;
    singular_ = d_.size() == 0 || d_.cwiseAbs().minCoeff() <= kSingularRatio * big;
  }
  Index rows() const override { return d_.size(); }
  Index cols() const override { return d_.size(); }
  MapKind kind() const override { return MapKind::diagonal; }
  Vector apply(const Vector& x) const override { return d_.cwiseProduct(x); }
  bool transposable() const override { return true; }
  Vector apply_transpose(const Vector& y) const override { return d_.cwiseProduct(y); }
  bool solvable() const override { return !singular_; }
  Vector solve(const Vector& b, const SolveSettings&) const override {
    if (singular_) throw SingularOperatorError("diagonal operator has a zero entry");
    return b.cwiseQuotient(d_);
  }
  bool transpose_solvable() const override { return solvable(); }
  Vector solve_transpose(const Vector& b, const SolveSettings& s) const override {
    return solve(b, s);
  }
  std::optional<double> log_abs_det() const override {
    if (singular_) throw SingularOperatorError("log-determinant of a singular diagonal");
    return d_.cwiseAbs().array().log().sum();
  }

  const Vector& diagonal() const { return d_; }

 private:
  Vector d_;
  bool singular_ = false;
};

// V * diag(s) * V^T with V orthogonal (square).
class SvdStructuredImpl final : public MapImpl {
 public:
  SvdStructuredImpl(Matrix v, Vector s) : v_(std::move(v)), s_(std::move(s)) {
    if (v_.rows() != v_.cols() || v_.cols() != s_.size()) {
      throw DimensionError("svd-structured map: V must be square and match s", v_.cols(),
                           s_.size());
    }
    singular_ = s_.size() == 0 ||
                s_.cwiseAbs().minCoeff() <= kSingularRatio * s_.cwiseAbs().maxCoeff();
  }
  Index rows() const override { return v_.rows(); }
  Index cols() const override { return v_.rows(); }
  MapKind kind() const override { return MapKind::svd_structured; }
  Vector apply(const Vector& x) const override {
    return v_ * s_.cwiseProduct(v_.transpose() * x);
  }
  bool transposable() const override { return true; }
  Vector apply_transpose(const Vector& y) const override { return apply(y); }
  bool solvable() const override { return !singular_; }
  Vector solve(const Vector& b, const SolveSettings&) const override {
    if (singular_) throw SingularOperatorError("svd-structured operator has a zero value");
    return v_ * (v_.transpose() * b).cwiseQuotient(s_);
  }
  bool transpose_solvable() const override { return solvable(); }
  Vector solve_transpose(const Vector& b, const SolveSettings& st) const override {
    return solve(b, st);
  }
  std::optional<double> log_abs_det() const override {
    if (singular_) throw SingularOperatorError("log-determinant of a singular operator");
    return s_.cwiseAbs().array().log().sum();
  }

 private:
  Matrix v_;
  Vector s_;
  bool singular_ = false;
};

// outer * inner
class ComposedImpl final : public MapImpl {
 public:
  ComposedImpl(std::shared_ptr<const MapImpl> outer, std::shared_ptr<const MapImpl> inner)
      : outer_(std::move(outer)), inner_(std::move(inner)) {
    if (outer_->cols() != inner_->rows()) {
      throw DimensionError("composed map: inner rows must equal outer cols", outer_->cols(),
                           inner_->rows());
    }
  }
  Index rows() const override { return outer_->rows(); }
  Index cols() const override { return inner_->cols(); }
  MapKind kind() const override { return MapKind::composed; }
  Vector apply(const Vector& x) const override { return outer_->apply(inner_->apply(x)); }
  bool transposable() const override {
    return outer_->transposable() && inner_->transposable();
  }
  Vector apply_transpose(const Vector& y) const override {
    return inner_->apply_transpose(outer_->apply_transpose(y));
  }
  bool solvable() const override { return outer_->solvable() && inner_->solvable(); }
  Vector solve(const Vector& b, const SolveSettings& s) const override {
    return inner_->solve(outer_->solve(b, s), s);
  }
  bool transpose_solvable() const override {
    return outer_->transpose_solvable() && inner_->transpose_solvable();
  }
  Vector solve_transpose(const Vector& b, const SolveSettings& s) const override {
    return outer_->solve_transpose(inner_->solve_transpose(b, s), s);
  }
  std::optional<double> log_abs_det() const override {
    auto a = outer_->log_abs_det();
    auto b = inner_->log_abs_det();
    if (!a || !b) return std::nullopt;
    return *a + *b;
  }

 private:
  std::shared_ptr<const MapImpl> outer_;
  std::shared_ptr<const MapImpl> inner_;
};

}  // namespace detail

/// Callbacks for a matrix-free operator. Only `apply` is required.
struct SolverBackedOps {
  std::function<Vector(const Vector&)> apply;
  std::function<Vector(const Vector&)> apply_transpose;
  std::function<Vector(const Vector&, const SolveSettings&)> solve;
  std::function<Vector(const Vector&, const SolveSettings&)> solve_transpose;
  std::optional<double> log_abs_det;
};

namespace detail {

class SolverBackedImpl final : public MapImpl {
 public:
  SolverBackedImpl(Index rows, Index cols, SolverBackedOps ops)
      : rows_(rows), cols_(cols), ops_(std::move(ops)) {
    if (!ops_.apply) throw std::invalid_argument("solver-backed map needs an apply callback");
  }
  Index rows() const override { return rows_; }
  Index cols() const override { return cols_; }
  MapKind kind() const override { return MapKind::solver_backed; }
  Vector apply(const Vector& x) const override { return ops_.apply(x); }
  bool transposable() const override { return static_cast<bool>(ops_.apply_transpose); }
  Vector apply_transpose(const Vector& y) const override {
    if (!ops_.apply_transpose) return MapImpl::apply_transpose(y);
    return ops_.apply_transpose(y);
  }
  bool solvable() const override { return rows_ == cols_ && static_cast<bool>(ops_.solve); }
  Vector solve(const Vector& b, const SolveSettings& s) const override {
    if (rows_ != cols_) throw UnsupportedError("solve on a non-square operator");
    if (!ops_.solve) return MapImpl::solve(b, s);
    return ops_.solve(b, s);
  }
  bool transpose_solvable() const override { return static_cast<bool>(ops_.solve_transpose); }
  Vector solve_transpose(const Vector& b, const SolveSettings& s) const override {
    if (!ops_.solve_transpose) return MapImpl::solve_transpose(b, s);
    return ops_.solve_transpose(b, s);
  }
  std::optional<double> log_abs_det() const override { return ops_.log_abs_det; }

 private:
  Index rows_;
  Index cols_;
  SolverBackedOps ops_;
};

}  // namespace detail

/**
 * Immutable linear operator handle. Copies share the underlying
 * representation, so a LinearMap can be passed by value and shared between
 * threads. Dimension checks happen on every call.
 */
class LinearMap {
 public:
  LinearMap() = default;

  static LinearMap dense(Matrix m) {
    return LinearMap(std::make_shared<detail::DenseImpl>(std::move(m)));
  }
  static LinearMap identity(Index n) { return diagonal(Vector::Ones(n)); }
  static LinearMap diagonal(Vector d) {
    return LinearMap(std::make_shared<detail::DiagonalImpl>(std::move(d)));
  }
  /// V * diag(s) * V^T for square orthogonal V.
  static LinearMap svd_structured(Matrix v, Vector s) {
    return LinearMap(std::make_shared<detail::SvdStructuredImpl>(std::move(v), std::move(s)));
  }
  /// outer * inner
  static LinearMap composed(const LinearMap& outer, const LinearMap& inner) {
    return LinearMap(std::make_shared<detail::ComposedImpl>(outer.impl_ptr(), inner.impl_ptr()));
  }
  static LinearMap solver_backed(Index rows, Index cols, SolverBackedOps ops) {
    return LinearMap(std::make_shared<detail::SolverBackedImpl>(rows, cols, std::move(ops)));
  }

  bool valid() const { return static_cast<bool>(impl_); }
  Index rows() const { return impl().rows(); }
  Index cols() const { return impl().cols(); }
  bool square() const { return rows() == cols(); }
  MapKind kind() const { return impl().kind(); }
  bool transposable() const { return impl().transposable(); }
  bool solvable() const { return impl().solvable(); }
  bool transpose_solvable() const { return impl().transpose_solvable(); }

  Vector apply(const Vector& x) const {
    check_length("LinearMap::apply", cols(), x.size());
    return impl().apply(x);
  }
  Vector apply_transpose(const Vector& y) const {
    check_length("LinearMap::apply_transpose", rows(), y.size());
    return impl().apply_transpose(y);
  }
  Vector solve(const Vector& b, const SolveSettings& settings = {}) const {
    if (!square()) throw UnsupportedError("solve on a non-square operator");
    check_length("LinearMap::solve", rows(), b.size());
    return impl().solve(b, settings);
  }
  Vector solve_transpose(const Vector& b, const SolveSettings& settings = {}) const {
    if (!square()) throw UnsupportedError("solve on a non-square operator");
    check_length("LinearMap::solve_transpose", cols(), b.size());
    return impl().solve_transpose(b, settings);
  }

  /// log|det M| when the representation can provide it; dense fallback
  /// otherwise.
  double log_abs_det() const {
    if (!square()) throw UnsupportedError("determinant of a non-square operator");
    if (auto v = impl().log_abs_det()) return *v;
    return LinearMap::dense(to_dense()).log_abs_det();
  }

  /// Materializes the operator column by column.
  Matrix to_dense() const {
    if (kind() == MapKind::dense) {
      return static_cast<const detail::DenseImpl&>(impl()).matrix();
    }
    Matrix out(rows(), cols());
    Vector e = Vector::Zero(cols());
    for (Index j = 0; j < cols(); ++j) {
      e[j] = 1.0;
      out.col(j) = impl().apply(e);
      e[j] = 0.0;
    }
    return out;
  }

  std::shared_ptr<const detail::MapImpl> impl_ptr() const { return impl_; }

 private:
  explicit LinearMap(std::shared_ptr<const detail::MapImpl> impl) : impl_(std::move(impl)) {}

  const detail::MapImpl& impl() const {
    if (!impl_) throw std::logic_error("use of an empty LinearMap");
    return *impl_;
  }
  std::shared_ptr<const detail::MapImpl> impl_;
};

inline LinearMap operator*(const LinearMap& a, const LinearMap& b) {
  return LinearMap::composed(a, b);
}

}  // namespace latent_imh
