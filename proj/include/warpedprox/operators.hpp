#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "warpedprox/space.hpp"

namespace warpedprox {

// Maximally monotone operator known only through its scaled resolvents.
class SetValuedOperator {
 public:
  using Oracle = std::function<Vector(double gamma, const Vector& x)>;

  SetValuedOperator() = default;
  SetValuedOperator(Index dim, Oracle oracle, std::string name = "custom")
      : dim_(dim), oracle_(std::move(oracle)), name_(std::move(name)) {}

  // Resolvent oracle for a map that is not known to be monotone; solvers refuse it unless asked not to.
  static SetValuedOperator unchecked(Index dim, Oracle oracle, std::string name) {
    SetValuedOperator op(dim, std::move(oracle), std::move(name));
    op.monotone_ = false;
    return op;
  }

  static SetValuedOperator zero(Index dim) {
    SetValuedOperator op(dim, [](double, const Vector& x) { return x; }, "zero");
    op.zero_ = true;
    return op;
  }

  static SetValuedOperator product(std::vector<SetValuedOperator> factors) {
    std::vector<Index> dims;
    bool all_zero = true;
    bool all_monotone = true;
    for (const auto& f : factors) {
      dims.push_back(f.dim());
      all_zero = all_zero && f.is_zero();
      all_monotone = all_monotone && f.monotone();
    }
    auto shared = std::make_shared<const std::vector<SetValuedOperator>>(std::move(factors));
    BlockLayout layout(dims);
    SetValuedOperator op(
        layout.total(),
        [shared, layout](double gamma, const Vector& x) {
          Vector out(x.size());
          for (std::size_t i = 0; i < shared->size(); ++i)
            out.segment(layout.offset(i), layout.dim(i)) =
                (*shared)[i].resolvent(gamma, x.segment(layout.offset(i), layout.dim(i)));
          return out;
        },
        "product");
    op.factors_ = shared;
    op.layout_ = layout;
    op.zero_ = all_zero;
    op.monotone_ = all_monotone;
    return op;
  }

  Index dim() const { return dim_; }
  const std::string& name() const { return name_; }
  bool is_zero() const { return zero_; }
  bool monotone() const { return monotone_; }
  bool is_product() const { return factors_ != nullptr; }
  const BlockLayout& layout() const { return layout_; }
  const SetValuedOperator& factor(std::size_t i) const { return factors_->at(i); }

  // J_{γA}x = (Id + γA)^{-1}x
  Vector resolvent(double gamma, const Vector& x) const {
    if (!(gamma > 0.0)) throw ConfigError("resolvent: step size must be positive");
    if (x.size() != dim_) throw DimensionError("resolvent of " + name_ + ": dimension mismatch");
    Vector p = oracle_(gamma, x);
    if (p.size() != dim_) throw DimensionError("resolvent of " + name_ + ": oracle changed dimension");
    require_finite(p, "resolvent");
    return p;
  }

 private:
  Index dim_ = 0;
  Oracle oracle_;
  std::string name_;
  bool zero_ = false;
  bool monotone_ = true;
  std::shared_ptr<const std::vector<SetValuedOperator>> factors_;
  BlockLayout layout_;
};

inline Vector resolvent(const SetValuedOperator& A, double gamma, const Vector& x) {
  return A.resolvent(gamma, x);
}

// J_{γA^{-1}}x = x − γ J_{γ^{-1}A}(x/γ)
inline Vector inverse_resolvent(const SetValuedOperator& A, double gamma, const Vector& x) {
  if (!(gamma > 0.0)) throw ConfigError("inverse_resolvent: step size must be positive");
  return x - gamma * A.resolvent(1.0 / gamma, x / gamma);
}

// A^{-1}, exposed through the inverse-resolvent identity.
inline SetValuedOperator inverse(const SetValuedOperator& A) {
  auto oracle = [A](double gamma, const Vector& x) { return inverse_resolvent(A, gamma, x); };
  std::string name = "inverse(" + A.name() + ")";
  if (!A.monotone()) return SetValuedOperator::unchecked(A.dim(), oracle, name);
  return SetValuedOperator(A.dim(), oracle, name);
}

// x ↦ Ax + c
inline SetValuedOperator offset(const SetValuedOperator& A, const Vector& c) {
  if (c.size() != A.dim()) throw DimensionError("offset: dimension mismatch");
  require_finite(c, "offset");
  if (c.isZero(0.0)) return A;
  if (A.is_product()) {
    // Keep the block structure so multi-block kernels can still solve factorwise.
    std::vector<SetValuedOperator> shifted;
    const auto& layout = A.layout();
    for (std::size_t i = 0; i < layout.blocks(); ++i)
      shifted.push_back(offset(A.factor(i), c.segment(layout.offset(i), layout.dim(i))));
    return SetValuedOperator::product(std::move(shifted));
  }
  auto oracle = [A, c](double gamma, const Vector& x) { return A.resolvent(gamma, x - gamma * c); };
  if (!A.monotone()) return SetValuedOperator::unchecked(A.dim(), oracle, A.name() + "+const");
  return SetValuedOperator(A.dim(), oracle, A.name() + "+const");
}

// Monotone, β-Lipschitz single-valued map.
class SingleValuedOperator {
 public:
  using Eval = std::function<Vector(const Vector&)>;

  SingleValuedOperator() = default;
  SingleValuedOperator(Index dim, Eval eval, double lipschitz, bool monotone = true,
                       std::string name = "custom")
      : dim_(dim), eval_(std::move(eval)), lipschitz_(lipschitz), monotone_(monotone), name_(std::move(name)) {
    if (!(lipschitz_ >= 0.0) || !std::isfinite(lipschitz_))
      throw ConfigError("SingleValuedOperator: Lipschitz constant must be finite and nonnegative");
  }

  // x ↦ Mx + b; constants read off the matrix.
  static SingleValuedOperator affine(Matrix m, Vector b, std::string name = "affine") {
    if (m.rows() != m.cols() || b.size() != m.rows()) throw DimensionError("affine: shape mismatch");
    if (!m.allFinite() || !b.allFinite()) throw NumericalError("affine: non-finite entry");
    double beta = LinearMap(m).norm();
    Matrix sym = 0.5 * (m + m.transpose());
    double lo = m.size() ? Eigen::SelfAdjointEigenSolver<Matrix>(sym).eigenvalues().minCoeff() : 0.0;
    bool monotone = lo >= -1e-12 * std::max(1.0, beta);
    SingleValuedOperator op(
        m.rows(), [m, b](const Vector& x) -> Vector { return m * x + b; }, beta, monotone, std::move(name));
    op.matrix_ = std::move(m);
    op.offset_ = std::move(b);
    return op;
  }

  static SingleValuedOperator zero(Index dim) {
    return affine(Matrix::Zero(dim, dim), Vector::Zero(dim), "zero");
  }

  Index dim() const { return dim_; }
  double lipschitz() const { return lipschitz_; }
  bool monotone() const { return monotone_; }
  const std::string& name() const { return name_; }
  bool is_affine() const { return matrix_.has_value(); }
  const Matrix& matrix() const { return *matrix_; }
  const Vector& offset() const { return *offset_; }

  Vector operator()(const Vector& x) const {
    if (x.size() != dim_) throw DimensionError("evaluation of " + name_ + ": dimension mismatch");
    Vector y = eval_(x);
    if (y.size() != dim_) throw DimensionError("evaluation of " + name_ + ": output dimension mismatch");
    require_finite(y, "single-valued evaluation");
    return y;
  }

 private:
  Index dim_ = 0;
  Eval eval_;
  double lipschitz_ = 0.0;
  bool monotone_ = true;
  std::string name_;
  std::optional<Matrix> matrix_;
  std::optional<Vector> offset_;
};

using SingleValuedPtr = std::shared_ptr<const SingleValuedOperator>;

inline SingleValuedPtr share(SingleValuedOperator op) {
  return std::make_shared<const SingleValuedOperator>(std::move(op));
}

// A pair (y, y*) with y* ∈ My.
class GraphPoint {
 public:
  GraphPoint(Vector y, Vector y_star) : y_(std::move(y)), y_star_(std::move(y_star)) {
    require_same_dim(y_, y_star_, "GraphPoint");
    require_finite(y_, "GraphPoint");
    require_finite(y_star_, "GraphPoint");
  }
  const Vector& y() const { return y_; }
  const Vector& y_star() const { return y_star_; }

 private:
  Vector y_;
  Vector y_star_;
};

}  // namespace warpedprox
