#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "warpedprox/error.hpp"

namespace warpedprox {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

inline bool all_finite(const Vector& v) { return v.allFinite(); }

inline void require_finite(const Vector& v, const char* what) {
  if (!v.allFinite()) throw NumericalError(std::string(what) + ": non-finite entry");
}

inline void require_same_dim(const Vector& a, const Vector& b, const char* what) {
  if (a.size() != b.size())
    throw DimensionError(std::string(what) + ": dimension " + std::to_string(a.size()) +
                         " vs " + std::to_string(b.size()));
}

inline Vector make_vector(std::initializer_list<double> coords) {
  Vector v(static_cast<Index>(coords.size()));
  Index k = 0;
  for (double c : coords) v[k++] = c;
  require_finite(v, "make_vector");
  return v;
}

inline Vector make_vector(const std::vector<double>& coords) {
  Vector v = Eigen::Map<const Vector>(coords.data(), static_cast<Index>(coords.size()));
  require_finite(v, "make_vector");
  return v;
}

// Index-ordered accumulation so that block sums reproduce flat sums bit for bit.
inline double inner_accumulate(double acc, const Vector& x, const Vector& y) {
  for (Index k = 0; k < x.size(); ++k) acc += x[k] * y[k];
  return acc;
}

inline double inner(const Vector& x, const Vector& y) {
  require_same_dim(x, y, "inner");
  return inner_accumulate(0.0, x, y);
}

inline double norm_sq(const Vector& x) { return inner_accumulate(0.0, x, x); }
inline double norm(const Vector& x) { return std::sqrt(norm_sq(x)); }

inline Vector normalize_or_zero(const Vector& v) {
  double n = norm(v);
  if (n == 0.0) return Vector::Zero(v.size());
  return v / n;
}

// Block dimensions of a product space.
class BlockLayout {
 public:
  BlockLayout() = default;
  explicit BlockLayout(std::vector<Index> dims) : dims_(std::move(dims)) {
    offsets_.assign(1, 0);
    for (Index d : dims_) {
      if (d < 0) throw DimensionError("BlockLayout: negative block dimension");
      offsets_.push_back(offsets_.back() + d);
    }
  }

  std::size_t blocks() const { return dims_.size(); }
  Index dim(std::size_t i) const { return dims_.at(i); }
  Index offset(std::size_t i) const { return offsets_.at(i); }
  Index total() const { return offsets_.empty() ? 0 : offsets_.back(); }
  const std::vector<Index>& dims() const { return dims_; }

  bool operator==(const BlockLayout& o) const { return dims_ == o.dims_; }

  BlockLayout concat(const BlockLayout& o) const {
    std::vector<Index> d = dims_;
    d.insert(d.end(), o.dims_.begin(), o.dims_.end());
    return BlockLayout(std::move(d));
  }

 private:
  std::vector<Index> dims_;
  std::vector<Index> offsets_{0};
};

class ProductVector {
 public:
  ProductVector() = default;

  ProductVector(BlockLayout layout, Vector flat) : layout_(std::move(layout)), flat_(std::move(flat)) {
    if (flat_.size() != layout_.total())
      throw DimensionError("ProductVector: flat size does not match layout");
    require_finite(flat_, "ProductVector");
  }

  explicit ProductVector(const std::vector<Vector>& blocks) {
    std::vector<Index> dims;
    for (const auto& b : blocks) dims.push_back(b.size());
    layout_ = BlockLayout(std::move(dims));
    flat_.resize(layout_.total());
    for (std::size_t i = 0; i < blocks.size(); ++i) flat_.segment(layout_.offset(i), blocks[i].size()) = blocks[i];
    require_finite(flat_, "ProductVector");
  }

  static ProductVector zeros(const BlockLayout& layout) {
    return ProductVector(layout, Vector::Zero(layout.total()));
  }

  const BlockLayout& layout() const { return layout_; }
  std::size_t blocks() const { return layout_.blocks(); }
  const Vector& flat() const { return flat_; }

  Vector block(std::size_t i) const { return flat_.segment(layout_.offset(i), layout_.dim(i)); }
  void set_block(std::size_t i, const Vector& v) {
    if (v.size() != layout_.dim(i)) throw DimensionError("ProductVector::set_block: dimension mismatch");
    require_finite(v, "ProductVector::set_block");
    flat_.segment(layout_.offset(i), v.size()) = v;
  }

  std::vector<Vector> split() const {
    std::vector<Vector> out;
    for (std::size_t i = 0; i < blocks(); ++i) out.push_back(block(i));
    return out;
  }

 private:
  BlockLayout layout_;
  Vector flat_;
};

// Blockwise sum, accumulated in index order.
inline double inner(const ProductVector& x, const ProductVector& y) {
  if (!(x.layout() == y.layout())) throw DimensionError("inner: product layouts differ");
  double acc = 0.0;
  for (std::size_t i = 0; i < x.blocks(); ++i) acc = inner_accumulate(acc, x.block(i), y.block(i));
  return acc;
}

class LinearMap {
 public:
  LinearMap() = default;
  explicit LinearMap(Matrix m) : m_(std::move(m)) {
    if (!m_.allFinite()) throw NumericalError("LinearMap: non-finite entry");
  }

  static LinearMap identity(Index n) { return LinearMap(Matrix::Identity(n, n)); }
  static LinearMap zero(Index rows, Index cols) { return LinearMap(Matrix::Zero(rows, cols)); }

  Index rows() const { return m_.rows(); }
  Index cols() const { return m_.cols(); }
  const Matrix& matrix() const { return m_; }

  Vector apply(const Vector& x) const {
    if (x.size() != m_.cols()) throw DimensionError("LinearMap::apply: dimension mismatch");
    return m_ * x;
  }

  Vector adjoint_apply(const Vector& v) const {
    if (v.size() != m_.rows()) throw DimensionError("LinearMap::adjoint_apply: dimension mismatch");
    return m_.transpose() * v;
  }

  LinearMap adjoint() const { return LinearMap(m_.transpose()); }

  // Spectral norm.
  double norm() const {
    if (m_.size() == 0) return 0.0;
    Eigen::JacobiSVD<Matrix> svd(m_);
    return svd.singularValues()(0);
  }

  bool operator==(const LinearMap& o) const {
    return m_.rows() == o.m_.rows() && m_.cols() == o.m_.cols() && m_ == o.m_;
  }

 private:
  Matrix m_;
};

inline Vector adjoint_apply(const LinearMap& L, const Vector& v) { return L.adjoint_apply(v); }

}  // namespace warpedprox
