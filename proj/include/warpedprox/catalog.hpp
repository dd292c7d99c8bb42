#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "warpedprox/operators.hpp"

namespace warpedprox {

// ---- closed-form projections and shrinkage ----

inline Vector project_box(const Vector& x, const Vector& lower, const Vector& upper) {
  return x.cwiseMax(lower).cwiseMin(upper);
}

inline Vector project_ball(const Vector& x, const Vector& center, double radius) {
  Vector d = x - center;
  double n = norm(d);
  if (n <= radius) return x;
  return center + (radius / n) * d;
}

// {z : <a, z> <= b}
inline Vector project_halfspace(const Vector& x, const Vector& a, double b) {
  double excess = inner(a, x) - b;
  if (excess <= 0.0) return x;
  return x - (excess / norm_sq(a)) * a;
}

inline Vector soft_threshold(const Vector& x, double t) {
  Vector out(x.size());
  for (Index k = 0; k < x.size(); ++k) {
    double v = x[k];
    out[k] = v > t ? v - t : (v < -t ? v + t : 0.0);
  }
  return out;
}

// ---- parameter sets ----

using Param = std::variant<double, std::vector<double>, std::vector<std::vector<double>>>;
using ParamSet = std::map<std::string, Param>;

struct OperatorSpec {
  std::string type;
  ParamSet params;
  bool operator==(const OperatorSpec&) const = default;
};

namespace params {

inline bool has(const ParamSet& p, const std::string& key) { return p.count(key) > 0; }

inline double scalar(const ParamSet& p, const std::string& key, std::optional<double> fallback = {}) {
  auto it = p.find(key);
  if (it == p.end()) {
    if (fallback) return *fallback;
    throw ConfigError("missing parameter '" + key + "'");
  }
  if (auto d = std::get_if<double>(&it->second)) return *d;
  throw ConfigError("parameter '" + key + "' must be a scalar");
}

// Scalars broadcast to the full dimension.
inline Vector vector(const ParamSet& p, const std::string& key, Index dim, std::optional<double> fallback = {}) {
  auto it = p.find(key);
  if (it == p.end()) {
    if (fallback) return Vector::Constant(dim, *fallback);
    throw ConfigError("missing parameter '" + key + "'");
  }
  if (auto d = std::get_if<double>(&it->second)) return Vector::Constant(dim, *d);
  if (auto v = std::get_if<std::vector<double>>(&it->second)) {
    if (static_cast<Index>(v->size()) != dim)
      throw DimensionError("parameter '" + key + "' has length " + std::to_string(v->size()) + ", expected " +
                           std::to_string(dim));
    return make_vector(*v);
  }
  throw ConfigError("parameter '" + key + "' must be a vector");
}

inline Matrix matrix(const ParamSet& p, const std::string& key) {
  auto it = p.find(key);
  if (it == p.end()) throw ConfigError("missing parameter '" + key + "'");
  const auto* rows = std::get_if<std::vector<std::vector<double>>>(&it->second);
  if (!rows) throw ConfigError("parameter '" + key + "' must be a matrix (list of rows)");
  if (rows->empty()) throw ConfigError("parameter '" + key + "' is an empty matrix");
  Matrix m(static_cast<Index>(rows->size()), static_cast<Index>(rows->front().size()));
  for (std::size_t r = 0; r < rows->size(); ++r) {
    if ((*rows)[r].size() != rows->front().size()) throw DimensionError("parameter '" + key + "' is ragged");
    for (std::size_t c = 0; c < (*rows)[r].size(); ++c) m(Index(r), Index(c)) = (*rows)[r][c];
  }
  if (!m.allFinite()) throw NumericalError("parameter '" + key + "' has a non-finite entry");
  return m;
}

inline void allow_only(const ParamSet& p, const std::set<std::string>& allowed, const std::string& type) {
  for (const auto& [k, v] : p)
    if (!allowed.count(k)) throw ConfigError("operator '" + type + "' has no parameter '" + k + "'");
}

}  // namespace params

// ---- named set-valued operators ----

inline SetValuedOperator box_cone(const Vector& lower, const Vector& upper) {
  require_same_dim(lower, upper, "box");
  if ((lower.array() > upper.array()).any()) throw ConfigError("box: lower bound exceeds upper bound");
  return SetValuedOperator(
      lower.size(), [lower, upper](double, const Vector& x) { return project_box(x, lower, upper); }, "box");
}

inline SetValuedOperator ball_cone(const Vector& center, double radius) {
  if (!(radius >= 0.0)) throw ConfigError("ball: radius must be nonnegative");
  return SetValuedOperator(
      center.size(), [center, radius](double, const Vector& x) { return project_ball(x, center, radius); }, "ball");
}

inline SetValuedOperator halfspace_cone(const Vector& normal, double bound) {
  if (norm(normal) == 0.0) throw ConfigError("halfspace: normal must be nonzero");
  return SetValuedOperator(
      normal.size(), [normal, bound](double, const Vector& x) { return project_halfspace(x, normal, bound); },
      "halfspace");
}

// Normal cone of {x : Ex = f}.
inline SetValuedOperator affine_subspace_cone(const Matrix& e, const Vector& f) {
  if (e.rows() != f.size()) throw DimensionError("affine_subspace: rows of matrix and rhs differ");
  Matrix pinv = e.completeOrthogonalDecomposition().pseudoInverse();
  Vector base = pinv * f;
  if (norm(e * base - f) > 1e-10 * (1.0 + norm(f))) throw ConfigError("affine_subspace: system Ex = f is inconsistent");
  return SetValuedOperator(
      e.cols(), [e, pinv, f](double, const Vector& x) -> Vector { return x - pinv * (e * x - f); },
      "affine_subspace");
}

inline SetValuedOperator point_cone(const Vector& c) {
  return SetValuedOperator(c.size(), [c](double, const Vector&) { return c; }, "point");
}

// ∂(w‖·‖₁)
inline SetValuedOperator l1_subdifferential(Index dim, double weight) {
  if (!(weight >= 0.0)) throw ConfigError("l1: weight must be nonnegative");
  return SetValuedOperator(
      dim, [weight](double gamma, const Vector& x) { return soft_threshold(x, gamma * weight); }, "l1");
}

inline SetValuedOperator scaled_identity_operator(Index dim, double scale) {
  if (!(scale >= 0.0)) throw ConfigError("scaled_identity: scale must be nonnegative");
  if (scale == 0.0) return SetValuedOperator::zero(dim);
  return SetValuedOperator(
      dim, [scale](double gamma, const Vector& x) -> Vector { return x / (1.0 + gamma * scale); },
      "scaled_identity");
}

// x ↦ Mx + b with M monotone; resolvent by a dense solve.
inline SetValuedOperator affine_operator(const Matrix& m, const Vector& b) {
  auto single = SingleValuedOperator::affine(m, b);
  if (!single.monotone()) throw ConfigError("affine: matrix is not monotone (symmetric part has a negative eigenvalue)");
  return SetValuedOperator(
      m.rows(),
      [m, b](double gamma, const Vector& x) -> Vector {
        Matrix sys = Matrix::Identity(m.rows(), m.cols()) + gamma * m;
        return sys.partialPivLu().solve(x - gamma * b);
      },
      "affine");
}

// x ↦ Mx with no monotonicity requirement; fails when I + γM is singular.
inline SetValuedOperator linear_operator(const Matrix& m) {
  if (m.rows() != m.cols()) throw DimensionError("linear: matrix must be square");
  if (!m.allFinite()) throw NumericalError("linear: non-finite entry");
  auto single = SingleValuedOperator::affine(m, Vector::Zero(m.rows()));
  auto oracle = [m](double gamma, const Vector& x) -> Vector {
    Matrix sys = Matrix::Identity(m.rows(), m.cols()) + gamma * m;
    Eigen::FullPivLU<Matrix> lu(sys);
    if (!lu.isInvertible()) throw NumericalError("linear: I + γM is singular");
    return lu.solve(x);
  };
  if (single.monotone()) return SetValuedOperator(m.rows(), oracle, "linear");
  return SetValuedOperator::unchecked(m.rows(), oracle, "linear");
}

// x ↦ {r}
inline SetValuedOperator constant_operator(const Vector& r) {
  return SetValuedOperator(r.size(), [r](double gamma, const Vector& x) -> Vector { return x - gamma * r; },
                           "constant");
}

// ---- catalog ----

class Catalog {
 public:
  using SetFactory = std::function<SetValuedOperator(const ParamSet&, Index dim)>;
  using SingleFactory = std::function<SingleValuedOperator(const ParamSet&, Index dim)>;

  void add_set_valued(const std::string& name, std::set<std::string> keys, SetFactory f) {
    set_valued_[name] = {std::move(keys), std::move(f)};
  }
  void add_single_valued(const std::string& name, std::set<std::string> keys, SingleFactory f) {
    single_valued_[name] = {std::move(keys), std::move(f)};
  }

  bool has_set_valued(const std::string& name) const { return set_valued_.count(name) > 0; }
  bool has_single_valued(const std::string& name) const { return single_valued_.count(name) > 0; }

  SetValuedOperator set_valued(const OperatorSpec& spec, Index dim) const {
    auto it = set_valued_.find(spec.type);
    if (it == set_valued_.end()) throw LookupError("unknown set-valued operator '" + spec.type + "'");
    params::allow_only(spec.params, it->second.keys, spec.type);
    auto op = it->second.make(spec.params, dim);
    if (op.dim() != dim)
      throw DimensionError("operator '" + spec.type + "' has dimension " + std::to_string(op.dim()) + ", expected " +
                           std::to_string(dim));
    return op;
  }

  SingleValuedOperator single_valued(const OperatorSpec& spec, Index dim) const {
    auto it = single_valued_.find(spec.type);
    if (it == single_valued_.end()) throw LookupError("unknown single-valued operator '" + spec.type + "'");
    params::allow_only(spec.params, it->second.keys, spec.type);
    auto op = it->second.make(spec.params, dim);
    if (op.dim() != dim)
      throw DimensionError("operator '" + spec.type + "' has dimension " + std::to_string(op.dim()) + ", expected " +
                           std::to_string(dim));
    return op;
  }

  std::vector<std::string> set_valued_names() const { return names(set_valued_); }
  std::vector<std::string> single_valued_names() const { return names(single_valued_); }

 private:
  template <class F>
  struct Entry {
    std::set<std::string> keys;
    F make;
  };
  template <class Map>
  static std::vector<std::string> names(const Map& m) {
    std::vector<std::string> out;
    for (const auto& [k, v] : m) out.push_back(k);
    return out;
  }

  std::map<std::string, Entry<SetFactory>> set_valued_;
  std::map<std::string, Entry<SingleFactory>> single_valued_;
};

inline const Catalog& standard_library() {
  static const Catalog catalog = [] {
    using namespace params;
    Catalog c;
    c.add_set_valued("zero", {}, [](const ParamSet&, Index n) { return SetValuedOperator::zero(n); });
    c.add_set_valued("box", {"lower", "upper"}, [](const ParamSet& p, Index n) {
      return box_cone(vector(p, "lower", n), vector(p, "upper", n));
    });
    c.add_set_valued("ball", {"center", "radius"}, [](const ParamSet& p, Index n) {
      return ball_cone(vector(p, "center", n, 0.0), scalar(p, "radius", 1.0));
    });
    c.add_set_valued("halfspace", {"normal", "bound"}, [](const ParamSet& p, Index n) {
      return halfspace_cone(vector(p, "normal", n), scalar(p, "bound", 0.0));
    });
    c.add_set_valued("affine_subspace", {"matrix", "rhs"}, [](const ParamSet& p, Index n) {
      Matrix e = matrix(p, "matrix");
      if (e.cols() != n) throw DimensionError("affine_subspace: matrix has wrong column count");
      return affine_subspace_cone(e, vector(p, "rhs", e.rows(), 0.0));
    });
    c.add_set_valued("point", {"value"}, [](const ParamSet& p, Index n) { return point_cone(vector(p, "value", n, 0.0)); });
    c.add_set_valued("l1", {"weight"}, [](const ParamSet& p, Index n) {
      return l1_subdifferential(n, scalar(p, "weight", 1.0));
    });
    c.add_set_valued("scaled_identity", {"scale"}, [](const ParamSet& p, Index n) {
      return scaled_identity_operator(n, scalar(p, "scale", 1.0));
    });
    c.add_set_valued("affine", {"matrix", "offset"}, [](const ParamSet& p, Index n) {
      Matrix m = matrix(p, "matrix");
      if (m.rows() != n || m.cols() != n) throw DimensionError("affine: matrix must be square of the problem dimension");
      return affine_operator(m, vector(p, "offset", n, 0.0));
    });
    c.add_set_valued("linear", {"matrix"}, [](const ParamSet& p, Index n) {
      Matrix m = matrix(p, "matrix");
      if (m.rows() != n || m.cols() != n) throw DimensionError("linear: matrix must be square of the problem dimension");
      return linear_operator(m);
    });
    c.add_set_valued("constant", {"value"}, [](const ParamSet& p, Index n) {
      return constant_operator(vector(p, "value", n));
    });

    c.add_single_valued("zero", {}, [](const ParamSet&, Index n) { return SingleValuedOperator::zero(n); });
    c.add_single_valued("scaled_identity", {"scale"}, [](const ParamSet& p, Index n) {
      return SingleValuedOperator::affine(scalar(p, "scale", 1.0) * Matrix::Identity(n, n), Vector::Zero(n),
                                          "scaled_identity");
    });
    c.add_single_valued("affine", {"matrix", "offset"}, [](const ParamSet& p, Index n) {
      Matrix m = matrix(p, "matrix");
      if (m.rows() != n || m.cols() != n) throw DimensionError("affine: matrix must be square of the problem dimension");
      return SingleValuedOperator::affine(m, vector(p, "offset", n, 0.0));
    });
    c.add_single_valued("constant", {"value"}, [](const ParamSet& p, Index n) {
      return SingleValuedOperator::affine(Matrix::Zero(n, n), vector(p, "value", n), "constant");
    });
    return c;
  }();
  return catalog;
}

}  // namespace warpedprox
