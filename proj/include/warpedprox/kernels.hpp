#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "warpedprox/backward_map.hpp"

namespace warpedprox {

// M = A + B with A known through resolvents and B single-valued (optional).
struct MDecomposition {
  SetValuedOperator set_part;
  SingleValuedPtr forward_part;

  MDecomposition() = default;
  explicit MDecomposition(SetValuedOperator a, SingleValuedPtr b = nullptr)
      : set_part(std::move(a)), forward_part(std::move(b)) {
    if (forward_part) {
      if (forward_part->dim() != set_part.dim()) throw DimensionError("MDecomposition: parts differ in dimension");
      if (!forward_part->monotone()) throw ConfigError("MDecomposition: forward part must be monotone");
    }
  }

  Index dim() const { return set_part.dim(); }
};

// K = base − c·B, where base is block diagonal with invertible blocks and B is the forward
// part of M that the kernel absorbs (c = the step size it was built for).
class Kernel {
 public:
  Kernel() = default;
  Kernel(std::vector<BackwardMap> base, double alpha, double beta, std::string name = "kernel",
         SingleValuedPtr absorbed = nullptr, double absorbed_step = 0.0)
      : base_(std::move(base)), absorbed_(std::move(absorbed)), absorbed_step_(absorbed_step), alpha_(alpha),
        beta_(beta), name_(std::move(name)) {
    std::vector<Index> dims;
    for (const auto& b : base_) dims.push_back(b.dim());
    layout_ = BlockLayout(std::move(dims));
    if (absorbed_ && absorbed_->dim() != layout_.total()) throw DimensionError("kernel: absorbed operator dimension");
    if (!(alpha_ > 0.0) || !(beta_ >= alpha_)) throw ConfigError("kernel " + name_ + ": need 0 < alpha <= beta");
  }

  Index dim() const { return layout_.total(); }
  const BlockLayout& layout() const { return layout_; }
  double strong_monotonicity() const { return alpha_; }
  double lipschitz() const { return beta_; }
  const std::string& name() const { return name_; }
  const std::vector<BackwardMap>& base() const { return base_; }
  const SingleValuedOperator* absorbed() const { return absorbed_.get(); }
  double absorbed_step() const { return absorbed_step_; }

  Vector base_apply(const Vector& x) const {
    if (x.size() != dim()) throw DimensionError("kernel " + name_ + ": dimension mismatch");
    if (base_.size() == 1) return base_[0](x);
    Vector out(x.size());
    for (std::size_t i = 0; i < base_.size(); ++i)
      out.segment(layout_.offset(i), layout_.dim(i)) = base_[i](x.segment(layout_.offset(i), layout_.dim(i)));
    return out;
  }

  Vector operator()(const Vector& x) const {
    Vector out = base_apply(x);
    if (absorbed_) out -= absorbed_step_ * (*absorbed_)(x);
    return out;
  }

  // The p with v ∈ base(p) + γA(p), blockwise when the base has several blocks.
  Vector backward_solve(double gamma, const SetValuedOperator& a, const Vector& v, const Vector* guess = nullptr) const {
    if (v.size() != dim() || a.dim() != dim()) throw DimensionError("kernel " + name_ + ": backward solve dimension");
    if (base_.size() == 1) return base_[0].solve(gamma, a, v, guess);
    if (!a.is_product() || !(a.layout() == layout_))
      throw ConfigError("kernel " + name_ + ": set-valued part does not share the kernel's block layout");
    Vector out(v.size());
    for (std::size_t i = 0; i < base_.size(); ++i) {
      Vector g;
      if (guess) g = guess->segment(layout_.offset(i), layout_.dim(i));
      out.segment(layout_.offset(i), layout_.dim(i)) =
          base_[i].solve(gamma, a.factor(i), v.segment(layout_.offset(i), layout_.dim(i)), guess ? &g : nullptr);
    }
    return out;
  }

 private:
  std::vector<BackwardMap> base_;
  SingleValuedPtr absorbed_;
  double absorbed_step_ = 0.0;
  double alpha_ = 1.0;
  double beta_ = 1.0;
  std::string name_;
  BlockLayout layout_;
};

namespace detail {

inline void check_absorption(const MDecomposition& m, const Kernel& k, double gamma) {
  if (m.forward_part) {
    if (k.absorbed() != m.forward_part.get())
      throw ConfigError("kernel " + k.name() + " does not absorb the forward part of M");
    if (std::abs(k.absorbed_step() - gamma) > 1e-12 * gamma)
      throw ConfigError("kernel " + k.name() + " was built for step " + std::to_string(k.absorbed_step()) +
                        ", used with " + std::to_string(gamma));
  } else if (k.absorbed()) {
    throw ConfigError("kernel " + k.name() + " absorbs a forward part that M does not have");
  }
}

struct WarpedStep {
  Vector kx;
  Vector y;
};

inline WarpedStep warped_step(const MDecomposition& m, const Kernel& k, double gamma, const Vector& x) {
  if (!(gamma > 0.0)) throw ConfigError("warped resolvent: step size must be positive");
  if (x.size() != m.dim() || k.dim() != m.dim()) throw DimensionError("warped resolvent: dimension mismatch");
  check_absorption(m, k, gamma);
  Vector kx = k(x);
  Vector y = k.backward_solve(gamma, m.set_part, kx, &x);
  require_finite(y, "warped resolvent");
  return {std::move(kx), std::move(y)};
}

}  // namespace detail

// (K + γM)^{-1}(Kx)
inline Vector warped_resolvent(const MDecomposition& m, const Kernel& k, double gamma, const Vector& x) {
  return detail::warped_step(m, k, gamma, x).y;
}

// (y, γ^{-1}(Kx − Ky)) ∈ gra M
inline GraphPoint graph_point(const MDecomposition& m, const Kernel& k, double gamma, const Vector& x) {
  auto step = detail::warped_step(m, k, gamma, x);
  Vector y_star = (step.kx - k(step.y)) / gamma;
  return GraphPoint(std::move(step.y), std::move(y_star));
}

// ---- kernel families ----

inline Kernel identity_kernel(Index dim) { return Kernel({BackwardMap::identity(dim)}, 1.0, 1.0, "identity"); }

inline Kernel scaled_identity_kernel(Index dim, double scale) {
  return Kernel({BackwardMap::identity(dim, scale)}, scale, scale, "scaled_identity");
}

inline Kernel base_kernel(const BackwardMap& w, std::string name = "base") {
  return Kernel({w}, w.strong_monotonicity(), w.lipschitz(), std::move(name));
}

// K = W − γB, strongly monotone with constant ε when γβ ≤ α − ε.
inline Kernel fbf_kernel(const BackwardMap& w, const SingleValuedPtr& b, double gamma, double eps) {
  if (!b) throw ConfigError("fbf kernel: missing forward operator");
  if (b->dim() != w.dim()) throw DimensionError("fbf kernel: W and B differ in dimension");
  if (!b->monotone()) throw ConfigError("fbf kernel: B must be monotone");
  double alpha = w.strong_monotonicity();
  double beta = b->lipschitz();
  if (!(gamma > 0.0)) throw ConfigError("fbf kernel: γ must be positive");
  if (!(eps > 0.0 && eps < alpha)) throw ConfigError("fbf kernel: ε must lie in ]0, α[");
  if (gamma * beta > (alpha - eps) * (1.0 + 1e-12))
    throw ConfigError("fbf kernel: γ exceeds (α−ε)/β (γ = " + std::to_string(gamma) +
                      ", bound = " + std::to_string(beta > 0 ? (alpha - eps) / beta : INFINITY) + ")");
  return Kernel({w}, eps, w.lipschitz() + gamma * beta, "fbf", b, gamma);
}

// (x, v*) ↦ (Lᵀv*, −Lx), the skew coupling of a primal-dual pair.
struct SkewCoupling {
  LinearMap L;
  SingleValuedPtr op;
  Index primal_dim() const { return L.cols(); }
  Index dual_dim() const { return L.rows(); }
};

inline SkewCoupling skew_coupling(const LinearMap& l) {
  Index n = l.cols(), m = l.rows();
  Matrix s = Matrix::Zero(n + m, n + m);
  s.topRightCorner(n, m) = l.matrix().transpose();
  s.bottomLeftCorner(m, n) = -l.matrix();
  return {l, share(SingleValuedOperator::affine(s, Vector::Zero(n + m), "skew"))};
}

// M(x, v*) = (Ax + Lᵀv*, B^{-1}v* − Lx)
inline MDecomposition primal_dual_operator(const SetValuedOperator& a, const SetValuedOperator& b,
                                           const SkewCoupling& s) {
  if (a.dim() != s.primal_dim() || b.dim() != s.dual_dim()) throw DimensionError("primal-dual operator: dimensions");
  return MDecomposition(SetValuedOperator::product({a, inverse(b)}), s.op);
}

// (x, v*) ↦ (γ^{-1}x − Lᵀv*, Lx + μv*)
inline Kernel primal_dual_kernel(const SkewCoupling& s, double gamma, double mu) {
  if (!(gamma > 0.0) || !(mu > 0.0)) throw ConfigError("primal-dual kernel: γ and μ must be positive");
  double a = std::min(1.0 / gamma, mu);
  double b = std::max(1.0 / gamma, mu) + s.L.norm();
  return Kernel({BackwardMap::identity(s.primal_dim(), 1.0 / gamma), BackwardMap::identity(s.dual_dim(), mu)}, a, b,
                "primal_dual", s.op, 1.0);
}

// Non-gradient planar kernel (ξ₁³/2 + ξ₁/5 − ξ₂, ξ₁ + ξ₂). Strongly monotone with constant 1/5;
// the Lipschitz constant is declared for the strip |ξ₁| ≤ reach.
inline SingleValuedOperator cubic_planar_map(double reach = 1.0) {
  double beta = std::sqrt(std::pow(1.5 * reach * reach + 0.2, 2) + 3.0);
  return SingleValuedOperator(
      2,
      [](const Vector& x) -> Vector {
        Vector out(2);
        out << 0.5 * x[0] * x[0] * x[0] + x[0] / 5.0 - x[1], x[0] + x[1];
        return out;
      },
      beta, true, "cubic_planar");
}

inline Kernel cubic_planar_kernel(double reach = 1.0) {
  auto op = cubic_planar_map(reach);
  double beta = op.lipschitz();
  return Kernel({BackwardMap::nonlinear(std::move(op), 0.2, beta)}, 0.2, beta, "cubic_planar");
}

}  // namespace warpedprox
