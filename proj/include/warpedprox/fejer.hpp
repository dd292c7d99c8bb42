#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "warpedprox/operators.hpp"

namespace warpedprox {

// H = {z : <z − y, y*> <= 0}
class HalfSpaceCut {
 public:
  HalfSpaceCut(Vector anchor, Vector normal) : anchor_(std::move(anchor)), normal_(std::move(normal)) {
    require_same_dim(anchor_, normal_, "HalfSpaceCut");
  }
  explicit HalfSpaceCut(const GraphPoint& gp) : HalfSpaceCut(gp.y(), gp.y_star()) {}

  const Vector& anchor() const { return anchor_; }
  const Vector& normal() const { return normal_; }

  // Signed violation <z − y, y*>.
  double violation(const Vector& z) const { return inner(z - anchor_, normal_); }
  bool contains(const Vector& z, double tol = 0.0) const { return violation(z) <= tol; }

  Vector project(const Vector& x) const {
    double v = violation(x);
    if (v <= 0.0) return x;
    return x - (v / norm_sq(normal_)) * normal_;
  }

 private:
  Vector anchor_;
  Vector normal_;
};

struct CutStep {
  Vector x;
  double theta;  // <y − x, y*>
  double sigma;  // ‖y*‖²
  double rho;    // x⁺ = x + rho·y*
};

namespace detail {

inline CutStep cut_step(const Vector& x, const Vector& y, const Vector& y_star, double lambda) {
  require_same_dim(x, y, "relaxed projection step");
  double theta = inner(y - x, y_star);
  double sigma = norm_sq(y_star);
  if (theta < 0.0) {
    double rho = lambda * theta / sigma;
    return {x + rho * y_star, theta, sigma, rho};
  }
  return {x, theta, sigma, 0.0};
}

inline void check_relaxation(double lambda) {
  if (!(lambda > 0.0 && lambda < 2.0)) throw ConfigError("relaxation must lie in ]0, 2[");
}

}  // namespace detail

inline Vector relaxed_projection_step(const Vector& x, const GraphPoint& gp, double lambda) {
  detail::check_relaxation(lambda);
  return detail::cut_step(x, gp.y(), gp.y_star(), lambda).x;
}

struct HaugazeauTriple {
  Vector x0;
  Vector x;
  Vector x_half;
};

// Projection of x0 onto {u : <u − x, x0 − x> <= 0} ∩ {u : <u − x_half, x − x_half> <= 0}.
inline Vector haugazeau_Q(const HaugazeauTriple& t) {
  require_same_dim(t.x0, t.x, "haugazeau_Q");
  require_same_dim(t.x, t.x_half, "haugazeau_Q");
  Vector a = t.x0 - t.x;
  Vector b = t.x - t.x_half;
  double chi = inner(a, b);
  double mu = norm_sq(a);
  double nu = norm_sq(b);
  // ρ = μν − χ² = μ‖b⊥‖² with b⊥ the part of b orthogonal to a. Forming it from b⊥ (projected
  // twice) avoids the cancellation in μν − χ² when the cuts are nearly parallel.
  Vector perp = b;
  if (mu > 0.0) {
    perp -= (chi / mu) * a;
    perp -= (inner(a, perp) / mu) * a;
  }
  double rho = mu * norm_sq(perp);
  bool degenerate = rho <= 1e-14 * std::max(mu * nu, 1.0);
  if (degenerate) {
    if (chi < 0.0) throw InfeasibleError("haugazeau_Q: the two cuts are disjoint");
    return t.x_half;
  }
  if (chi * nu >= rho) return t.x0 + (1.0 + chi / nu) * (t.x_half - t.x);
  // x + (ν/ρ)(χa + μ(x_half − x)), where χa − μb = −μ·b⊥.
  return t.x - (nu / norm_sq(perp)) * perp;
}

inline Vector haugazeau_Q(const Vector& x0, const Vector& x, const Vector& x_half) {
  return haugazeau_Q(HaugazeauTriple{x0, x, x_half});
}

struct WeightedCut {
  GraphPoint point;
  double weight;
};

// Projection onto the averaged cut {z : <z, Σωy*> <= Σω<y, y*>}.
inline Vector multipoint_step(const Vector& x, const std::vector<WeightedCut>& cuts) {
  if (cuts.empty()) throw ConfigError("multipoint_step: no cuts");
  double total = 0.0;
  for (const auto& c : cuts) {
    if (!(c.weight > 0.0)) throw ConfigError("multipoint_step: weights must be positive");
    require_same_dim(x, c.point.y(), "multipoint_step");
    total += c.weight;
  }
  if (std::abs(total - 1.0) > 1e-12) throw ConfigError("multipoint_step: weights must sum to 1");

  Vector y_star = Vector::Zero(x.size());
  double gap = 0.0;  // Σω<x − y, y*>
  for (const auto& c : cuts) {
    y_star += c.weight * c.point.y_star();
    gap += c.weight * inner(x - c.point.y(), c.point.y_star());
  }
  if (!(gap > 0.0)) return x;
  return x - (gap / norm_sq(y_star)) * y_star;
}

}  // namespace warpedprox
