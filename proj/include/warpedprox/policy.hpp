#pragma once

#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <variant>
#include <vector>

#include "warpedprox/space.hpp"

namespace warpedprox {

using Schedule = std::function<double(std::size_t n)>;
using VectorSchedule = std::function<Vector(std::size_t n)>;

inline Schedule constant_schedule(double value) {
  return [value](std::size_t) { return value; };
}

// start·ratioⁿ, never below floor.
inline Schedule geometric_schedule(double start, double ratio, double floor = 0.0) {
  return [=](std::size_t n) { return std::max(floor, start * std::pow(ratio, static_cast<double>(n))); };
}

struct NoPerturbation {};

// x̃ = x_n + e_n
struct AdditivePerturbation {
  VectorSchedule error;
};

// x̃ = x_n + α_n(x_n − x_{n−1})
struct InertialPerturbation {
  Schedule alpha;
};

// x̃ = Σ_{j=n−m}^{n} μ_{n,j}x_j (+ e_n); weights(n) lists μ_{n,n−m}..μ_{n,n}, oldest first.
struct MemoryPerturbation {
  std::size_t depth = 0;
  std::function<std::vector<double>(std::size_t n)> weights;
  VectorSchedule error;  // optional
};

using PerturbationPolicy = std::variant<NoPerturbation, AdditivePerturbation, InertialPerturbation, MemoryPerturbation>;

inline MemoryPerturbation fixed_memory(std::vector<double> weights, VectorSchedule error = {}) {
  std::size_t depth = weights.empty() ? 0 : weights.size() - 1;
  return {depth, [w = std::move(weights)](std::size_t) { return w; }, std::move(error)};
}

// Number of past iterates (including x_n) a policy reads.
inline std::size_t history_length(const PerturbationPolicy& policy) {
  if (std::holds_alternative<InertialPerturbation>(policy)) return 2;
  if (auto m = std::get_if<MemoryPerturbation>(&policy)) return m->depth + 1;
  return 1;
}

// history ends with x_n; earlier entries run back in time. Indices before 0 read x_0,
// which is history.front() whenever the window is not yet full.
inline Vector apply_policy(const PerturbationPolicy& policy, std::span<const Vector> history, std::size_t n) {
  if (history.empty()) throw ConfigError("apply_policy: empty history");
  const Vector& xn = history.back();
  auto back = [&](std::size_t k) -> const Vector& {
    // x_{n−k}
    if (k >= history.size()) return history.front();
    return history[history.size() - 1 - k];
  };

  if (std::holds_alternative<NoPerturbation>(policy)) return xn;

  if (auto a = std::get_if<AdditivePerturbation>(&policy)) {
    Vector e = a->error(n);
    require_same_dim(e, xn, "additive perturbation");
    return xn + e;
  }

  if (auto in = std::get_if<InertialPerturbation>(&policy)) {
    double alpha = in->alpha(n);
    if (!std::isfinite(alpha)) throw ConfigError("inertial perturbation: non-finite coefficient");
    return xn + alpha * (xn - back(1));
  }

  const auto& mem = std::get<MemoryPerturbation>(policy);
  std::vector<double> w = mem.weights(n);
  if (w.size() != mem.depth + 1) throw ConfigError("memory perturbation: weight row has the wrong length");
  double sum = 0.0;
  for (double v : w) sum += v;
  if (std::abs(sum - 1.0) > 1e-12) throw ConfigError("memory perturbation: weight row does not sum to 1");
  Vector out = Vector::Zero(xn.size());
  for (std::size_t k = 0; k <= mem.depth; ++k) out += w[mem.depth - k] * back(k);
  if (mem.error) {
    Vector e = mem.error(n);
    require_same_dim(e, xn, "memory perturbation");
    out += e;
  }
  return out;
}

// Ring buffer of the latest iterates, oldest first.
class IterateHistory {
 public:
  explicit IterateHistory(std::size_t capacity) : capacity_(std::max<std::size_t>(capacity, 1)) {}

  void push(const Vector& x) {
    buffer_.push_back(x);
    if (buffer_.size() > capacity_) buffer_.pop_front();
  }

  std::vector<Vector> window() const { return {buffer_.begin(), buffer_.end()}; }
  const Vector& latest() const { return buffer_.back(); }

 private:
  std::size_t capacity_;
  std::deque<Vector> buffer_;
};

}  // namespace warpedprox
