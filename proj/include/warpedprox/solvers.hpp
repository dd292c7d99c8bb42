#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "warpedprox/fejer.hpp"
#include "warpedprox/kernels.hpp"
#include "warpedprox/policy.hpp"

namespace warpedprox {

enum class StopReason { converged, max_iterations, stalled };

inline const char* to_string(StopReason r) {
  switch (r) {
    case StopReason::converged: return "converged";
    case StopReason::max_iterations: return "max_iterations";
    case StopReason::stalled: return "stalled";
  }
  return "unknown";
}

// Relaxation computed from the current iterate and graph point; overrides the fixed schedule.
using RelaxationRule = std::function<double(std::size_t n, double gamma, const Vector& x, const GraphPoint& gp)>;

struct SolverConfig {
  double epsilon = 1e-3;
  Schedule relaxation = constant_schedule(1.0);
  RelaxationRule relaxation_rule;
  Schedule gamma = constant_schedule(1.0);
  std::size_t max_iter = 1000;
  double tol_residual = 1e-8;
  double tol_step = 1e-8;
  std::size_t stall_limit = 50;
  std::vector<Vector> tracked_zeros;  // Fejér gaps are logged against these
  bool keep_points = true;            // store x, x̃, y, y* in every record
  // Uniform bounds every kernel of a schedule must respect.
  double kernel_alpha_floor = 0.0;
  double kernel_beta_ceiling = std::numeric_limits<double>::infinity();
  // Refuse set-valued parts that are not flagged monotone.
  bool require_monotone = true;

  void validate() const {
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw ConfigError("solver: ε must lie in ]0, 1[");
    if (max_iter == 0) throw ConfigError("solver: max_iter must be positive");
    if (!(tol_residual > 0.0) || !(tol_step > 0.0)) throw ConfigError("solver: tolerances must be positive");
    if (stall_limit == 0) throw ConfigError("solver: stall limit must be positive");
    if (!relaxation && !relaxation_rule) throw ConfigError("solver: no relaxation schedule");
    if (!gamma) throw ConfigError("solver: no step-size schedule");
  }
};

struct IterationRecord {
  std::size_t n = 0;
  Vector x, x_tilde, y, y_star;
  double gamma = 0.0;
  double lambda = 0.0;
  double residual = 0.0;      // ‖y*‖
  double step_norm = 0.0;     // ‖x_{n+1} − x_n‖
  double gap = 0.0;           // ‖x̃ − y‖
  double perturbation = 0.0;  // ‖x̃ − x‖
  double theta = 0.0;
  double sigma = 0.0;
  double rho = 0.0;
  std::vector<double> fejer_gaps;
};

struct SolveResult {
  Vector x;
  std::vector<IterationRecord> trace;
  StopReason reason = StopReason::max_iterations;
  std::size_t iterations = 0;
  std::string diagnostic;

  bool converged() const { return reason == StopReason::converged; }
};

// λ_n = γ‖y*‖²/<x − y, y*> when the denominator is positive, ε otherwise. The exact value lies in
// [ε, 2 − ε]; near a fixed point cancellation can push the computed ratio outside, so it is clamped.
inline RelaxationRule tseng_relaxation(double eps) {
  return [eps](std::size_t, double gamma, const Vector& x, const GraphPoint& gp) {
    double d = inner(x - gp.y(), gp.y_star());
    if (!(d > 0.0)) return eps;
    double lambda = gamma * norm_sq(gp.y_star()) / d;
    return std::clamp(lambda, eps, 2.0 - eps);
  };
}

inline double default_fbf_gamma(double alpha, double beta, double eps) {
  if (beta <= 0.0) return 1.0;
  return std::max(eps, 0.9 * (alpha - eps) / beta);
}

inline double default_tseng_gamma(double beta, double eps) { return default_fbf_gamma(1.0, beta, eps); }

namespace detail {

inline void check_relaxation_range(double lambda, double eps) {
  if (!std::isfinite(lambda) || lambda < eps * (1.0 - 1e-12) || lambda > (2.0 - eps) * (1.0 + 1e-12))
    throw ConfigError("relaxation λ = " + std::to_string(lambda) + " outside [ε, 2−ε]");
}

inline void check_step(double gamma, double eps) {
  if (!std::isfinite(gamma) || gamma < eps) throw ConfigError("step size γ = " + std::to_string(gamma) + " below ε");
}

// Shared loop: oracle(n, γ, x̃) -> GraphPoint, update(n, γ, λ, x, gp) -> CutStep.
template <class Oracle, class Update>
SolveResult drive(const SolverConfig& cfg, const PerturbationPolicy& policy, const Vector& x0, Oracle&& oracle,
                  Update&& update, bool uses_relaxation = true) {
  cfg.validate();
  require_finite(x0, "starting point");
  for (const auto& z : cfg.tracked_zeros) require_same_dim(z, x0, "tracked zero");

  SolveResult out;
  IterateHistory history(history_length(policy));
  history.push(x0);
  Vector x = x0;
  std::size_t stalls = 0;

  for (std::size_t n = 0; n < cfg.max_iter; ++n) {
    double gamma = cfg.gamma(n);
    check_step(gamma, cfg.epsilon);
    auto window = history.window();
    Vector xt = apply_policy(policy, window, n);
    require_finite(xt, "perturbed point");

    GraphPoint gp = oracle(n, gamma, xt);

    IterationRecord rec;
    rec.n = n;
    rec.gamma = gamma;
    rec.residual = norm(gp.y_star());
    rec.gap = norm(xt - gp.y());
    rec.perturbation = norm(xt - x);
    for (const auto& z : cfg.tracked_zeros) rec.fejer_gaps.push_back(norm(x - z));
    if (cfg.keep_points) {
      rec.x = x;
      rec.x_tilde = xt;
      rec.y = gp.y();
      rec.y_star = gp.y_star();
    }

    if (rec.residual <= cfg.tol_residual && rec.gap <= cfg.tol_step) {
      rec.theta = inner(gp.y() - x, gp.y_star());
      rec.sigma = rec.residual * rec.residual;
      out.trace.push_back(std::move(rec));
      out.reason = StopReason::converged;
      out.iterations = n;
      out.x = x;
      return out;
    }

    double lambda = 1.0;
    if (uses_relaxation) {
      lambda = cfg.relaxation_rule ? cfg.relaxation_rule(n, gamma, x, gp) : cfg.relaxation(n);
      check_relaxation_range(lambda, cfg.epsilon);
    }
    CutStep step = update(n, gamma, lambda, x, gp);
    require_finite(step.x, "iterate");

    rec.lambda = lambda;
    rec.theta = step.theta;
    rec.sigma = step.sigma;
    rec.rho = step.rho;
    rec.step_norm = norm(step.x - x);
    out.trace.push_back(std::move(rec));

    if (step.theta >= 0.0 && step.sigma > 0.0 && out.trace.back().residual > cfg.tol_residual)
      ++stalls;
    else
      stalls = 0;

    x = std::move(step.x);
    history.push(x);

    if (stalls >= cfg.stall_limit) {
      out.reason = StopReason::stalled;
      out.iterations = n + 1;
      out.x = x;
      out.diagnostic = std::to_string(stalls) + " consecutive iterations with <y − x, y*> >= 0 and residual " +
                       std::to_string(out.trace.back().residual) + "; check the declared kernel constants";
      return out;
    }
  }
  out.reason = StopReason::max_iterations;
  out.iterations = cfg.max_iter;
  out.x = x;
  out.diagnostic = "iteration limit reached before the tolerances were met";
  return out;
}

inline void check_uniform(const Kernel& k, const SolverConfig& cfg) {
  if (k.strong_monotonicity() < cfg.kernel_alpha_floor || k.lipschitz() > cfg.kernel_beta_ceiling)
    throw ConfigError("kernel " + k.name() + " leaves the uniform constant bounds of the schedule");
}

inline CutStep weak_update(std::size_t, double, double lambda, const Vector& x, const GraphPoint& gp) {
  return cut_step(x, gp.y(), gp.y_star(), lambda);
}

template <class Schedule>
decltype(auto) at_step(Schedule&& s, std::size_t n, double gamma) {
  if constexpr (std::is_invocable_v<Schedule, std::size_t, double>)
    return s(n, gamma);
  else if constexpr (std::is_invocable_v<Schedule, std::size_t>)
    return s(n);
  else
    return std::forward<Schedule>(s);
}

}  // namespace detail

// Warped proximal cut iteration; kernels is a Kernel or a callable (n, γ) -> Kernel.
template <class KernelSchedule>
SolveResult solve_weak(const MDecomposition& m, KernelSchedule&& kernels, const PerturbationPolicy& policy,
                       const SolverConfig& cfg, const Vector& x0) {
  require_same_dim(x0, Vector::Zero(m.dim()), "solve_weak");
  if (cfg.require_monotone && !m.set_part.monotone()) throw ConfigError("solve_weak: set-valued part is not monotone");
  auto oracle = [&](std::size_t n, double gamma, const Vector& xt) {
    const Kernel& k = detail::at_step(kernels, n, gamma);
    detail::check_uniform(k, cfg);
    return graph_point(m, k, gamma, xt);
  };
  return detail::drive(cfg, policy, x0, oracle, detail::weak_update);
}

// Same cuts, Haugazeau combination with the anchor x0.
template <class KernelSchedule>
SolveResult solve_strong(const MDecomposition& m, KernelSchedule&& kernels, const PerturbationPolicy& policy,
                         const SolverConfig& cfg, const Vector& x0) {
  require_same_dim(x0, Vector::Zero(m.dim()), "solve_strong");
  if (cfg.require_monotone && !m.set_part.monotone()) throw ConfigError("solve_strong: set-valued part is not monotone");
  auto oracle = [&](std::size_t n, double gamma, const Vector& xt) {
    const Kernel& k = detail::at_step(kernels, n, gamma);
    detail::check_uniform(k, cfg);
    return graph_point(m, k, gamma, xt);
  };
  auto update = [&x0](std::size_t, double, double, const Vector& x, const GraphPoint& gp) {
    CutStep half = detail::cut_step(x, gp.y(), gp.y_star(), 1.0);
    half.x = haugazeau_Q(x0, x, half.x);
    return half;
  };
  return detail::drive(cfg, policy, x0, oracle, update, false);
}

// Forward-backward-forward with memory: x̃ from the policy, v* = Wx̃ − γBx̃, y = (W + γA)^{-1}v*,
// y* = γ^{-1}(v* − Wy) + By, then the relaxed cut.
template <class WSchedule>
SolveResult solve_fbf_memory(const SetValuedOperator& a, const SingleValuedOperator& b, WSchedule&& w_schedule,
                             const PerturbationPolicy& policy, const SolverConfig& cfg, const Vector& x0) {
  if (a.dim() != b.dim()) throw DimensionError("solve_fbf_memory: A and B differ in dimension");
  if (cfg.require_monotone && !a.monotone()) throw ConfigError("solve_fbf_memory: A is not monotone");
  if (!b.monotone()) throw ConfigError("solve_fbf_memory: B must be monotone");
  require_same_dim(x0, Vector::Zero(a.dim()), "solve_fbf_memory");
  double beta = b.lipschitz();
  double eps = cfg.epsilon;
  auto oracle = [&](std::size_t n, double gamma, const Vector& xt) {
    const BackwardMap& w = detail::at_step(w_schedule, n, gamma);
    double alpha = w.strong_monotonicity();
    if (!(eps < alpha / (beta + 1.0))) throw ConfigError("solve_fbf_memory: ε must lie in ]0, α/(β+1)[");
    if (gamma * beta > (alpha - eps) * (1.0 + 1e-12)) throw ConfigError("solve_fbf_memory: γ exceeds (α−ε)/β");
    Vector bx = b(xt);
    Vector v = w(xt) - gamma * bx;
    Vector y = w.solve(gamma, a, v, &xt);
    Vector y_star = (v - w(y)) / gamma + b(y);
    return GraphPoint(std::move(y), std::move(y_star));
  };
  return detail::drive(cfg, policy, x0, oracle, detail::weak_update);
}

// Tseng: v* = γBx, y = J_{γA}(x − v*), x⁺ = y − γBy + v*. The trace carries the equivalent
// cut quantities and the implied relaxation.
inline SolveResult solve_tseng(const SetValuedOperator& a, const SingleValuedOperator& b, const SolverConfig& cfg,
                               const Vector& x0) {
  if (a.dim() != b.dim()) throw DimensionError("solve_tseng: A and B differ in dimension");
  if (cfg.require_monotone && !a.monotone()) throw ConfigError("solve_tseng: A is not monotone");
  if (!b.monotone()) throw ConfigError("solve_tseng: B must be monotone");
  require_same_dim(x0, Vector::Zero(a.dim()), "solve_tseng");
  double beta = b.lipschitz();
  double eps = cfg.epsilon;
  if (!(eps < 1.0 / (beta + 1.0))) throw ConfigError("solve_tseng: ε must lie in ]0, 1/(β+1)[");

  SolverConfig local = cfg;
  local.relaxation_rule = tseng_relaxation(eps);
  Vector by, v;
  auto oracle = [&](std::size_t, double gamma, const Vector& x) {
    if (beta > 0.0 && gamma * beta > (1.0 - eps) * (1.0 + 1e-12)) throw ConfigError("solve_tseng: γ exceeds (1−ε)/β");
    Vector bx = b(x);
    v = gamma * bx;
    Vector kx = x - v;
    Vector y = a.resolvent(gamma, kx);
    by = b(y);
    Vector y_star = (kx - (y - gamma * by)) / gamma;
    return GraphPoint(std::move(y), std::move(y_star));
  };
  auto update = [&](std::size_t, double gamma, double lambda, const Vector& x, const GraphPoint& gp) {
    CutStep s = detail::cut_step(x, gp.y(), gp.y_star(), lambda);
    s.x = gp.y() - gamma * by + v;
    return s;
  };
  return detail::drive(local, NoPerturbation{}, x0, oracle, update);
}

}  // namespace warpedprox
