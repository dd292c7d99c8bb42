#pragma once

#include <functional>
#include <optional>
#include <ostream>
#include <string>

#include <nlohmann/json.hpp>

#include "warpedprox/io/problem.hpp"
#include "warpedprox/warpedprox.hpp"

namespace warpedprox::io {

// Every way a run can end maps to exactly one of these.
enum class ExitCode : int {
  converged = 0,
  usage = 1,
  max_iterations = 2,
  infeasible = 3,
  numerical = 4,
  stalled = 5,
  invalid = 6,
  parse = 7,
  io = 8,
  solution_mismatch = 9,
};

inline const char* to_string(ExitCode c) {
  switch (c) {
    case ExitCode::converged: return "converged";
    case ExitCode::usage: return "usage";
    case ExitCode::max_iterations: return "max_iterations";
    case ExitCode::infeasible: return "infeasible";
    case ExitCode::numerical: return "numerical_failure";
    case ExitCode::stalled: return "stalled";
    case ExitCode::invalid: return "invalid_problem";
    case ExitCode::parse: return "parse_error";
    case ExitCode::io: return "io_error";
    case ExitCode::solution_mismatch: return "solution_mismatch";
  }
  return "unknown";
}

struct Overrides {
  std::optional<std::string> algo;
  std::optional<std::size_t> max_iter;
  std::optional<double> tol_residual;
  std::optional<double> tol_step;
  std::optional<double> relax;
};

inline void apply_overrides(ProblemFile& pf, const Overrides& o) {
  if (o.algo) pf.solver.algo = *o.algo;
  if (o.max_iter) pf.solver.max_iter = *o.max_iter;
  if (o.tol_residual) pf.solver.tol_residual = *o.tol_residual;
  if (o.tol_step) pf.solver.tol_step = *o.tol_step;
  if (o.relax) pf.solver.relaxation = ScheduleSpec::constant(*o.relax);
}

// Everything a run needs, built from the catalogs.
struct Assembly {
  std::string algo;
  Index dim = 0;  // dimension of the iteration space
  // inclusion
  SetValuedOperator A;
  SingleValuedPtr B;  // null when absent
  std::optional<BackwardMap> W;
  std::optional<MDecomposition> M;
  std::string kernel_type;
  // coupled
  std::optional<CoupledProblem> coupled;
  CoupledStage stage;

  SolverConfig cfg;
  PerturbationPolicy policy;
  Vector x0;
  std::optional<Vector> solution;
  double solution_tolerance = 0.0;
};

namespace detail {

template <class F>
auto checked(const std::string& key, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ValidationError&) {
    throw;
  } catch (const Error& e) {
    throw ValidationError(key, key + ": " + e.what());
  }
}

[[noreturn]] inline void reject(const std::string& key, const std::string& what) {
  throw ValidationError(key, key + ": " + what);
}

inline Vector sized(const std::vector<double>& v, Index dim, const std::string& key) {
  if (v.empty()) return Vector::Zero(dim);
  if (static_cast<Index>(v.size()) != dim)
    reject(key, "has length " + std::to_string(v.size()) + ", expected " + std::to_string(dim));
  return checked(key, [&] { return make_vector(v); });
}

inline Matrix dense(const std::vector<std::vector<double>>& rows, const std::string& key) {
  return checked(key, [&] { return params::matrix({{"m", rows}}, "m"); });
}

inline std::string num(double v) { return format_double(v); }

inline void check_schedule_range(const ScheduleSpec& s, double lo, double hi, const std::string& key,
                                 const std::string& name) {
  if (s.rule == ScheduleSpec::Rule::geometric && !(s.ratio > 0.0)) reject(key, "geometric ratio must be positive");
  if (s.inf() < lo * (1 - 1e-12)) reject(key, name + " falls below " + num(lo));
  if (s.sup() > hi * (1 + 1e-12)) reject(key, name + " exceeds " + num(hi));
}

inline BackwardMap base_map(const KernelSpec& k, Index dim) {
  return checked("kernel", [&]() -> BackwardMap {
    if (k.type == "identity") return BackwardMap::identity(dim);
    if (k.type == "scaled_identity") {
      if (!(k.scale > 0.0)) throw ConfigError("scale must be positive");
      return BackwardMap::identity(dim, k.scale);
    }
    if (k.type == "fbf") {
      if (k.metric.empty()) {
        if (!(k.scale > 0.0)) throw ConfigError("scale must be positive");
        return BackwardMap::identity(dim, k.scale);
      }
      Matrix q = dense(k.metric, "kernel.metric");
      if (q.rows() != dim || q.cols() != dim) throw DimensionError("metric must be square of the problem dimension");
      return BackwardMap::affine(q, Vector::Zero(dim));
    }
    if (k.type == "cubic_planar") {
      if (dim != 2) throw DimensionError("cubic_planar needs dimension 2");
      if (!(k.reach > 0.0)) throw ConfigError("reach must be positive");
      auto op = cubic_planar_map(k.reach);
      double beta = op.lipschitz();
      return BackwardMap::nonlinear(std::move(op), 0.2, beta);
    }
    throw LookupError("unknown kernel '" + k.type + "' (identity, scaled_identity, fbf, cubic_planar)");
  });
}

inline PerturbationPolicy build_policy(const PolicySpec& p, Index dim) {
  const std::string key = "solver.policy";
  auto error_schedule = [&]() -> VectorSchedule {
    if (p.error.empty()) return {};
    if (!(p.decay >= 0.0 && p.decay < 1.0)) reject(key, "decay must lie in [0, 1[ so that e_n → 0");
    Vector e = sized(p.error, dim, key + ".error");
    double decay = p.decay;
    return [e, decay](std::size_t n) -> Vector { return e * std::pow(decay, static_cast<double>(n)); };
  };
  switch (p.kind) {
    case PolicySpec::Kind::none: return NoPerturbation{};
    case PolicySpec::Kind::additive: return AdditivePerturbation{error_schedule()};
    case PolicySpec::Kind::inertial:
      if (!std::isfinite(p.alpha.sup()) || p.alpha.inf() < 0.0)
        reject(key, "inertial coefficients must be bounded and nonnegative");
      return InertialPerturbation{p.alpha.build()};
    case PolicySpec::Kind::memory: {
      if (p.weights.empty()) reject(key, "memory weights are empty");
      double sum = 0.0;
      for (double w : p.weights) sum += w;
      if (std::abs(sum - 1.0) > 1e-12) reject(key, "memory weights must sum to 1");
      return fixed_memory(p.weights, error_schedule());
    }
  }
  reject(key, "unknown policy");
}

inline void fill_common(const ProblemFile& pf, Assembly& as) {
  const auto& s = pf.solver;
  if (!(s.epsilon > 0.0 && s.epsilon < 1.0)) reject("solver.epsilon", "ε must lie in ]0, 1[");
  if (s.max_iter == 0) reject("solver.max_iter", "must be positive");
  if (!(s.tol_residual > 0.0)) reject("solver.tol_residual", "must be positive");
  if (!(s.tol_step > 0.0)) reject("solver.tol_step", "must be positive");
  if (s.stall_limit == 0) reject("solver.stall_limit", "must be positive");
  as.cfg.epsilon = s.epsilon;
  as.cfg.max_iter = s.max_iter;
  as.cfg.tol_residual = s.tol_residual;
  as.cfg.tol_step = s.tol_step;
  as.cfg.stall_limit = s.stall_limit;
  as.cfg.keep_points = false;
  as.cfg.require_monotone = !pf.allow_nonmonotone;
  if (s.relaxation) {
    if (as.algo == "strong" || as.algo == "tseng")
      reject("solver.relaxation", "the " + as.algo + " algorithm fixes its own relaxation");
    check_schedule_range(*s.relaxation, s.epsilon, 2.0 - s.epsilon, "solver.relaxation", "λ");
    as.cfg.relaxation = s.relaxation->build();
  }
  if (as.algo == "tseng" && s.policy.kind != PolicySpec::Kind::none)
    reject("solver.policy", "tseng runs without a perturbation policy");
  as.policy = build_policy(s.policy, as.dim);
}

inline void assemble_inclusion(const ProblemFile& pf, Assembly& as) {
  const auto& cat = standard_library();
  if (pf.dim < 1) reject("dim", "must be positive");
  as.dim = pf.dim;
  as.A = checked("A", [&] { return cat.set_valued(pf.A, pf.dim); });
  if (!as.A.monotone() && !pf.allow_nonmonotone)
    reject("A", "operator is not monotone; set allow_nonmonotone: true to run it anyway");
  if (pf.B) {
    as.B = checked("B", [&] { return share(cat.single_valued(*pf.B, pf.dim)); });
    if (!as.B->monotone()) reject("B", "forward operator must be monotone");
  }
  as.W = base_map(pf.kernel, pf.dim);
  as.kernel_type = pf.kernel.type;
  const double eps = pf.solver.epsilon;
  const double alpha = as.W->strong_monotonicity();
  const double beta = as.B ? as.B->lipschitz() : 0.0;
  const std::string& algo = as.algo;

  ScheduleSpec gamma = ScheduleSpec::constant(1.0);
  double gamma_cap = std::numeric_limits<double>::infinity();
  std::string regime;
  if (algo == "weak" || algo == "strong") {
    if (as.B && pf.kernel.type != "fbf")
      reject("kernel", "a forward operator B needs kernel type fbf for the " + algo + " algorithm");
    if (pf.kernel.type == "fbf" && as.B) {
      if (!(eps < alpha)) reject("solver.epsilon", "ε must lie in ]0, α[ with α = " + num(alpha));
      gamma = ScheduleSpec::constant(default_fbf_gamma(alpha, beta, eps));
      gamma_cap = beta > 0.0 ? (alpha - eps) / beta : gamma_cap;
      regime = "γ exceeds (α−ε)/β";
    }
    as.M = checked("B", [&] { return as.B ? MDecomposition(as.A, as.B) : MDecomposition(as.A); });
  } else if (algo == "fbf") {
    if (!as.B) as.B = share(SingleValuedOperator::zero(pf.dim));
    if (!(eps < alpha / (beta + 1.0))) reject("solver.epsilon", "ε must lie in ]0, α/(β+1)[ with α = " + num(alpha) +
                                                                    ", β = " + num(beta));
    gamma = ScheduleSpec::constant(default_fbf_gamma(alpha, beta, eps));
    if (beta > 0.0) gamma_cap = (alpha - eps) / beta;
    regime = "γ exceeds (α−ε)/β";
  } else if (algo == "tseng") {
    if (pf.kernel.type != "identity") reject("kernel", "tseng uses the identity kernel");
    if (!as.B) as.B = share(SingleValuedOperator::zero(pf.dim));
    if (!(eps < 1.0 / (beta + 1.0))) reject("solver.epsilon", "ε must lie in ]0, 1/(β+1)[ with β = " + num(beta));
    gamma = ScheduleSpec::constant(default_tseng_gamma(beta, eps));
    if (beta > 0.0) gamma_cap = (1.0 - eps) / beta;
    regime = "γ exceeds (1−ε)/β";
  } else if (algo == "coupled") {
    reject("solver.algo", "the coupled algorithm needs kind: coupled");
  } else {
    reject("solver.algo", "unknown algorithm '" + algo + "' (weak, strong, fbf, tseng, coupled)");
  }
  if (pf.solver.gamma) gamma = *pf.solver.gamma;
  if (gamma.rule == ScheduleSpec::Rule::geometric && !(gamma.ratio > 0.0))
    reject("solver.gamma", "geometric ratio must be positive");
  if (gamma.inf() < eps * (1 - 1e-12)) reject("solver.gamma", "γ falls below ε = " + num(eps));
  if (gamma.sup() > gamma_cap * (1 + 1e-12))
    reject("solver.gamma", regime + " (γ = " + num(gamma.sup()) + ", α = " + num(algo == "tseng" ? 1.0 : alpha) +
                               ", β = " + num(beta) + ", ε = " + num(eps) + ")");
  as.cfg.gamma = gamma.build();

  as.x0 = sized(pf.start, pf.dim, "start");
  for (std::size_t k = 0; k < pf.zeros.size(); ++k)
    as.cfg.tracked_zeros.push_back(sized(pf.zeros[k], pf.dim, "zeros[" + std::to_string(k) + "]"));
  if (pf.solution) as.solution = sized(pf.solution->point, pf.dim, "solution.point");
}

inline void assemble_coupled(const ProblemFile& pf, Assembly& as) {
  const auto& cat = standard_library();
  if (as.algo != "coupled") reject("solver.algo", "a coupled problem runs with algo coupled");
  if (pf.solver.gamma) reject("solver.gamma", "coupled step sizes follow from the block constants");
  CoupledProblem p;
  for (std::size_t i = 0; i < pf.primal.size(); ++i) {
    const auto& b = pf.primal[i];
    std::string key = "primal[" + std::to_string(i) + "]";
    if (b.dim < 1) reject(key + ".dim", "must be positive");
    PrimalBlock blk;
    blk.A = checked(key + ".A", [&] { return cat.set_valued(b.A, b.dim); });
    if (!blk.A.monotone() && !pf.allow_nonmonotone) reject(key + ".A", "operator is not monotone");
    if (b.C) blk.C = checked(key + ".C", [&] { return share(cat.single_valued(*b.C, b.dim)); });
    blk.s = sized(b.s, b.dim, key + ".s");
    blk.alpha = b.alpha;
    blk.chi = b.chi;
    blk.epsilon = b.epsilon;
    p.primal.push_back(std::move(blk));
  }
  for (std::size_t j = 0; j < pf.dual.size(); ++j) {
    const auto& b = pf.dual[j];
    std::string key = "dual[" + std::to_string(j) + "]";
    if (b.dim < 1) reject(key + ".dim", "must be positive");
    DualBlock blk;
    blk.B = checked(key + ".B", [&] { return cat.set_valued(b.B, b.dim); });
    if (!blk.B.monotone() && !pf.allow_nonmonotone) reject(key + ".B", "operator is not monotone");
    if (b.D) blk.D = checked(key + ".D", [&] { return share(cat.single_valued(*b.D, b.dim)); });
    blk.r = sized(b.r, b.dim, key + ".r");
    blk.beta = b.beta;
    blk.kappa = b.kappa;
    blk.delta = b.delta;
    p.dual.push_back(std::move(blk));
  }
  for (std::size_t k = 0; k < pf.couplings.size(); ++k) {
    const auto& c = pf.couplings[k];
    std::string key = "couplings[" + std::to_string(k) + "]";
    p.couplings.push_back({c.dual, c.primal, LinearMap(dense(c.matrix, key + ".matrix"))});
  }
  checked(pf.couplings.empty() ? "primal" : "couplings", [&] { p.validate(); return 0; });
  as.stage = default_stage(p);
  checked("primal", [&] { check_stage(p, as.stage); return 0; });

  Index np = p.primal_layout().total(), nd = p.dual_layout().total();
  as.dim = np + 2 * nd;
  auto lift = [&](const std::vector<double>& v, const std::string& key) {
    Vector xv = sized(v, np + nd, key);
    return KuhnTuckerPoint::lift(p, xv.head(np), xv.tail(nd)).stack();
  };
  as.x0 = lift(pf.start, "start");
  for (std::size_t k = 0; k < pf.zeros.size(); ++k)
    as.cfg.tracked_zeros.push_back(lift(pf.zeros[k], "zeros[" + std::to_string(k) + "]"));
  if (pf.solution) as.solution = sized(pf.solution->point, np + nd, "solution.point");
  as.coupled = std::move(p);
}

}  // namespace detail

// Builds every operator and runs the regime checks; throws ValidationError naming the key.
inline Assembly assemble(const ProblemFile& pf) {
  Assembly as;
  as.algo = pf.solver.algo;
  if (pf.kind == "inclusion")
    detail::assemble_inclusion(pf, as);
  else if (pf.kind == "coupled")
    detail::assemble_coupled(pf, as);
  else
    detail::reject("kind", "unknown problem kind '" + pf.kind + "'");
  detail::fill_common(pf, as);
  if (pf.solution) {
    if (!(pf.solution->tolerance > 0.0)) detail::reject("solution.tolerance", "must be positive");
    as.solution_tolerance = pf.solution->tolerance;
  }
  return as;
}

// Prefixes a validation failure with the source position of its key.
inline ValidationError locate(const ProblemFile& pf, const ValidationError& e) {
  std::string key = e.key();
  auto it = pf.where.at.find(key);
  while (it == pf.where.at.end() && !key.empty()) {
    auto cut = key.find_last_of(".[");
    key = cut == std::string::npos ? "" : key.substr(0, cut);
    it = pf.where.at.find(key);
  }
  Location at = it == pf.where.at.end() ? Location{1, 1} : it->second;
  return ValidationError(e.key(), pf.where.source + ":" + std::to_string(at.line) + ":" + std::to_string(at.column) +
                                      ": " + e.what());
}

inline void validate_problem(const ProblemFile& pf) {
  try {
    assemble(pf);
  } catch (const ValidationError& e) {
    throw locate(pf, e);
  }
}

inline ProblemFile parse_problem_text(const std::string& text, const std::string& source = "<text>") {
  ProblemFile pf = read_problem_text(text, source);
  validate_problem(pf);
  return pf;
}

// Reads, parses and validates. Throws std::ios_base::failure, ParseError or ValidationError.
inline ProblemFile parse_problem(const std::string& path) { return parse_problem_text(read_file(path), path); }

struct RunOutcome {
  ExitCode code = ExitCode::converged;
  std::string diagnostic;
  SolveResult result;
  Vector point;  // final x; (x, v*) for coupled problems
  std::optional<double> solution_error;
};

inline ExitCode exit_code(StopReason r) {
  switch (r) {
    case StopReason::converged: return ExitCode::converged;
    case StopReason::max_iterations: return ExitCode::max_iterations;
    case StopReason::stalled: return ExitCode::stalled;
  }
  return ExitCode::numerical;
}

inline RunOutcome run_problem(const ProblemFile& pf) {
  RunOutcome out;
  Assembly as;
  try {
    as = assemble(pf);
  } catch (const ValidationError& e) {
    out.code = ExitCode::invalid;
    out.diagnostic = locate(pf, e).what();
    return out;
  }
  try {
    if (as.algo == "weak" || as.algo == "strong") {
      std::function<Kernel(std::size_t, double)> kernels;
      if (as.kernel_type == "fbf" && as.B) {
        BackwardMap w = *as.W;
        SingleValuedPtr b = as.B;
        double eps = as.cfg.epsilon;
        kernels = [w, b, eps](std::size_t, double gamma) { return fbf_kernel(w, b, gamma, eps); };
      } else {
        Kernel k = as.kernel_type == "cubic_planar" ? cubic_planar_kernel(pf.kernel.reach) : base_kernel(*as.W, as.kernel_type);
        kernels = [k](std::size_t, double) { return k; };
      }
      out.result = as.algo == "weak" ? solve_weak(*as.M, kernels, as.policy, as.cfg, as.x0)
                                     : solve_strong(*as.M, kernels, as.policy, as.cfg, as.x0);
      out.point = out.result.x;
    } else if (as.algo == "fbf") {
      out.result = solve_fbf_memory(as.A, *as.B, *as.W, as.policy, as.cfg, as.x0);
      out.point = out.result.x;
    } else if (as.algo == "tseng") {
      out.result = solve_tseng(as.A, *as.B, as.cfg, as.x0);
      out.point = out.result.x;
    } else {
      const auto& p = *as.coupled;
      CoupledStage stage = as.stage;
      auto res = solve_coupled(p, [stage](std::size_t) { return stage; }, as.policy, as.cfg,
                               KuhnTuckerPoint::unstack(p, as.x0));
      out.result = std::move(res.result);
      out.point.resize(res.point.x.flat().size() + res.point.v_star.flat().size());
      out.point << res.point.x.flat(), res.point.v_star.flat();
    }
  } catch (const InfeasibleError& e) {
    out.code = ExitCode::infeasible;
    out.diagnostic = e.what();
    return out;
  } catch (const NumericalError& e) {
    out.code = ExitCode::numerical;
    out.diagnostic = e.what();
    return out;
  } catch (const Error& e) {
    out.code = ExitCode::invalid;
    out.diagnostic = e.what();
    return out;
  }
  out.code = exit_code(out.result.reason);
  out.diagnostic = out.result.diagnostic;
  if (as.solution) {
    out.solution_error = norm(out.point - *as.solution);
    if (out.code == ExitCode::converged && *out.solution_error > as.solution_tolerance) {
      out.code = ExitCode::solution_mismatch;
      out.diagnostic = "final point is " + format_double(*out.solution_error) + " from the declared solution";
    }
  }
  return out;
}

// n,residual,step_norm,theta,sigma,rho,gap_0,...
inline void write_trace_csv(std::ostream& os, const SolveResult& r, std::size_t tracked) {
  os << "n,residual,step_norm,theta,sigma,rho";
  for (std::size_t k = 0; k < tracked; ++k) os << ",gap_" << k;
  os << "\n";
  for (const auto& rec : r.trace) {
    os << rec.n << ',' << format_double(rec.residual) << ',' << format_double(rec.step_norm) << ','
       << format_double(rec.theta) << ',' << format_double(rec.sigma) << ',' << format_double(rec.rho);
    for (double g : rec.fejer_gaps) os << ',' << format_double(g);
    os << "\n";
  }
}

inline nlohmann::ordered_json summary_json(const ProblemFile& pf, const RunOutcome& out) {
  nlohmann::ordered_json j;
  j["status"] = to_string(out.code);
  j["exit_code"] = static_cast<int>(out.code);
  j["kind"] = pf.kind;
  j["algo"] = pf.solver.algo;
  j["iterations"] = out.result.iterations;
  j["stop_reason"] = out.result.trace.empty() && out.code != ExitCode::converged ? "aborted" : to_string(out.result.reason);
  std::vector<double> point(out.point.data(), out.point.data() + out.point.size());
  j["final_point"] = point;
  if (!out.result.trace.empty()) {
    j["residual"] = out.result.trace.back().residual;
    j["step_gap"] = out.result.trace.back().gap;
  }
  if (out.solution_error) j["solution_error"] = *out.solution_error;
  j["diagnostic"] = out.diagnostic;
  return j;
}

}  // namespace warpedprox::io
