#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "warpedprox/solvers.hpp"

namespace warpedprox {

// s*_i ∈ A_i x_i + C_i x_i + Σ_j L_jiᵀ v*_j, with dual blocks v*_j ∈ (B_j □ D_j)(Σ_i L_ji x_i − r_j).
struct PrimalBlock {
  SetValuedOperator A;
  SingleValuedPtr C;  // null means zero
  Vector s;
  double alpha = 1.0;    // strong monotonicity of the stage maps F_i
  double chi = 1.0;      // Lipschitz constant of F_i
  double epsilon = 0.1;
};

struct DualBlock {
  SetValuedOperator B;
  SingleValuedPtr D;  // null means zero
  Vector r;
  double beta = 1.0;     // strong monotonicity of W_j
  double kappa = 1.0;    // Lipschitz constant of W_j
  double delta = 0.1;
};

struct CouplingEntry {
  std::size_t dual = 0;
  std::size_t primal = 0;
  LinearMap L;  // primal block → dual block
};

struct CoupledProblem {
  std::vector<PrimalBlock> primal;
  std::vector<DualBlock> dual;
  std::vector<CouplingEntry> couplings;

  double mu(std::size_t i) const { return primal.at(i).C ? primal[i].C->lipschitz() : 0.0; }
  double nu(std::size_t j) const { return dual.at(j).D ? dual[j].D->lipschitz() : 0.0; }

  BlockLayout primal_layout() const {
    std::vector<Index> d;
    for (const auto& b : primal) d.push_back(b.A.dim());
    return BlockLayout(d);
  }
  BlockLayout dual_layout() const {
    std::vector<Index> d;
    for (const auto& b : dual) d.push_back(b.B.dim());
    return BlockLayout(d);
  }
  // (x, y, v*) ∈ 𝒴 × 𝒵 × 𝒵
  BlockLayout stacked_layout() const { return primal_layout().concat(dual_layout()).concat(dual_layout()); }

  void validate() const {
    if (primal.empty() || dual.empty()) throw ConfigError("coupled problem: need at least one primal and one dual block");
    for (std::size_t i = 0; i < primal.size(); ++i) {
      const auto& b = primal[i];
      std::string tag = "primal block " + std::to_string(i);
      if (b.s.size() != b.A.dim()) throw DimensionError(tag + ": s has the wrong dimension");
      if (b.C && (b.C->dim() != b.A.dim() || !b.C->monotone())) throw ConfigError(tag + ": C must be monotone on the block");
      if (!(b.alpha > 0.0) || !(b.chi >= b.alpha)) throw ConfigError(tag + ": need 0 < α <= χ");
      if (!(b.epsilon > 0.0 && b.epsilon < b.alpha / (mu(i) + 1.0)))
        throw ConfigError(tag + ": ε_i must lie in ]0, α_i/(μ_i+1)[");
    }
    for (std::size_t j = 0; j < dual.size(); ++j) {
      const auto& b = dual[j];
      std::string tag = "dual block " + std::to_string(j);
      if (b.r.size() != b.B.dim()) throw DimensionError(tag + ": r has the wrong dimension");
      if (b.D && (b.D->dim() != b.B.dim() || !b.D->monotone())) throw ConfigError(tag + ": D must be monotone on the block");
      if (!(b.beta > 0.0) || !(b.kappa >= b.beta)) throw ConfigError(tag + ": need 0 < β <= κ");
      if (!(b.delta > 0.0 && b.delta < b.beta / (nu(j) + 1.0)))
        throw ConfigError(tag + ": δ_j must lie in ]0, β_j/(ν_j+1)[");
    }
    std::map<std::pair<std::size_t, std::size_t>, int> seen;
    for (const auto& c : couplings) {
      if (c.dual >= dual.size() || c.primal >= primal.size()) throw ConfigError("coupling refers to a missing block");
      if (seen[{c.dual, c.primal}]++) throw ConfigError("coupling listed twice for the same block pair");
      if (c.L.rows() != dual[c.dual].B.dim() || c.L.cols() != primal[c.primal].A.dim())
        throw DimensionError("coupling (" + std::to_string(c.dual) + "," + std::to_string(c.primal) +
                             ") has the wrong shape");
    }
  }

  // (Lx)_j = Σ_i L_ji x_i, summed in primal index order.
  Vector apply_L(const Vector& x) const {
    auto pl = primal_layout();
    auto dl = dual_layout();
    Vector out = Vector::Zero(dl.total());
    for (const auto& c : ordered_couplings())
      out.segment(dl.offset(c->dual), dl.dim(c->dual)) += c->L.apply(x.segment(pl.offset(c->primal), pl.dim(c->primal)));
    return out;
  }

  // (Lᵀv*)_i = Σ_j L_jiᵀ v*_j, summed in dual index order.
  Vector apply_L_adjoint(const Vector& v) const {
    auto pl = primal_layout();
    auto dl = dual_layout();
    Vector out = Vector::Zero(pl.total());
    auto cs = ordered_couplings();
    std::stable_sort(cs.begin(), cs.end(), [](auto* a, auto* b) {
      return std::tie(a->primal, a->dual) < std::tie(b->primal, b->dual);
    });
    for (const auto& c : cs)
      out.segment(pl.offset(c->primal), pl.dim(c->primal)) +=
          c->L.adjoint_apply(v.segment(dl.offset(c->dual), dl.dim(c->dual)));
    return out;
  }

  Matrix coupling_matrix() const {
    auto pl = primal_layout();
    auto dl = dual_layout();
    Matrix m = Matrix::Zero(dl.total(), pl.total());
    for (const auto& c : couplings) m.block(dl.offset(c.dual), pl.offset(c.primal), c.L.rows(), c.L.cols()) = c.L.matrix();
    return m;
  }

 private:
  std::vector<const CouplingEntry*> ordered_couplings() const {
    std::vector<const CouplingEntry*> cs;
    for (const auto& c : couplings) cs.push_back(&c);
    std::stable_sort(cs.begin(), cs.end(),
                     [](auto* a, auto* b) { return std::tie(a->dual, a->primal) < std::tie(b->dual, b->primal); });
    return cs;
  }
};

// One primal and one dual block.
inline CoupledProblem single_block_problem(const SetValuedOperator& a, const SetValuedOperator& b, const LinearMap& l,
                                           const Vector& s, const Vector& r) {
  CoupledProblem p;
  p.primal.push_back({a, nullptr, s});
  p.dual.push_back({b, nullptr, r});
  p.couplings.push_back({0, 0, l});
  p.validate();
  return p;
}

struct KuhnTuckerPoint {
  ProductVector x;
  ProductVector y;
  ProductVector v_star;

  Vector stack() const {
    Vector out(x.flat().size() + y.flat().size() + v_star.flat().size());
    out << x.flat(), y.flat(), v_star.flat();
    return out;
  }

  static KuhnTuckerPoint unstack(const CoupledProblem& p, const Vector& u) {
    auto pl = p.primal_layout();
    auto dl = p.dual_layout();
    if (u.size() != pl.total() + 2 * dl.total()) throw DimensionError("KuhnTuckerPoint: stacked size mismatch");
    return {ProductVector(pl, u.head(pl.total())), ProductVector(dl, u.segment(pl.total(), dl.total())),
            ProductVector(dl, u.tail(dl.total()))};
  }

  // (x, Lx − r, v*)
  static KuhnTuckerPoint lift(const CoupledProblem& p, const Vector& x, const Vector& v_star) {
    auto pl = p.primal_layout();
    auto dl = p.dual_layout();
    Vector r(dl.total());
    for (std::size_t j = 0; j < p.dual.size(); ++j) r.segment(dl.offset(j), dl.dim(j)) = p.dual[j].r;
    return {ProductVector(pl, x), ProductVector(dl, p.apply_L(x) - r), ProductVector(dl, v_star)};
  }
};

// M(x, y, v*) = (−s* + Ax + Cx + Lᵀv*) × (By + Dy − v*) × {r − Lx + y}, split into the
// block-diagonal resolvent part and the forward part (Cx + Lᵀv*, Dy − v*, y − Lx).
struct KuhnTuckerOperator {
  MDecomposition M;
  BlockLayout layout;
  double skew_norm = 0.0;  // ‖S‖ for S(x, y, v*) = (Lᵀv*, −v*, y − Lx)
};

inline KuhnTuckerOperator build_kt_operator(const CoupledProblem& p) {
  p.validate();
  auto pl = p.primal_layout();
  auto dl = p.dual_layout();
  Index np = pl.total(), nd = dl.total();

  std::vector<SetValuedOperator> factors;
  for (const auto& b : p.primal) factors.push_back(offset(b.A, -b.s));
  for (const auto& b : p.dual) factors.push_back(b.B);
  for (const auto& b : p.dual) factors.push_back(constant_operator(b.r));

  Matrix l = p.coupling_matrix();
  Matrix s = Matrix::Zero(np + 2 * nd, np + 2 * nd);
  s.block(0, np + nd, np, nd) = l.transpose();
  s.block(np, np + nd, nd, nd) = -Matrix::Identity(nd, nd);
  s.block(np + nd, 0, nd, np) = -l;
  s.block(np + nd, np, nd, nd) = Matrix::Identity(nd, nd);
  double skew_norm = LinearMap(s).norm();

  double lip = 0.0;
  for (std::size_t i = 0; i < p.primal.size(); ++i) lip = std::max(lip, p.mu(i));
  for (std::size_t j = 0; j < p.dual.size(); ++j) lip = std::max(lip, p.nu(j));
  lip += skew_norm;

  auto problem = std::make_shared<const CoupledProblem>(p);
  auto forward = [problem, pl, dl, np, nd](const Vector& u) -> Vector {
    Vector x = u.head(np), y = u.segment(np, nd), v = u.tail(nd);
    Vector out(u.size());
    Vector ltv = problem->apply_L_adjoint(v);
    for (std::size_t i = 0; i < problem->primal.size(); ++i) {
      auto seg = x.segment(pl.offset(i), pl.dim(i));
      Vector ci = problem->primal[i].C ? (*problem->primal[i].C)(seg) : Vector(Vector::Zero(seg.size()));
      out.segment(pl.offset(i), pl.dim(i)) = ci + ltv.segment(pl.offset(i), pl.dim(i));
    }
    for (std::size_t j = 0; j < problem->dual.size(); ++j) {
      auto seg = y.segment(dl.offset(j), dl.dim(j));
      Vector dj = problem->dual[j].D ? (*problem->dual[j].D)(seg) : Vector(Vector::Zero(seg.size()));
      out.segment(np + dl.offset(j), dl.dim(j)) = dj - v.segment(dl.offset(j), dl.dim(j));
    }
    out.tail(nd) = y - problem->apply_L(x);
    return out;
  };
  auto fwd = share(SingleValuedOperator(np + 2 * nd, forward, lip, true, "kuhn_tucker_forward"));
  return {MDecomposition(SetValuedOperator::product(std::move(factors)), fwd), p.stacked_layout(), skew_norm};
}

// Stage data for one iteration: step sizes and the invertible maps F_i, W_j.
struct CoupledStage {
  std::vector<double> gamma;
  std::vector<double> tau;
  std::vector<BackwardMap> F;
  std::vector<BackwardMap> W;
};

inline double coupled_gamma_bound(double alpha, double eps, double lip) {
  return lip > 0.0 ? (alpha - eps) / lip : std::numeric_limits<double>::infinity();
}

// Identity stage maps, steps at 0.9 of their upper bounds (1 where unbounded).
inline CoupledStage default_stage(const CoupledProblem& p) {
  CoupledStage st;
  for (std::size_t i = 0; i < p.primal.size(); ++i) {
    const auto& b = p.primal[i];
    double ub = coupled_gamma_bound(b.alpha, b.epsilon, p.mu(i));
    st.gamma.push_back(std::isfinite(ub) ? std::max(b.epsilon, 0.9 * ub) : std::max(b.epsilon, 1.0));
    st.F.push_back(BackwardMap::identity(b.A.dim(), b.alpha));
  }
  for (std::size_t j = 0; j < p.dual.size(); ++j) {
    const auto& b = p.dual[j];
    double ub = coupled_gamma_bound(b.beta, b.delta, p.nu(j));
    st.tau.push_back(std::isfinite(ub) ? std::max(b.delta, 0.9 * ub) : std::max(b.delta, 1.0));
    st.W.push_back(BackwardMap::identity(b.B.dim(), b.beta));
  }
  return st;
}

inline void check_stage(const CoupledProblem& p, const CoupledStage& st) {
  if (st.gamma.size() != p.primal.size() || st.F.size() != p.primal.size() || st.tau.size() != p.dual.size() ||
      st.W.size() != p.dual.size())
    throw ConfigError("coupled stage: block counts do not match the problem");
  const double slack = 1e-12;
  for (std::size_t i = 0; i < p.primal.size(); ++i) {
    const auto& b = p.primal[i];
    std::string tag = "primal block " + std::to_string(i);
    if (st.F[i].dim() != b.A.dim()) throw DimensionError(tag + ": F has the wrong dimension");
    if (st.F[i].strong_monotonicity() < b.alpha * (1 - slack) || st.F[i].lipschitz() > b.chi * (1 + slack))
      throw ConfigError(tag + ": F does not meet the declared constants α_i, χ_i");
    if (!(st.gamma[i] >= b.epsilon)) throw ConfigError(tag + ": γ_i below ε_i");
    if (st.gamma[i] > coupled_gamma_bound(b.alpha, b.epsilon, p.mu(i)) * (1 + slack))
      throw ConfigError(tag + ": γ_i exceeds (α_i−ε_i)/μ_i");
  }
  for (std::size_t j = 0; j < p.dual.size(); ++j) {
    const auto& b = p.dual[j];
    std::string tag = "dual block " + std::to_string(j);
    if (st.W[j].dim() != b.B.dim()) throw DimensionError(tag + ": W has the wrong dimension");
    if (st.W[j].strong_monotonicity() < b.beta * (1 - slack) || st.W[j].lipschitz() > b.kappa * (1 + slack))
      throw ConfigError(tag + ": W does not meet the declared constants β_j, κ_j");
    if (!(st.tau[j] >= b.delta)) throw ConfigError(tag + ": τ_j below δ_j");
    if (st.tau[j] > coupled_gamma_bound(b.beta, b.delta, p.nu(j)) * (1 + slack))
      throw ConfigError(tag + ": τ_j exceeds (β_j−δ_j)/ν_j");
  }
}

// (x, y, v*) ↦ ((γ_i^{-1}F_i x_i − C_i x_i)_i − Lᵀv*, (τ_j^{-1}W_j y_j − D_j y_j)_j + v*, Lx − y + v*)
inline Kernel coupled_kernel(const CoupledProblem& p, const KuhnTuckerOperator& kt, const CoupledStage& st) {
  check_stage(p, st);
  std::vector<BackwardMap> base;
  double alpha = 1.0, eta = 1.0;
  for (std::size_t i = 0; i < p.primal.size(); ++i) {
    base.push_back(st.F[i].scaled(1.0 / st.gamma[i]));
    alpha = std::min(alpha, st.F[i].strong_monotonicity() / st.gamma[i] - p.mu(i));
    eta = std::max(eta, st.F[i].lipschitz() / st.gamma[i] + p.mu(i));
  }
  for (std::size_t j = 0; j < p.dual.size(); ++j) {
    base.push_back(st.W[j].scaled(1.0 / st.tau[j]));
    alpha = std::min(alpha, st.W[j].strong_monotonicity() / st.tau[j] - p.nu(j));
    eta = std::max(eta, st.W[j].lipschitz() / st.tau[j] + p.nu(j));
  }
  for (const auto& b : p.dual) base.push_back(BackwardMap::identity(b.B.dim()));
  if (!(alpha > 0.0)) throw ConfigError("coupled kernel: stage is not strongly monotone");
  return Kernel(std::move(base), alpha, eta + kt.skew_norm, "coupled", kt.M.forward_part, 1.0);
}

using StageSchedule = std::function<CoupledStage(std::size_t n)>;

struct CoupledResult {
  KuhnTuckerPoint point;
  SolveResult result;
};

namespace detail {
inline SolverConfig coupled_config(const SolverConfig& cfg) {
  SolverConfig c = cfg;
  c.gamma = constant_schedule(1.0);  // step sizes live inside the kernel
  return c;
}
}  // namespace detail

// Shipping path: the generic cut iteration on the stacked space with the coupled kernel.
inline CoupledResult solve_coupled(const CoupledProblem& p, const StageSchedule& stages, const PerturbationPolicy& policy,
                                   const SolverConfig& cfg, const KuhnTuckerPoint& start) {
  auto kt = build_kt_operator(p);
  auto kernels = [&](std::size_t n, double) { return coupled_kernel(p, kt, stages(n)); };
  auto res = solve_weak(kt.M, kernels, policy, detail::coupled_config(cfg), start.stack());
  return {KuhnTuckerPoint::unstack(p, res.x), std::move(res)};
}

// Blockwise transcription: per-i (l*, a, o*), per-j (t*, b, f*, c), assembled (a*, b*, c*),
// then θ, σ and ρ = λθ/σ when θ < 0.
inline CoupledResult solve_coupled_literal(const CoupledProblem& p, const StageSchedule& stages,
                                           const PerturbationPolicy& policy, const SolverConfig& cfg,
                                           const KuhnTuckerPoint& start) {
  p.validate();
  auto pl = p.primal_layout();
  auto dl = p.dual_layout();
  Index np = pl.total(), nd = dl.total();

  auto oracle = [&](std::size_t n, double, const Vector& pt) {
    CoupledStage st = stages(n);
    check_stage(p, st);
    Vector xt = pt.head(np), yt = pt.segment(np, nd), vt = pt.tail(nd);
    Vector ltv = p.apply_L_adjoint(vt);
    Vector lx = p.apply_L(xt);

    Vector a(np), o(np);
    for (std::size_t i = 0; i < p.primal.size(); ++i) {
      const auto& blk = p.primal[i];
      const BackwardMap& f = st.F[i];
      double g = st.gamma[i];
      Vector xi = xt.segment(pl.offset(i), pl.dim(i));
      Vector cx = blk.C ? (*blk.C)(xi) : Vector(Vector::Zero(xi.size()));
      Vector l_star = f(xi) - g * cx - g * ltv.segment(pl.offset(i), pl.dim(i));
      Vector ai = f.solve(g, blk.A, l_star + g * blk.s, &xi);
      Vector ca = blk.C ? (*blk.C)(ai) : Vector(Vector::Zero(ai.size()));
      a.segment(pl.offset(i), pl.dim(i)) = ai;
      o.segment(pl.offset(i), pl.dim(i)) = (l_star - f(ai)) / g + ca;
    }
    Vector b(nd), fs(nd), c(nd);
    for (std::size_t j = 0; j < p.dual.size(); ++j) {
      const auto& blk = p.dual[j];
      const BackwardMap& w = st.W[j];
      double t = st.tau[j];
      Vector yj = yt.segment(dl.offset(j), dl.dim(j));
      Vector vj = vt.segment(dl.offset(j), dl.dim(j));
      Vector dy = blk.D ? (*blk.D)(yj) : Vector(Vector::Zero(yj.size()));
      Vector t_star = w(yj) - t * dy + t * vj;
      Vector bj = w.solve(t, blk.B, t_star, &yj);
      Vector db = blk.D ? (*blk.D)(bj) : Vector(Vector::Zero(bj.size()));
      b.segment(dl.offset(j), dl.dim(j)) = bj;
      fs.segment(dl.offset(j), dl.dim(j)) = (t_star - w(bj)) / t + db;
      c.segment(dl.offset(j), dl.dim(j)) = lx.segment(dl.offset(j), dl.dim(j)) - yj + vj - blk.r;
    }
    Vector a_star = o + p.apply_L_adjoint(c);
    Vector b_star = fs - c;
    Vector c_star(nd);
    Vector la = p.apply_L(a);
    for (std::size_t j = 0; j < p.dual.size(); ++j)
      c_star.segment(dl.offset(j), dl.dim(j)) =
          p.dual[j].r + b.segment(dl.offset(j), dl.dim(j)) - la.segment(dl.offset(j), dl.dim(j));

    Vector q(np + 2 * nd), q_star(np + 2 * nd);
    q << a, b, c;
    q_star << a_star, b_star, c_star;
    return GraphPoint(std::move(q), std::move(q_star));
  };

  auto update = [&](std::size_t, double, double lambda, const Vector& u, const GraphPoint& gp) {
    const Vector& q = gp.y();
    const Vector& qs = gp.y_star();
    double theta = 0.0, sigma = 0.0;
    for (std::size_t i = 0; i < p.primal.size(); ++i) {
      Index o = pl.offset(i), d = pl.dim(i);
      theta = inner_accumulate(theta, q.segment(o, d) - u.segment(o, d), qs.segment(o, d));
      sigma = inner_accumulate(sigma, qs.segment(o, d), qs.segment(o, d));
    }
    for (std::size_t j = 0; j < p.dual.size(); ++j) {
      Index o = np + dl.offset(j), d = dl.dim(j);
      theta = inner_accumulate(theta, q.segment(o, d) - u.segment(o, d), qs.segment(o, d));
      sigma = inner_accumulate(sigma, qs.segment(o, d), qs.segment(o, d));
    }
    for (std::size_t j = 0; j < p.dual.size(); ++j) {
      Index o = np + nd + dl.offset(j), d = dl.dim(j);
      theta = inner_accumulate(theta, q.segment(o, d) - u.segment(o, d), qs.segment(o, d));
      sigma = inner_accumulate(sigma, qs.segment(o, d), qs.segment(o, d));
    }
    if (theta < 0.0 && sigma == 0.0) throw NumericalError("coupled iteration: θ < 0 with σ = 0");
    double rho = theta < 0.0 ? lambda * theta / sigma : 0.0;
    return CutStep{u + rho * qs, theta, sigma, rho};
  };

  auto res = detail::drive(detail::coupled_config(cfg), policy, start.stack(), oracle, update);
  return {KuhnTuckerPoint::unstack(p, res.x), std::move(res)};
}

struct KuhnTuckerResiduals {
  double primal = 0.0;      // max_i ‖x_i − J_{A_i}(x_i + s_i − (Lᵀv*)_i − C_i x_i)‖
  double dual = 0.0;        // max_j ‖y_j − J_{B_j}(y_j + v*_j − D_j y_j)‖
  double constraint = 0.0;  // ‖Lx − r − y‖
};

inline KuhnTuckerResiduals kt_residuals(const CoupledProblem& p, const KuhnTuckerPoint& pt) {
  KuhnTuckerResiduals out;
  Vector ltv = p.apply_L_adjoint(pt.v_star.flat());
  auto pl = p.primal_layout();
  for (std::size_t i = 0; i < p.primal.size(); ++i) {
    const auto& b = p.primal[i];
    Vector xi = pt.x.block(i);
    Vector cx = b.C ? (*b.C)(xi) : Vector(Vector::Zero(xi.size()));
    Vector probe = xi + b.s - ltv.segment(pl.offset(i), pl.dim(i)) - cx;
    out.primal = std::max(out.primal, norm(xi - b.A.resolvent(1.0, probe)));
  }
  Vector r(pt.y.flat().size());
  auto dl = p.dual_layout();
  for (std::size_t j = 0; j < p.dual.size(); ++j) {
    const auto& b = p.dual[j];
    Vector yj = pt.y.block(j);
    Vector dy = b.D ? (*b.D)(yj) : Vector(Vector::Zero(yj.size()));
    out.dual = std::max(out.dual, norm(yj - b.B.resolvent(1.0, yj + pt.v_star.block(j) - dy)));
    r.segment(dl.offset(j), dl.dim(j)) = b.r;
  }
  out.constraint = norm(p.apply_L(pt.x.flat()) - r - pt.y.flat());
  return out;
}

}  // namespace warpedprox
