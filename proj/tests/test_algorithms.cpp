#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "support/oracles.hpp"
#include "warpedprox/catalog.hpp"
#include "warpedprox/coupled.hpp"
#include "warpedprox/solvers.hpp"
#include "warpedprox/testbed.hpp"

using namespace warpedprox;

namespace {

SolverConfig config(std::size_t max_iter, double tol) {
  SolverConfig cfg;
  cfg.max_iter = max_iter;
  cfg.tol_residual = tol;
  cfg.tol_step = tol;
  return cfg;
}

// A monotone affine B on a box, zero on the boundary at (1, 0.3).
struct PlanarVi {
  Vector lo = make_vector({0, 0}), hi = make_vector({1, 1});
  Matrix b = (Matrix(2, 2) << 0.2, 1, -1, 0.2).finished();
  Vector off = make_vector({-1, 0.94});
};

StageSchedule fixed_stage(const CoupledProblem& p) {
  auto st = default_stage(p);
  return [st](std::size_t) { return st; };
}

}  // namespace

TEST(ApplyPolicy, Examples) {
  std::vector<Vector> h{make_vector({1, 0}), make_vector({2, 0})};
  EXPECT_EQ(apply_policy(NoPerturbation{}, h, 3), make_vector({2, 0}));
  std::vector<Vector> h0{make_vector({0, 0}), make_vector({2, 0})};
  EXPECT_EQ(apply_policy(InertialPerturbation{constant_schedule(0.5)}, h0, 1), make_vector({3, 0}));
  EXPECT_TRUE(apply_policy(fixed_memory({-0.3, 1.3}), h, 1).isApprox(make_vector({2.3, 0})));
  auto add = AdditivePerturbation{[](std::size_t n) { return make_vector({1.0 / (n + 1), 0}); }};
  EXPECT_EQ(apply_policy(add, h, 1), make_vector({2.5, 0}));
}

TEST(ApplyPolicy, ShortHistoryRepeatsTheStart) {
  std::vector<Vector> h{make_vector({2, 0})};
  EXPECT_EQ(apply_policy(InertialPerturbation{constant_schedule(0.5)}, h, 0), make_vector({2, 0}));
  EXPECT_EQ(apply_policy(fixed_memory({-0.3, 1.3}), h, 0), make_vector({2, 0}));
}

TEST(ApplyPolicy, Errors) {
  std::vector<Vector> h{make_vector({1, 0}), make_vector({2, 0})};
  EXPECT_THROW(apply_policy(fixed_memory({0.5, 0.6}), h, 1), ConfigError);
  EXPECT_THROW(apply_policy(NoPerturbation{}, std::vector<Vector>{}, 0), ConfigError);
}

TEST(SolveWeak, HalvingRecursion) {
  MDecomposition m(scaled_identity_operator(2, 1.0));
  auto res = solve_weak(m, identity_kernel(2), NoPerturbation{}, config(20, 1e-14), make_vector({1, 1}));
  ASSERT_EQ(res.trace.size(), 20u);
  for (const auto& rec : res.trace) {
    double scale = std::ldexp(1.0, -static_cast<int>(rec.n));
    EXPECT_EQ(rec.x, make_vector({scale, scale}));
    EXPECT_EQ(rec.y, make_vector({scale / 2, scale / 2}));
  }
  EXPECT_EQ(res.reason, StopReason::max_iterations);
  EXPECT_LE(res.x.cwiseAbs().maxCoeff(), 1e-6);
}

TEST(SolveWeak, StartAtZeroStopsImmediately) {
  MDecomposition m(box_cone(Vector::Zero(2), Vector::Ones(2)));
  Vector x0 = make_vector({0.4, 1.0});
  auto res = solve_weak(m, identity_kernel(2), NoPerturbation{}, config(100, 1e-12), x0);
  EXPECT_TRUE(res.converged());
  EXPECT_EQ(res.iterations, 0u);
  EXPECT_EQ(res.x, x0);
}

TEST(SolveWeak, BoxWithRotationMatchesGridOracle) {
  PlanarVi p;
  auto b = share(SingleValuedOperator::affine(p.b, p.off));
  MDecomposition m(box_cone(p.lo, p.hi), b);
  double eps = 0.1, gamma = 0.8 * (1 - eps) / b->lipschitz();
  auto k = fbf_kernel(BackwardMap::identity(2), b, gamma, eps);
  auto cfg = config(10000, 1e-11);
  cfg.gamma = constant_schedule(gamma);
  cfg.epsilon = eps;
  auto res = solve_weak(m, k, NoPerturbation{}, cfg, make_vector({-2, 3}));
  ASSERT_TRUE(res.converged()) << res.diagnostic;
  Vector grid = oracle::planar_vi_grid(p.lo, p.hi, p.b, p.off, 1e-9);
  EXPECT_LE(norm(res.x - grid), 1e-6);
  EXPECT_LE(norm(res.x - make_vector({1, 0.3})), 1e-8);
}

TEST(SolveWeak, FejerMonotoneAndCutsContainTheZero) {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    auto inst = box_affine_instance(seed, 4);
    auto b = share(SingleValuedOperator::affine(inst.matrix, inst.offset));
    MDecomposition m(box_cone(inst.lower, inst.upper), b);
    double eps = 0.05, gamma = default_fbf_gamma(1.0, b->lipschitz(), eps);
    auto cfg = config(3000, 1e-9);
    cfg.gamma = constant_schedule(gamma);
    cfg.epsilon = eps;
    cfg.tracked_zeros = {inst.zero};
    auto res = solve_weak(m, fbf_kernel(BackwardMap::identity(4), b, gamma, eps), NoPerturbation{}, cfg, inst.start);
    for (std::size_t n = 1; n < res.trace.size(); ++n)
      EXPECT_LE(res.trace[n].fejer_gaps[0], res.trace[n - 1].fejer_gaps[0] + 1e-10);
    for (const auto& rec : res.trace) EXPECT_LE((inst.zero - rec.y).dot(rec.y_star), 1e-10);
  }
}

TEST(SolveWeak, RejectsNonMonotoneAndNonUniformKernels) {
  Matrix reflect = -2.0 * Matrix::Identity(2, 2);
  MDecomposition bad(linear_operator(reflect));
  EXPECT_THROW(solve_weak(bad, identity_kernel(2), NoPerturbation{}, config(10, 1e-8), make_vector({1, 1})), ConfigError);
  auto cfg = config(10, 1e-8);
  cfg.kernel_alpha_floor = 2.0;
  MDecomposition m(scaled_identity_operator(2, 1.0));
  EXPECT_THROW(solve_weak(m, identity_kernel(2), NoPerturbation{}, cfg, make_vector({1, 1})), ConfigError);
}

TEST(SolveStrong, ProjectionOntoAxis) {
  Matrix e(1, 2);
  e << 1, 0;
  MDecomposition m(affine_subspace_cone(e, make_vector({0})));
  Vector x0 = make_vector({3, 4});
  auto res = solve_strong(m, identity_kernel(2), NoPerturbation{}, config(100, 1e-12), x0);
  ASSERT_TRUE(res.converged());
  EXPECT_LE(norm(res.x - make_vector({0, 4})), 1e-6);
  auto again = solve_strong(m, identity_kernel(2), NoPerturbation{}, config(100, 1e-12), make_vector({0, 4}));
  EXPECT_EQ(again.iterations, 0u);
}

TEST(SolveStrong, BoxWithRotationReachesTheUniqueZero) {
  PlanarVi p;
  auto b = share(SingleValuedOperator::affine(p.b, p.off));
  MDecomposition m(box_cone(p.lo, p.hi), b);
  double eps = 0.1, gamma = 0.8 * (1 - eps) / b->lipschitz();
  auto cfg = config(20000, 1e-10);
  cfg.gamma = constant_schedule(gamma);
  cfg.epsilon = eps;
  Vector x0 = make_vector({-2, 3});
  auto res = solve_strong(m, fbf_kernel(BackwardMap::identity(2), b, gamma, eps), NoPerturbation{}, cfg, x0);
  ASSERT_TRUE(res.converged()) << res.diagnostic;
  // Z is a single point, so proj_Z x0 is the grid oracle's zero.
  EXPECT_LE(norm(res.x - oracle::planar_vi_grid(p.lo, p.hi, p.b, p.off, 1e-9)), 1e-6);
  for (std::size_t n = 1; n < res.trace.size(); ++n)
    EXPECT_GE(norm(x0 - res.trace[n].x), norm(x0 - res.trace[n - 1].x) - 1e-10);
}

TEST(SolveStrong, InfeasibleCutsAbort) {
  // A = −2·Id is not monotone; the cut it produces excludes the Haugazeau region.
  MDecomposition m(linear_operator(-2.0 * Matrix::Identity(1, 1)));
  auto cfg = config(10, 1e-12);
  cfg.require_monotone = false;
  EXPECT_THROW(solve_strong(m, identity_kernel(1), NoPerturbation{}, cfg, make_vector({1})), InfeasibleError);
}

TEST(SolveTseng, IntervalExample) {
  auto a = box_cone(make_vector({1}), make_vector({2}));
  auto b = SingleValuedOperator::affine(Matrix::Identity(1, 1), make_vector({-3}));
  auto cfg = config(1000, 1e-12);
  cfg.gamma = constant_schedule(0.5);
  cfg.epsilon = 0.1;
  auto res = solve_tseng(a, b, cfg, make_vector({0}));
  ASSERT_TRUE(res.converged());
  EXPECT_NEAR(res.x[0], 2.0, 1e-10);
}

TEST(SolveTseng, ZeroForwardPartIsOneProximalStep) {
  auto a = box_cone(make_vector({1}), make_vector({2}));
  auto cfg = config(10, 1e-12);
  cfg.gamma = constant_schedule(0.5);
  auto res = solve_tseng(a, SingleValuedOperator::zero(1), cfg, make_vector({5}));
  ASSERT_TRUE(res.converged());
  EXPECT_EQ(res.iterations, 1u);
  EXPECT_EQ(res.x, make_vector({2}));
}

TEST(SolveTseng, AgreesWithKernelFormAndMemoryForm) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto inst = box_affine_instance(seed, 3);
    auto a = box_cone(inst.lower, inst.upper);
    auto b = share(SingleValuedOperator::affine(inst.matrix, inst.offset));
    double eps = 0.05, gamma = default_tseng_gamma(b->lipschitz(), eps);
    auto cfg = config(200, 1e-300);
    cfg.gamma = constant_schedule(gamma);
    cfg.epsilon = eps;
    auto direct = solve_tseng(a, *b, cfg, inst.start);

    auto kcfg = cfg;
    kcfg.relaxation_rule = tseng_relaxation(eps);
    auto kernel_form =
        solve_weak(MDecomposition(a, b), fbf_kernel(BackwardMap::identity(3), b, gamma, eps), NoPerturbation{}, kcfg, inst.start);
    auto memory_form = solve_fbf_memory(a, *b, BackwardMap::identity(3), fixed_memory({1.0}), kcfg, inst.start);
    // A run that hits an exact zero stops early; past that point its iterate stays put.
    auto at = [](const SolveResult& r, std::size_t n) -> const Vector& {
      return n < r.trace.size() ? r.trace[n].x : r.x;
    };
    std::size_t len = std::max({direct.trace.size(), kernel_form.trace.size(), memory_form.trace.size()});
    for (std::size_t n = 0; n < len; ++n) {
      EXPECT_LE(norm(at(direct, n) - at(kernel_form, n)), 1e-10) << "seed " << seed << " n " << n;
      EXPECT_LE(norm(at(direct, n) - at(memory_form, n)), 1e-10) << "seed " << seed << " n " << n;
    }
  }
}

TEST(SolveFbfMemory, ZeroForwardPartProjectsInOneStep) {
  auto a = box_cone(Vector::Zero(3), Vector::Ones(3));
  Vector x0 = make_vector({2, -1, 0.5});
  auto res = solve_fbf_memory(a, SingleValuedOperator::zero(3), BackwardMap::identity(3), NoPerturbation{},
                              config(10, 1e-12), x0);
  ASSERT_TRUE(res.converged());
  EXPECT_EQ(res.x, make_vector({1, 0, 0.5}));
}

TEST(SolveFbfMemory, MemoryAndInertiaReachTheSameZero) {
  Matrix mat(2, 2);
  mat << 1.0, 0.5, -0.5, 0.4;
  auto b = SingleValuedOperator::affine(mat, make_vector({0.3, -0.8}));
  auto a = box_cone(make_vector({-1, -1}), make_vector({1, 1}));
  double eps = 0.05;
  auto cfg = config(20000, 1e-11);
  cfg.gamma = constant_schedule(default_fbf_gamma(1.0, b.lipschitz(), eps));
  cfg.epsilon = eps;
  Vector x0 = make_vector({3, -2});
  auto plain = solve_fbf_memory(a, b, BackwardMap::identity(2), NoPerturbation{}, cfg, x0);
  auto memory = solve_fbf_memory(a, b, BackwardMap::identity(2), fixed_memory({-0.3, 1.3}), cfg, x0);
  auto inertial = solve_fbf_memory(a, b, BackwardMap::identity(2), InertialPerturbation{constant_schedule(0.3)}, cfg, x0);
  ASSERT_TRUE(plain.converged());
  ASSERT_TRUE(memory.converged());
  ASSERT_TRUE(inertial.converged());
  EXPECT_LE(norm(memory.x - plain.x), 1e-6);
  EXPECT_LE(norm(inertial.x - plain.x), 1e-6);
  EXPECT_LE(oracle::vi_residual(plain.x, make_vector({-1, -1}), make_vector({1, 1}), mat, make_vector({0.3, -0.8})), 1e-9);
  EXPECT_LE(memory.trace.back().perturbation, 1e-9);
}

TEST(KuhnTucker, ScalarExampleIsAZero) {
  auto p = single_block_problem(scaled_identity_operator(1, 1.0), scaled_identity_operator(1, 1.0),
                                LinearMap(Matrix::Constant(1, 1, 1.0)), make_vector({0}), make_vector({2}));
  auto kt = build_kt_operator(p);
  Vector u = make_vector({1, -1, -1});
  // 0 ∈ Au + Fu  ⇔  u = J_A(u − Fu)
  Vector fu = (*kt.M.forward_part)(u);
  EXPECT_LE(norm(kt.M.set_part.resolvent(1.0, u - fu) - u), 1e-15);
  auto lifted = KuhnTuckerPoint::lift(p, make_vector({1}), make_vector({-1}));
  EXPECT_EQ(lifted.stack(), u);
  auto r = kt_residuals(p, lifted);
  EXPECT_LE(std::max({r.primal, r.dual, r.constraint}), 1e-15);
}

TEST(KuhnTucker, ForwardPartIsSkewWithoutCocoercivePieces) {
  std::mt19937_64 rng(21);
  CoupledProblem p;
  p.primal.push_back({l1_subdifferential(2, 1.0), nullptr, make_vector({0, 0})});
  p.primal.push_back({l1_subdifferential(1, 1.0), nullptr, make_vector({0})});
  p.dual.push_back({box_cone(-Vector::Ones(2), Vector::Ones(2)), nullptr, make_vector({0, 0})});
  p.couplings.push_back({0, 0, LinearMap(oracle::gaussian_matrix(rng, 2, 2))});
  p.couplings.push_back({0, 1, LinearMap(oracle::gaussian_matrix(rng, 2, 1))});
  auto kt = build_kt_operator(p);
  for (int i = 0; i < 1000; ++i) {
    Vector u = oracle::gaussian(rng, kt.layout.total(), 2.0);
    EXPECT_NEAR(u.dot((*kt.M.forward_part)(u)), 0.0, 1e-12 * (1 + u.squaredNorm()));
  }
}

TEST(KuhnTucker, QuadraticSaddleZeroFromDenseSolve) {
  std::mt19937_64 rng(22);
  Matrix l = oracle::gaussian_matrix(rng, 2, 2);
  Vector s = oracle::gaussian(rng, 2), r = oracle::gaussian(rng, 2);
  auto p = single_block_problem(scaled_identity_operator(2, 1.5), scaled_identity_operator(2, 0.7), LinearMap(l), s, r);
  auto kkt = oracle::quadratic_kkt(Vector::Constant(2, 1.5), Vector::Constant(2, 0.7), l, s, r);
  auto pt = KuhnTuckerPoint::lift(p, kkt.x, kkt.v);
  auto res = kt_residuals(p, pt);
  EXPECT_LE(std::max({res.primal, res.dual, res.constraint}), 1e-12);
  auto kt = build_kt_operator(p);
  Vector u = pt.stack();
  EXPECT_LE(norm(kt.M.set_part.resolvent(1.0, u - (*kt.M.forward_part)(u)) - u), 1e-12);
}

TEST(SolveCoupled, ScalarInstance) {
  auto p = single_block_problem(scaled_identity_operator(1, 1.0), scaled_identity_operator(1, 1.0),
                                LinearMap(Matrix::Constant(1, 1, 1.0)), make_vector({0}), make_vector({2}));
  auto cfg = config(5000, 1e-10);
  auto start = KuhnTuckerPoint::lift(p, make_vector({0}), make_vector({0}));
  auto out = solve_coupled(p, fixed_stage(p), NoPerturbation{}, cfg, start);
  ASSERT_TRUE(out.result.converged()) << out.result.diagnostic;
  EXPECT_NEAR(out.point.x.flat()[0], 1.0, 1e-6);
  EXPECT_NEAR(out.point.v_star.flat()[0], -1.0, 1e-6);
  auto r = kt_residuals(p, out.point);
  EXPECT_LE(std::max({r.primal, r.dual, r.constraint}), 10 * cfg.tol_residual);
}

TEST(SolveCoupled, StartInSolutionSetIsStationary) {
  auto p = single_block_problem(scaled_identity_operator(1, 1.0), scaled_identity_operator(1, 1.0),
                                LinearMap(Matrix::Constant(1, 1, 1.0)), make_vector({0}), make_vector({2}));
  auto start = KuhnTuckerPoint::lift(p, make_vector({1}), make_vector({-1}));
  auto out = solve_coupled(p, fixed_stage(p), NoPerturbation{}, config(10, 1e-12), start);
  EXPECT_TRUE(out.result.converged());
  EXPECT_EQ(out.result.iterations, 0u);
  EXPECT_GE(out.result.trace[0].theta, 0.0);
  EXPECT_EQ(out.point.stack(), start.stack());
}

TEST(SolveCoupled, TwoPrimalOneDualMatchesKkt) {
  std::mt19937_64 rng(23);
  Matrix l = oracle::gaussian_matrix(rng, 2, 3);
  Vector s = oracle::gaussian(rng, 3), r = oracle::gaussian(rng, 2);
  CoupledProblem p;
  p.primal.push_back({scaled_identity_operator(2, 1.2), nullptr, s.head(2)});
  p.primal.push_back({scaled_identity_operator(1, 0.6), nullptr, s.tail(1)});
  p.dual.push_back({scaled_identity_operator(2, 2.0), nullptr, r});
  p.couplings.push_back({0, 0, LinearMap(l.leftCols(2))});
  p.couplings.push_back({0, 1, LinearMap(l.rightCols(1))});
  p.validate();
  auto kkt = oracle::quadratic_kkt(make_vector({1.2, 1.2, 0.6}), make_vector({2.0, 2.0}), l, s, r);
  auto start = KuhnTuckerPoint::lift(p, Vector::Zero(3), Vector::Zero(2));
  auto out = solve_coupled(p, fixed_stage(p), NoPerturbation{}, config(20000, 1e-10), start);
  ASSERT_TRUE(out.result.converged()) << out.result.diagnostic;
  EXPECT_LE(norm(out.point.x.flat() - kkt.x), 1e-6);
  EXPECT_LE(norm(out.point.v_star.flat() - kkt.v), 1e-6);
}

TEST(SolveCoupled, LiteralTranscriptionAgrees) {
  std::mt19937_64 rng(24);
  CoupledProblem p;
  Matrix g = oracle::gaussian_matrix(rng, 2, 2);
  p.primal.push_back({l1_subdifferential(2, 0.3), share(SingleValuedOperator::affine(0.5 * g * g.transpose(), Vector::Zero(2))),
                      make_vector({0.4, -0.2})});
  p.primal.back().chi = 1.0;
  p.dual.push_back({box_cone(-Vector::Ones(2), Vector::Ones(2)), nullptr, make_vector({0.3, 0.0})});
  p.couplings.push_back({0, 0, LinearMap(oracle::gaussian_matrix(rng, 2, 2))});
  p.validate();
  auto start = KuhnTuckerPoint::lift(p, make_vector({1, -1}), make_vector({0.5, 0.5}));
  auto cfg = config(300, 1e-300);
  auto a = solve_coupled(p, fixed_stage(p), NoPerturbation{}, cfg, start);
  auto b = solve_coupled_literal(p, fixed_stage(p), NoPerturbation{}, cfg, start);
  ASSERT_EQ(a.result.trace.size(), b.result.trace.size());
  for (std::size_t n = 0; n < a.result.trace.size(); ++n) {
    EXPECT_LE(norm(a.result.trace[n].x - b.result.trace[n].x), 1e-12);
    EXPECT_NEAR(a.result.trace[n].theta, b.result.trace[n].theta, 1e-12);
    EXPECT_NEAR(a.result.trace[n].sigma, b.result.trace[n].sigma, 1e-12 * (1 + a.result.trace[n].sigma));
  }
}
