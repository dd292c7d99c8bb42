#pragma once

// Brute-force reference computations. They use only Eigen and plain loops, never the
// library's projection or solver code.

#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Projection onto {z : <a, z> <= b}.
inline Vec halfspace_projection(const Vec& x, const Vec& a, double b) {
  double v = a.dot(x) - b;
  if (v <= 0.0) return x;
  return x - (v / a.squaredNorm()) * a;
}

inline bool inside(const Vec& z, const Vec& a, double b, double tol) { return a.dot(z) - b <= tol; }

// Projection of x onto {<a1,z> <= b1} ∩ {<a2,z> <= b2} by enumerating the four active sets.
// Returns nothing when no candidate is feasible (empty intersection). Works in long double:
// nearly parallel cuts make the 2×2 Gram system ill-conditioned.
inline std::optional<Vec> two_halfspace_qp(const Vec& x_in, const Vec& a1_in, double b1_in, const Vec& a2_in,
                                           double b2_in, double tol = 1e-9) {
  using LVec = Eigen::Matrix<long double, Eigen::Dynamic, 1>;
  using LMat = Eigen::Matrix<long double, 2, 2>;
  using L2 = Eigen::Matrix<long double, 2, 1>;
  LVec x = x_in.cast<long double>(), a1 = a1_in.cast<long double>(), a2 = a2_in.cast<long double>();
  long double b1 = b1_in, b2 = b2_in;
  auto in = [](const LVec& z, const LVec& a, long double b, long double t) { return a.dot(z) - b <= t; };

  std::vector<LVec> cands;
  cands.push_back(x);
  if (a1.squaredNorm() > 0) cands.push_back(x - ((a1.dot(x) - b1) / a1.squaredNorm()) * a1);
  if (a2.squaredNorm() > 0) cands.push_back(x - ((a2.dot(x) - b2) / a2.squaredNorm()) * a2);
  LMat g;
  g << a1.dot(a1), a1.dot(a2), a2.dot(a1), a2.dot(a2);
  long double det = g.determinant();
  if (std::abs(det) > 1e-17L * std::max<long double>(1.0L, g(0, 0) * g(1, 1))) {
    L2 rhs(a1.dot(x) - b1, a2.dot(x) - b2);
    L2 mult = g.inverse() * rhs;
    if (mult[0] >= -tol && mult[1] >= -tol) cands.push_back(x - mult[0] * a1 - mult[1] * a2);
  }
  std::optional<LVec> best;
  long double t = tol * (1.0L + x.norm()) * (1.0L + std::max(a1.norm(), a2.norm()));
  for (const auto& c : cands) {
    if (!in(c, a1, b1, t) || !in(c, a2, b2, t)) continue;
    if (!best || (c - x).norm() < (*best - x).norm()) best = c;
  }
  if (!best) return std::nullopt;
  return Vec(best->cast<double>());
}

// Natural residual ‖x − P_box(x − F(x))‖ of the variational inequality on a box.
inline double vi_residual(const Vec& x, const Vec& lo, const Vec& hi, const Mat& m, const Vec& b) {
  Vec f = m * x + b;
  Vec p = (x - f).cwiseMax(lo).cwiseMin(hi);
  return (x - p).norm();
}

// Solution of the box-constrained affine VI in the plane by nested grid search:
// a 201×201 grid, then repeated 21×21 zooms down to the requested resolution.
inline Vec planar_vi_grid(const Vec& lo, const Vec& hi, const Mat& m, const Vec& b, double resolution) {
  Vec best = lo;
  double best_r = std::numeric_limits<double>::infinity();
  auto scan = [&](Eigen::Vector2d c, Eigen::Vector2d half, int n) {
    Vec local = best;
    double local_r = best_r;
    for (int i = 0; i <= n; ++i)
      for (int j = 0; j <= n; ++j) {
        Vec z(2);
        z << c[0] - half[0] + 2 * half[0] * i / n, c[1] - half[1] + 2 * half[1] * j / n;
        z = z.cwiseMax(lo).cwiseMin(hi);
        double r = vi_residual(z, lo, hi, m, b);
        if (r < local_r) {
          local_r = r;
          local = z;
        }
      }
    best = local;
    best_r = local_r;
  };
  Eigen::Vector2d half = (hi - lo) / 2;
  scan((lo + hi) / 2, half, 200);
  Eigen::Vector2d step = (hi - lo) / 200;
  while (step.maxCoeff() > resolution) {
    scan(best, step * 2, 20);
    step /= 10;
  }
  return best;
}

// Cubic planar kernel K(ξ) = (ξ₁³/2 + ξ₁/5 − ξ₂, ξ₁ + ξ₂).
inline Vec cubic_kernel(const Vec& x) {
  Vec out(2);
  out << 0.5 * x[0] * x[0] * x[0] + x[0] / 5.0 - x[1], x[0] + x[1];
  return out;
}

// Warped projection onto the unit disk: the p with Kx − Kp ∈ N_disk(p). For ‖x‖ <= 1 it is x.
// Otherwise p = (cos φ, sin φ) with Kx − Kp = t·p, t >= 0: scan φ for sign changes of the
// cross product, polish by bisection, keep roots with a nonnegative multiplier.
inline std::vector<Vec> cubic_disk_projection(const Vec& x) {
  if (x.norm() <= 1.0) return {x};
  Vec kx = cubic_kernel(x);
  auto at = [](double phi) {
    Vec p(2);
    p << std::cos(phi), std::sin(phi);
    return p;
  };
  auto cross = [&](double phi) {
    Vec p = at(phi);
    Vec d = kx - cubic_kernel(p);
    return d[0] * p[1] - d[1] * p[0];
  };
  std::vector<Vec> roots;
  const int n = 20000;
  const double two_pi = 2.0 * std::acos(-1.0);
  for (int i = 0; i < n; ++i) {
    double a = two_pi * i / n, b = two_pi * (i + 1) / n;
    double fa = cross(a), fb = cross(b);
    if (fa == 0.0) fb = -fa;  // root at a
    if ((fa > 0) == (fb > 0)) continue;
    for (int k = 0; k < 200 && b - a > 1e-16; ++k) {
      double c = 0.5 * (a + b);
      double fc = cross(c);
      if ((fc > 0) == (fa > 0)) {
        a = c;
        fa = fc;
      } else {
        b = c;
      }
    }
    Vec p = at(0.5 * (a + b));
    if ((kx - cubic_kernel(p)).dot(p) >= 0.0) roots.push_back(p);
  }
  return roots;
}

// Quadratic coupled problem: s_i ∈ a_i x_i + Σ_j L_jiᵀ v_j, v_j = b_j((Lx)_j − r_j), with the
// blocks stacked. Eliminating v gives (diag(a) + Lᵀ diag(b) L) x = s + Lᵀ diag(b) r.
struct KktSolution {
  Vec x;
  Vec v;
};

inline KktSolution quadratic_kkt(const Vec& a_diag, const Vec& b_diag, const Mat& l, const Vec& s, const Vec& r) {
  Mat db = b_diag.asDiagonal();
  Mat sys = Mat(a_diag.asDiagonal()) + l.transpose() * db * l;
  Vec x = sys.fullPivLu().solve(s + l.transpose() * db * r);
  Vec v = db * (l * x - r);
  return {x, v};
}

inline Vec gaussian(std::mt19937_64& rng, Eigen::Index n, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Vec v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = g(rng);
  return v;
}

inline Mat gaussian_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Mat m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = g(rng);
  return m;
}

}  // namespace oracle
