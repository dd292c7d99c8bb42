#pragma once

#include <deque>
#include <limits>
#include <memory>
#include <string>

#include "warpedprox/operators.hpp"

namespace warpedprox {

struct InnerSolveOptions {
  double rel_tol = 1e-12;   // on the inclusion residual, relative to 1 + ‖v‖
  int max_iter = 200;
  int anderson_depth = 5;
};

// Strongly monotone, Lipschitz map W bundled with a solver for v ∈ Wp + γAp.
class BackwardMap {
 public:
  enum class Kind { scaled_identity, affine, nonlinear };

  static BackwardMap identity(Index dim, double scale = 1.0) {
    if (!(scale > 0.0) || !std::isfinite(scale)) throw ConfigError("identity map: scale must be positive");
    BackwardMap w;
    w.kind_ = Kind::scaled_identity;
    w.dim_ = dim;
    w.scale_ = scale;
    w.alpha_ = scale;
    w.beta_ = scale;
    return w;
  }

  // p ↦ Qp + q, Q with positive definite symmetric part.
  static BackwardMap affine(Matrix q_mat, Vector q_vec) {
    if (q_mat.rows() != q_mat.cols() || q_vec.size() != q_mat.rows())
      throw DimensionError("affine map: shape mismatch");
    if (!q_mat.allFinite() || !q_vec.allFinite()) throw NumericalError("affine map: non-finite entry");
    BackwardMap w;
    w.kind_ = Kind::affine;
    w.dim_ = q_mat.rows();
    Matrix sym = 0.5 * (q_mat + q_mat.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> eig(sym);
    w.alpha_ = eig.eigenvalues().minCoeff();
    if (!(w.alpha_ > 0.0)) throw ConfigError("affine map is not strongly monotone");
    w.beta_ = LinearMap(q_mat).norm();
    w.symmetric_ = (q_mat - q_mat.transpose()).cwiseAbs().maxCoeff() == 0.0;
    if (w.symmetric_) {
      w.lambda_max_ = eig.eigenvalues().maxCoeff();
      w.llt_ = std::make_shared<const Eigen::LLT<Matrix>>(q_mat);
    } else {
      w.lu_ = std::make_shared<const Eigen::PartialPivLU<Matrix>>(q_mat);
    }
    w.mat_ = std::make_shared<const Matrix>(std::move(q_mat));
    w.vec_ = std::make_shared<const Vector>(std::move(q_vec));
    return w;
  }

  // Declared constants are trusted; beta only needs to hold where the inner solve travels.
  static BackwardMap nonlinear(SingleValuedOperator op, double alpha, double beta) {
    if (!(alpha > 0.0) || !(beta >= alpha)) throw ConfigError("nonlinear map: need 0 < alpha <= beta");
    BackwardMap w;
    w.kind_ = Kind::nonlinear;
    w.dim_ = op.dim();
    w.alpha_ = alpha;
    w.beta_ = beta;
    w.op_ = std::make_shared<const SingleValuedOperator>(std::move(op));
    return w;
  }

  // c·W
  BackwardMap scaled(double c) const {
    if (!(c > 0.0) || !std::isfinite(c)) throw ConfigError("scaled map: factor must be positive");
    switch (kind_) {
      case Kind::scaled_identity: return identity(dim_, scale_ * c);
      case Kind::affine: return affine(c * *mat_, c * *vec_);
      case Kind::nonlinear: {
        auto inner_op = op_;
        SingleValuedOperator s(
            dim_, [inner_op, c](const Vector& x) -> Vector { return c * (*inner_op)(x); }, c * op_->lipschitz(),
            op_->monotone(), op_->name());
        return nonlinear(std::move(s), c * alpha_, c * beta_);
      }
    }
    return *this;
  }

  Kind kind() const { return kind_; }
  Index dim() const { return dim_; }
  double strong_monotonicity() const { return alpha_; }
  double lipschitz() const { return beta_; }
  double scale() const { return scale_; }
  bool is_identity() const { return kind_ == Kind::scaled_identity && scale_ == 1.0; }
  const Matrix& matrix() const { return *mat_; }
  const Vector& offset() const { return *vec_; }

  Vector operator()(const Vector& x) const {
    if (x.size() != dim_) throw DimensionError("backward map: dimension mismatch");
    switch (kind_) {
      case Kind::scaled_identity: return scale_ * x;
      case Kind::affine: return *mat_ * x + *vec_;
      case Kind::nonlinear: return (*op_)(x);
    }
    return x;
  }

  // The unique p with v ∈ Wp + γAp.
  Vector solve(double gamma, const SetValuedOperator& a, const Vector& v, const Vector* guess = nullptr,
               const InnerSolveOptions& opt = {}) const {
    if (v.size() != dim_ || a.dim() != dim_) throw DimensionError("backward solve: dimension mismatch");
    if (kind_ == Kind::scaled_identity) return a.resolvent(gamma / scale_, v / scale_);
    if (kind_ == Kind::affine && a.is_zero()) {
      Vector rhs = v - *vec_;
      Vector p = symmetric_ ? Vector(llt_->solve(rhs)) : Vector(lu_->solve(rhs));
      require_finite(p, "backward solve");
      return p;
    }
    return forward_backward(gamma, a, v, guess, opt);
  }

 private:
  // Forward-backward fixed point p = J_{tγA}(p − t(Wp − v)) with Anderson mixing.
  Vector forward_backward(double gamma, const SetValuedOperator& a, const Vector& v, const Vector* guess,
                          const InnerSolveOptions& opt) const {
    double t = (kind_ == Kind::affine && symmetric_) ? 2.0 / (alpha_ + lambda_max_) : alpha_ / (beta_ * beta_);
    double tol = opt.rel_tol * (1.0 + norm(v));
    Vector p = guess && guess->size() == dim_ ? *guess : Vector(v / beta_);
    Vector wp = (*this)(p);

    std::deque<Vector> d_iter, d_res;
    Vector prev_p, prev_f;
    double best = std::numeric_limits<double>::infinity();
    double residual = std::numeric_limits<double>::infinity();

    for (int k = 0; k < opt.max_iter; ++k) {
      Vector tp = a.resolvent(t * gamma, p - t * (wp - v));
      Vector wtp = (*this)(tp);
      // v − r ∈ W(tp) + γA(tp)
      Vector r = (p - tp) / t - (wp - wtp);
      residual = norm(r);
      if (residual <= tol) return tp;

      Vector f = tp - p;
      double fn = norm(f);
      if (k > 0) {
        d_iter.push_back(p - prev_p);
        d_res.push_back(f - prev_f);
        if (static_cast<int>(d_iter.size()) > opt.anderson_depth) {
          d_iter.pop_front();
          d_res.pop_front();
        }
      }
      prev_p = p;
      prev_f = f;

      Vector next = tp;
      if (fn > 10.0 * best) {
        d_iter.clear();
        d_res.clear();
      } else if (!d_res.empty()) {
        Matrix g(dim_, static_cast<Index>(d_res.size()));
        Matrix x(dim_, static_cast<Index>(d_iter.size()));
        for (std::size_t j = 0; j < d_res.size(); ++j) {
          g.col(Index(j)) = d_res[j];
          x.col(Index(j)) = d_iter[j];
        }
        Vector coef = g.colPivHouseholderQr().solve(f);
        if (coef.allFinite()) next = tp - (x + g) * coef;
      }
      best = std::min(best, fn);
      p = std::move(next);
      wp = (*this)(p);
    }
    throw NumericalError("backward solve did not reach tolerance in " + std::to_string(opt.max_iter) +
                             " iterations (residual " + std::to_string(residual) + ")",
                         residual);
  }

  Kind kind_ = Kind::scaled_identity;
  Index dim_ = 0;
  double scale_ = 1.0;
  double alpha_ = 1.0;
  double beta_ = 1.0;
  double lambda_max_ = 1.0;
  bool symmetric_ = false;
  std::shared_ptr<const Matrix> mat_;
  std::shared_ptr<const Vector> vec_;
  std::shared_ptr<const Eigen::LLT<Matrix>> llt_;
  std::shared_ptr<const Eigen::PartialPivLU<Matrix>> lu_;
  std::shared_ptr<const SingleValuedOperator> op_;
};

}  // namespace warpedprox
