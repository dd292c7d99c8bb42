#pragma once

#include <cstdint>
#include <random>

#include "warpedprox/catalog.hpp"

namespace warpedprox {

// 0 ∈ N_box(z) + Mz + b with a known, unique zero z. M has a positive definite symmetric part
// plus a skew part; a few coordinates of z sit on the box boundary with strict complementarity.
struct BoxAffineInstance {
  Vector lower, upper;
  Matrix matrix;
  Vector offset;
  Vector zero;
  Vector start;
};

inline BoxAffineInstance box_affine_instance(std::uint64_t seed, Index dim) {
  if (dim < 1) throw DimensionError("box_affine_instance: dimension must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  auto fill = [&](Index r, Index c) {
    Matrix m(r, c);
    for (Index i = 0; i < r; ++i)
      for (Index j = 0; j < c; ++j) m(i, j) = unit(rng);
    return m;
  };

  BoxAffineInstance out;
  Matrix g = fill(dim, dim);
  Matrix k = fill(dim, dim);
  out.matrix = 0.5 * g * g.transpose() / static_cast<double>(dim) + 0.2 * Matrix::Identity(dim, dim) +
               (k - k.transpose()) / 2.0;
  out.lower = -Vector::Ones(dim) - 0.5 * (fill(dim, 1).col(0).array().abs()).matrix();
  out.upper = Vector::Ones(dim) + 0.5 * (fill(dim, 1).col(0).array().abs()).matrix();

  out.zero.resize(dim);
  Vector push(dim);  // outward normal multiplier on active coordinates
  for (Index i = 0; i < dim; ++i) {
    double u = unit(rng);
    double t = 0.25 + 0.5 * std::abs(unit(rng));
    if (u > 0.5) {
      out.zero[i] = out.upper[i];
      push[i] = -t;
    } else if (u < -0.5) {
      out.zero[i] = out.lower[i];
      push[i] = t;
    } else {
      out.zero[i] = 0.8 * u * (u > 0 ? out.upper[i] : -out.lower[i]);
      push[i] = 0.0;
    }
  }
  out.offset = -out.matrix * out.zero + push;
  out.start = 3.0 * fill(dim, 1).col(0);
  return out;
}

}  // namespace warpedprox
