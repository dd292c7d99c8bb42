#pragma once

#include <cstdint>

#include "warpedprox/io/problem.hpp"
#include "warpedprox/testbed.hpp"

namespace warpedprox::io {

inline std::vector<double> to_list(const Vector& v) { return {v.data(), v.data() + v.size()}; }

inline std::vector<std::vector<double>> to_rows(const Matrix& m) {
  std::vector<std::vector<double>> rows(static_cast<std::size_t>(m.rows()));
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) rows[std::size_t(i)].push_back(m(i, j));
  return rows;
}

// Box-constrained affine variational inequality with its zero recorded as solution and tracked zero.
inline ProblemFile generate_problem(std::uint64_t seed, Index dim, const std::string& algo = "fbf") {
  auto inst = box_affine_instance(seed, dim);
  ProblemFile pf;
  pf.kind = "inclusion";
  pf.dim = dim;
  pf.A = {"box", {{"lower", to_list(inst.lower)}, {"upper", to_list(inst.upper)}}};
  pf.B = OperatorSpec{"affine", {{"matrix", to_rows(inst.matrix)}, {"offset", to_list(inst.offset)}}};
  pf.kernel.type = algo == "tseng" ? "identity" : "fbf";
  pf.solver.algo = algo;
  pf.solver.max_iter = 10000;
  pf.solver.tol_residual = 1e-9;
  pf.solver.tol_step = 1e-9;
  pf.start = to_list(inst.start);
  pf.zeros = {to_list(inst.zero)};
  pf.solution = SolutionSpec{to_list(inst.zero), 1e-6};
  return pf;
}

}  // namespace warpedprox::io
