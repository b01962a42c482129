#pragma once

// Active-set solver for the bound-constrained convex quadratic program
//
//   minimize  1/2 x^T Q x - c^T x   subject to  x >= 0,
//
// with Q symmetric positive definite. Non-negative least squares
// min ||A x - b||^2, x >= 0 is the case Q = A^T A, c = A^T b
// (Lawson-Hanson in normal-equation form).

#include <optional>

#include "fisherlens/model_core.hpp"

namespace fisherlens {

struct NonnegQpResult {
  Vector x;
  int iterations = 0;
  /// Largest KKT violation, relative to max(1, |c|_inf):
  /// |grad_i| on free variables, max(0, -grad_i) on bound ones.
  double kkt_residual = 0.0;
};

/// `warm_start`, when given, must be non-negative; its zero entries seed the
/// initial active set.
NonnegQpResult solve_nonneg_qp(const Matrix& q, const Vector& c, double tol,
                               int max_iter = 0,
                               const std::optional<Vector>& warm_start = {});

NonnegQpResult nnls(const Matrix& a, const Vector& b, double tol = 1e-10,
                    int max_iter = 0);

/// KKT violation of a candidate x, using the same scaling as the solver.
double nonneg_qp_kkt_residual(const Matrix& q, const Vector& c,
                              const Vector& x);

}  // namespace fisherlens
