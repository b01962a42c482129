#pragma once

// Quasi-optimal filtering. The Wiener structure
//   w_k(p) = lambda_k p_k^2 / (1 + lambda_k p_k^2)
// is imposed on a trial vector p, which is chosen to solve
//
//   G(p) = sum_k (1 - w_k(p))^2 phi_k^2 = t_{1-alpha}^{(n)}
//   F(p) = sum_k (w_k(p) p*_k - p_k)^2  -> min,
//
// and the estimate is p~ = W(p_min) p*, x~ = V p~.

#include <string_view>

#include "fisherlens/estimators.hpp"

namespace fisherlens {

enum class QuasiOptInit { TikhonovSeed, TruncatedSeed };

std::string_view to_string(QuasiOptInit init) noexcept;

struct QuasiOptConfig {
  double alpha = 0.5;
  QuasiOptInit init_strategy = QuasiOptInit::TikhonovSeed;
  /// Sup-norm of the Lagrangian gradient in p, relative to the size of the
  /// objective and constraint gradient terms.
  double grad_tol = 1e-8;
  /// |G(p_min) - t| / t.
  double constraint_tol = 1e-8;
  /// Iteration limit per start.
  int max_iters = 500;
  /// Extra truncated-LSE starts spread over the admissible truncation
  /// levels; 0 runs only the two default seeds.
  int truncated_starts = 16;

  void validate() const;
};

struct QuasiOptSolution {
  PrincipalComponents p_min;
  FilterWeights weights{Vector(), FilterKind::QuasiOptimal};
  PrincipalComponents p_filtered;
  Vector x_filtered;
  double objective_value = 0.0;
  double constraint_residual = 0.0;  // relative
  double stationarity = 0.0;         // relative
  double multiplier = 0.0;           // nu in grad F + nu grad G = 0
  double target = 0.0;
  int iterations = 0;  // summed over all starts
  QuasiOptInit seed_used = QuasiOptInit::TikhonovSeed;
};

/// lambda_k p_k^2 / (1 + lambda_k p_k^2).
FilterWeights quasi_weights(const Vector& lambda, const PrincipalComponents& p);

/// Quasi-optimal weights of a spectral model; zero beyond effective_rank.
FilterWeights quasi_weights(const SpectralModel& spec,
                            const PrincipalComponents& p);

/// F(p) = ||W(p) p* - p||^2.
double objective(const SpectralModel& spec, const PrincipalComponents& p);

/// Analytic gradient of F with respect to p.
Vector objective_gradient(const SpectralModel& spec,
                          const PrincipalComponents& p);

/// G(p) = sum_k phi_k^2 / (1 + lambda_k p_k^2)^2.
double constraint_value(const SpectralModel& spec,
                        const PrincipalComponents& p);

/// Analytic gradient of G with respect to p.
Vector constraint_gradient(const SpectralModel& spec,
                           const PrincipalComponents& p);

/// Solves the constrained system at t = t_{1-alpha}^{(n)}.
///
/// Throws InfeasibleConstraint when ||phi||^2 <= t (the data cannot be told
/// apart from pure noise at this level) or when t does not exceed the energy
/// of the truncated components; MaxItersExceeded (a ConvergenceError
/// carrying the best p) when neither seed converges.
QuasiOptSolution solve(const SpectralModel& spec, const QuasiOptConfig& config);

/// Same, with the target misfit t given directly (config.alpha is ignored).
QuasiOptSolution solve_for_target(const SpectralModel& spec, double target,
                                  const QuasiOptConfig& config);

/// The two-regime approximation of F for a boundary K:
///   sum_{k<K} (p_k - p*_k)^2 + sum_{k>=K} p_k^2.
double objective_two_regime(const SpectralModel& spec,
                            const PrincipalComponents& p, Eigen::Index boundary);

}  // namespace fisherlens
