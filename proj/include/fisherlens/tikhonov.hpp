#pragma once

// Phillips-Tikhonov regularization seen as a linear filter of the LSE:
//   W_gamma = diag(lambda_k / (lambda_k + gamma)),  p_gamma = W_gamma p_*,
// with gamma = 1/mu fixed by the discrepancy equation f(mu) = t_{1-alpha}.

#include "fisherlens/estimators.hpp"

namespace fisherlens {

inline constexpr double kDefaultQpTol = 1e-8;

struct TikhonovSolution {
  double gamma = 0.0;
  double mu = 0.0;
  FilterWeights weights{Vector(), FilterKind::Tikhonov};
  PrincipalComponents p_reg;
  Vector x_reg;
  double achieved_misfit = 0.0;
  double target_misfit = 0.0;
  double alpha = 0.0;
  int iterations = 0;
  /// Only set by solve_nonneg.
  double kkt_residual = 0.0;
};

/// lambda_k / (lambda_k + gamma).
FilterWeights tikhonov_weights(const Vector& lambda, double gamma);

/// Tikhonov weights of a spectral model; zero beyond effective_rank.
FilterWeights tikhonov_weights(const SpectralModel& spec, double gamma);

/// f(mu) = sum_{k<r} (phi_k / (1 + mu lambda_k))^2 + sum_{k>=r} phi_k^2.
/// Descends from ||phi||^2 at mu = 0 to the truncated energy as mu -> inf.
double discrepancy(double mu, const SpectralModel& spec);

/// Solves f(mu) = t_{1-alpha}^{(n)}.
TikhonovSolution solve_gamma(const SpectralModel& spec, double alpha);

/// Same, with the target misfit given directly.
TikhonovSolution solve_gamma_for_target(const SpectralModel& spec,
                                        double target);

/// ||phi - Delta p||^2 + gamma ||p||^2.
double lagrangian_value(const SpectralModel& spec,
                        const PrincipalComponents& p, double gamma);

/// Regularized estimate under x = V p >= 0: for each gamma the problem
///   min ||phi - Delta V^T x||^2 + gamma ||x||^2,  x >= 0
/// is solved by the active-set QP, and gamma is chosen so that the misfit
/// equals t_{1-alpha}^{(n)}.
TikhonovSolution solve_nonneg(const SpectralModel& spec, double alpha,
                              double qp_tol = kDefaultQpTol);

TikhonovSolution solve_nonneg_for_target(const SpectralModel& spec,
                                         double target,
                                         double qp_tol = kDefaultQpTol);

/// Non-negative regularized estimate at a fixed gamma.
Vector nonneg_regularized(const SpectralModel& spec, double gamma,
                          double qp_tol = kDefaultQpTol);

}  // namespace fisherlens
