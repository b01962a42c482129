#pragma once

// Chi-square machinery, the misfit functional, feasible-region membership and
// the Fisher-matrix geometry of the feasible region.

#include <vector>

#include "fisherlens/model_core.hpp"

namespace fisherlens {

/// Regularized lower incomplete gamma P(a, x).
double gamma_p(double a, double x);
/// Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x), computed
/// directly so that small tails keep full relative accuracy.
double gamma_q(double a, double x);

/// P_n(t), the chi-square CDF with n degrees of freedom.
double chi2_cdf(double t, int dof);
/// 1 - P_n(t).
double chi2_sf(double t, int dof);
double chi2_pdf(double t, int dof);

/// Root of P_n(t) = gamma for gamma in (0, 1).
double chi2_quantile(double gamma, int dof);
/// t_{1-alpha}^{(n)}: root of 1 - P_n(t) = alpha for alpha in (0, 1).
/// Equivalent to chi2_quantile(1 - alpha) but accurate for tiny alpha.
double chi2_upper_quantile(double alpha, int dof);

/// Significance levels (alpha_low, alpha_high) bounding the feasible band
///   t_{1-alpha_high} <= Theta <= t_{1-alpha_low}.
/// alpha_high = 1 and alpha_low = 0 give the open bounds 0 and +inf.
class FeasibilitySpec {
 public:
  FeasibilitySpec(double alpha_low, double alpha_high, int dof);

  double alpha_low() const noexcept { return alpha_low_; }
  double alpha_high() const noexcept { return alpha_high_; }
  int dof() const noexcept { return dof_; }
  double lower_bound() const noexcept { return lower_; }
  double upper_bound() const noexcept { return upper_; }

 private:
  double alpha_low_;
  double alpha_high_;
  int dof_;
  double lower_;
  double upper_;
};

/// Theta = ||phi - Delta p||^2 over all n components.
double misfit(const SpectralModel& spec, const PrincipalComponents& p);

bool is_feasible(double theta, const FeasibilitySpec& fs);

/// alpha = 1 - P_n(Theta).
double significance_of(double theta, int dof);

struct FisherSpectrum {
  Vector eigenvalues;  // lambda_1 >= ... >= lambda_r > 0
  SpectralBasis basis;
  double condition_number = 1.0;
  double quantile = 0.0;  // t used for the semi-axes
  Vector semi_axes;       // sqrt(t / lambda_k), non-decreasing
};

/// Fisher spectrum on the retained components with semi-axes for
/// t = t_{1-alpha}^{(fs.dof())}.
FisherSpectrum fisher_spectrum(const SpectralModel& spec,
                               const FeasibilitySpec& fs, double alpha);

/// Same, with the quantile given directly.
FisherSpectrum fisher_spectrum_at(const SpectralBasis& basis, double quantile);

/// Kolmogorov-Smirnov statistic sup |F_emp - P_n| of a sample against the
/// chi-square law with `dof` degrees of freedom.
double ks_statistic_chi2(std::vector<double> samples, int dof);

/// Approximate critical value of the one-sample KS statistic at level
/// `alpha` (Stephens' finite-sample correction of the Kolmogorov limit).
double ks_critical_value(int sample_size, double alpha);

/// (x - x*)^T V Lambda V^T (x - x*).
double ellipsoid_quadratic(const SpectralModel& spec, const Vector& x,
                           const Vector& x_star);

}  // namespace fisherlens
