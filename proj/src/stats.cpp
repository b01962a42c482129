#include "fisherlens/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace fisherlens {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();
constexpr double kTiny = std::numeric_limits<double>::min() / kEps;
constexpr int kMaxTerms = 100000;

// log(x^a e^-x / Gamma(a)), the common prefactor of both expansions.
double log_prefactor(double a, double x) {
  return a * std::log(x) - x - std::lgamma(a);
}

// Power series for P(a, x); converges quickly for x < a + 1.
double series_p(double a, double x) {
  double ap = a;
  double term = 1.0 / a;
  double sum = term;
  for (int i = 0; i < kMaxTerms; ++i) {
    ap += 1.0;
    term *= x / ap;
    sum += term;
    if (std::abs(term) < std::abs(sum) * kEps) break;
  }
  return sum * std::exp(log_prefactor(a, x));
}

// Continued fraction for Q(a, x) (modified Lentz); used for x >= a + 1.
double continued_fraction_q(double a, double x) {
  double b = x + 1.0 - a;
  double c = 1.0 / kTiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < kMaxTerms; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < kTiny) d = kTiny;
    c = b + an / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < kEps) break;
  }
  return std::exp(log_prefactor(a, x)) * h;
}

void check_gamma_args(double a, double x) {
  require(a > 0.0, ErrorKind::DomainError, "gamma shape must be positive");
  require(x >= 0.0, ErrorKind::DomainError,
          "incomplete gamma argument must be non-negative");
}

void check_dof(int dof) {
  require(dof >= 1, ErrorKind::InvalidDof,
          "chi-square degrees of freedom must be >= 1 (got " +
              std::to_string(dof) + ")");
}

// Monotone root of h(t) = target on t >= 0 where h is the CDF (increasing)
// or the survival function (decreasing). Newton steps safeguarded by a
// bracket; terminates on a relative bracket width near machine precision.
double chi2_root(double target, int dof, bool upper) {
  const auto value = [&](double t) {
    return upper ? chi2_sf(t, dof) : chi2_cdf(t, dof);
  };
  // g(t) is increasing in t for both tails after the sign flip.
  const auto g = [&](double t) {
    return upper ? target - value(t) : value(t) - target;
  };

  double lo = 0.0;
  double hi = std::max(1.0, static_cast<double>(dof));
  while (g(hi) < 0.0) {
    lo = hi;
    hi *= 2.0;
    require(std::isfinite(hi), ErrorKind::DomainError,
            "chi-square quantile bracket overflowed");
  }

  double t = 0.5 * (lo + hi);
  for (int it = 0; it < 500; ++it) {
    const double gt = g(t);
    if (gt == 0.0) return t;
    if (gt < 0.0) {
      lo = t;
    } else {
      hi = t;
    }
    if (hi - lo <= 4.0 * kEps * hi) break;

    const double slope = chi2_pdf(t, dof);
    double next = (slope > 0.0) ? t - gt / slope : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) {
      // Bisect in log space when the bracket spans many decades.
      next = (lo > 0.0 && hi / lo > 16.0) ? std::sqrt(lo * hi) : 0.5 * (lo + hi);
    }
    t = next;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

double gamma_p(double a, double x) {
  check_gamma_args(a, x);
  if (x == 0.0) return 0.0;
  if (std::isinf(x)) return 1.0;
  if (x < a + 1.0) return series_p(a, x);
  return 1.0 - continued_fraction_q(a, x);
}

double gamma_q(double a, double x) {
  check_gamma_args(a, x);
  if (x == 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  if (x < a + 1.0) return 1.0 - series_p(a, x);
  return continued_fraction_q(a, x);
}

double chi2_cdf(double t, int dof) {
  check_dof(dof);
  require(t >= 0.0, ErrorKind::DomainError, "chi-square argument must be >= 0");
  return gamma_p(0.5 * dof, 0.5 * t);
}

double chi2_sf(double t, int dof) {
  check_dof(dof);
  require(t >= 0.0, ErrorKind::DomainError, "chi-square argument must be >= 0");
  return gamma_q(0.5 * dof, 0.5 * t);
}

double chi2_pdf(double t, int dof) {
  check_dof(dof);
  if (t <= 0.0) {
    if (dof == 1) return std::numeric_limits<double>::infinity();
    return dof == 2 ? 0.5 : 0.0;
  }
  const double k = 0.5 * dof;
  return std::exp((k - 1.0) * std::log(t) - 0.5 * t - k * std::log(2.0) -
                  std::lgamma(k));
}

double chi2_quantile(double gamma, int dof) {
  check_dof(dof);
  require(gamma > 0.0 && gamma < 1.0, ErrorKind::DomainError,
          "quantile probability must lie in (0, 1)");
  if (gamma > 0.5) return chi2_root(1.0 - gamma, dof, /*upper=*/true);
  return chi2_root(gamma, dof, /*upper=*/false);
}

double chi2_upper_quantile(double alpha, int dof) {
  check_dof(dof);
  require(alpha > 0.0 && alpha < 1.0, ErrorKind::DomainError,
          "significance level must lie in (0, 1)");
  if (alpha > 0.5) return chi2_root(1.0 - alpha, dof, /*upper=*/false);
  return chi2_root(alpha, dof, /*upper=*/true);
}

FeasibilitySpec::FeasibilitySpec(double alpha_low, double alpha_high, int dof)
    : alpha_low_(alpha_low), alpha_high_(alpha_high), dof_(dof) {
  check_dof(dof);
  require(0.0 <= alpha_low && alpha_low <= alpha_high && alpha_high <= 1.0,
          ErrorKind::DomainError,
          "significance levels must satisfy 0 <= alpha_low <= alpha_high <= 1");
  lower_ = alpha_high >= 1.0 ? 0.0 : chi2_upper_quantile(alpha_high, dof);
  upper_ = alpha_low <= 0.0 ? std::numeric_limits<double>::infinity()
                            : chi2_upper_quantile(alpha_low, dof);
}

double misfit(const SpectralModel& spec, const PrincipalComponents& p) {
  require_same_size(p.coeffs.size(), spec.size(), "principal components");
  return (spec.refined_image() -
          spec.singular_values().cwiseProduct(p.coeffs))
      .squaredNorm();
}

bool is_feasible(double theta, const FeasibilitySpec& fs) {
  require(theta >= 0.0, ErrorKind::DomainError, "misfit must be >= 0");
  return fs.lower_bound() <= theta && theta <= fs.upper_bound();
}

double significance_of(double theta, int dof) {
  require(theta >= 0.0, ErrorKind::DomainError, "misfit must be >= 0");
  return chi2_sf(theta, dof);
}

FisherSpectrum fisher_spectrum_at(const SpectralBasis& basis, double quantile) {
  require(quantile >= 0.0, ErrorKind::DomainError,
          "semi-axis quantile must be >= 0");
  const Eigen::Index r = basis.effective_rank();
  FisherSpectrum out{basis.fisher_eigenvalues().head(r), basis, 1.0, quantile,
                     Vector()};
  out.condition_number = out.eigenvalues(0) / out.eigenvalues(r - 1);
  out.semi_axes = (quantile / out.eigenvalues.array()).sqrt().matrix();
  return out;
}

FisherSpectrum fisher_spectrum(const SpectralModel& spec,
                               const FeasibilitySpec& fs, double alpha) {
  return fisher_spectrum_at(spec.basis(), chi2_upper_quantile(alpha, fs.dof()));
}

double ellipsoid_quadratic(const SpectralModel& spec, const Vector& x,
                           const Vector& x_star) {
  require_same_size(x.size(), spec.size(), "estimate");
  require_same_size(x_star.size(), spec.size(), "reference estimate");
  const Vector dp = spec.eigen_basis().transpose() * (x - x_star);
  return spec.fisher_eigenvalues().dot(dp.cwiseAbs2());
}

double ks_statistic_chi2(std::vector<double> samples, int dof) {
  require(!samples.empty(), ErrorKind::InvalidArgument, "empty sample");
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (size_t i = 0; i < samples.size(); ++i) {
    const double f = chi2_cdf(samples[i], dof);
    d = std::max({d, (static_cast<double>(i) + 1.0) / n - f,
                  f - static_cast<double>(i) / n});
  }
  return d;
}

double ks_critical_value(int sample_size, double alpha) {
  require(sample_size > 0, ErrorKind::InvalidArgument,
          "sample size must be > 0");
  require(alpha > 0.0 && alpha < 1.0, ErrorKind::DomainError,
          "alpha must lie in (0, 1)");
  // Kolmogorov limit: P(sqrt(n) D > c) ~ 2 exp(-2 c^2).
  const double c = std::sqrt(-0.5 * std::log(alpha / 2.0));
  const double rn = std::sqrt(static_cast<double>(sample_size));
  return c / (rn + 0.12 + 0.11 / rn);
}

}  // namespace fisherlens
