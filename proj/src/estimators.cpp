#include "fisherlens/estimators.hpp"

#include <algorithm>

namespace fisherlens {

std::string_view to_string(FilterKind kind) noexcept {
  switch (kind) {
    case FilterKind::Wiener: return "wiener";
    case FilterKind::QuasiOptimal: return "quasi_optimal";
    case FilterKind::Tikhonov: return "tikhonov";
    case FilterKind::Truncated: return "truncated";
    case FilterKind::Custom: return "custom";
  }
  return "unknown";
}

FilterWeights::FilterWeights(Vector weights, FilterKind kind)
    : w_(std::move(weights)), kind_(kind) {
  switch (kind_) {
    case FilterKind::Custom:
      out_of_range_ = (w_.array() < 0.0).any() || (w_.array() > 1.0).any();
      break;
    case FilterKind::Truncated:
      w_ = (w_.array() >= 0.5).cast<double>().matrix();
      break;
    default:
      w_ = w_.cwiseMax(0.0).cwiseMin(1.0);
      break;
  }
}

PrincipalComponents lse(const SpectralModel& spec) {
  const Eigen::Index r = spec.effective_rank();
  Vector p = Vector::Zero(spec.size());
  p.head(r) = spec.refined_image().head(r).cwiseQuotient(
      spec.singular_values().head(r));
  return {std::move(p), ComponentRole::Lse};
}

Vector lse_covariance(const SpectralModel& spec) {
  return spec.fisher_eigenvalues().head(spec.effective_rank()).cwiseInverse();
}

FilteredEstimate apply_filter(const SpectralModel& spec, const FilterWeights& w,
                              const PrincipalComponents& p_star) {
  require_same_size(w.size(), spec.size(), "filter weights");
  require_same_size(p_star.coeffs.size(), spec.size(), "LSE components");
  PrincipalComponents p{w.weights().cwiseProduct(p_star.coeffs),
                        ComponentRole::Filtered};
  Vector x = synthesize(spec, p);
  return {std::move(p), std::move(x)};
}

double filtered_error(const FilterWeights& w, const Vector& lambda,
                      const PrincipalComponents& p0) {
  require_same_size(w.size(), lambda.size(), "Fisher eigenvalues");
  require_same_size(w.size(), p0.coeffs.size(), "object components");
  require((lambda.array() > 0.0).all(), ErrorKind::DomainError,
          "filtered_error needs strictly positive eigenvalues");
  const auto& wk = w.weights().array();
  return (wk.square() / lambda.array() +
          (1.0 - wk).square() * p0.coeffs.array().square())
      .sum();
}

FilterWeights wiener_oracle_weights(const Vector& lambda,
                                    const PrincipalComponents& p0) {
  require_same_size(lambda.size(), p0.coeffs.size(), "object components");
  const Eigen::ArrayXd s = lambda.array() * p0.coeffs.array().square();
  return FilterWeights((s / (1.0 + s)).matrix(), FilterKind::Wiener);
}

FilterWeights wiener_oracle_weights(const SpectralModel& spec,
                                    const PrincipalComponents& p0) {
  require_same_size(p0.coeffs.size(), spec.size(), "object components");
  const Eigen::Index r = spec.effective_rank();
  Vector w = Vector::Zero(spec.size());
  const Eigen::ArrayXd s = spec.fisher_eigenvalues().head(r).array() *
                           p0.coeffs.head(r).array().square();
  w.head(r) = (s / (1.0 + s)).matrix();
  return FilterWeights(std::move(w), FilterKind::Wiener);
}

FilterWeights truncated_weights(Eigen::Index size, Eigen::Index count) {
  require(count >= 0 && count <= size, ErrorKind::InvalidArgument,
          "truncation count out of range");
  Vector w = Vector::Zero(size);
  w.head(count).setOnes();
  return FilterWeights(std::move(w), FilterKind::Truncated);
}

double filtered_misfit(const SpectralModel& spec, const FilterWeights& w) {
  require_same_size(w.size(), spec.size(), "filter weights");
  return ((1.0 - w.weights().array()).square() *
          spec.refined_image().array().square())
      .sum();
}

Eigen::Index truncation_for_target(const SpectralModel& spec, double target) {
  const Eigen::Index r = spec.effective_rank();
  const Vector& phi = spec.refined_image();
  // tail(K) = sum_{k>=K} phi_k^2, scanned from K = r downwards.
  double tail = spec.truncated_energy();
  if (tail > target) {
    throw Error(ErrorKind::NoRoot,
                "target misfit is below the truncated-component energy");
  }
  Eigen::Index k = r;
  while (k > 0 && tail + phi(k - 1) * phi(k - 1) <= target) {
    tail += phi(k - 1) * phi(k - 1);
    --k;
  }
  return k;
}

}  // namespace fisherlens
