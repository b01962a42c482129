#pragma once

// Least-squares estimation and linear filtering of the LSE principal
// components, x_w = V W p_*.

#include <string_view>

#include "fisherlens/model_core.hpp"

namespace fisherlens {

enum class FilterKind { Wiener, QuasiOptimal, Tikhonov, Truncated, Custom };

std::string_view to_string(FilterKind kind) noexcept;

/// Diagonal filter weights. The analytic kinds are clamped into [0, 1];
/// truncated weights are rounded to {0, 1}; custom weights are kept as given
/// and `out_of_range` records whether any lies outside [0, 1].
class FilterWeights {
 public:
  FilterWeights(Vector weights, FilterKind kind);

  const Vector& weights() const noexcept { return w_; }
  FilterKind kind() const noexcept { return kind_; }
  bool out_of_range() const noexcept { return out_of_range_; }
  Eigen::Index size() const noexcept { return w_.size(); }

 private:
  Vector w_;
  FilterKind kind_;
  bool out_of_range_ = false;
};

/// p_* = Delta^{-1} phi on the retained components, zero beyond
/// effective_rank.
PrincipalComponents lse(const SpectralModel& spec);

/// Diagonal of cov(p_*) = Lambda^{-1} on the retained components.
Vector lse_covariance(const SpectralModel& spec);

struct FilteredEstimate {
  PrincipalComponents components;  // p_w = W p_*
  Vector object;                   // x_w = V p_w
};

FilteredEstimate apply_filter(const SpectralModel& spec, const FilterWeights& w,
                              const PrincipalComponents& p_star);

/// Expected squared error of a filtered estimate,
///   sum_k w_k^2 / lambda_k + (1 - w_k)^2 p0_k^2.
double filtered_error(const FilterWeights& w, const Vector& lambda,
                      const PrincipalComponents& p0);

/// Optimal Wiener weights lambda_k p0_k^2 / (1 + lambda_k p0_k^2).
///
/// This is an oracle: it needs the true object's principal components and is
/// only meaningful in simulation.
FilterWeights wiener_oracle_weights(const Vector& lambda,
                                    const PrincipalComponents& p0);

/// Wiener oracle weights for a spectral model; zero beyond effective_rank.
FilterWeights wiener_oracle_weights(const SpectralModel& spec,
                                    const PrincipalComponents& p0);

/// Keeps the first `count` components.
FilterWeights truncated_weights(Eigen::Index size, Eigen::Index count);

/// Smallest count K <= effective_rank whose truncated estimate has misfit
/// sum_{k>=K} phi_k^2 <= target. Throws NoRoot if even K = r misses it.
Eigen::Index truncation_for_target(const SpectralModel& spec, double target);

/// ||(W - E) phi||^2 = sum_k (1 - w_k)^2 phi_k^2.
double filtered_misfit(const SpectralModel& spec, const FilterWeights& w);

}  // namespace fisherlens
