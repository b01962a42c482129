#pragma once

// Model cases, noise, and the Monte Carlo harness.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fisherlens/estimators.hpp"
#include "fisherlens/quasiopt.hpp"

namespace fisherlens {

enum class PsfKind { Sinc2, Gaussian, CustomKernel };

std::string_view to_string(PsfKind kind) noexcept;

struct PsfSpec {
  PsfKind kind = PsfKind::Sinc2;
  double radius = 0.0;     // sinc2
  double sigma_psf = 0.0;  // gaussian
  /// Odd kernel width; 0 means the full grid.
  int support = 0;
  /// Custom kernel, odd length, centred.
  Vector kernel;
};

/// h(d) = R^-1 sinc^2(d / R) sampled at integer offsets d = i - j. Rows of an
/// m > n image extend the grid symmetrically. Boundaries are truncated.
Matrix make_sinc2_psf(Eigen::Index n, double radius, Eigen::Index m = 0,
                      int support = 0);

/// Discretized Gaussian rows, each normalized to unit sum.
Matrix make_gaussian_psf(Eigen::Index n, double sigma_psf, Eigen::Index m = 0,
                         int support = 0);

Matrix make_kernel_psf(Eigen::Index n, const Vector& kernel, Eigen::Index m = 0);

Matrix make_psf(const PsfSpec& spec, Eigen::Index n, Eigen::Index m = 0);

enum class ObjectKind { Sinusoid, SharpSmooth };

std::string_view to_string(ObjectKind kind) noexcept;

/// Sinusoid: amplitude * sin(2 pi t / n), one full period.
/// SharpSmooth: a Gaussian bump (sigma = n/10) centred at n/2 plus one-pixel
/// spikes at n/4 and 3n/4, all of height `amplitude`.
Vector make_object(ObjectKind kind, Eigen::Index n, double amplitude);

struct NoiseSpec {
  double mean = 0.0;
  double sigma = 0.0;
  std::uint64_t seed = 0;
};

/// i.i.d. N(mean, sigma^2) from std::mt19937_64 seeded with spec.seed.
Vector draw_noise(const NoiseSpec& spec, Eigen::Index m);

enum class Method {
  Lse,
  Truncated,
  Tikhonov,
  TikhonovNonneg,
  WienerOracle,
  QuasiOptimal
};

std::string_view to_string(Method method) noexcept;
std::optional<Method> parse_method(std::string_view name);
const std::vector<Method>& all_methods();

/// How the target misfit of the data-driven methods is chosen.
///   Fixed:       t = t_{1-alpha}^{(n)}.
///   MatchWiener: t = misfit of the Wiener-oracle estimate of the same trial,
///                so every filter sits at the same significance level.
enum class AlphaMode { Fixed, MatchWiener };

std::string_view to_string(AlphaMode mode) noexcept;

struct ModelConfig {
  std::string name = "custom";
  Matrix psf;
  Vector object;
  double noise_mean = 0.0;
  double noise_sigma = 1.0;
  double alpha = 0.5;
  AlphaMode alpha_mode = AlphaMode::Fixed;
  double rank_rel_tol = kDefaultRankRelTol;
  QuasiOptConfig quasi;

  void validate() const;
};

/// Sinusoid of amplitude 1000 under a sinc^2 PSF with R = 9, sigma_xi = 100,
/// n = 200.
ModelConfig fig2_config();

/// Sharp-plus-smooth object under a Gaussian PSF with sigma_PSF = 3,
/// sigma_xi = 100, n = 200.
ModelConfig fig3_config();

struct MethodResult {
  Method method = Method::Lse;
  bool ok = false;
  std::string error_code;  // empty on success
  std::string message;
  double rms_error = 0.0;
  double misfit = 0.0;
  double significance = 0.0;
  Vector estimate;
  Vector components;
  /// Filter weights, when the method is a diagonal filter of the LSE.
  Vector weights;
};

struct TrialReport {
  std::uint64_t seed = 0;
  double runtime_seconds = 0.0;
  /// Misfit of the true object, chi-square with n degrees of freedom.
  double true_misfit = 0.0;
  double target_misfit = 0.0;
  double alpha = 0.0;
  Vector image;
  Vector refined_image;
  Vector lse_error;  // p_* - p0
  std::vector<MethodResult> results;

  const MethodResult* find(Method m) const;
};

/// A model case with its whitening and SVD done once.
class Experiment {
 public:
  explicit Experiment(ModelConfig config);

  const ModelConfig& config() const noexcept { return config_; }
  const StandardModel& standard_model() const noexcept { return std_; }
  const SpectralBasis& basis() const noexcept { return basis_; }
  const PrincipalComponents& true_components() const noexcept { return p0_; }
  Eigen::Index size() const noexcept { return basis_.size(); }

  /// y0 = H x0 + xi with xi drawn from `seed`.
  Vector simulate_image(std::uint64_t seed) const;

  TrialReport run_trial(const std::vector<Method>& methods,
                        std::uint64_t seed) const;

 private:
  ModelConfig config_;
  GeneralLinearModel model_;
  StandardModel std_;
  SpectralBasis basis_;
  PrincipalComponents p0_;
};

TrialReport run_trial(const ModelConfig& config,
                      const std::vector<Method>& methods, std::uint64_t seed);

struct MethodAggregate {
  Method method = Method::Lse;
  int successes = 0;
  int failures = 0;
  double rms_mean = 0.0;
  double rms_variance = 0.0;
  double significance_mean = 0.0;
  std::vector<double> rms;  // per trial, NaN on failure
  std::vector<std::pair<std::string, int>> failure_codes;
};

struct MonteCarloReport {
  std::string config_name;
  int n_trials = 0;
  std::uint64_t base_seed = 0;
  Eigen::Index size = 0;
  AlphaMode alpha_mode = AlphaMode::Fixed;
  double alpha = 0.0;
  std::vector<MethodAggregate> methods;
  std::vector<double> true_misfits;
  double misfit_mean = 0.0;
  double misfit_variance = 0.0;
  double misfit_ks = 0.0;
  Vector lse_bias;
  Vector lse_variance;
  Vector lse_expected_variance;  // 1 / lambda_k
  /// Kept when requested; the first trial is always kept.
  std::vector<TrialReport> trials;

  const MethodAggregate* find(Method m) const;
};

struct MonteCarloOptions {
  int n_trials = 1;
  std::uint64_t base_seed = 0;
  /// 0: FISHERLENS_THREADS, else hardware concurrency.
  int threads = 0;
  bool keep_trials = false;
};

/// Trial i uses seed base_seed + i. The report does not depend on the
/// thread count.
MonteCarloReport run_monte_carlo(const Experiment& experiment,
                                 const std::vector<Method>& methods,
                                 const MonteCarloOptions& options);

MonteCarloReport run_monte_carlo(const ModelConfig& config,
                                 const std::vector<Method>& methods,
                                 int n_trials, std::uint64_t base_seed);

/// True when w_0 >= w_1 >= ... >= w_{count-1} up to `tol`.
bool is_nonincreasing(const Vector& w, Eigen::Index count, double tol = 0.0);

/// True when some 0 < k < count-1 has w_{k-1} < w_k > w_{k+1}.
bool has_interior_maximum(const Vector& w, Eigen::Index count);

/// Worker count from FISHERLENS_THREADS, else hardware concurrency, never
/// above `jobs`.
int resolve_threads(int requested, int jobs);

}  // namespace fisherlens
