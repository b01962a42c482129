#include "fisherlens/simkit.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <map>
#include <mutex>
#include <numbers>
#include <random>
#include <thread>

#include "fisherlens/stats.hpp"
#include "fisherlens/tikhonov.hpp"

namespace fisherlens {

std::string_view to_string(PsfKind kind) noexcept {
  switch (kind) {
    case PsfKind::Sinc2:
      return "sinc2";
    case PsfKind::Gaussian:
      return "gaussian";
    case PsfKind::CustomKernel:
      return "custom_kernel";
  }
  return "unknown";
}

std::string_view to_string(ObjectKind kind) noexcept {
  switch (kind) {
    case ObjectKind::Sinusoid:
      return "sinusoid";
    case ObjectKind::SharpSmooth:
      return "sharp_smooth";
  }
  return "unknown";
}

std::string_view to_string(Method method) noexcept {
  switch (method) {
    case Method::Lse:
      return "lse";
    case Method::Truncated:
      return "truncated";
    case Method::Tikhonov:
      return "tikhonov";
    case Method::TikhonovNonneg:
      return "tikhonov_nonneg";
    case Method::WienerOracle:
      return "wiener_oracle";
    case Method::QuasiOptimal:
      return "quasi_optimal";
  }
  return "unknown";
}

std::optional<Method> parse_method(std::string_view name) {
  for (Method m : all_methods()) {
    if (to_string(m) == name) return m;
  }
  return std::nullopt;
}

const std::vector<Method>& all_methods() {
  static const std::vector<Method> methods = {
      Method::Lse,          Method::Truncated,    Method::Tikhonov,
      Method::TikhonovNonneg, Method::WienerOracle, Method::QuasiOptimal};
  return methods;
}

std::string_view to_string(AlphaMode mode) noexcept {
  return mode == AlphaMode::Fixed ? "fixed" : "match_wiener";
}

namespace {

double sinc(double x) {
  if (x == 0.0) return 1.0;
  // Exact zeros at the non-zero integers.
  if (x == std::round(x)) return 0.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

void check_grid(Eigen::Index n, Eigen::Index& m, int support) {
  require(n > 0, ErrorKind::InvalidArgument, "grid size must be > 0");
  if (m == 0) m = n;
  require(m >= n, ErrorKind::DimensionMismatch,
          "image grid must have at least as many pixels as the object");
  require(support == 0 || (support > 0 && support % 2 == 1),
          ErrorKind::InvalidArgument, "kernel support must be odd");
}

// Fills H(i, j) = h(d) with d the offset between image pixel i and object
// pixel j on a grid extended symmetrically when m > n.
template <class H>
Matrix fill_psf(Eigen::Index n, Eigen::Index m, int support, H&& h) {
  Matrix psf = Matrix::Zero(m, n);
  const double shift = 0.5 * static_cast<double>(m - n);
  const double half = 0.5 * support;
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const double d = static_cast<double>(i) - shift - static_cast<double>(j);
      if (support > 0 && std::abs(d) > half) continue;
      psf(i, j) = h(d);
    }
  }
  return psf;
}

}  // namespace

Matrix make_sinc2_psf(Eigen::Index n, double radius, Eigen::Index m,
                      int support) {
  require(radius > 0.0 && std::isfinite(radius), ErrorKind::InvalidRadius,
          "sinc^2 radius must be > 0");
  require(static_cast<double>(n) >= 2.0 * radius, ErrorKind::InvalidRadius,
          "grid must span at least two radii");
  check_grid(n, m, support);
  return fill_psf(n, m, support, [radius](double d) {
    const double s = sinc(d / radius);
    return s * s / radius;
  });
}

Matrix make_gaussian_psf(Eigen::Index n, double sigma_psf, Eigen::Index m,
                         int support) {
  require(sigma_psf > 0.0 && std::isfinite(sigma_psf), ErrorKind::InvalidSigma,
          "Gaussian PSF width must be > 0");
  check_grid(n, m, support);
  const double inv = 1.0 / (2.0 * sigma_psf * sigma_psf);
  Matrix psf =
      fill_psf(n, m, support, [inv](double d) { return std::exp(-d * d * inv); });
  for (Eigen::Index i = 0; i < m; ++i) {
    const double sum = psf.row(i).sum();
    require(sum > 0.0, ErrorKind::InvalidSigma,
            "Gaussian PSF row underflows; width too small for this grid");
    psf.row(i) /= sum;
  }
  return psf;
}

Matrix make_kernel_psf(Eigen::Index n, const Vector& kernel, Eigen::Index m) {
  require(kernel.size() % 2 == 1, ErrorKind::InvalidArgument,
          "kernel length must be odd");
  check_grid(n, m, 0);
  require((m - n) % 2 == 0, ErrorKind::InvalidArgument,
          "a sampled kernel needs m - n even");
  const Eigen::Index c = kernel.size() / 2;
  return fill_psf(n, m, 0, [&](double d) {
    const auto k = static_cast<Eigen::Index>(std::lround(d));
    return std::abs(k) <= c ? kernel(c + k) : 0.0;
  });
}

Matrix make_psf(const PsfSpec& spec, Eigen::Index n, Eigen::Index m) {
  switch (spec.kind) {
    case PsfKind::Sinc2:
      return make_sinc2_psf(n, spec.radius, m, spec.support);
    case PsfKind::Gaussian:
      return make_gaussian_psf(n, spec.sigma_psf, m, spec.support);
    case PsfKind::CustomKernel:
      return make_kernel_psf(n, spec.kernel, m);
  }
  throw Error(ErrorKind::InvalidArgument, "unknown PSF kind");
}

Vector make_object(ObjectKind kind, Eigen::Index n, double amplitude) {
  require(n >= 16, ErrorKind::InvalidArgument, "object needs n >= 16");
  Vector x(n);
  const double nn = static_cast<double>(n);
  switch (kind) {
    case ObjectKind::Sinusoid:
      for (Eigen::Index t = 0; t < n; ++t) {
        x(t) = amplitude *
               std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / nn);
      }
      break;
    case ObjectKind::SharpSmooth: {
      const double c = 0.5 * nn;
      const double s = nn / 10.0;
      for (Eigen::Index t = 0; t < n; ++t) {
        const double d = static_cast<double>(t) - c;
        x(t) = amplitude * std::exp(-d * d / (2.0 * s * s));
      }
      x(n / 4) += amplitude;
      x(3 * n / 4) += amplitude;
      break;
    }
  }
  return x;
}

Vector draw_noise(const NoiseSpec& spec, Eigen::Index m) {
  require(spec.sigma >= 0.0 && std::isfinite(spec.sigma),
          ErrorKind::InvalidSigma, "noise sigma must be >= 0");
  Vector xi = Vector::Constant(m, spec.mean);
  if (spec.sigma == 0.0) return xi;
  std::mt19937_64 gen(spec.seed);
  std::normal_distribution<double> dist(spec.mean, spec.sigma);
  for (Eigen::Index i = 0; i < m; ++i) xi(i) = dist(gen);
  return xi;
}

void ModelConfig::validate() const {
  require(psf.rows() > 0 && psf.cols() > 0, ErrorKind::InvalidArgument,
          "model has no PSF");
  require_same_size(object.size(), psf.cols(), "object");
  require(noise_sigma >= 0.0 && std::isfinite(noise_sigma),
          ErrorKind::InvalidSigma, "noise sigma must be >= 0");
  require(alpha > 0.0 && alpha < 1.0, ErrorKind::DomainError,
          "alpha must lie in (0, 1)");
}

ModelConfig fig2_config() {
  ModelConfig c;
  c.name = "fig2";
  c.psf = make_sinc2_psf(200, 9.0);
  c.object = make_object(ObjectKind::Sinusoid, 200, 1000.0);
  c.noise_sigma = 100.0;
  c.alpha_mode = AlphaMode::MatchWiener;
  return c;
}

ModelConfig fig3_config() {
  ModelConfig c;
  c.name = "fig3";
  c.psf = make_gaussian_psf(200, 3.0);
  c.object = make_object(ObjectKind::SharpSmooth, 200, 1000.0);
  c.noise_sigma = 100.0;
  c.alpha_mode = AlphaMode::MatchWiener;
  return c;
}

const MethodResult* TrialReport::find(Method m) const {
  for (const auto& r : results) {
    if (r.method == m) return &r;
  }
  return nullptr;
}

const MethodAggregate* MonteCarloReport::find(Method m) const {
  for (const auto& a : methods) {
    if (a.method == m) return &a;
  }
  return nullptr;
}

namespace {

// Noiseless configurations are whitened with unit variance.
GeneralLinearModel build_model(const ModelConfig& c) {
  c.validate();
  const double s = c.noise_sigma > 0.0 ? c.noise_sigma : 1.0;
  return GeneralLinearModel::white(c.psf, c.noise_mean, s);
}

}  // namespace

Experiment::Experiment(ModelConfig config)
    : config_(std::move(config)),
      model_(build_model(config_)),
      std_(whiten_psf(model_)),
      basis_(decompose_basis(std_, config_.rank_rel_tol)),
      p0_(analyze(basis_, config_.object, ComponentRole::Object)) {}

Vector Experiment::simulate_image(std::uint64_t seed) const {
  const NoiseSpec noise{config_.noise_mean, config_.noise_sigma, seed};
  return config_.psf * config_.object + draw_noise(noise, config_.psf.rows());
}

TrialReport Experiment::run_trial(const std::vector<Method>& methods,
                                  std::uint64_t seed) const {
  const auto start = std::chrono::steady_clock::now();
  TrialReport rep;
  rep.seed = seed;
  rep.image = simulate_image(seed);
  const SpectralModel spec(basis_, std_.whiten_image(rep.image,
                                                     model_.noise_mean()));
  rep.refined_image = spec.refined_image();
  const int dof = static_cast<int>(spec.size());
  const Eigen::Index n = spec.size();
  const double root_n = std::sqrt(static_cast<double>(n));

  const PrincipalComponents p_star = lse(spec);
  rep.lse_error = p_star.coeffs - p0_.coeffs;
  rep.true_misfit = misfit(spec, p0_);

  const FilterWeights wiener_w = wiener_oracle_weights(spec, p0_);
  if (config_.alpha_mode == AlphaMode::MatchWiener) {
    rep.target_misfit = filtered_misfit(spec, wiener_w);
    rep.alpha = significance_of(rep.target_misfit, dof);
  } else {
    rep.alpha = config_.alpha;
    rep.target_misfit = chi2_upper_quantile(config_.alpha, dof);
  }
  const double t = rep.target_misfit;

  for (Method method : methods) {
    MethodResult r;
    r.method = method;
    try {
      PrincipalComponents p;
      Vector x;
      switch (method) {
        case Method::Lse:
          p = p_star;
          x = synthesize(spec, p);
          r.weights = Vector::Zero(n);
          r.weights.head(spec.effective_rank()).setOnes();
          break;
        case Method::Truncated: {
          const FilterWeights w =
              truncated_weights(n, truncation_for_target(spec, t));
          auto est = apply_filter(spec, w, p_star);
          p = std::move(est.components);
          x = std::move(est.object);
          r.weights = w.weights();
          break;
        }
        case Method::Tikhonov: {
          TikhonovSolution s = solve_gamma_for_target(spec, t);
          p = std::move(s.p_reg);
          x = std::move(s.x_reg);
          r.weights = s.weights.weights();
          break;
        }
        case Method::TikhonovNonneg: {
          TikhonovSolution s = solve_nonneg_for_target(spec, t);
          p = std::move(s.p_reg);
          x = std::move(s.x_reg);
          break;
        }
        case Method::WienerOracle: {
          auto est = apply_filter(spec, wiener_w, p_star);
          p = std::move(est.components);
          x = std::move(est.object);
          r.weights = wiener_w.weights();
          break;
        }
        case Method::QuasiOptimal: {
          QuasiOptSolution s = solve_for_target(spec, t, config_.quasi);
          p = std::move(s.p_filtered);
          x = std::move(s.x_filtered);
          r.weights = s.weights.weights();
          break;
        }
      }
      r.misfit = misfit(spec, p);
      r.significance = significance_of(r.misfit, dof);
      r.rms_error = (x - config_.object).norm() / root_n;
      r.components = std::move(p.coeffs);
      r.estimate = std::move(x);
      r.ok = true;
    } catch (const Error& e) {
      r.error_code = std::string(error_code(e.kind()));
      r.message = e.what();
    }
    rep.results.push_back(std::move(r));
  }
  rep.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  return rep;
}

TrialReport run_trial(const ModelConfig& config,
                      const std::vector<Method>& methods, std::uint64_t seed) {
  return Experiment(config).run_trial(methods, seed);
}

bool is_nonincreasing(const Vector& w, Eigen::Index count, double tol) {
  require(count >= 0 && count <= w.size(), ErrorKind::InvalidArgument,
          "count out of range");
  for (Eigen::Index k = 1; k < count; ++k) {
    if (w(k) > w(k - 1) + tol) return false;
  }
  return true;
}

bool has_interior_maximum(const Vector& w, Eigen::Index count) {
  require(count >= 0 && count <= w.size(), ErrorKind::InvalidArgument,
          "count out of range");
  for (Eigen::Index k = 1; k + 1 < count; ++k) {
    if (w(k) > w(k - 1) && w(k) > w(k + 1)) return true;
  }
  return false;
}

int resolve_threads(int requested, int jobs) {
  int t = requested;
  if (t <= 0) {
    if (const char* env = std::getenv("FISHERLENS_THREADS")) {
      t = std::atoi(env);
    }
  }
  if (t <= 0) t = static_cast<int>(std::thread::hardware_concurrency());
  return std::clamp(t, 1, std::max(jobs, 1));
}

MonteCarloReport run_monte_carlo(const Experiment& experiment,
                                 const std::vector<Method>& methods,
                                 const MonteCarloOptions& options) {
  require(options.n_trials > 0, ErrorKind::InvalidArgument,
          "need at least one trial");
  const auto n_trials = static_cast<size_t>(options.n_trials);
  std::vector<TrialReport> trials(n_trials);

  std::atomic<size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  const auto worker = [&] {
    for (;;) {
      const size_t i = next.fetch_add(1);
      if (i >= n_trials) return;
      try {
        TrialReport rep =
            experiment.run_trial(methods, options.base_seed + i);
        if (!options.keep_trials && i > 0) {
          rep.image.resize(0);
          rep.refined_image.resize(0);
          for (auto& r : rep.results) {
            r.estimate.resize(0);
            r.components.resize(0);
            r.weights.resize(0);
          }
        }
        trials[i] = std::move(rep);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = n_trials;
      }
    }
  };
  const int threads = resolve_threads(options.threads, options.n_trials);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(threads));
    for (int k = 0; k < threads; ++k) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);

  // Reduction in trial order.
  MonteCarloReport rep;
  rep.config_name = experiment.config().name;
  rep.n_trials = options.n_trials;
  rep.base_seed = options.base_seed;
  rep.size = experiment.size();
  rep.alpha_mode = experiment.config().alpha_mode;
  rep.alpha = experiment.config().alpha;
  const double nt = static_cast<double>(n_trials);

  for (Method m : methods) {
    MethodAggregate agg;
    agg.method = m;
    std::map<std::string, int> codes;
    double sum = 0.0, sig = 0.0;
    for (const auto& tr : trials) {
      const MethodResult* r = tr.find(m);
      if (r && r->ok) {
        ++agg.successes;
        agg.rms.push_back(r->rms_error);
        sum += r->rms_error;
        sig += r->significance;
      } else {
        ++agg.failures;
        agg.rms.push_back(std::numeric_limits<double>::quiet_NaN());
        ++codes[r ? r->error_code : "missing"];
      }
    }
    if (agg.successes > 0) {
      agg.rms_mean = sum / agg.successes;
      agg.significance_mean = sig / agg.successes;
      double ss = 0.0;
      for (double v : agg.rms) {
        if (!std::isnan(v)) ss += (v - agg.rms_mean) * (v - agg.rms_mean);
      }
      agg.rms_variance = agg.successes > 1 ? ss / (agg.successes - 1) : 0.0;
    }
    agg.failure_codes.assign(codes.begin(), codes.end());
    rep.methods.push_back(std::move(agg));
  }

  rep.true_misfits.reserve(n_trials);
  double msum = 0.0;
  for (const auto& tr : trials) {
    rep.true_misfits.push_back(tr.true_misfit);
    msum += tr.true_misfit;
  }
  rep.misfit_mean = msum / nt;
  double mss = 0.0;
  for (double v : rep.true_misfits) {
    mss += (v - rep.misfit_mean) * (v - rep.misfit_mean);
  }
  rep.misfit_variance = n_trials > 1 ? mss / (nt - 1.0) : 0.0;
  rep.misfit_ks =
      ks_statistic_chi2(rep.true_misfits, static_cast<int>(rep.size));

  const Eigen::Index n = rep.size;
  rep.lse_bias = Vector::Zero(n);
  for (const auto& tr : trials) rep.lse_bias += tr.lse_error;
  rep.lse_bias /= nt;
  rep.lse_variance = Vector::Zero(n);
  for (const auto& tr : trials) {
    rep.lse_variance += (tr.lse_error - rep.lse_bias).cwiseAbs2();
  }
  if (n_trials > 1) rep.lse_variance /= nt - 1.0;
  const Eigen::Index r = experiment.basis().effective_rank();
  rep.lse_expected_variance = Vector::Zero(n);
  rep.lse_expected_variance.head(r) =
      experiment.basis().fisher_eigenvalues().head(r).cwiseInverse();

  if (options.keep_trials) {
    rep.trials = std::move(trials);
  } else {
    rep.trials.push_back(std::move(trials.front()));
  }
  return rep;
}

MonteCarloReport run_monte_carlo(const ModelConfig& config,
                                 const std::vector<Method>& methods,
                                 int n_trials, std::uint64_t base_seed) {
  MonteCarloOptions opt;
  opt.n_trials = n_trials;
  opt.base_seed = base_seed;
  return run_monte_carlo(Experiment(config), methods, opt);
}

}  // namespace fisherlens
