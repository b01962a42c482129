// Acceptance run: one PASS/FAIL line per criterion.
//
// Exit status is 0 when every check ran to completion, whatever its verdict;
// pass --strict to exit 1 when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "brute_qp.hpp"
#include "cli.hpp"
#include "fisherlens/nnls.hpp"
#include "fisherlens/quasiopt.hpp"
#include "fisherlens/simkit.hpp"
#include "fisherlens/stats.hpp"
#include "fisherlens/tikhonov.hpp"
#include "test_util.hpp"

using namespace fisherlens;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

Verdict misfit_law() {
  const auto t0 = std::chrono::steady_clock::now();
  const Experiment ex(fig2_config());
  MonteCarloOptions o;
  o.n_trials = 2000;
  o.base_seed = 1;
  const MonteCarloReport r = run_monte_carlo(ex, {}, o);
  const double secs = seconds_since(t0);
  const double band = 3.0 * std::sqrt(400.0 / 2000.0);
  const double crit = ks_critical_value(2000, 0.01);
  const bool ok = std::abs(r.misfit_mean - 200.0) <= band &&
                  r.misfit_ks < crit && secs < 60.0;
  return {ok, fmt("mean %.3f (200 +- %.3f), KS %.4f < %.4f, %.1f s",
                  r.misfit_mean, band, r.misfit_ks, crit, secs)};
}

Verdict lse_moments() {
  std::mt19937_64 rng(2024);
  ModelConfig c;
  c.name = "random16";
  c.psf = testutil::random_psf(rng, 16, 0.1, 10.0);
  c.object = testutil::normal_vector(rng, 16, 5.0);
  c.noise_sigma = 1.0;
  const Experiment ex(c);
  MonteCarloOptions o;
  o.n_trials = 5000;
  o.base_seed = 1;
  const MonteCarloReport r = run_monte_carlo(ex, {}, o);
  const Vector se = (r.lse_expected_variance / 5000.0).cwiseSqrt();
  const double bias = (r.lse_bias.array().abs() / se.array()).maxCoeff();
  const double var =
      (r.lse_variance.array() / r.lse_expected_variance.array() - 1.0)
          .abs()
          .maxCoeff();
  return {bias <= 3.0 && var <= 0.15,
          fmt("max |bias|/SE %.2f (<= 3), max |var/expected - 1| %.3f (<= 0.15)",
              bias, var)};
}

Verdict wiener_optimality() {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> dim(1, 16);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  int violations = 0;
  double worst = -1e300;
  for (int prob = 0; prob < 100; ++prob) {
    const int n = dim(rng);
    Vector lambda(n);
    for (int k = 0; k < n; ++k) lambda(k) = std::pow(10.0, 6.0 * unit(rng) - 3.0);
    const PrincipalComponents p0{testutil::normal_vector(rng, n, 3.0),
                                 ComponentRole::Object};
    const FilterWeights best = wiener_oracle_weights(lambda, p0);
    const double e0 = filtered_error(best, lambda, p0);
    for (int rep = 0; rep < 1000; ++rep) {
      const double scale = std::pow(10.0, -4.0 * unit(rng));
      Vector w = best.weights();
      for (int k = 0; k < n; ++k) {
        w(k) = std::clamp(w(k) + scale * (2.0 * unit(rng) - 1.0), 0.0, 1.0);
      }
      const double gain =
          e0 - filtered_error(FilterWeights(w, FilterKind::Custom), lambda, p0);
      worst = std::max(worst, gain);
      if (gain > 1e-12) ++violations;
    }
  }
  return {violations == 0,
          fmt("%d of 100000 perturbations beat the Wiener weights by > 1e-12 "
              "(largest gain %.2e)",
              violations, worst)};
}

struct Comparison {
  int within = 0;
  int trials = 0;
  double median = 0.0;
};

Comparison compare(const MonteCarloReport& r) {
  const MethodAggregate* q = r.find(Method::QuasiOptimal);
  const MethodAggregate* w = r.find(Method::WienerOracle);
  Comparison c;
  c.trials = r.n_trials;
  std::vector<double> ratios;
  for (size_t i = 0; i < q->rms.size(); ++i) {
    if (std::isnan(q->rms[i]) || std::isnan(w->rms[i])) continue;
    ratios.push_back(q->rms[i] / w->rms[i]);
    if (q->rms[i] <= 1.25 * w->rms[i]) ++c.within;
  }
  std::sort(ratios.begin(), ratios.end());
  c.median = ratios.empty() ? NAN : ratios[ratios.size() / 2];
  return c;
}

MonteCarloReport fig_run(const ModelConfig& cfg, std::vector<Method> methods) {
  const Experiment ex(cfg);
  MonteCarloOptions o;
  o.n_trials = 200;
  o.base_seed = 1;
  return run_monte_carlo(ex, methods, o);
}

Verdict quasi_vs_wiener(const MonteCarloReport& fig2,
                        const MonteCarloReport& fig3) {
  const Comparison a = compare(fig2);
  const Comparison b = compare(fig3);
  const double fa = double(a.within) / a.trials;
  const double fb = double(b.within) / b.trials;
  return {fa >= 0.9 && fb >= 0.8,
          fmt("fig2 %d/%d within 1.25x (need 90%%, median ratio %.3f); "
              "fig3 %d/%d (need 80%%, median ratio %.3f)",
              a.within, a.trials, a.median, b.within, b.trials, b.median)};
}

Verdict lse_instability(const MonteCarloReport& fig2) {
  const MethodAggregate* l = fig2.find(Method::Lse);
  const MethodAggregate* w = fig2.find(Method::WienerOracle);
  double worst = 1e300;
  for (size_t i = 0; i < l->rms.size(); ++i) {
    worst = std::min(worst, l->rms[i] / w->rms[i]);
  }
  return {worst >= 10.0,
          fmt("smallest per-trial RMS(lse)/RMS(wiener) %.3g over %zu trials "
              "(>= 10)",
              worst, l->rms.size())};
}

Verdict scalar_oracle() {
  double worst = 0.0;
  int cases = 0;
  for (double lambda : {0.1, 1.0, 10.0}) {
    for (double phi : {2.0, 5.0, 20.0}) {
      for (double t : {0.5, 1.0, 4.0}) {
        if (phi <= std::sqrt(t)) continue;
        const SpectralModel spec = testutil::diag_model(
            Vector::Constant(1, std::sqrt(lambda)), Vector::Constant(1, phi));
        const QuasiOptSolution s = solve_for_target(spec, t, QuasiOptConfig{});
        const double p2 = (phi / std::sqrt(t) - 1.0) / lambda;
        worst = std::max(worst, testutil::rel_err(
                                    s.p_min.coeffs(0) * s.p_min.coeffs(0), p2));
        ++cases;
      }
    }
  }
  return {worst <= 1e-8,
          fmt("%d grid points, max relative error %.2e (<= 1e-8)", cases, worst)};
}

Verdict tikhonov_path() {
  std::mt19937_64 rng(7);
  std::vector<SpectralModel> problems;
  for (int i = 0; i < 50; ++i) problems.push_back(testutil::random_model(rng, 16));
  double root = 0.0, ach = 0.0, lim_lo = 0.0, lim_hi = 0.0;
  int solved = 0;
  for (const SpectralModel& spec : problems) {
    const PrincipalComponents ps = lse(spec);
    const double nrm = ps.coeffs.norm();
    const auto small = apply_filter(spec, tikhonov_weights(spec, 1e-12), ps);
    const auto large = apply_filter(spec, tikhonov_weights(spec, 1e12), ps);
    lim_lo = std::max(lim_lo, (small.components.coeffs - ps.coeffs).norm() / nrm);
    lim_hi = std::max(lim_hi, large.components.coeffs.norm() / nrm);
  }
  // The fig2 image joins the root-finding part only: its weakest retained
  // lambda is far below 1e-12, so the small-gamma limit does not apply there.
  const Experiment ex(fig2_config());
  problems.emplace_back(ex.basis(), ex.standard_model().whiten_image(
                                        ex.simulate_image(42),
                                        Vector::Zero(ex.size())));
  for (const SpectralModel& spec : problems) {
    const double t = chi2_upper_quantile(0.5, static_cast<int>(spec.size()));
    if (spec.refined_image().squaredNorm() <= t) continue;
    const TikhonovSolution s = solve_gamma(spec, 0.5);
    ++solved;
    root = std::max(root, std::abs(discrepancy(s.mu, spec) - t) / t);
    ach = std::max(ach, std::abs(misfit(spec, s.p_reg) - t) / t);
  }
  const bool ok = solved > 0 && root <= 1e-10 && ach <= 1e-6 &&
                  lim_lo <= 1e-8 && lim_hi <= 1e-8;
  return {ok, fmt("%d problems: root residual %.1e t, misfit error %.1e; "
                  "|p(1e-12) - p*| %.1e, |p(1e12)| %.1e (relative, 50 problems)",
                  solved, root, ach, lim_lo, lim_hi)};
}

Verdict nnls_exhaustive() {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<int> dim(1, 6);
  double err = 0.0, neg = 0.0;
  for (int prob = 0; prob < 50; ++prob) {
    const int n = dim(rng);
    const SpectralModel spec = testutil::random_model(rng, n);
    const double gamma = std::pow(10.0, -2.0 + 3.0 * (prob % 4) / 3.0);
    const Matrix& v = spec.eigen_basis();
    const Matrix q =
        2.0 * (v * spec.fisher_eigenvalues().asDiagonal() * v.transpose() +
               gamma * Matrix::Identity(n, n));
    const Vector c =
        2.0 * v * spec.singular_values().cwiseProduct(spec.refined_image());
    const Vector x = nonneg_regularized(spec, gamma, 1e-12);
    err = std::max(err, (x - testutil::brute_force_nonneg_qp(q, c))
                            .cwiseAbs()
                            .maxCoeff());
    neg = std::max(neg, -x.minCoeff());

    Matrix a(n + 2, n);
    for (int j = 0; j < n; ++j) a.col(j) = testutil::normal_vector(rng, n + 2);
    const Vector b = testutil::normal_vector(rng, n + 2, 3.0);
    const Vector y = nnls(a, b, 1e-12).x;
    err = std::max(err, (y - testutil::brute_force_nonneg_qp(
                                 a.transpose() * a, a.transpose() * b))
                            .cwiseAbs()
                            .maxCoeff());
    neg = std::max(neg, -y.minCoeff());
  }
  return {err <= 1e-6 && neg <= 1e-8,
          fmt("50 problems x 2 forms: max deviation %.1e (<= 1e-6), most "
              "negative entry %.1e",
              err, neg > 0.0 ? -neg : 0.0)};
}

Verdict gradient_check() {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> mag(0.1, 10.0);
  std::bernoulli_distribution sgn(0.5);
  double worst = 0.0;
  for (int pt = 0; pt < 100; ++pt) {
    const SpectralModel spec = testutil::random_model(rng, 8, 3.0);
    Vector p(8);
    for (int k = 0; k < 8; ++k) p(k) = (sgn(rng) ? 1 : -1) * mag(rng);
    const Vector g = objective_gradient(spec, {p, ComponentRole::Trial});
    Vector fd(8);
    for (int k = 0; k < 8; ++k) {
      const double h = 1e-6 * std::max(1.0, std::abs(p(k)));
      Vector a = p, b = p;
      a(k) += h;
      b(k) -= h;
      fd(k) = (objective(spec, {a, ComponentRole::Trial}) -
               objective(spec, {b, ComponentRole::Trial})) /
              (2.0 * h);
    }
    worst = std::max(worst, (g - fd).cwiseAbs().maxCoeff() /
                                g.cwiseAbs().maxCoeff());
  }
  return {worst <= 1e-5,
          fmt("100 points, max relative error %.2e (<= 1e-5)", worst)};
}

Verdict weight_shapes(const MonteCarloReport& fig2) {
  const TrialReport& tr = fig2.trials.front();
  const Experiment ex(fig2_config());
  const Eigen::Index r = ex.basis().effective_rank();
  const MethodResult* t = tr.find(Method::Tikhonov);
  const MethodResult* w = tr.find(Method::WienerOracle);
  const bool mono = t && t->ok && is_nonincreasing(t->weights, r, 1e-12);
  const bool bump = w && w->ok && has_interior_maximum(w->weights, r);
  return {mono && bump,
          fmt("seed %llu: tikhonov non-increasing %s, wiener interior maximum %s",
              static_cast<unsigned long long>(tr.seed), mono ? "yes" : "no",
              bump ? "yes" : "no")};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Verdict determinism() {
  const fs::path base = fs::temp_directory_path() / "fisherlens_acceptance";
  fs::remove_all(base);
  std::ostringstream sink;
  auto run = [&](const fs::path& out, const char* threads) {
    const std::string o = out.string();
    const char* argv[] = {"fisherlens", "simulate", "--case", "fig2",
                          "--trials",   "8",        "--seed", "42",
                          "--threads",  threads,    "--out",  o.c_str()};
    return cli::run(12, argv, sink, sink);
  };
  if (run(base / "a", "1") != 0 || run(base / "b", "4") != 0) {
    return {false, "simulate failed: " + sink.str()};
  }
  int files = 0, same = 0;
  for (const auto& e : fs::directory_iterator(base / "a")) {
    ++files;
    if (slurp(e.path()) == slurp(base / "b" / e.path().filename())) ++same;
  }
  return {files == 5 && same == files,
          fmt("%d of %d output files bit-identical across two runs", same,
              files)};
}

}  // namespace

int main(int argc, char** argv) {
  const bool strict = argc > 1 && std::strcmp(argv[1], "--strict") == 0;
  std::vector<std::pair<std::string, std::function<Verdict()>>> checks;

  MonteCarloReport fig2, fig3;
  bool figs_ready = false;
  auto figs = [&] {
    if (!figs_ready) {
      fig2 = fig_run(fig2_config(), {Method::Lse, Method::Tikhonov, Method::WienerOracle,
                          Method::QuasiOptimal});
      fig3 = fig_run(fig3_config(), {Method::WienerOracle, Method::QuasiOptimal});
      figs_ready = true;
    }
  };

  checks.emplace_back("misfit law", misfit_law);
  checks.emplace_back("LSE bias and variance", lse_moments);
  checks.emplace_back("Wiener optimality", wiener_optimality);
  checks.emplace_back("quasi-optimal vs Wiener", [&] {
    figs();
    return quasi_vs_wiener(fig2, fig3);
  });
  checks.emplace_back("LSE instability", [&] {
    figs();
    return lse_instability(fig2);
  });
  checks.emplace_back("scalar quasi-optimal oracle", scalar_oracle);
  checks.emplace_back("Tikhonov path", tikhonov_path);
  checks.emplace_back("NNLS vs exhaustive enumeration", nnls_exhaustive);
  checks.emplace_back("gradient check", gradient_check);
  checks.emplace_back("weight monotonicity contrast", [&] {
    figs();
    return weight_shapes(fig2);
  });
  checks.emplace_back("simulate determinism", determinism);

  int failed = 0;
  for (size_t i = 0; i < checks.size(); ++i) {
    Verdict v;
    try {
      v = checks[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    if (!v.pass) ++failed;
    std::printf("%-4s %2zu %s: %s\n", v.pass ? "PASS" : "FAIL", i + 1,
                checks[i].first.c_str(), v.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu criteria, %d failed\n", checks.size(), failed);
  return strict && failed > 0 ? 1 : 0;
}
