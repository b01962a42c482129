#include <doctest.h>

#include <random>

#include "brute_qp.hpp"
#include "fisherlens/stats.hpp"
#include "fisherlens/tikhonov.hpp"
#include "test_util.hpp"

using namespace fisherlens;
using doctest::Approx;
using Eigen::Vector2d;

TEST_CASE("weights") {
  CHECK(tikhonov_weights(Vector2d(4, 1), 0.0).weights().isApprox(Vector2d(1, 1)));
  CHECK(tikhonov_weights(Vector2d(4, 1), 1.0).weights().isApprox(Vector2d(0.8, 0.5)));
  CHECK(tikhonov_weights(Vector2d(4, 1), 4.0).weights()(0) == 0.5);
  CHECK_THROWS_AS(tikhonov_weights(Vector2d(4, 1), -1.0), Error);
}

TEST_CASE("discrepancy") {
  const auto spec = testutil::diag_model(Vector::Ones(1), Vector::Constant(1, 2.0));
  CHECK(discrepancy(0.0, spec) == Approx(4.0));
  CHECK(discrepancy(1.0, spec) == Approx(1.0));
  const auto zero = testutil::diag_model(Vector2d(2, 1), Vector2d(0, 0));
  CHECK(discrepancy(3.0, zero) == 0.0);

  std::mt19937_64 rng(6);
  const SpectralModel r = testutil::random_model(rng, 9);
  CHECK(discrepancy(0.0, r) == Approx(r.refined_image().squaredNorm()));
  double prev = discrepancy(0.0, r);
  for (double mu = 1e-6; mu < 1e6; mu *= 3.0) {
    const double f = discrepancy(mu, r);
    CHECK(f < prev);
    prev = f;
  }
}

TEST_CASE("scalar closed form") {
  // (2 / (1 + mu))^2 = 1  =>  mu = 1.
  const auto spec = testutil::diag_model(Vector::Ones(1), Vector::Constant(1, 2.0));
  const TikhonovSolution s = solve_gamma_for_target(spec, 1.0);
  CHECK(s.mu == Approx(1.0).epsilon(1e-10));
  CHECK(s.gamma == Approx(1.0).epsilon(1e-10));
  CHECK(s.weights.weights()(0) == Approx(0.5).epsilon(1e-10));
  CHECK(std::abs(s.p_reg.coeffs(0)) == Approx(1.0).epsilon(1e-10));
  CHECK(lagrangian_value(spec, s.p_reg, 1.0) == Approx(2.0).epsilon(1e-10));
}

TEST_CASE("root residual, achieved misfit and filter identity") {
  std::mt19937_64 rng(12);
  for (int rep = 0; rep < 30; ++rep) {
    const SpectralModel spec = testutil::random_model(rng, 12);
    const double t = chi2_upper_quantile(0.5, 12);
    if (spec.refined_image().squaredNorm() <= t) continue;
    const TikhonovSolution s = solve_gamma(spec, 0.5);
    CHECK(std::abs(discrepancy(s.mu, spec) - t) <= 1e-10 * t);
    CHECK(testutil::rel_err(s.achieved_misfit, t) <= 1e-6);
    CHECK(testutil::rel_err(misfit(spec, s.p_reg), t) <= 1e-6);
    CHECK(s.gamma == Approx(1.0 / s.mu));
    const auto via_filter =
        apply_filter(spec, tikhonov_weights(spec, s.gamma), lse(spec));
    CHECK(via_filter.components.coeffs.isApprox(s.p_reg.coeffs, 1e-14));
    CHECK(via_filter.object.isApprox(s.x_reg, 1e-14));
  }
}

TEST_CASE("gamma limits") {
  std::mt19937_64 rng(13);
  for (int rep = 0; rep < 10; ++rep) {
    const SpectralModel spec = testutil::random_model(rng, 8);
    const PrincipalComponents ps = lse(spec);
    const auto small = apply_filter(spec, tikhonov_weights(spec, 1e-12), ps);
    const auto large = apply_filter(spec, tikhonov_weights(spec, 1e12), ps);
    CHECK((small.components.coeffs - ps.coeffs).norm() <= 1e-8 * ps.coeffs.norm());
    CHECK(large.components.coeffs.norm() <= 1e-8 * ps.coeffs.norm());
  }
}

TEST_CASE("errors") {
  const auto spec = testutil::diag_model(Vector::Ones(1), Vector::Constant(1, 2.0));
  auto kind = [&](double t) {
    try {
      solve_gamma_for_target(spec, t);
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::Parse;
  };
  CHECK(kind(4.0) == ErrorKind::NoRoot);
  CHECK(kind(5.0) == ErrorKind::NoRoot);
  CHECK(kind(0.0) == ErrorKind::DegenerateTarget);
}

TEST_CASE("Lagrangian minimizer") {
  std::mt19937_64 rng(14);
  std::normal_distribution<double> nd(0.0, 1.0);
  const SpectralModel spec = testutil::random_model(rng, 6);
  const double gamma = 0.3;
  const auto pg = apply_filter(spec, tikhonov_weights(spec, gamma), lse(spec));
  const double best = lagrangian_value(spec, pg.components, gamma);
  CHECK(lagrangian_value(spec, lse(spec), 0.0) == Approx(0.0));
  CHECK(lagrangian_value(spec, {Vector::Zero(6), ComponentRole::Trial}, gamma) ==
        Approx(spec.refined_image().squaredNorm()));
  for (int rep = 0; rep < 500; ++rep) {
    PrincipalComponents p = pg.components;
    p.coeffs += 0.05 * testutil::normal_vector(rng, 6);
    CHECK(lagrangian_value(spec, p, gamma) >= best - 1e-12);
  }
}

TEST_CASE("non-negative variant, clamped two-pixel case") {
  const auto spec = testutil::diag_model(Vector2d(1, 1), Vector2d(1, -1));
  const TikhonovSolution s = solve_nonneg_for_target(spec, 1.5);
  CHECK(s.x_reg(1) == Approx(0.0).scale(1.0).epsilon(1e-8));
  CHECK(s.x_reg(0) == Approx(1.0 - std::sqrt(0.5)).epsilon(1e-6));
  CHECK(testutil::rel_err(s.achieved_misfit, 1.5) <= 1e-6);
}

TEST_CASE("non-negative variant equals the plain one when inactive") {
  // Noiseless positive object with a positive operator.
  const int n = 5;
  Matrix h = Matrix::Identity(n, n);
  for (int i = 0; i + 1 < n; ++i) h(i, i + 1) = h(i + 1, i) = 0.3;
  const Vector x0 = Vector::LinSpaced(n, 20.0, 40.0);
  const auto wp = whiten(GeneralLinearModel::white(h, 0, 1), h * x0);
  const SpectralModel spec = decompose(wp.model, wp.whitened_image);
  const TikhonovSolution plain = solve_gamma(spec, 0.5);
  REQUIRE(plain.x_reg.minCoeff() > 0.0);
  const TikhonovSolution nn = solve_nonneg(spec, 0.5);
  CHECK((nn.x_reg - plain.x_reg).cwiseAbs().maxCoeff() <= 1e-8 * x0.maxCoeff());
  CHECK(nn.gamma == Approx(plain.gamma).epsilon(1e-6));
}

TEST_CASE("non-negative QP at fixed gamma against enumeration") {
  std::mt19937_64 rng(15);
  std::uniform_int_distribution<int> dim(1, 6);
  for (int prob = 0; prob < 50; ++prob) {
    const int n = dim(rng);
    const SpectralModel spec = testutil::random_model(rng, n);
    const double gamma = 0.1;
    const Matrix& v = spec.eigen_basis();
    const Matrix q =
        2.0 * (v * spec.fisher_eigenvalues().asDiagonal() * v.transpose() +
               gamma * Matrix::Identity(n, n));
    const Vector c = 2.0 * v *
                     spec.singular_values().cwiseProduct(spec.refined_image());
    const Vector oracle = testutil::brute_force_nonneg_qp(q, c);
    const Vector x = nonneg_regularized(spec, gamma, 1e-12);
    CHECK((x - oracle).cwiseAbs().maxCoeff() <= 1e-6);
    CHECK(x.minCoeff() >= -1e-8);
  }
}

TEST_CASE("non-negative path meets the target") {
  std::mt19937_64 rng(16);
  int solved = 0;
  for (int rep = 0; rep < 20; ++rep) {
    const SpectralModel spec = testutil::random_model(rng, 6, 20.0);
    const double t = chi2_upper_quantile(0.5, 6);
    try {
      const TikhonovSolution s = solve_nonneg(spec, 0.5);
      CHECK(testutil::rel_err(s.achieved_misfit, t) <= 1e-6);
      CHECK(s.x_reg.minCoeff() >= -kDefaultQpTol);
      CHECK(s.kkt_residual <= kDefaultQpTol);
      ++solved;
    } catch (const Error& e) {
      // Clamping can keep the misfit above t for every gamma.
      CHECK(e.kind() == ErrorKind::NoRoot);
    }
  }
  CHECK(solved > 0);
}
