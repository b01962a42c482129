#include "fisherlens/tikhonov.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <string>

#include "fisherlens/nnls.hpp"
#include "fisherlens/root_find.hpp"
#include "fisherlens/stats.hpp"

namespace fisherlens {

namespace {

constexpr double kRootRelTol = 1e-12;

void check_target(const SpectralModel& spec, double target) {
  require(target > 0.0 && std::isfinite(target), ErrorKind::DegenerateTarget,
          "target misfit must be positive and finite");
  const double total = spec.refined_image().squaredNorm();
  if (target >= total) {
    throw Error(ErrorKind::NoRoot,
                "target misfit " + std::to_string(target) +
                    " is not below ||phi||^2 = " + std::to_string(total) +
                    "; the data are compatible with pure noise at this level");
  }
  if (target <= spec.truncated_energy()) {
    throw Error(ErrorKind::NoRoot,
                "target misfit " + std::to_string(target) +
                    " is below the truncated-component energy " +
                    std::to_string(spec.truncated_energy()));
  }
}

// Brackets a decreasing function h(mu) around zero, starting from mu0 and
// stepping by decades. Returns {lo, h(lo), hi, h(hi)} with h(lo) > 0 >= h(hi).
template <class H>
std::array<double, 4> bracket_decreasing(H&& h, double mu0, double mu_max) {
  double lo = mu0, hlo = h(lo);
  while (hlo <= 0.0) {
    lo *= 0.1;
    hlo = h(lo);
    require(lo > std::numeric_limits<double>::min(), ErrorKind::NoRoot,
            "could not bracket the regularization parameter from below");
  }
  double hi = lo, hhi = hlo;
  while (hhi > 0.0) {
    lo = hi;
    hlo = hhi;
    hi *= 10.0;
    if (hi > mu_max) {
      throw Error(ErrorKind::NoRoot,
                  "target misfit not reachable for any regularization "
                  "parameter");
    }
    hhi = h(hi);
  }
  return {lo, hlo, hi, hhi};
}

TikhonovSolution finish(const SpectralModel& spec, double mu, double target,
                        int iterations) {
  TikhonovSolution s;
  s.mu = mu;
  s.gamma = 1.0 / mu;
  s.weights = tikhonov_weights(spec, s.gamma);
  auto est = apply_filter(spec, s.weights, lse(spec));
  s.p_reg = std::move(est.components);
  s.x_reg = std::move(est.object);
  s.achieved_misfit = filtered_misfit(spec, s.weights);
  s.target_misfit = target;
  s.iterations = iterations;
  return s;
}

}  // namespace

FilterWeights tikhonov_weights(const Vector& lambda, double gamma) {
  require(gamma >= 0.0, ErrorKind::DomainError,
          "regularization parameter must be >= 0");
  if (gamma == 0.0) {
    return FilterWeights(Vector::Ones(lambda.size()), FilterKind::Tikhonov);
  }
  return FilterWeights(
      (lambda.array() / (lambda.array() + gamma)).matrix(),
      FilterKind::Tikhonov);
}

FilterWeights tikhonov_weights(const SpectralModel& spec, double gamma) {
  const Eigen::Index r = spec.effective_rank();
  Vector w = Vector::Zero(spec.size());
  w.head(r) = tikhonov_weights(spec.fisher_eigenvalues().head(r), gamma)
                  .weights();
  return FilterWeights(std::move(w), FilterKind::Tikhonov);
}

double discrepancy(double mu, const SpectralModel& spec) {
  require(mu >= 0.0, ErrorKind::DomainError, "mu must be >= 0");
  const Eigen::Index r = spec.effective_rank();
  const auto phi = spec.refined_image().head(r).array();
  const auto lam = spec.fisher_eigenvalues().head(r).array();
  return (phi / (1.0 + mu * lam)).square().sum() + spec.truncated_energy();
}

TikhonovSolution solve_gamma_for_target(const SpectralModel& spec,
                                        double target) {
  check_target(spec, target);
  const auto h = [&](double mu) { return discrepancy(mu, spec) - target; };
  const double lambda1 = spec.fisher_eigenvalues()(0);
  const auto [lo, hlo, hi, hhi] =
      bracket_decreasing(h, 1.0 / lambda1, std::numeric_limits<double>::max() / 100);
  const RootResult root =
      brent_root(h, lo, hi, hlo, hhi, kRootRelTol, 1e-13 * target);
  if (!root.converged) {
    throw Error(ErrorKind::NoRoot, "discrepancy root-finding did not converge");
  }
  return finish(spec, root.x, target, root.iterations);
}

TikhonovSolution solve_gamma(const SpectralModel& spec, double alpha) {
  const double t =
      chi2_upper_quantile(alpha, static_cast<int>(spec.size()));
  TikhonovSolution s = solve_gamma_for_target(spec, t);
  s.alpha = alpha;
  return s;
}

double lagrangian_value(const SpectralModel& spec,
                        const PrincipalComponents& p, double gamma) {
  require(gamma >= 0.0, ErrorKind::DomainError,
          "regularization parameter must be >= 0");
  require_same_size(p.coeffs.size(), spec.size(), "principal components");
  return (spec.refined_image() - spec.singular_values().cwiseProduct(p.coeffs))
             .squaredNorm() +
         gamma * p.coeffs.squaredNorm();
}

namespace {

// Shared state for the non-negative path: Q0 = V Lambda V^T, c = V Delta phi.
struct NonnegSystem {
  const SpectralModel& spec;
  Matrix q0;
  Vector c;
  double qp_tol;
  std::optional<Vector> warm;
  double last_kkt = 0.0;

  NonnegSystem(const SpectralModel& s, double tol)
      : spec(s), qp_tol(tol) {
    const Matrix& v = spec.eigen_basis();
    q0 = v * spec.fisher_eigenvalues().asDiagonal() * v.transpose();
    q0 = 0.5 * (q0 + q0.transpose());
    c = v * spec.singular_values().cwiseProduct(spec.refined_image());
  }

  Vector solve(double gamma) {
    Matrix q = q0;
    q.diagonal().array() += gamma;
    NonnegQpResult res = solve_nonneg_qp(q, c, 0.01 * qp_tol, 0, warm);
    warm = res.x;
    last_kkt = res.kkt_residual;
    return res.x;
  }

  double misfit_of(const Vector& x) const {
    const Vector p = spec.eigen_basis().transpose() * x;
    return (spec.refined_image() - spec.singular_values().cwiseProduct(p))
        .squaredNorm();
  }
};

}  // namespace

Vector nonneg_regularized(const SpectralModel& spec, double gamma,
                          double qp_tol) {
  require(gamma > 0.0, ErrorKind::DomainError,
          "non-negative path needs gamma > 0");
  NonnegSystem sys(spec, qp_tol);
  return sys.solve(gamma);
}

TikhonovSolution solve_nonneg_for_target(const SpectralModel& spec,
                                         double target, double qp_tol) {
  require(qp_tol > 0.0, ErrorKind::InvalidArgument, "qp_tol must be > 0");
  check_target(spec, target);
  NonnegSystem sys(spec, qp_tol);

  const auto h = [&](double mu) {
    return sys.misfit_of(sys.solve(1.0 / mu)) - target;
  };
  const double lambda1 = spec.fisher_eigenvalues()(0);
  // Past gamma ~ 1e-14 lambda_1 the QP is numerically unregularized.
  const double mu_max = 1e14 / lambda1;
  const auto [lo, hlo, hi, hhi] = bracket_decreasing(h, 1.0 / lambda1, mu_max);
  const RootResult root =
      brent_root(h, lo, hi, hlo, hhi, kRootRelTol, 1e-12 * target);
  if (!root.converged) {
    throw ConvergenceError(ErrorKind::NotConverged,
                           "non-negative regularization path did not converge",
                           sys.warm.value_or(Vector()), root.iterations);
  }

  TikhonovSolution s;
  s.mu = root.x;
  s.gamma = 1.0 / root.x;
  s.x_reg = sys.solve(s.gamma);
  s.kkt_residual = sys.last_kkt;
  s.x_reg = s.x_reg.cwiseMax(0.0);
  s.p_reg = analyze(spec, s.x_reg, ComponentRole::Filtered);
  s.weights = tikhonov_weights(spec, s.gamma);
  s.achieved_misfit = sys.misfit_of(s.x_reg);
  s.target_misfit = target;
  s.iterations = root.iterations;
  if (s.kkt_residual > qp_tol) {
    throw ConvergenceError(ErrorKind::NotConverged,
                           "non-negative QP KKT residual above tolerance",
                           s.x_reg, s.iterations);
  }
  return s;
}

TikhonovSolution solve_nonneg(const SpectralModel& spec, double alpha,
                              double qp_tol) {
  const double t = chi2_upper_quantile(alpha, static_cast<int>(spec.size()));
  TikhonovSolution s = solve_nonneg_for_target(spec, t, qp_tol);
  s.alpha = alpha;
  return s;
}

}  // namespace fisherlens
