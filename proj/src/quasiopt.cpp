#include "fisherlens/quasiopt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "fisherlens/root_find.hpp"
#include "fisherlens/stats.hpp"
#include "fisherlens/tikhonov.hpp"

namespace fisherlens {

std::string_view to_string(QuasiOptInit init) noexcept {
  switch (init) {
    case QuasiOptInit::TikhonovSeed:
      return "tikhonov_seed";
    case QuasiOptInit::TruncatedSeed:
      return "truncated_seed";
  }
  return "unknown";
}

void QuasiOptConfig::validate() const {
  require(alpha > 0.0 && alpha < 1.0, ErrorKind::DomainError,
          "alpha must lie in (0, 1)");
  require(grad_tol > 0.0 && constraint_tol > 0.0, ErrorKind::InvalidArgument,
          "tolerances must be > 0");
  require(max_iters > 0, ErrorKind::InvalidArgument, "max_iters must be > 0");
  require(truncated_starts >= 0, ErrorKind::InvalidArgument,
          "truncated_starts must be >= 0");
}

FilterWeights quasi_weights(const Vector& lambda, const PrincipalComponents& p) {
  require_same_size(lambda.size(), p.coeffs.size(), "quasi-optimal weights");
  require((lambda.array() > 0.0).all(), ErrorKind::DomainError,
          "Fisher eigenvalues must be > 0");
  const auto lp2 = (lambda.array() * p.coeffs.array().square()).eval();
  return FilterWeights((lp2 / (1.0 + lp2)).matrix(), FilterKind::QuasiOptimal);
}

FilterWeights quasi_weights(const SpectralModel& spec,
                            const PrincipalComponents& p) {
  require_same_size(p.coeffs.size(), spec.size(), "quasi-optimal weights");
  const Eigen::Index r = spec.effective_rank();
  Vector w = Vector::Zero(spec.size());
  w.head(r) = quasi_weights(spec.fisher_eigenvalues().head(r),
                            PrincipalComponents{p.coeffs.head(r), p.role})
                  .weights();
  return FilterWeights(std::move(w), FilterKind::QuasiOptimal);
}

namespace {

// Weights over all n components from the full eigenvalue vector, so that F
// and G stay smooth functions of every p_k.
Vector raw_weights(const SpectralModel& spec, const Vector& p) {
  const auto lp2 =
      (spec.fisher_eigenvalues().array() * p.array().square()).eval();
  return (lp2 / (1.0 + lp2)).matrix();
}

}  // namespace

double objective(const SpectralModel& spec, const PrincipalComponents& p) {
  require_same_size(p.coeffs.size(), spec.size(), "objective");
  const Vector p_star = lse(spec).coeffs;
  return (raw_weights(spec, p.coeffs).cwiseProduct(p_star) - p.coeffs)
      .squaredNorm();
}

Vector objective_gradient(const SpectralModel& spec,
                          const PrincipalComponents& p) {
  require_same_size(p.coeffs.size(), spec.size(), "objective gradient");
  const Vector p_star = lse(spec).coeffs;
  const auto lam = spec.fisher_eigenvalues().array();
  const auto x = p.coeffs.array();
  const auto d = (1.0 + lam * x.square()).eval();
  const auto w = (lam * x.square() / d).eval();
  const auto dw = (2.0 * lam * x / d.square()).eval();
  const auto res = (w * p_star.array() - x).eval();
  return (2.0 * res * (dw * p_star.array() - 1.0)).matrix();
}

double constraint_value(const SpectralModel& spec,
                        const PrincipalComponents& p) {
  require_same_size(p.coeffs.size(), spec.size(), "constraint");
  const auto lam = spec.fisher_eigenvalues().array();
  return (spec.refined_image().array().square() /
          (1.0 + lam * p.coeffs.array().square()).square())
      .sum();
}

Vector constraint_gradient(const SpectralModel& spec,
                           const PrincipalComponents& p) {
  require_same_size(p.coeffs.size(), spec.size(), "constraint gradient");
  const auto lam = spec.fisher_eigenvalues().array();
  const auto x = p.coeffs.array();
  const auto d = (1.0 + lam * x.square()).eval();
  return (-4.0 * spec.refined_image().array().square() * lam * x / d.cube())
      .matrix();
}

double objective_two_regime(const SpectralModel& spec,
                            const PrincipalComponents& p,
                            Eigen::Index boundary) {
  require_same_size(p.coeffs.size(), spec.size(), "two-regime objective");
  require(boundary >= 0 && boundary <= spec.size(), ErrorKind::InvalidArgument,
          "regime boundary out of range");
  const Vector p_star = lse(spec).coeffs;
  return (p.coeffs.head(boundary) - p_star.head(boundary)).squaredNorm() +
         p.coeffs.tail(spec.size() - boundary).squaredNorm();
}

// The solver.
//
// With y_k = sqrt(lambda_k)|p_k| and b_k = |phi_k|, component k contributes
// s_k = b_k^2 / (1 + y_k^2)^2 to G and f_k = y_k^2 Q_k^2 / (lambda_k D_k^2) to
// F, with Q = y^2 - b y + 1 and D = 1 + y^2. In the variable
// u_k = b_k^2 - s_k in [0, b_k^2) the constraint is the hyperplane
// sum u_k = ||phi||^2 - t, and p_k = 0 is the bound u_k = 0. F is minimized on
// that polytope by a feasible projected Newton method with a diagonal
// Hessian (absolute curvature where it is negative), an exact multiplier for
// the hyperplane, and an Armijo search on F.
namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

struct CompEval {
  double y = 0.0;
  double f = 0.0;     // contribution to F
  double g = 0.0;     // d f / d u
  double h = 0.0;     // d^2 f / d u^2
  double dsdp = 0.0;  // |d s / d p|, for the stationarity measure
};

// u and s = b^2 - u are both carried: u resolves the region near p = 0 and s
// the region of large |p|, where it is tiny compared with b^2.
struct Component {
  Eigen::Index index = 0;
  double b = 0.0;
  double lam = 0.0;

  double y_of(double u, double s) const {
    if (u <= 0.0) return 0.0;
    if (s <= 0.0) return std::numeric_limits<double>::infinity();
    const double rs = std::sqrt(s);
    if (u <= s) return std::sqrt(u / (rs * (b + rs)));
    return std::sqrt(b / rs - 1.0);
  }

  double u_of(double y) const {
    const double y2 = y * y;
    const double d = 1.0 + y2;
    return b * b * y2 * (2.0 + y2) / (d * d);
  }

  double s_of(double y) const {
    const double d = 1.0 + y * y;
    return b * b / (d * d);
  }

  double f_of_y(double y) const {
    const double q = y * y - b * y + 1.0;
    const double d = 1.0 + y * y;
    const double r = y * q / d;
    return r * r / lam;
  }

  CompEval eval(double u, double s) const {
    CompEval e;
    const double y = y_of(u, s);
    e.y = y;
    const double y2 = y * y;
    const double q = y2 - b * y + 1.0;
    const double dq = 2.0 * y - b;
    const double d = 1.0 + y2;
    const double dd = 2.0 * y;
    const double nn = y * q;
    const double dn = 3.0 * y2 - 2.0 * b * y + 1.0;
    const double r = nn / d;
    const double num1 = dn * d - nn * dd;
    const double dr = num1 / (d * d);
    e.f = r * r / lam;
    const double b2 = b * b;
    e.g = q * dr * d * d / (2.0 * lam * b2);
    e.dsdp = 4.0 * b2 * y * std::sqrt(lam) / (d * d * d);
    const double ddn = 6.0 * y - 2.0 * b;
    const double ddr =
        (ddn * d - 2.0 * nn) / (d * d) - 2.0 * dd * num1 / (d * d * d);
    const double dp = dq * dr * d * d + q * ddr * d * d + q * dr * 2.0 * d * dd;
    // d^2 f/du^2 = D^3 P'(y) / (8 lambda b^4 y); it diverges like 1/y at the
    // bound, where only its magnitude is used.
    const double y_eff = std::max(y, 1e-8);
    e.h = d * d * d * dp / (8.0 * lam * b2 * b2 * y_eff);
    return e;
  }

  // Curvature floor on the natural scale of the component.
  double h_floor() const { return 1e-6 / (lam * b * b * b * b); }
};

struct Problem {
  std::vector<Component> comps;
  double target_s = 0.0;  // sum s = t - tail
};

struct State {
  std::vector<double> u;
  std::vector<double> s;
};

struct Iterate {
  State x;
  double nu_u = 0.0;  // multiplier of the hyperplane in u
  double stationarity = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
};

// Restores sum s = target_s by spreading the rounding residual over the
// interior components in proportion to their room.
void renormalize(const Problem& pr, State& x) {
  double sum = 0.0;
  for (double v : x.s) sum += v;
  const double residual = pr.target_s - sum;
  if (residual == 0.0) return;
  const auto room = [&](size_t k) { return residual > 0.0 ? x.u[k] : x.s[k]; };
  double total = 0.0;
  for (size_t k = 0; k < x.u.size(); ++k) {
    if (x.u[k] > 0.0) total += room(k);
  }
  if (total <= 0.0) return;
  for (size_t k = 0; k < x.u.size(); ++k) {
    if (x.u[k] <= 0.0) continue;
    const double delta = residual * room(k) / total;
    x.s[k] += delta;
    x.u[k] -= delta;
    if (x.u[k] <= 0.0) {
      x.u[k] = 0.0;
      x.s[k] = pr.comps[k].b * pr.comps[k].b;
    }
  }
}

Iterate minimize(const Problem& pr, State x, int max_iters, double grad_tol) {
  const size_t m = pr.comps.size();
  std::vector<CompEval> ev(m);
  std::vector<double> hh(m), dir(m);
  std::vector<bool> is_free(m);
  State trial;
  Iterate out;

  for (int it = 0;; ++it) {
    for (size_t k = 0; k < m; ++k) {
      ev[k] = pr.comps[k].eval(x.u[k], x.s[k]);
      hh[k] = std::max(std::abs(ev[k].h), pr.comps[k].h_floor());
      is_free[k] = x.u[k] > 0.0;
    }

    // Multiplier and free set. Bound components join when the reduced
    // gradient pushes them inward.
    double nu = 0.0;
    for (size_t pass = 0; pass <= m + 1; ++pass) {
      double num = 0.0, den = 0.0;
      for (size_t k = 0; k < m; ++k) {
        if (!is_free[k]) continue;
        num += ev[k].g / hh[k];
        den += 1.0 / hh[k];
      }
      nu = den > 0.0 ? -num / den : 0.0;
      bool changed = false;
      for (size_t k = 0; k < m; ++k) {
        if (x.u[k] > 0.0) continue;
        const bool inward = ev[k].g + nu < 0.0;
        if (inward != is_free[k]) {
          is_free[k] = inward;
          changed = true;
        }
      }
      if (!changed) break;
    }

    // Stationarity of F + nu_p G in p: |(g + nu) ds/dp| per component (zero
    // at the bound), relative to the largest |g ds/dp|. A bound component
    // that wants to move inward is a violation of its own.
    double worst = 0.0, scale = 0.0, bound_violation = 0.0;
    for (size_t k = 0; k < m; ++k) {
      scale = std::max(scale, std::abs(ev[k].g) * ev[k].dsdp);
      if (x.u[k] > 0.0) {
        worst = std::max(worst, std::abs(ev[k].g + nu) * ev[k].dsdp);
      } else if (ev[k].g + nu < 0.0) {
        bound_violation =
            std::max(bound_violation, -(ev[k].g + nu) / std::abs(ev[k].g));
      }
    }
    out.x = x;
    out.nu_u = nu;
    out.iterations = it;
    out.stationarity = scale > 0.0 ? worst / scale : worst;
    if (out.stationarity <= grad_tol && bound_violation <= grad_tol) {
      out.converged = true;
      return out;
    }
    if (it >= max_iters) return out;

    // Newton direction on the free set; its entries sum to zero.
    double slope = 0.0;
    double step_max = 1.0;
    for (size_t k = 0; k < m; ++k) {
      dir[k] = is_free[k] ? -(ev[k].g + nu) / hh[k] : 0.0;
      slope += (ev[k].g + nu) * dir[k];
      if (dir[k] < 0.0) {
        step_max = std::min(step_max, x.u[k] / -dir[k]);
      } else if (dir[k] > 0.0) {
        step_max = std::min(step_max, 0.99 * x.s[k] / dir[k]);
      }
    }
    if (!(slope < 0.0)) return out;

    double step = step_max;
    bool accepted = false;
    trial = x;
    for (int ls = 0; ls < 80 && !accepted; ++ls, step *= 0.5) {
      double delta = 0.0, mag = 0.0;
      bool moved = false;
      for (size_t k = 0; k < m; ++k) {
        trial.u[k] = x.u[k];
        trial.s[k] = x.s[k];
        if (dir[k] == 0.0) continue;
        trial.u[k] = x.u[k] + step * dir[k];
        trial.s[k] = x.s[k] - step * dir[k];
        if (trial.u[k] <= 0.0 ||
            (step == step_max && dir[k] < 0.0 && x.u[k] / -dir[k] <= step)) {
          trial.u[k] = 0.0;
          trial.s[k] = pr.comps[k].b * pr.comps[k].b;
        }
        if (trial.u[k] == x.u[k] && trial.s[k] == x.s[k]) continue;
        moved = true;
        const double fn =
            pr.comps[k].f_of_y(pr.comps[k].y_of(trial.u[k], trial.s[k]));
        delta += fn - ev[k].f;
        mag += std::abs(fn) + std::abs(ev[k].f);
      }
      if (!moved) return out;
      accepted = delta <= 1e-4 * step * slope + 4.0 * kEps * mag;
    }
    if (!accepted) return out;
    x = trial;
    renormalize(pr, x);
  }
}

State state_from_y(const Problem& pr, const std::vector<double>& y) {
  State x;
  x.u.resize(y.size());
  x.s.resize(y.size());
  for (size_t k = 0; k < y.size(); ++k) {
    x.u[k] = pr.comps[k].u_of(y[k]);
    x.s[k] = pr.comps[k].s_of(y[k]);
  }
  renormalize(pr, x);
  return x;
}

// Scales the seed y0 by kappa so that sum_k s_k(kappa y0_k) = target_s.
State scale_seed(const Problem& pr, const std::vector<double>& y0) {
  const auto g_minus_t = [&](double log_kappa) {
    const double kappa = std::exp(log_kappa);
    double s = 0.0;
    for (size_t k = 0; k < y0.size(); ++k) s += pr.comps[k].s_of(kappa * y0[k]);
    return s - pr.target_s;
  };
  double lo = 0.0, hi = 0.0;
  double flo = g_minus_t(lo), fhi = flo;
  if (flo > 0.0) {
    while (fhi > 0.0) {
      lo = hi;
      flo = fhi;
      hi += 2.0;
      fhi = g_minus_t(hi);
      require(hi < 700.0, ErrorKind::InfeasibleConstraint,
              "seed cannot be scaled onto the constraint surface");
    }
  } else {
    while (flo <= 0.0) {
      hi = lo;
      fhi = flo;
      lo -= 2.0;
      flo = g_minus_t(lo);
      require(lo > -700.0, ErrorKind::InfeasibleConstraint,
              "seed cannot be scaled onto the constraint surface");
    }
  }
  const RootResult root =
      brent_root(g_minus_t, lo, hi, flo, fhi, 1e-15, 1e-15 * pr.target_s);
  const double kappa = std::exp(root.x);
  std::vector<double> y(y0.size());
  for (size_t k = 0; k < y0.size(); ++k) y[k] = kappa * y0[k];
  return state_from_y(pr, y);
}

// Largest K for which keeping the first K components can meet the
// constraint, i.e. the energy of the rest is below target_s.
size_t max_truncation(const Problem& pr) {
  double dropped = 0.0;
  size_t keep = pr.comps.size();
  while (keep > 0) {
    const double b = pr.comps[keep - 1].b;
    if (dropped + b * b >= pr.target_s) break;
    dropped += b * b;
    --keep;
  }
  return keep;
}

State tikhonov_seed(const SpectralModel& spec, const Problem& pr,
                    double target) {
  const TikhonovSolution tik = solve_gamma_for_target(spec, target);
  std::vector<double> y0(pr.comps.size());
  for (size_t k = 0; k < pr.comps.size(); ++k) {
    y0[k] = pr.comps[k].b * tik.weights.weights()(pr.comps[k].index);
  }
  return scale_seed(pr, y0);
}

// LSE on the first `keep` components (y = b), zero beyond.
State truncated_seed(const Problem& pr, size_t keep) {
  std::vector<double> y0(pr.comps.size(), 0.0);
  for (size_t k = 0; k < keep; ++k) y0[k] = pr.comps[k].b;
  return scale_seed(pr, y0);
}

QuasiOptSolution assemble(const SpectralModel& spec, const Problem& pr,
                          const Iterate& iter, double target,
                          QuasiOptInit seed) {
  const Eigen::Index n = spec.size();
  const Vector& phi = spec.refined_image();
  const Vector& lam = spec.fisher_eigenvalues();
  QuasiOptSolution sol;
  sol.p_min.coeffs = Vector::Zero(n);
  sol.p_min.role = ComponentRole::Trial;
  for (size_t k = 0; k < pr.comps.size(); ++k) {
    const Component& c = pr.comps[k];
    const double y = c.y_of(iter.x.u[k], iter.x.s[k]);
    const double sign = phi(c.index) < 0.0 ? -1.0 : 1.0;
    sol.p_min.coeffs(c.index) = sign * y / std::sqrt(lam(c.index));
  }
  sol.weights = quasi_weights(spec, sol.p_min);
  auto est = apply_filter(spec, sol.weights, lse(spec));
  sol.p_filtered = std::move(est.components);
  sol.x_filtered = std::move(est.object);
  // Summed per component in y, which avoids the cancellation in w p* - p.
  sol.objective_value = 0.0;
  for (size_t k = 0; k < pr.comps.size(); ++k) {
    sol.objective_value +=
        pr.comps[k].f_of_y(pr.comps[k].y_of(iter.x.u[k], iter.x.s[k]));
  }
  sol.constraint_residual =
      std::abs(constraint_value(spec, sol.p_min) - target) / target;
  sol.stationarity = iter.stationarity;
  sol.multiplier = -iter.nu_u;
  sol.target = target;
  sol.iterations = iter.iterations;
  sol.seed_used = seed;
  return sol;
}

}  // namespace

QuasiOptSolution solve_for_target(const SpectralModel& spec, double target,
                                  const QuasiOptConfig& config) {
  require(config.grad_tol > 0.0 && config.constraint_tol > 0.0,
          ErrorKind::InvalidArgument, "tolerances must be > 0");
  require(config.max_iters > 0 && config.truncated_starts >= 0,
          ErrorKind::InvalidArgument, "invalid iteration limits");
  require(target > 0.0 && std::isfinite(target), ErrorKind::DegenerateTarget,
          "target misfit must be positive and finite");
  const double total = spec.refined_image().squaredNorm();
  if (total <= target) {
    throw Error(ErrorKind::InfeasibleConstraint,
                "||phi||^2 = " + std::to_string(total) +
                    " does not exceed the target misfit " +
                    std::to_string(target) +
                    "; the data are indistinguishable from pure noise");
  }
  const double tail = spec.truncated_energy();
  if (target <= tail) {
    throw Error(ErrorKind::InfeasibleConstraint,
                "target misfit " + std::to_string(target) +
                    " does not exceed the truncated-component energy " +
                    std::to_string(tail));
  }

  Problem pr;
  const Eigen::Index r = spec.effective_rank();
  const Vector& phi = spec.refined_image();
  const Vector& lam = spec.fisher_eigenvalues();
  for (Eigen::Index k = 0; k < r; ++k) {
    if (phi(k) == 0.0) continue;
    pr.comps.push_back({k, std::abs(phi(k)), lam(k)});
  }
  pr.target_s = target - tail;

  // F is not convex on the constraint surface. Every start is run and the
  // converged point with the smallest F is kept: the configured seed, the
  // other one, then truncated seeds spread over 1..K_max.
  struct Start {
    QuasiOptInit init;
    size_t keep;
  };
  const size_t k_max = max_truncation(pr);
  std::vector<Start> starts;
  const Start tik{QuasiOptInit::TikhonovSeed, 0};
  const Start trunc{QuasiOptInit::TruncatedSeed, k_max};
  if (config.init_strategy == QuasiOptInit::TikhonovSeed) {
    starts = {tik, trunc};
  } else {
    starts = {trunc, tik};
  }
  if (config.truncated_starts > 0 && k_max > 1) {
    const size_t stride = std::max<size_t>(
        1, k_max / static_cast<size_t>(config.truncated_starts));
    for (size_t keep = 1; keep < k_max; keep += stride) {
      starts.push_back({QuasiOptInit::TruncatedSeed, keep});
    }
  }

  std::optional<QuasiOptSolution> best;
  bool best_converged = false;
  int total_iters = 0;
  for (const Start& st : starts) {
    State x0;
    try {
      x0 = st.init == QuasiOptInit::TikhonovSeed ? tikhonov_seed(spec, pr, target)
                                                 : truncated_seed(pr, st.keep);
    } catch (const Error&) {
      continue;
    }
    const Iterate it =
        minimize(pr, std::move(x0), config.max_iters, config.grad_tol);
    total_iters += it.iterations;
    QuasiOptSolution sol = assemble(spec, pr, it, target, st.init);
    const bool ok =
        it.converged && sol.constraint_residual <= config.constraint_tol;
    if (!best || (ok && !best_converged) ||
        (ok == best_converged && sol.objective_value < best->objective_value)) {
      best = std::move(sol);
      best_converged = ok;
    }
  }
  if (!best) {
    throw Error(ErrorKind::InfeasibleConstraint,
                "no starting point on the constraint surface");
  }
  best->iterations = total_iters;
  if (best_converged) return std::move(*best);
  throw ConvergenceError(
      ErrorKind::MaxItersExceeded,
      "quasi-optimal solve did not reach stationarity " +
          std::to_string(config.grad_tol) + " (best " +
          std::to_string(best->stationarity) + ")",
      best->p_min.coeffs, total_iters);
}

QuasiOptSolution solve(const SpectralModel& spec, const QuasiOptConfig& config) {
  config.validate();
  const double t =
      chi2_upper_quantile(config.alpha, static_cast<int>(spec.size()));
  return solve_for_target(spec, t, config);
}

}  // namespace fisherlens
