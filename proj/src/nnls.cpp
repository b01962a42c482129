#include "fisherlens/nnls.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace fisherlens {

namespace {

Vector solve_free(const Matrix& q, const Vector& c,
                  const std::vector<Eigen::Index>& free) {
  const auto nf = static_cast<Eigen::Index>(free.size());
  Matrix qf(nf, nf);
  Vector cf(nf);
  for (Eigen::Index i = 0; i < nf; ++i) {
    cf(i) = c(free[i]);
    for (Eigen::Index j = 0; j < nf; ++j) qf(i, j) = q(free[i], free[j]);
  }
  Eigen::LLT<Matrix> llt(qf);
  if (llt.info() != Eigen::Success) {
    return qf.completeOrthogonalDecomposition().solve(cf);
  }
  return llt.solve(cf);
}

}  // namespace

double nonneg_qp_kkt_residual(const Matrix& q, const Vector& c,
                              const Vector& x) {
  const Vector g = q * x - c;
  const double scale = std::max(1.0, c.cwiseAbs().maxCoeff());
  double worst = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double v = x(i) > 0.0 ? std::abs(g(i)) : std::max(0.0, -g(i));
    worst = std::max(worst, v);
    if (x(i) < 0.0) worst = std::max(worst, -x(i));
  }
  return worst / scale;
}

NonnegQpResult solve_nonneg_qp(const Matrix& q, const Vector& c, double tol,
                               int max_iter,
                               const std::optional<Vector>& warm_start) {
  const Eigen::Index n = c.size();
  require(q.rows() == n && q.cols() == n, ErrorKind::DimensionMismatch,
          "QP matrix does not match the linear term");
  require(tol > 0.0, ErrorKind::InvalidArgument, "QP tolerance must be > 0");
  if (max_iter <= 0) max_iter = static_cast<int>(10 * n + 50);

  const double scale = std::max(1.0, c.cwiseAbs().maxCoeff());
  Vector x = Vector::Zero(n);
  std::vector<bool> is_free(static_cast<size_t>(n), false);
  if (warm_start) {
    require_same_size(warm_start->size(), n, "QP warm start");
    require((warm_start->array() >= 0.0).all(), ErrorKind::InvalidArgument,
            "QP warm start must be non-negative");
    x = *warm_start;
    for (Eigen::Index i = 0; i < n; ++i) is_free[i] = x(i) > 0.0;
  }

  const auto free_list = [&] {
    std::vector<Eigen::Index> f;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (is_free[i]) f.push_back(i);
    }
    return f;
  };

  NonnegQpResult out;
  // A warm start may not be a stationary point of its own free set; the first
  // pass re-solves before looking at multipliers.
  bool need_solve = warm_start.has_value();
  int it = 0;
  for (; it < max_iter; ++it) {
    if (!need_solve) {
      const Vector g = q * x - c;
      Eigen::Index enter = -1;
      double most_negative = -tol * scale;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (!is_free[i] && g(i) < most_negative) {
          most_negative = g(i);
          enter = i;
        }
      }
      if (enter < 0) break;
      is_free[enter] = true;
    }
    need_solve = false;

    // Inner loop: restore feasibility of the free-set solution.
    for (;;) {
      const auto free = free_list();
      if (free.empty()) {
        x.setZero();
        break;
      }
      const Vector z = solve_free(q, c, free);
      bool feasible = true;
      for (Eigen::Index k = 0; k < z.size(); ++k) {
        if (z(k) <= 0.0) {
          feasible = false;
          break;
        }
      }
      if (feasible) {
        x.setZero();
        for (size_t k = 0; k < free.size(); ++k) x(free[k]) = z(k);
        break;
      }
      double step = 1.0;
      for (size_t k = 0; k < free.size(); ++k) {
        const double xi = x(free[k]);
        if (z(k) <= 0.0) step = std::min(step, xi / (xi - z(k)));
      }
      for (size_t k = 0; k < free.size(); ++k) {
        const Eigen::Index i = free[k];
        x(i) += step * (z(k) - x(i));
        if (x(i) <= 0.0 || (z(k) <= 0.0 && x(i) <= 1e-300)) {
          x(i) = 0.0;
          is_free[i] = false;
        }
      }
      // Guarantee progress when the blocking variable sat exactly on its
      // bound already.
      bool dropped = false;
      for (size_t k = 0; k < free.size(); ++k) {
        if (!is_free[free[k]]) dropped = true;
      }
      if (!dropped) {
        for (size_t k = 0; k < free.size(); ++k) {
          if (z(k) <= 0.0) {
            x(free[k]) = 0.0;
            is_free[free[k]] = false;
            break;
          }
        }
      }
    }
  }

  out.x = std::move(x);
  out.iterations = it;
  out.kkt_residual = nonneg_qp_kkt_residual(q, c, out.x);
  if (it >= max_iter && out.kkt_residual > tol) {
    throw ConvergenceError(ErrorKind::NotConverged,
                           "non-negative QP did not converge", out.x, it);
  }
  return out;
}

NonnegQpResult nnls(const Matrix& a, const Vector& b, double tol,
                    int max_iter) {
  require_same_size(a.rows(), b.size(), "NNLS right-hand side");
  const Matrix q = a.transpose() * a;
  const Vector c = a.transpose() * b;
  return solve_nonneg_qp(q, c, tol, max_iter);
}

}  // namespace fisherlens
