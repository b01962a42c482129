#pragma once

// Exhaustive oracle for min 1/2 x^T Q x - c^T x, x >= 0: every free set is
// solved as an equality problem and the best non-negative candidate wins.

#include <limits>
#include <vector>

#include <Eigen/Dense>

namespace testutil {

inline Eigen::VectorXd brute_force_nonneg_qp(const Eigen::MatrixXd& q,
                                             const Eigen::VectorXd& c) {
  const auto n = static_cast<int>(q.rows());
  Eigen::VectorXd best = Eigen::VectorXd::Zero(n);
  double best_val = 0.0;
  for (unsigned mask = 1; mask < (1u << n); ++mask) {
    std::vector<int> idx;
    for (int i = 0; i < n; ++i) {
      if (mask & (1u << i)) idx.push_back(i);
    }
    const auto k = static_cast<Eigen::Index>(idx.size());
    Eigen::MatrixXd qs(k, k);
    Eigen::VectorXd cs(k);
    for (Eigen::Index a = 0; a < k; ++a) {
      cs(a) = c(idx[a]);
      for (Eigen::Index b = 0; b < k; ++b) qs(a, b) = q(idx[a], idx[b]);
    }
    const Eigen::VectorXd xs = qs.ldlt().solve(cs);
    if (xs.minCoeff() < 0.0) continue;
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    for (Eigen::Index a = 0; a < k; ++a) x(idx[a]) = xs(a);
    const double val = 0.5 * x.dot(q * x) - c.dot(x);
    if (val < best_val) {
      best_val = val;
      best = x;
    }
  }
  return best;
}

}  // namespace testutil
