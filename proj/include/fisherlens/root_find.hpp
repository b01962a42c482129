#pragma once

#include <cmath>
#include <limits>
#include <utility>

namespace fisherlens {

struct RootResult {
  double x = 0.0;
  double fx = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Brent's method on a bracket [a, b] with f(a) and f(b) of opposite sign.
/// Stops when |f(x)| <= f_tol or the bracket is narrower than
/// x_rel_tol * |x| (plus a tiny absolute floor).
template <class F>
RootResult brent_root(F&& f, double a, double b, double fa, double fb,
                      double x_rel_tol, double f_tol, int max_iter = 300) {
  constexpr double eps = std::numeric_limits<double>::epsilon();
  RootResult out;
  if (fa == 0.0) return {a, fa, 0, true};
  if (fb == 0.0) return {b, fb, 0, true};

  double c = a, fc = fa, d = b - a, e = d;
  for (int it = 1; it <= max_iter; ++it) {
    if ((fb > 0.0) == (fc > 0.0)) {
      c = a;
      fc = fa;
      d = e = b - a;
    }
    if (std::abs(fc) < std::abs(fb)) {
      a = b; b = c; c = a;
      fa = fb; fb = fc; fc = fa;
    }
    const double tol = 2.0 * eps * std::abs(b) + 0.5 * x_rel_tol * std::abs(b) +
                       std::numeric_limits<double>::min();
    const double m = 0.5 * (c - b);
    out = {b, fb, it, false};
    if (std::abs(fb) <= f_tol || std::abs(m) <= tol) {
      out.converged = true;
      return out;
    }
    if (std::abs(e) >= tol && std::abs(fa) > std::abs(fb)) {
      double p, q, r;
      const double s = fb / fa;
      if (a == c) {
        p = 2.0 * m * s;
        q = 1.0 - s;
      } else {
        q = fa / fc;
        r = fb / fc;
        p = s * (2.0 * m * q * (q - r) - (b - a) * (r - 1.0));
        q = (q - 1.0) * (r - 1.0) * (s - 1.0);
      }
      if (p > 0.0) q = -q; else p = -p;
      if (2.0 * p < std::min(3.0 * m * q - std::abs(tol * q), std::abs(e * q))) {
        e = d;
        d = p / q;
      } else {
        d = m;
        e = m;
      }
    } else {
      d = m;
      e = m;
    }
    a = b;
    fa = fb;
    b += (std::abs(d) > tol) ? d : (m > 0.0 ? tol : -tol);
    fb = f(b);
  }
  return out;
}

}  // namespace fisherlens
