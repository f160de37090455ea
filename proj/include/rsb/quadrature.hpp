#pragma once

#include <cmath>
#include <functional>

#include "rsb/core.hpp"

namespace rsb {

// Adaptive Simpson on [a,b] with absolute tolerance; bisection capped at
// max_depth levels, beyond which a NumericError is thrown.
template <typename F>
double adaptive_simpson(F&& f, double a, double b, double tol = 1e-10, int max_depth = 40) {
  if (b == a) return 0.0;
  struct Impl {
    const F& f;
    int max_depth;
    double recurse(double a, double b, double fa, double fm, double fb, double whole, double tol,
                   int depth) const {
      double m = 0.5 * (a + b);
      double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
      double flm = f(lm), frm = f(rm);
      double left = (m - a) / 6.0 * (fa + 4 * flm + fm);
      double right = (b - m) / 6.0 * (fm + 4 * frm + fb);
      double delta = left + right - whole;
      if (std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
      if (depth >= max_depth) throw NumericError("adaptive Simpson did not converge");
      return recurse(a, m, fa, flm, fm, left, tol / 2, depth + 1) +
             recurse(m, b, fm, frm, fb, right, tol / 2, depth + 1);
    }
  };
  double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  double whole = (b - a) / 6.0 * (fa + 4 * fm + fb);
  return Impl{f, max_depth}.recurse(a, b, fa, fm, fb, whole, tol, 0);
}

}  // namespace rsb
