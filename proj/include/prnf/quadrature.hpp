#pragma once

#include <cmath>
#include <functional>

namespace prnf::quad {

namespace detail {
inline double simpson(double a, double fa, double b, double fb, double fm) {
  return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

// `force` levels of mandatory refinement guard against integrands whose mass
// the first few sample points miss entirely
inline double adaptive(const std::function<double(double)>& f, double a, double fa, double b,
                       double fb, double m, double fm, double whole, double tol, int depth,
                       int force) {
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = simpson(a, fa, m, fm, flm);
  const double right = simpson(m, fm, b, fb, frm);
  const double delta = left + right - whole;
  if (depth <= 0 || (force <= 0 && std::abs(delta) <= 15.0 * tol)) {
    return left + right + delta / 15.0;
  }
  return adaptive(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1, force - 1) +
         adaptive(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1, force - 1);
}
}  // namespace detail

inline double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                               double tol = 1e-10, int max_depth = 40, int min_depth = 6) {
  const double m = 0.5 * (a + b);
  const double fa = f(a), fb = f(b), fm = f(m);
  const double whole = detail::simpson(a, fa, b, fb, fm);
  return detail::adaptive(f, a, fa, b, fb, m, fm, whole, tol, max_depth, min_depth);
}

// fixed-node composite Simpson; n is rounded up to an even cell count
inline double composite_simpson(const std::function<double(double)>& f, double a, double b,
                                int n) {
  if (n % 2 != 0) ++n;
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) {
    s += f(a + i * h) * (i % 2 == 0 ? 2.0 : 4.0);
  }
  return s * h / 3.0;
}

}  // namespace prnf::quad
