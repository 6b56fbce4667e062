#pragma once

// Small shared numeric helpers: bracketed root solving.

#include <cmath>
#include <utility>

#include "ruinlab/claims.hpp"

namespace ruinlab::detail {

struct RootResult {
  double x;
  double f;
  int iterations;
};

// Safeguarded Newton on a bracket [lo, hi] with f(lo) < 0 < f(hi) (or the
// reverse). Falls back to bisection whenever the Newton step leaves the
// bracket or stalls. fdf returns {f(x), f'(x)}.
template <class FDF>
RootResult newton_bisect(FDF fdf, double lo, double hi, double ftol,
                         int max_iter = 200) {
  auto [flo, dlo] = fdf(lo);
  auto [fhi, dhi] = fdf(hi);
  (void)dlo;
  (void)dhi;
  if (flo == 0.0) return {lo, 0.0, 0};
  if (fhi == 0.0) return {hi, 0.0, 0};
  if ((flo < 0.0) == (fhi < 0.0))
    throw Error("newton_bisect: root not bracketed");
  bool rising = flo < 0.0;
  double x = 0.5 * (lo + hi);
  for (int it = 1; it <= max_iter; ++it) {
    auto [f, df] = fdf(x);
    if (std::abs(f) <= ftol) {
      // polish once more so the residual is as small as the function allows
      if (df != 0.0) {
        double xn = x - f / df;
        if (xn > lo && xn < hi) {
          double fn = fdf(xn).first;
          if (std::abs(fn) < std::abs(f)) return {xn, fn, it};
        }
      }
      return {x, f, it};
    }
    if ((f < 0.0) == rising)
      lo = x;
    else
      hi = x;
    double xn = (df != 0.0) ? x - f / df : x;
    if (!(xn > lo && xn < hi)) xn = 0.5 * (lo + hi);
    if (xn == x) xn = 0.5 * (lo + hi);
    x = xn;
    if (hi - lo <= 4e-16 * (std::abs(lo) + std::abs(hi))) {
      auto fr = fdf(x);
      return {x, fr.first, it};
    }
  }
  auto fr = fdf(x);
  return {x, fr.first, max_iter};
}

// Plain bisection for a monotone f with f(lo), f(hi) of opposite signs;
// stops on |f| <= ftol or bracket collapse.
template <class F>
RootResult bisect(F f, double lo, double hi, double ftol, int max_iter = 200) {
  double flo = f(lo), fhi = f(hi);
  if (flo == 0.0) return {lo, 0.0, 0};
  if (fhi == 0.0) return {hi, 0.0, 0};
  if ((flo < 0.0) == (fhi < 0.0)) throw Error("bisect: root not bracketed");
  double x = 0.5 * (lo + hi), fx = f(x);
  for (int it = 1; it <= max_iter; ++it) {
    if (std::abs(fx) <= ftol) return {x, fx, it};
    if ((fx < 0.0) == (flo < 0.0)) {
      lo = x;
      flo = fx;
    } else {
      hi = x;
    }
    x = 0.5 * (lo + hi);
    fx = f(x);
    if (hi - lo <= 4e-16 * (std::abs(lo) + std::abs(hi) + 1e-300))
      return {x, fx, it};
  }
  return {x, fx, max_iter};
}

}  // namespace ruinlab::detail
